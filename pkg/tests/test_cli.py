import json
import shutil
from pathlib import Path

import pytest

from anosov_lab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NONCONV, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
CAT = json.dumps({"type": "constant", "map": {"linear": [[2, 1], [1, 1]]}})
IDENTITY = json.dumps({"type": "constant", "map": {"linear": [[1, 0], [0, 1]]}})
MODE = json.dumps({"type": "constant", "map": {"linear": [[2, 1], [1, 1]], "modes": [{"k": [1, 0], "sin": [0.005, 0.0]}]}})
CONJ = {"lambda": 0.4, "eta": 0.39, "zeta": 0.05, "r_prime": 0.02, "xi_prime": 0.006, "r_tilde": 0.06, "grid_n": 16}


@pytest.fixture
def workdir(tmp_path):
    shutil.copytree(CONFIGS, tmp_path, dirs_exist_ok=True)
    return tmp_path


def load(path):
    return json.loads(Path(path).read_text())


def test_certify_direct_cat(tmp_path):
    assert main(["certify", "direct", "--family", CAT, "--out", str(tmp_path)]) == EXIT_OK
    cert = load(tmp_path / "certificate.json")
    assert cert["status"] == "certified"
    assert cert["constants"]["lambda"] == pytest.approx(0.381966, abs=1e-6)


def test_falsified_exits_one(tmp_path):
    assert main(["certify", "growth", "--family", IDENTITY, "--sigma", "1.01", "--out", str(tmp_path)]) == EXIT_FAIL
    assert load(tmp_path / "certificate.json")["status"] == "falsified"


def test_cone_witnesses_csv(tmp_path):
    code = main(["certify", "cones", "--family", IDENTITY, "--splitting",
                 json.dumps(_axis_splitting()), "--grid", "4", "--out", str(tmp_path)])
    assert code == EXIT_FAIL
    lines = (tmp_path / "witnesses.csv").read_text().splitlines()
    assert lines[0] == "alpha,bundle,i,image_slope,point,ray"
    assert lines[1].startswith("0.2,u,0,")


def _axis_splitting():
    from anosov_lab.splitting import SplittingField

    return SplittingField.constant([1.0, 0.0], [0.0, 1.0]).to_dict()


def test_nonconvergence_exits_two(tmp_path):
    cfg = json.dumps({**CONJ, "max_iter": 2})
    code = main(["conjugacy", "solve", "--base", CAT, "--perturbed", MODE, "--config", cfg, "--out", str(tmp_path)])
    assert code == EXIT_NONCONV
    assert load(tmp_path / "report.json")["status"] == "non-convergence"


def test_premise_failure_exits_one(tmp_path):
    cfg = json.dumps({**CONJ, "zeta": 0.001})
    code = main(["conjugacy", "solve", "--base", CAT, "--perturbed", MODE, "--config", cfg, "--out", str(tmp_path)])
    assert code == EXIT_FAIL
    assert load(tmp_path / "report.json")["status"] == "premise-failure"


@pytest.mark.parametrize("argv", [
    ["mult", "factorize", "--matrix", "2,1,1"],
    ["mult", "verify", "--seq", "0,1"],
    ["certify", "direct", "--family", "{not json"],
    ["certify", "direct", "--family", CAT, "--splitting", '{"bad": 1}'],
    ["certify", "cones", "--family", CAT, "--alpha", "0.5"],
    ["certify", "cones", "--family", CAT, "--r-tilde", "0.1"],
    ["family", "distance", "--family", CAT, "--other", CAT, "--order", "3"],
    ["conjugacy", "bound", "--N", "-1", "--eta", "0.5", "--zeta", "0.1", "--r-tilde", "0.1"],
    ["conjugacy", "verify", "--base", CAT, "--perturbed", CAT, "--config", json.dumps(CONJ),
     "--displacement", "/nonexistent.csv"],
])
def test_validation_exits_three(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_violated_inequality_is_named(workdir, caplog):
    assert main(["run", str(workdir / "bad-zeta.json")]) == EXIT_CONFIG
    assert "zeta" in caplog.text and "violated" in caplog.text


def test_factorize_accepts_nested_list(tmp_path):
    assert main(["mult", "factorize", "--matrix", "[[2,1],[1,1]]", "--out", str(tmp_path)]) == EXIT_OK
    assert load(tmp_path / "factorization.json")["exponents"] == [0, 1, 1, 0]


def test_mult_seq_forms(tmp_path):
    assert main(["mult", "verify", "--seq", "1,2,3", "--n-max", "10", "--out", str(tmp_path / "a")]) == EXIT_OK
    spec = tmp_path / "seq.json"
    spec.write_text(json.dumps({"type": "periodic", "values": [1, 2, 3]}))
    assert main(["mult", "verify", "--seq", str(spec), "--n-max", "10", "--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "growth.csv").read_text() == (tmp_path / "b" / "growth.csv").read_text()


def test_mult_build_and_gather(tmp_path):
    assert main(["mult", "build", "--seq", "1", "--out", str(tmp_path)]) == EXIT_OK
    fam = tmp_path / "family.json"
    assert main(["family", "gather", "--family", str(fam), "--lengths", "2", "--out", str(tmp_path / "g")]) == EXIT_OK
    gathered = load(tmp_path / "g" / "gathered.json")
    assert json.dumps(gathered).count("[2, 1], [1, 1]") >= 1


def test_run_is_deterministic_except_timestamp(workdir):
    cfg = workdir / "conjugacy-translation.json"
    out = workdir / "out" / "conjugacy-translation"
    assert main(["run", str(cfg)]) == EXIT_OK
    first = {p.name: p.read_text() for p in out.iterdir()}
    assert main(["run", str(cfg)]) == EXIT_OK
    second = {p.name: p.read_text() for p in out.iterdir()}
    assert first.keys() == second.keys() == {"manifest.json", "report.json", "displacement.csv"}
    for name in first:
        if name == "manifest.json":
            a, b = json.loads(first[name]), json.loads(second[name])
            a.pop("timestamp"), b.pop("timestamp")
            assert a == b and len(a["inputs_sha256"]) == 64
        else:
            assert first[name] == second[name]


def test_run_every_shipped_config(workdir):
    codes = {p.name: main(["run", str(p)]) for p in sorted(workdir.glob("*.json"))}
    assert codes == {"bad-zeta.json": EXIT_CONFIG, "certify-cones.json": EXIT_OK,
                     "conjugacy-mode.json": EXIT_OK, "conjugacy-translation.json": EXIT_OK}


def test_run_several_configs_in_parallel(workdir, monkeypatch):
    monkeypatch.setenv("ANOSOV_LAB_THREADS", "2")
    code = main(["run", str(workdir / "certify-cones.json"), str(workdir / "bad-zeta.json")])
    assert code == EXIT_CONFIG  # the worst exit code wins
    assert load(workdir / "out" / "certify-cones" / "certificate.json")["status"] == "certified"


def test_run_rejects_unknown_task_and_schema(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"task": "nope"}))
    assert main(["run", str(bad)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"task": "family-check", "schema_version": "9", "params": {}}))
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_recheck_round_trip(tmp_path):
    assert main(["certify", "direct", "--family", CAT, "--out", str(tmp_path)]) == EXIT_OK
    art = tmp_path / "certificate.json"
    assert main(["recheck", str(art), "--out", str(tmp_path / "rc")]) == EXIT_OK
    assert load(tmp_path / "rc" / "recheck.json")["matched"]
    # a tampered number is caught
    body = load(art)
    body["constants"]["lambda"] += 1e-3
    art.write_text(json.dumps(body))
    assert main(["recheck", str(art), "--out", str(tmp_path / "rc2")]) == EXIT_FAIL
    assert load(tmp_path / "rc2" / "recheck.json")["mismatched"] == ["constants"]


def test_recheck_needs_inputs(tmp_path):
    art = tmp_path / "a.json"
    art.write_text(json.dumps({"status": "certified"}))
    assert main(["recheck", str(art), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_solve_then_verify(tmp_path):
    t = json.dumps({"type": "constant", "map": {"linear": [[2, 1], [1, 1]], "modes": [{"k": [0, 0], "cos": [0.01, 0.0]}]}})
    cfg = json.dumps({"lambda": 0.4, "eta": 0.39, "zeta": 0.05, "r_prime": 0.03, "xi_prime": 0.015,
                      "r_tilde": 0.1, "grid_n": 16})
    assert main(["conjugacy", "solve", "--base", CAT, "--perturbed", t, "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rep = load(tmp_path / "report.json")
    assert rep["status"] == "converged" and rep["residual"] < 1e-10
    code = main(["conjugacy", "verify", "--base", CAT, "--perturbed", t, "--config", cfg,
                 "--displacement", str(tmp_path / "displacement.csv"), "--out", str(tmp_path / "v")])
    assert code == EXIT_OK
    assert load(tmp_path / "v" / "verify.json")["injectivity_sampled_ok"]


def test_bound_with_containment(tmp_path):
    code = main(["conjugacy", "bound", "--N", "10", "--eta", "0.5", "--zeta", "0.1", "--r-tilde", "0.1",
                 "--family", CAT, "--grid", "64", "--out", str(tmp_path)])
    assert code == EXIT_OK
    body = load(next(tmp_path.glob("*.json")))
    assert body["bound"] == pytest.approx(4.613e-4, abs=1e-7) and body["violations"] == 0


def test_manifold_and_operator_outputs(tmp_path):
    assert main(["manifold", "compute", "--family", CAT, "--iters", "3", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "manifold.csv").read_text().startswith("t,x,y")
    assert main(["operator", "norm", "--family", CAT, "--n", "5", "--grid", "8", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "power_norms.csv").read_text().splitlines()[0] == "n,stable_est,unstable_est"
    assert main(["operator", "gap", "--family", IDENTITY, "--splitting", json.dumps(_axis_splitting()),
                 "--n", "5", "--grid", "4", "--out", str(tmp_path / "gap")]) == EXIT_FAIL


def test_extract_and_family_check(tmp_path):
    pert = json.dumps({"type": "constant", "map": {"linear": [[2, 1], [1, 1]], "modes": [{"k": [1, 0], "sin": [0.01, 0.0]}]}})
    assert main(["extract", "splitting", "--family", pert, "--grid", "16", "--out", str(tmp_path)]) == EXIT_OK
    assert load(tmp_path / "residual.json")["invariance_residual"] < 1e-3
    assert main(["family", "check", "--family", pert, "--out", str(tmp_path)]) == EXIT_OK
    assert load(tmp_path / "family_check.json")["linear"] is False


def test_usage_errors_are_validation_errors():
    assert main(["certify"]) == EXIT_CONFIG
    assert main(["certify", "direct"]) == EXIT_CONFIG
    assert main(["--help"]) == EXIT_OK
