"""Command-line front end.

Every subcommand is a thin wrapper around a *task*: a function taking a
parameter dict and returning an exit code plus named artifacts. ``run``
reads the same parameter dict from a JSON config, so subcommands and
configs share one code path. Data goes to files in ``--out``; logging goes
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import _kernels
from .certificate import CERTIFIED, FALSIFIED, Certificate
from .certifier import (
    ConeParams,
    angle_property,
    anosov_direct_check,
    check_radius,
    cone_invariance_certify,
    default_splitting,
    norm_growth_criterion,
)
from .conjugacy import (
    ConfigError,
    ConjugacyConfig,
    DisplacementFamily,
    IndexSpace,
    NonConvergence,
    PremiseError,
    RadiusEscape,
    expansivity_bound,
    expansivity_containment,
    solve_conjugacy,
    verify_conjugacy,
)
from .family import Cuts, Family, Window, c2_sup_bound, d_unif, family_from_dict, gather
from .manifolds import ManifoldError, compute_local_manifold, contraction_rate_check
from .multiplicative import (
    build_multiplicative,
    factorize_sl2n,
    neighbor_lemma_check,
    parse_matrix,
    seq_from_dict,
    verify_growth_bounds,
)
from .sections import hyperbolic_gap_report, power_norm_table
from .splitting import SplittingField, extract_splitting, invariance_residual, splitting_from_multiplicative

log = logging.getLogger("anosov_lab")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_NONCONV = 2
EXIT_CONFIG = 3
SCHEMA_VERSION = "1.0"


class ValidationError(ValueError):
    """Bad parameters; maps to exit code 3."""


@dataclass
class TaskResult:
    code: int
    files: dict[str, str] = field(default_factory=dict)
    summary: str = ""


# --- serialisation helpers ---------------------------------------------------------

def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_plain) + "\n"


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _read_json(value, base: Path):
    if isinstance(value, (dict, list)):
        return value
    if isinstance(value, str) and value.lstrip()[:1] in ("{", "["):
        try:
            return json.loads(value)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid inline JSON: {exc}") from exc
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read JSON from {path}: {exc}") from exc


def _family(params: dict, key: str, base: Path) -> tuple[Family, dict]:
    if params.get(key) is None:
        raise ValidationError(f"missing parameter '{key}'")
    data = _read_json(params[key], base)
    try:
        fam = family_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"invalid family in '{key}': {exc}") from exc
    params[key] = data
    return fam, data


def _splitting(params: dict, F: Family, base: Path, key: str = "splitting") -> SplittingField:
    if params.get(key) is None:
        return default_splitting(F)
    data = _read_json(params[key], base)
    params[key] = data
    try:
        return SplittingField.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"invalid splitting in '{key}': {exc}") from exc


def _window(params: dict) -> Window | None:
    w = params.get("window")
    if w is None:
        return None
    try:
        return Window(int(w[0]), int(w[1]))
    except (TypeError, ValueError, IndexError) as exc:
        raise ValidationError(f"window must be [lo, hi]: {exc}") from exc


def _point(value) -> np.ndarray:
    if isinstance(value, str):
        value = [float(x) for x in value.split(",")]
    pt = np.asarray(value, dtype=float)
    if pt.shape != (2,):
        raise ValidationError("point must have two coordinates")
    return pt


def _cert_files(name: str, cert: Certificate, task: str, params: dict) -> dict[str, str]:
    body = cert.to_dict()
    body["inputs"] = {"task": task, "params": params}
    return {name: dumps(body)}


def _status_code(cert: Certificate) -> int:
    return EXIT_OK if cert.certified else EXIT_FAIL


# --- tasks ----------------------------------------------------------------------------

def task_family_check(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    S, r = c2_sup_bound(F, _window(p))
    w = F.default_window()
    info = {
        "type": type(F).__name__.lower(),
        "period": F.period,
        "linear": F.is_linear,
        "default_window": [w.lo, w.hi],
        "c2_sup": S,
        "radius_bound": r,
    }
    return TaskResult(EXIT_OK, {"family_check.json": dumps(info)}, f"S={S:.6g}")


def task_family_gather(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    lengths = p.get("lengths", [2])
    if isinstance(lengths, int):
        lengths = [lengths]
    try:
        cuts = Cuts(tuple(int(x) for x in lengths), int(p.get("origin", 0)))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    out = gather(F, cuts)
    return TaskResult(EXIT_OK, {"gathered.json": dumps(out.to_dict())})


def task_family_distance(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    G, _ = _family(p, "other", base)
    order = int(p.get("order", 0))
    if order not in (0, 1, 2):
        raise ValidationError("order must be 0, 1 or 2")
    d = d_unif(F, G, order, _window(p), int(p.get("grid", 64)))
    return TaskResult(EXIT_OK, {"distance.json": dumps({"order": order, "d_unif": d})}, f"d={d:.6g}")


def _seq(p: dict, base: Path):
    raw = p.get("seq")
    if raw is None:
        raise ValidationError("missing parameter 'seq'")
    if isinstance(raw, str) and raw.replace(",", "").replace(" ", "").isdigit():
        raw = [int(x) for x in raw.split(",")]
    elif isinstance(raw, str):
        raw = _read_json(raw, base)
    p["seq"] = raw
    try:
        return seq_from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"invalid sequence: {exc}") from exc


def task_mult_verify(p: dict, base: Path) -> TaskResult:
    seq = _seq(p, base)
    n_max = int(p.get("n_max", 25))
    cert, rows = verify_growth_bounds(seq, _window(p), n_max=n_max, rtol=float(p.get("rtol", 1e-9)))
    files = _cert_files("certificate.json", cert, "mult-verify", p)
    files["growth.csv"] = csv_text(
        ["i", "n", "lhs", "rhs", "margin"], ((r.i, r.n, r.lhs, r.rhs, r.margin) for r in rows)
    )
    nb = neighbor_lemma_check(seq, _window(p))
    files["neighbor.json"] = dumps(nb.to_dict())
    code = EXIT_OK if cert.certified and nb.certified else EXIT_FAIL
    return TaskResult(code, files, cert.status)


def task_mult_factorize(p: dict, base: Path) -> TaskResult:
    try:
        mat = parse_matrix(str(p["matrix"]))
        fac = factorize_sl2n(mat)
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"cannot factorize: {exc}") from exc
    return TaskResult(EXIT_OK, {"factorization.json": dumps(fac.to_dict())}, str(fac.exponents))


def task_mult_build(p: dict, base: Path) -> TaskResult:
    seq = _seq(p, base)
    fam, data = build_multiplicative(seq)
    S = splitting_from_multiplicative(data)
    return TaskResult(
        EXIT_OK,
        {"family.json": dumps(fam.to_dict()), "splitting.json": dumps(S.to_dict()),
         "constant.json": dumps({"c": data.c_const})},
    )


def task_certify_direct(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    S = _splitting(p, F, base)
    cert = anosov_direct_check(F, S, _window(p), int(p.get("n_max", 20)), int(p.get("grid", 16)))
    return TaskResult(_status_code(cert), _cert_files("certificate.json", cert, "certify-direct", p), cert.status)


def _cone_params(p: dict, F: Family) -> ConeParams:
    try:
        params = ConeParams(
            float(p.get("alpha", 0.2)), float(p.get("lambda_tilde", 0.5)), float(p.get("r_tilde", 0.005))
        )
        check_radius(params.r_tilde, F, _window(p))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return params


def task_certify_cones(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    params = _cone_params(p, F)
    S = _splitting(p, F, base)
    cert = cone_invariance_certify(
        F, S, params, _window(p), int(p.get("grid", 128)), dense=bool(p.get("dense", False))
    )
    files = _cert_files("certificate.json", cert, "certify-cones", p)
    if cert.witnesses:
        keys = sorted({k for w in cert.witnesses for k in w})
        cell = lambda v: json.dumps(v) if isinstance(v, (list, dict)) else v  # noqa: E731
        files["witnesses.csv"] = csv_text(keys, ([cell(w.get(k)) for k in keys] for w in cert.witnesses))
    return TaskResult(_status_code(cert), files, cert.status)


def task_certify_angles(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    S = _splitting(p, F, base)
    threshold = float(p.get("threshold", 1e-3))
    w = _window(p) or F.default_window()
    m, ok = angle_property(S, w, threshold)
    cert = Certificate("angle-property", CERTIFIED if ok else FALSIFIED, {"min_angle": m},
                       residuals={"threshold": threshold}, failure=None if ok else "angle")
    return TaskResult(_status_code(cert), _cert_files("certificate.json", cert, "certify-angles", p), cert.status)


def task_certify_growth(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    try:
        cert = norm_growth_criterion(F, float(p.get("c", 1.0)), float(p.get("sigma", 1.5)),
                                     int(p.get("n_max", 20)), _window(p))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return TaskResult(_status_code(cert), _cert_files("certificate.json", cert, "certify-growth", p), cert.status)


def task_extract_splitting(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    seed = _splitting(p, F, base, key="seed") if p.get("seed") is not None else default_splitting(F, n_iter=1)
    S = extract_splitting(F, seed, int(p.get("iters", 20)), _window(p), int(p.get("grid", 128)))
    res = invariance_residual(F, S, _window(p))
    files = {
        "splitting.json": dumps(S.to_dict()),
        "history.csv": csv_text(["depth", "angle_change"], enumerate(S.meta["history"], start=2)),
        "residual.json": dumps({"invariance_residual": res}),
    }
    return TaskResult(EXIT_OK, files, f"residual={res:.3g}")


def task_operator_gap(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    S = _splitting(p, F, base)
    n = int(p.get("n", 30))
    grid = int(p.get("grid", 32))
    cert = hyperbolic_gap_report(F, S, n, _window(p), grid)
    files = _cert_files("certificate.json", cert, "operator-gap", p)
    if cert.failure != "angle":
        rows = power_norm_table(F, S, n, _window(p), grid)
        files["power_norms.csv"] = csv_text(["n", "stable_est", "unstable_est"], rows)
    return TaskResult(_status_code(cert), files, cert.status)


def task_operator_norm(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "family", base)
    S = _splitting(p, F, base)
    rows = power_norm_table(F, S, int(p.get("n", 30)), _window(p), int(p.get("grid", 32)))
    return TaskResult(EXIT_OK, {"power_norms.csv": csv_text(["n", "stable_est", "unstable_est"], rows)})


def _manifold(p: dict, base: Path):
    F, _ = _family(p, "family", base)
    S = _splitting(p, F, base)
    side = p.get("side", "u")
    if side not in ("s", "u"):
        raise ValidationError("side must be 's' or 'u'")
    try:
        M = compute_local_manifold(
            F, S, _point(p.get("point", [0.3, 0.7])), int(p.get("index", 0)), side,
            float(p["delta"]) if p.get("delta") is not None else None, int(p.get("iters", 20)),
            samples=int(p.get("samples", 100)),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return F, M


def _manifold_summary(M) -> dict:
    return {
        "base": M.base.tolist(), "index": M.index, "side": M.side, "delta": M.delta,
        "K": M.K, "zeta": M.zeta, "K_fit": M.K_fit, "zeta_fit": M.zeta_fit,
        "lipschitz": M.lipschitz, "tangency": M.tangency, "history": M.history,
        "graph": [[float(t), float(g)] for t, g in zip(M.t, M.g)],
    }


def task_manifold_compute(p: dict, base: Path) -> TaskResult:
    try:
        _, M = _manifold(p, base)
    except ManifoldError as exc:
        log.error("manifold computation failed: %s", exc)
        return TaskResult(EXIT_FAIL, {}, str(exc))
    files = {
        "manifold.csv": csv_text(["t", "x", "y"], M.polyline()),
        "manifold.json": dumps(_manifold_summary(M)),
    }
    return TaskResult(EXIT_OK, files, f"zeta={M.zeta:.4g}")


def task_manifold_check(p: dict, base: Path) -> TaskResult:
    try:
        F, M = _manifold(p, base)
    except ManifoldError as exc:
        log.error("manifold computation failed: %s", exc)
        return TaskResult(EXIT_FAIL, {}, str(exc))
    cert = contraction_rate_check(M, F, int(p.get("n_max", 15)), int(p.get("samples", 100)))
    return TaskResult(_status_code(cert), _cert_files("certificate.json", cert, "manifold-check", p), cert.status)


def _conj_config(p: dict, base: Path) -> ConjugacyConfig:
    raw = p.get("config")
    if raw is None:
        raise ValidationError("missing parameter 'config'")
    data = _read_json(raw, base)
    p["config"] = data
    try:
        return ConjugacyConfig.from_dict(data)
    except (ConfigError, TypeError) as exc:
        raise ValidationError(str(exc)) from exc


def task_conjugacy_solve(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "base", base)
    G, _ = _family(p, "perturbed", base)
    cfg = _conj_config(p, base)
    S = _splitting(p, F, base)
    try:
        res = solve_conjugacy(F, G, S, cfg)
    except PremiseError as exc:
        log.error("premise failure: %s", exc)
        return TaskResult(EXIT_FAIL, {"report.json": dumps({"status": "premise-failure", "reason": str(exc)})})
    except RadiusEscape as exc:
        log.error("radius escape: %s", exc)
        return TaskResult(EXIT_FAIL, {"report.json": dumps({"status": "radius-escape", "reason": str(exc)})})
    except NonConvergence as exc:
        log.error("%s", exc)
        body = {"status": "non-convergence", **exc.result.report(), "inputs": {"task": "conjugacy-solve", "params": p}}
        return TaskResult(EXIT_NONCONV, {"report.json": dumps(body)})
    H = res.displacement
    body = {"status": "converged", **res.report(), "inputs": {"task": "conjugacy-solve", "params": p}}
    files = {
        "report.json": dumps(body),
        "displacement.csv": csv_text(["i", "x", "y", "u", "v"], H.csv_rows()),
    }
    return TaskResult(EXIT_OK, files, f"residual={res.residual:.3g}")


def _read_displacement(path, base: Path, space: IndexSpace) -> DisplacementFamily:
    path = Path(path)
    if not path.is_absolute():
        path = base / path
    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read displacement from {path}: {exc}") from exc
    n = int(round(math.sqrt(np.sum(rows[:, 0] == rows[0, 0]))))
    values = np.zeros((len(space.stored), n, n, 2))
    for k, i in enumerate(space.stored):
        block = rows[rows[:, 0] == i]
        if len(block) != n * n:
            raise ValidationError(f"displacement file has no complete grid for index {i}")
        values[k] = block[:, 3:5].reshape(n, n, 2)
    return DisplacementFamily(space, values)


def task_conjugacy_verify(p: dict, base: Path) -> TaskResult:
    F, _ = _family(p, "base", base)
    G, _ = _family(p, "perturbed", base)
    cfg = _conj_config(p, base)
    space = IndexSpace.build(F, G, cfg.window)
    H = _read_displacement(p["displacement"], base, space)
    res, inj, table = verify_conjugacy(H, F, G, p.get("grid"), cfg.eta, cfg.zeta, cfg.r_tilde)
    body = {"residual": res, "injectivity_sampled_ok": inj, "modulus_table": table}
    ok = inj and res <= float(p.get("tol", 10 * cfg.tol))
    return TaskResult(EXIT_OK if ok else EXIT_FAIL, {"verify.json": dumps(body)}, f"residual={res:.3g}")


def task_conjugacy_bound(p: dict, base: Path) -> TaskResult:
    try:
        N, eta, zeta, r = int(p["N"]), float(p["eta"]), float(p["zeta"]), float(p["r_tilde"])
        value = expansivity_bound(N, eta, zeta, r)
    except (KeyError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    body: dict[str, Any] = {"N": N, "eta": eta, "zeta": zeta, "r_tilde": r, "bound": value}
    code = EXIT_OK
    if p.get("family") is not None:
        F, _ = _family(p, "family", base)
        viol, close = expansivity_containment(F, N, eta, zeta, r, int(p.get("grid", 512)))
        body.update(violations=viol, close_pairs=close)
        code = EXIT_OK if viol == 0 else EXIT_FAIL
    return TaskResult(code, {"bound.json": dumps(body)}, f"bound={value:.6g}")


TASKS: dict[str, Callable[[dict, Path], TaskResult]] = {
    "family-check": task_family_check,
    "family-gather": task_family_gather,
    "family-distance": task_family_distance,
    "mult-verify": task_mult_verify,
    "mult-factorize": task_mult_factorize,
    "mult-build": task_mult_build,
    "certify-direct": task_certify_direct,
    "certify-cones": task_certify_cones,
    "certify-angles": task_certify_angles,
    "certify-growth": task_certify_growth,
    "extract-splitting": task_extract_splitting,
    "operator-gap": task_operator_gap,
    "operator-norm": task_operator_norm,
    "manifold-compute": task_manifold_compute,
    "manifold-check": task_manifold_check,
    "conjugacy-solve": task_conjugacy_solve,
    "conjugacy-verify": task_conjugacy_verify,
    "conjugacy-bound": task_conjugacy_bound,
}


# --- recheck ---------------------------------------------------------------------------

def _close(a, b, rtol: float) -> bool:
    if isinstance(a, bool) or isinstance(b, bool) or isinstance(a, str) or isinstance(b, str):
        return a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if math.isnan(a) and math.isnan(b):
            return True
        return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_close(x, y, rtol) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_close(a[k], b[k], rtol) for k in a)
    return a == b


def task_recheck(p: dict, base: Path) -> TaskResult:
    """Re-run the task recorded in an artifact and compare its verdict and numbers."""
    art = _read_json(p["artifact"], base)
    inputs = art.get("inputs")
    if not inputs or inputs.get("task") not in TASKS:
        raise ValidationError("artifact carries no re-runnable inputs")
    fresh = TASKS[inputs["task"]](json.loads(json.dumps(inputs["params"])), base)
    main = next((k for k in ("certificate.json", "report.json") if k in fresh.files), None)
    if main is None:
        return TaskResult(EXIT_FAIL, {}, "re-run produced no comparable artifact")
    new = json.loads(fresh.files[main])
    rtol = float(p.get("rtol", 1e-9))
    keys = [k for k in ("status", "constants", "residuals", "residual", "iterations") if k in art]
    mismatched = [k for k in keys if not _close(art[k], new.get(k), rtol)]
    body = {"task": inputs["task"], "matched": not mismatched, "mismatched": mismatched, "status": new.get("status")}
    return TaskResult(EXIT_OK if not mismatched else EXIT_FAIL, {"recheck.json": dumps(body)},
                      "match" if not mismatched else f"mismatch in {mismatched}")


TASKS["recheck"] = task_recheck


# --- orchestration ----------------------------------------------------------------------

_dir_locks: dict[str, threading.Lock] = {}
_locks_guard = threading.Lock()


def _lock_for(out: Path) -> threading.Lock:
    with _locks_guard:
        return _dir_locks.setdefault(str(out.resolve()), threading.Lock())


def write_files(out: Path, files: dict[str, str]) -> None:
    with _lock_for(out):
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text)


def execute(task: str, params: dict, out: Path, base: Path) -> int:
    try:
        res = TASKS[task](params, base)
    except ValidationError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    write_files(out, res.files)
    log.info("%s: exit %d %s", task, res.code, res.summary)
    return res.code


def _versions() -> dict:
    import scipy
    import mpmath

    from . import __version__

    return {
        "anosov_lab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
        "backend": _kernels.BACKEND,
    }


def _hash_inputs(cfg_text: str, params: dict) -> str:
    h = hashlib.sha256(cfg_text.encode())
    h.update(json.dumps(params, sort_keys=True).encode())
    return h.hexdigest()


def run_config(path: str) -> int:
    """Execute one JSON experiment config and write a manifest next to its artifacts."""
    cfg_path = Path(path)
    try:
        text = cfg_path.read_text()
        cfg = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    base = cfg_path.parent
    task = cfg.get("task")
    if task not in TASKS:
        print(f"error: unknown task {task!r}; expected one of {sorted(TASKS)}", file=sys.stderr)
        return EXIT_CONFIG
    if str(cfg.get("schema_version", SCHEMA_VERSION)) != SCHEMA_VERSION:
        print(f"error: unsupported schema_version {cfg.get('schema_version')!r}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.get("output", cfg_path.stem + "_out"))
    if not out.is_absolute():
        out = base / out
    params = dict(cfg.get("params", {}))
    code = execute(task, params, out, base)
    manifest = {
        "task": task,
        "config": str(cfg_path.name),
        "inputs_sha256": _hash_inputs(text, params),
        "parameters": params,
        "versions": _versions(),
        "exit_code": code,
        # the only field that differs between identical runs
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    write_files(out, {"manifest.json": dumps(manifest)})
    return code


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ANOSOV_LAB_THREADS", "1")))
    except ValueError:
        return 1


# --- argument parsing -------------------------------------------------------------------

def _common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--out", default=".", help="output directory (default: current)")
    sp.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"))


def _add(sub, name: str, task: str, help_text: str, args: list[tuple]) -> None:
    sp = sub.add_parser(name, help=help_text)
    for flags, kw in args:
        sp.add_argument(*flags, **kw)
    _common(sp)
    sp.set_defaults(task=task)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="anosov-lab", description="Non-stationary Anosov families on the 2-torus.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="log to stderr (-vv for debug)")
    top = ap.add_subparsers(dest="group", required=True)

    fam = top.add_parser("family", help="inspect, gather and compare families").add_subparsers(dest="cmd", required=True)
    f_ = ("--family",), {"required": True}
    _add(fam, "check", "family-check", "summary and C2 bound", [f_])
    _add(fam, "gather", "family-gather", "compose blocks of consecutive maps",
         [f_, (("--lengths",), {"type": int, "nargs": "+", "default": [2]}), (("--origin",), {"type": int, "default": 0})])
    _add(fam, "distance", "family-distance", "uniform C^k distance",
         [f_, (("--other",), {"required": True}), (("--order",), {"type": int, "default": 0}),
          (("--grid",), {"type": int, "default": 64})])

    mult = top.add_parser("mult", help="multiplicative families").add_subparsers(dest="cmd", required=True)
    seq = ("--seq",), {"required": True, "help": "JSON file or comma list of a period"}
    _add(mult, "verify", "mult-verify", "growth bounds and neighbour check",
         [seq, (("--n-max",), {"dest": "n_max", "type": int, "default": 25}), (("--rtol",), {"type": float, "default": 1e-9})])
    _add(mult, "factorize", "mult-factorize", "factor an SL(2,N) matrix", [(("--matrix",), {"required": True})])
    _add(mult, "build", "mult-build", "family and closed-form splitting", [seq])

    cert = top.add_parser("certify", help="hyperbolicity certificates").add_subparsers(dest="cmd", required=True)
    spl = ("--splitting",), {"default": None}
    grid = lambda d: (("--grid",), {"type": int, "default": d})  # noqa: E731
    _add(cert, "direct", "certify-direct", "fit (c, lambda) on the splitting",
         [f_, spl, (("--n-max",), {"dest": "n_max", "type": int, "default": 20}), grid(16)])
    _add(cert, "cones", "certify-cones", "cone invariance and expansion",
         [f_, spl, (("--alpha",), {"type": float, "default": 0.2}),
          (("--lambda-tilde",), {"dest": "lambda_tilde", "type": float, "default": 0.5}),
          (("--r-tilde",), {"dest": "r_tilde", "type": float, "default": 0.005}), grid(128),
          (("--dense",), {"action": "store_true"})])
    _add(cert, "angles", "certify-angles", "angle between the bundles",
         [f_, spl, (("--threshold",), {"type": float, "default": 1e-3})])
    _add(cert, "growth", "certify-growth", "norm growth of linear cocycles",
         [f_, (("--c",), {"type": float, "default": 1.0}), (("--sigma",), {"type": float, "default": 1.5}),
          (("--n-max",), {"dest": "n_max", "type": int, "default": 20})])

    ext = top.add_parser("extract", help="invariant splittings").add_subparsers(dest="cmd", required=True)
    _add(ext, "splitting", "extract-splitting", "iterate seed cones to the invariant splitting",
         [f_, (("--seed",), {"default": None}), (("--iters",), {"type": int, "default": 20}), grid(128)])

    op = top.add_parser("operator", help="push-forward operator").add_subparsers(dest="cmd", required=True)
    _add(op, "gap", "operator-gap", "spectral-gap surrogate", [f_, spl, (("--n",), {"type": int, "default": 30}), grid(32)])
    _add(op, "norm", "operator-norm", "power-norm table", [f_, spl, (("--n",), {"type": int, "default": 30}), grid(32)])

    man = top.add_parser("manifold", help="local invariant manifolds").add_subparsers(dest="cmd", required=True)
    margs = [f_, spl, (("--point",), {"default": "0.3,0.7"}), (("--index",), {"type": int, "default": 0}),
             (("--side",), {"choices": ["s", "u"], "default": "u"}), (("--delta",), {"type": float, "default": None}),
             (("--iters",), {"type": int, "default": 20}), (("--samples",), {"type": int, "default": 100})]
    _add(man, "compute", "manifold-compute", "graph transform", margs)
    _add(man, "check", "manifold-check", "contraction-rate certificate",
         margs + [(("--n-max",), {"dest": "n_max", "type": int, "default": 15})])

    conj = top.add_parser("conjugacy", help="structural stability").add_subparsers(dest="cmd", required=True)
    b_ = ("--base",), {"required": True}
    g_ = ("--perturbed",), {"required": True}
    c_ = ("--config",), {"required": True}
    _add(conj, "solve", "conjugacy-solve", "fixed-point iteration", [b_, g_, c_, spl])
    _add(conj, "verify", "conjugacy-verify", "residual, injectivity, modulus",
         [b_, g_, c_, (("--displacement",), {"required": True}), (("--grid",), {"type": int, "default": None})])
    _add(conj, "bound", "conjugacy-bound", "expansivity bound",
         [(("--N",), {"type": int, "required": True}), (("--eta",), {"type": float, "required": True}),
          (("--zeta",), {"type": float, "required": True}), (("--r-tilde",), {"dest": "r_tilde", "type": float, "required": True}),
          (("--family",), {"default": None}), grid(512)])

    rc = top.add_parser("recheck", help="re-evaluate an emitted artifact")
    rc.add_argument("artifact")
    rc.add_argument("--rtol", type=float, default=1e-9)
    _common(rc)
    rc.set_defaults(task="recheck")

    run = top.add_parser("run", help="execute JSON experiment configs")
    run.add_argument("configs", nargs="+")
    run.set_defaults(task=None)
    return ap


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else (logging.INFO if verbosity == 1 else logging.DEBUG)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which would read as non-convergence
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    _configure_logging(args.verbose)
    if args.group == "run":
        workers = min(_threads(), len(args.configs))
        if workers == 1:
            codes = [run_config(c) for c in args.configs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                codes = list(pool.map(run_config, args.configs))
        return max(codes)
    params = {k: v for k, v in vars(args).items() if k not in ("group", "cmd", "task", "out", "verbose")}
    params = {k: v for k, v in params.items() if v is not None}
    return execute(args.task, params, Path(args.out), Path.cwd())


if __name__ == "__main__":
    sys.exit(main())
