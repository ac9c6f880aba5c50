"""Acceptance criteria 1-10.

Each test prints one ``PASS``/``FAIL`` line and then asserts the same
verdict. Tolerances and runtime limits are module constants so they cannot
drift per run.
"""

import itertools
import math
import time

import numpy as np
import pytest

from anosov_lab.certifier import (
    ConeParams,
    anosov_direct_check,
    check_radius,
    cone_invariance_certify,
)
from anosov_lab.conjugacy import (
    ConfigError,
    ConjugacyConfig,
    expansivity_bound,
    expansivity_containment,
    solve_conjugacy,
)
from anosov_lab.family import Constant, Cuts, Window, gather
from anosov_lab.manifolds import compute_local_manifold, contraction_rate_check
from anosov_lab.multiplicative import (
    IntMat2,
    PeriodicSeq,
    build_multiplicative,
    factorize_sl2n,
    neighbor_lemma_check,
    verify_growth_bounds,
    word_product,
)
from anosov_lab.sections import hyperbolic_gap_report, power_norm_estimate
from anosov_lab.splitting import (
    SplittingField,
    extract_splitting,
    field_distance,
    invariance_residual,
    line_angle,
    linear_splitting,
    rotated,
    splitting_from_multiplicative,
)
from anosov_lab.torus import TorusDiffeo, perturbed_cat, translation_pert

from conftest import LAM_U

SEED = 20240601

# criterion 1
C1_SEQUENCES, C1_MAX_ENTRY, C1_MAX_PERIOD, C1_N_MAX, C1_RTOL, C1_SECONDS = 50, 9, 12, 25, 1e-9, 10.0
# criterion 2
C2_MAX_PERIOD, C2_MAX_ENTRY, C2_SECONDS = 5, 4, 5.0
# criterion 3
C3_WORDS, C3_MAX_EXP, C3_MAX_LEN, C3_SECONDS = 100, 20, 10, 1.0
# criterion 4
C4_ALPHA, C4_LAMBDA_TILDE, C4_GRID, C4_ETA_INV_MIN, C4_FIT_TOL, C4_SECONDS = 0.2, 0.5, 128, 2.5, 1e-6, 5.0
# criterion 5
C5_EPS, C5_ITERS, C5_GRID, C5_SEED_ROTATION, C5_SEED_TOL, C5_INVARIANCE_TOL = 0.01, 20, 64, 0.2, 1e-10, 1e-6
# criterion 6
C6_N, C6_TOL, C6_ANGLE_THRESHOLD = 30, 5e-3, 1e-3
# criterion 7
C7_STRAIGHT_TOL, C7_TANGENCY_TOL, C7_ZETA_MAX, C7_K_MAX, C7_N_MAX, C7_SAMPLES = 1e-9, 1e-4, 0.42, 2.0, 15, 100
# criterion 8
C8_GRID, C8_WINDOW = 128, Window(0, 7)
C8_TRANSLATION_TOL, C8_TRANSLATION_RESIDUAL = 1e-8, 1e-10
C8_MAX_ITER, C8_RESIDUAL, C8_RATIO_SLACK, C8_SECONDS = 60, 1e-8, 1e-3, 60.0
# criterion 9
C9_FORMULA, C9_FORMULA_TOL, C9_GRID = 4.613e-4, 1e-7, 512


def report(k: int, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
    assert ok, detail


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_criterion_01_multiplicative_growth_bound():
    rng = np.random.default_rng(SEED)
    seqs = [PeriodicSeq((1,))]
    for _ in range(C1_SEQUENCES):
        per = int(rng.integers(1, C1_MAX_PERIOD + 1))
        seqs.append(PeriodicSeq(tuple(int(v) for v in rng.integers(1, C1_MAX_ENTRY + 1, per))))
    with Timer() as t:
        certs = [verify_growth_bounds(s, n_max=C1_N_MAX, rtol=C1_RTOL)[0] for s in seqs]
    failed = [s.values for s, c in zip(seqs, certs) if not c.certified]
    worst = max(max(c.residuals.values()) for c in certs)
    ok = not failed and t.seconds < C1_SECONDS
    report(1, ok, f"{len(seqs)} families, n<={C1_N_MAX}, {len(failed)} violations, "
                  f"worst bound ratio {worst:.4f}, {t.seconds:.2f}s (limit {C1_SECONDS}s)")


def test_criterion_02_neighbor_lemma_exhaustive():
    with Timer() as t:
        total = triggered = bad = 0
        for per in range(1, C2_MAX_PERIOD + 1):
            for vals in itertools.product(range(1, C2_MAX_ENTRY + 1), repeat=per):
                cert = neighbor_lemma_check(PeriodicSeq(vals))
                total += 1
                triggered += cert.residuals["triggered"]
                bad += cert.residuals["counterexamples"]
    ok = bad == 0 and triggered > 0 and t.seconds < C2_SECONDS
    report(2, ok, f"{total} sequences, {triggered} triggered indices, {bad} counterexamples, "
                  f"{t.seconds:.2f}s (limit {C2_SECONDS}s)")


def test_criterion_03_factorization_round_trip():
    rng = np.random.default_rng(SEED)
    words = []
    for _ in range(C3_WORDS):
        n = int(rng.integers(1, C3_MAX_LEN + 1))
        first = "M" if rng.random() < 0.5 else "N"
        letters = [first if k % 2 == 0 else ("N" if first == "M" else "M") for k in range(n)]
        words.append(list(zip(letters, (int(e) for e in rng.integers(1, C3_MAX_EXP + 1, n)))))
    with Timer() as t:
        good = 0
        for w in words:
            mat = word_product(w)
            f = factorize_sl2n(mat)
            back = IntMat2(1, 0, 0, 1)
            for letter, e in f.word:
                back = back @ (IntMat2(1, 0, e, 1) if letter == "M" else IntMat2(1, e, 0, 1))
            good += back == mat and list(f.word) == w
    ok = good == C3_WORDS and t.seconds < C3_SECONDS
    report(3, ok, f"{good}/{C3_WORDS} exact reconstructions, {t.seconds:.3f}s (limit {C3_SECONDS}s)")


def test_criterion_04_cat_certification(cat, cat_split):
    with Timer() as t:
        cones = cone_invariance_certify(cat, cat_split, ConeParams(C4_ALPHA, C4_LAMBDA_TILDE), grid_n=C4_GRID)
        direct = anosov_direct_check(cat, cat_split, n_max=20, grid_n=C4_GRID)
    eta_inv = cones.constants["eta_inv"]
    lam, c = direct.constants["lambda"], direct.constants["c"]
    ok = (
        cones.certified and direct.certified and eta_inv >= C4_ETA_INV_MIN
        and abs(lam - 0.381966) <= C4_FIT_TOL and abs(c - 1.0) <= C4_FIT_TOL and t.seconds < C4_SECONDS
    )
    report(4, ok, f"eta^-1={eta_inv:.6f} (exact {LAM_U:.6f}), lambda={lam:.7f}, c={c:.7f}, "
                  f"grid {C4_GRID}, {t.seconds:.2f}s (limit {C4_SECONDS}s)")


def test_criterion_05_splitting_extraction(cat_split):
    F = Constant(perturbed_cat(C5_EPS))
    a = extract_splitting(F, cat_split, n_iter=C5_ITERS, grid_n=C5_GRID)
    b = extract_splitting(F, rotated(cat_split, C5_SEED_ROTATION), n_iter=C5_ITERS, grid_n=C5_GRID)
    seed_gap = field_distance(a, b, [0])
    inv = invariance_residual(F, a)

    fam, data = build_multiplicative(PeriodicSeq((1,)))
    fld = splitting_from_multiplicative(data)
    G = gather(fam, Cuts((2,), 0))
    blocks = [G.map_at(i).linear for i in range(-3, 4)]
    exact = all(m == IntMat2(2, 1, 1, 1) for m in blocks)
    es0, eu0 = fld.directions(0, np.zeros((1, 2)), exact=True)
    gfld = SplittingField.constant(es0[0], eu0[0])
    gathered_ok = anosov_direct_check(G, gfld, n_max=20, grid_n=4).certified
    # the gathered splitting is the original one sampled at the cuts
    same = float(line_angle(es0[0], linear_splitting(G).directions(0, np.zeros((1, 2)))[0][0])) < 1e-12

    ok = seed_gap < C5_SEED_TOL and inv < C5_INVARIANCE_TOL and exact and gathered_ok and same
    report(5, ok, f"seed gap {seed_gap:.2e} (tol {C5_SEED_TOL}), invariance {inv:.2e} (tol {C5_INVARIANCE_TOL}), "
                  f"gathered pairs {'= [[2,1],[1,1]]' if exact else 'differ'}, "
                  f"gathered {'certified' if gathered_ok else 'not certified'}")


def test_criterion_06_operator_gap(cat, cat_split, identity_family, shear_pair):
    est = {b: power_norm_estimate(cat, cat_split, b, C6_N) for b in ("s", "u")}
    close = all(abs(v - 0.381966) <= C6_TOL for v in est.values())
    axes = SplittingField.constant(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    ident = hyperbolic_gap_report(identity_family, axes, n=10, grid_n=4)
    es = {i: np.array([1.0, 0.0]) for i in range(4)}
    eu = {i: np.array([math.cos(10.0 ** -(i + 1)), math.sin(10.0 ** -(i + 1))]) for i in range(4)}
    collapsing = SplittingField.constant(es, eu, period=None)
    shear = hyperbolic_gap_report(shear_pair, collapsing, n=5, window=Window(0, 3), grid_n=4,
                                  threshold=C6_ANGLE_THRESHOLD)
    ok = close and ident.falsified and ident.failure == "gap" and shear.falsified and shear.failure == "angle"
    report(6, ok, f"stable {est['s']:.6f}, unstable {est['u']:.6f} (tol {C6_TOL}), "
                  f"identity -> {ident.failure}, collapsing shear -> {shear.failure}")


def test_criterion_07_local_manifolds(cat, cat_split, pcat, pcat_split):
    p = np.array([0.3, 0.7])
    straight = float(np.max(np.abs(compute_local_manifold(cat, cat_split, p, 0, "u").g)))
    tang, zetas, Ks, certs = [], [], [], []
    for side in ("u", "s"):
        M = compute_local_manifold(pcat, pcat_split, p, 0, side)
        cert = contraction_rate_check(M, pcat, n_max=C7_N_MAX, samples=C7_SAMPLES)
        tang.append(M.tangency)
        zetas.append(M.zeta)
        Ks.append(M.K)
        certs.append(cert.certified)
    ok = (
        straight < C7_STRAIGHT_TOL and max(tang) < C7_TANGENCY_TOL and all(certs)
        and max(zetas) <= C7_ZETA_MAX and max(Ks) <= C7_K_MAX
    )
    report(7, ok, f"cat |g| {straight:.1e}, perturbed |g'(0)| {max(tang):.1e}, "
                  f"zeta {max(zetas):.4f} (max {C7_ZETA_MAX}), K {max(Ks):.4f} (max {C7_K_MAX}), "
                  f"contraction {'holds' if all(certs) else 'fails'} for n<={C7_N_MAX}")


def test_criterion_08_conjugacy_solver(cat, cat_split):
    with Timer() as t:
        T = Constant(TorusDiffeo(TorusDiffeo.cat().linear, translation_pert((0.01, 0.0))))
        ct = ConjugacyConfig(0.4, 0.39, 0.05, 0.03, 0.015, 0.1, grid_n=C8_GRID, window=C8_WINDOW)
        tr = solve_conjugacy(cat, T, cat_split, ct)
        tr_err = float(np.max(np.abs(tr.displacement.values.reshape(-1, 2) - [0.0, -0.01])))

        G = Constant(perturbed_cat(0.005))
        cm = ConjugacyConfig(0.4, 0.39, 0.05, 0.02, 0.006, 0.06, grid_n=C8_GRID, window=C8_WINDOW)
        mode = solve_conjugacy(cat, G, cat_split, cm)
        rng = np.random.default_rng(SEED)
        Z0 = rng.standard_normal(mode.displacement.values.shape)
        Z0 *= 0.5 * cm.r_prime / np.max(np.linalg.norm(Z0, axis=-1))
        other = solve_conjugacy(cat, G, cat_split, cm, initial=Z0)
        gap = float(np.max(np.linalg.norm(other.displacement.values - mode.displacement.values, axis=-1)))
    worst_ratio = max(mode.contraction_history + other.contraction_history)
    ratio_cap = cm.lam + cm.zeta + C8_RATIO_SLACK
    ok = (
        tr_err < C8_TRANSLATION_TOL and tr.residual < C8_TRANSLATION_RESIDUAL
        and mode.iterations <= C8_MAX_ITER and mode.residual < C8_RESIDUAL
        and worst_ratio <= ratio_cap and gap <= 2 * cm.tol and t.seconds < C8_SECONDS
    )
    report(8, ok, f"translation error {tr_err:.1e}, residual {tr.residual:.1e}; mode {mode.iterations} iterations, "
                  f"residual {mode.residual:.1e}, max ratio {worst_ratio:.4f} (cap {ratio_cap:.3f}), "
                  f"two-seed gap {gap:.1e} (tol {2 * cm.tol:.0e}), {t.seconds:.1f}s (limit {C8_SECONDS}s)")


def test_criterion_09_expansivity_bound(cat):
    value = expansivity_bound(10, 0.5, 0.1, 0.1)
    viol, close = expansivity_containment(cat, 10, 0.5, 0.1, 0.1, grid=C9_GRID)
    ok = abs(value - C9_FORMULA) <= C9_FORMULA_TOL and viol == 0 and close > 0
    report(9, ok, f"bound {value:.6e} (want {C9_FORMULA} +- {C9_FORMULA_TOL}), "
                  f"{C9_GRID}^2 grid: {close} close pairs, {viol} violations")


def _gate_cases(rng):
    """Yield ``(label, accept, reject, name)``: build callables just inside and just outside each boundary."""
    cat = Constant(TorusDiffeo.cat())
    bound_r = 0.5 / (20 * LAM_U)
    for _ in range(40):
        lam, eta = rng.uniform(0.05, 0.9, 2)
        zb = min(1 - lam, 1 - eta, 0.25)
        r_tilde = 0.1
        r_prime = r_tilde / 3
        z_in = zb * (1 - 1e-9)
        xi = 0.5 * r_prime * (1 - lam - z_in)  # admissible for the inside value
        yield ("zeta-range",
               lambda z=z_in, l=lam, e=eta, x=xi: ConjugacyConfig(l, e, z, r_prime, x, r_tilde),
               lambda z=zb * (1 + 1e-9), l=lam, e=eta, x=xi: ConjugacyConfig(l, e, z, r_prime, x, r_tilde),
               "zeta < min")
        zeta = 0.5 * zb
        xb = r_prime * (1 - lam - zeta)
        yield ("xi-prime",
               lambda x=xb * (1 - 1e-9), l=lam, e=eta, z=zeta: ConjugacyConfig(l, e, z, r_prime, x, r_tilde),
               lambda x=xb * (1 + 1e-9), l=lam, e=eta, z=zeta: ConjugacyConfig(l, e, z, r_prime, x, r_tilde),
               "xi_prime < r_prime(1 - lambda - zeta)")
        lt = float(rng.uniform(0.01, 0.99))
        ab = (1 - lt) / (1 + lt)
        yield ("alpha-range",
               lambda a=ab * (1 - 1e-9), t=lt: ConeParams(a, t),
               lambda a=ab * (1 + 1e-9), t=lt: ConeParams(a, t),
               "(1 - lambda_tilde)/(1 + lambda_tilde)")
        s = float(rng.uniform(0.0, 1.0))
        yield ("radius",
               lambda r=bound_r * (1 - 1e-9 * s - 1e-12): check_radius(r, cat),
               lambda r=bound_r * (1 + 1e-9 + s): check_radius(r, cat),
               "r_tilde <= rho/(20 S)")


def test_criterion_10_validation_gates():
    rng = np.random.default_rng(SEED)
    counts: dict[str, int] = {}
    problems = []
    for label, accept, reject, name in _gate_cases(rng):
        counts[label] = counts.get(label, 0) + 1
        try:
            accept()
        except (ValueError, ConfigError) as exc:
            problems.append(f"{label}: inside value rejected ({exc})")
        try:
            reject()
            problems.append(f"{label}: outside value accepted")
        except (ValueError, ConfigError) as exc:
            if name not in str(exc):
                problems.append(f"{label}: message does not name the inequality: {exc}")
    ok = not problems and len(counts) == 4
    detail = ", ".join(f"{k} x{v}" for k, v in counts.items())
    report(10, ok, f"boundary pairs {detail}; {len(problems)} problems" + (f" first: {problems[0]}" if problems else ""))


@pytest.fixture(autouse=True)
def _show_verdicts(capsys):
    # PASS/FAIL lines go straight to the terminal even under capture
    yield
    out = capsys.readouterr().out
    with capsys.disabled():
        for line in out.splitlines():
            if line.startswith(("PASS criterion", "FAIL criterion")):
                print("\n" + line, end="")
