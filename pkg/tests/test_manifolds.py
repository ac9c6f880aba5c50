import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anosov_lab.certifier import cone_invariance_certify, ConeParams
from anosov_lab.manifolds import (
    INFLATE,
    ManifoldError,
    chebyshev_nodes,
    compute_local_manifold,
    contraction_rate_check,
    convergence_exponents,
    inclusion_defect,
    limit_point_closure_check,
    manifold_separation,
    orbit,
)
from anosov_lab.splitting import line_angle
from anosov_lab.torus import distance, wrap

from conftest import CAT_ES, CAT_EU, LAM_S

P = np.array([0.3, 0.7])


@pytest.fixture(scope="module")
def cat_unstable(cat, cat_split):
    return compute_local_manifold(cat, cat_split, P, 0, "u", iters=20)


@pytest.fixture(scope="module")
def pcat_unstable(pcat, pcat_split):
    return compute_local_manifold(pcat, pcat_split, P, 0, "u", iters=20)


@pytest.fixture(scope="module")
def pcat_stable(pcat, pcat_split):
    return compute_local_manifold(pcat, pcat_split, P, 0, "s", iters=20)


def test_chebyshev_nodes():
    t = chebyshev_nodes(0.5, 33)
    assert t[0] == pytest.approx(-0.5) and t[-1] == pytest.approx(0.5) and t[16] == pytest.approx(0.0, abs=1e-16)
    assert np.all(np.diff(t) > 0)


def test_orbit_round_trip(pcat):
    fw = orbit(pcat, P, 0, 5)
    bw = orbit(pcat, fw[-1], 5, 5, forward=False)
    assert float(np.max(distance(bw[-1], P[None]))) < 1e-12


# --- exponents -----------------------------------------------------------------------

def test_exponents_identical_points(cat):
    ex = convergence_exponents(cat, P, P)
    assert ex.theta == -math.inf and ex.delta == -math.inf


def test_exponents_stable_offset(cat):
    ex = convergence_exponents(cat, P, wrap(P + 1e-6 * CAT_ES))
    assert ex.theta == pytest.approx(math.log(LAM_S), abs=0.05)
    assert ex.delta > 0


def test_exponents_unstable_offset(cat):
    ex = convergence_exponents(cat, P, wrap(P + 1e-6 * CAT_EU))
    assert ex.delta == pytest.approx(math.log(LAM_S), abs=0.05)
    assert ex.theta >= 0


def test_exponents_gate(cat):
    with pytest.raises(ValueError):
        convergence_exponents(cat, [0.0, 0.0], [0.5, 0.5])


# --- graphs --------------------------------------------------------------------------

def test_cat_unstable_manifold_is_straight(cat_unstable):
    assert float(np.max(np.abs(cat_unstable.g))) < 1e-9
    assert float(line_angle(cat_unstable.e_side, CAT_EU)) < 1e-14
    assert cat_unstable.points(np.array([0.0]))[0] == pytest.approx(P, abs=1e-15)


def test_default_delta_is_half_admissible_radius(cat_unstable):
    assert cat_unstable.delta == pytest.approx(0.5 * 0.5 / (20 * (3 + math.sqrt(5)) / 2), rel=1e-12)


@pytest.mark.parametrize("name", ["pcat_unstable", "pcat_stable"])
def test_perturbed_graph_invariants(name, request):
    M = request.getfixturevalue(name)
    assert abs(float(M.spline(0.0))) < 1e-13
    assert M.tangency < 1e-4
    assert M.lipschitz <= 0.2


@pytest.mark.parametrize("side", ["u", "s"])
def test_graph_transform_contracts_at_fixed_point(pcat, pcat_split, side):
    # the origin is fixed, so consecutive iterates contract by the squared cone rate
    cert = cone_invariance_certify(pcat, pcat_split, ConeParams(0.2, 0.5), grid_n=32)
    eta = cert.constants["eta"]
    M = compute_local_manifold(pcat, pcat_split, [0.0, 0.0], 0, side, iters=20)
    h = np.array(M.history)
    above = h[:-1] > 1e-13
    ratios = h[1:][above] / h[:-1][above]
    assert ratios.size >= 3
    assert np.all(ratios <= eta**2 + 1e-2)


def test_tangency_improves_with_iterations(pcat, pcat_split):
    few = compute_local_manifold(pcat, pcat_split, P, 0, "u", iters=1)
    many = compute_local_manifold(pcat, pcat_split, P, 0, "u", iters=20)
    assert many.tangency <= max(few.tangency, 1e-12)


def test_invariance_inclusion(pcat, pcat_split, pcat_unstable, pcat_stable):
    assert inclusion_defect(pcat, pcat_split, pcat_unstable) < 1e-6
    assert inclusion_defect(pcat, pcat_split, pcat_stable) < 1e-6


def test_manifolds_transverse(pcat_unstable, pcat_stable):
    assert manifold_separation(pcat_unstable, pcat_stable) > 0.0


def test_stable_points_converge_forward(pcat, pcat_stable):
    for t in (-0.8, 0.5, 1.0):
        q = pcat_stable.points(np.array([t * pcat_stable.delta]))[0]
        ex = convergence_exponents(pcat, P, q)
        assert ex.theta < -0.8
        fw = orbit(pcat, np.stack([P, q]), 0, 10)
        assert float(np.max(distance(fw[:, 0], fw[:, 1]))) <= pcat_stable.delta * 1.01


def test_membership_defect_outside_domain(pcat_unstable):
    far = pcat_unstable.points(np.array([0.0]))[0] + 3 * pcat_unstable.delta * pcat_unstable.e_side
    assert pcat_unstable.membership_defect(far[None])[0] == math.inf


def test_argument_gates(cat, cat_split):
    with pytest.raises(ValueError):
        compute_local_manifold(cat, cat_split, P, side="x")
    with pytest.raises(ValueError):
        compute_local_manifold(cat, cat_split, P, iters=0)
    with pytest.raises(ValueError):
        compute_local_manifold(cat, cat_split, P, delta=0.01, r_tilde=0.005)


def test_cone_exit_raises(pcat, pcat_split):
    with pytest.raises(ManifoldError):
        compute_local_manifold(pcat, pcat_split, P, delta=0.004, alpha=1e-6)


# --- rates ---------------------------------------------------------------------------

def test_cat_contraction_oracle(cat, cat_unstable):
    assert cat_unstable.zeta_fit == pytest.approx(LAM_S, rel=1e-6)
    assert cat_unstable.K_fit == pytest.approx(1.0, abs=1e-4)  # least-squares fit on a sampled envelope
    assert cat_unstable.zeta == pytest.approx(LAM_S * INFLATE, rel=1e-6)
    cert = contraction_rate_check(cat_unstable, cat)
    assert cert.certified and cert.residuals["max_violation_ratio"] <= 1.0


@pytest.mark.parametrize("name", ["pcat_unstable", "pcat_stable"])
def test_perturbed_contraction(name, request, pcat):
    M = request.getfixturevalue(name)
    cert = contraction_rate_check(M, pcat, n_max=15, samples=100)
    assert cert.certified
    assert M.zeta <= 0.42 and M.K <= 2.0
    assert M.K >= 1.0  # the n = 0 inequality


@settings(max_examples=5, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_contraction_holds_at_random_points(x, y):
    from anosov_lab.family import Constant
    from anosov_lab.splitting import SplittingField
    from anosov_lab.torus import TorusDiffeo

    cat = Constant(TorusDiffeo.cat())
    M = compute_local_manifold(cat, SplittingField.constant(CAT_ES, CAT_EU), [x, y], 0, "s", iters=5, n_fit=8)
    assert contraction_rate_check(M, cat, n_max=8, samples=20).certified


# --- limits --------------------------------------------------------------------------

def test_closure_constant_sequence(cat, cat_split, cat_unstable):
    q = cat_unstable.points(np.array([0.25 * cat_unstable.delta]))
    assert limit_point_closure_check(cat, cat_split, [P, P], [q[0], q[0]], cat_unstable.delta, tol=1e-8)


def test_closure_cat_lines(cat, cat_split, cat_unstable):
    d = cat_unstable.delta
    ms = np.arange(10, 21)
    ps = wrap(P + (1e-3 / ms)[:, None] * CAT_ES)
    qs = wrap(ps + 0.5 * d * CAT_EU)
    assert limit_point_closure_check(cat, cat_split, ps, qs, d, p_limit=P, tol=1e-8, iters=5)


def test_closure_perturbed(pcat, pcat_split, pcat_unstable):
    d = pcat_unstable.delta
    ms = np.arange(10, 16)
    ps = wrap(P + (1e-3 / ms)[:, None] * pcat_unstable.e_other)
    qs = [compute_local_manifold(pcat, pcat_split, p, 0, "u", d, iters=20).points(np.array([0.5 * d]))[0] for p in ps]
    assert limit_point_closure_check(pcat, pcat_split, ps, qs, d, p_limit=P, tol=1e-5)
    # a point off the manifold is rejected
    off = [wrap(q + 1e-3 * pcat_unstable.e_other) for q in qs]
    assert not limit_point_closure_check(pcat, pcat_split, ps, off, d, p_limit=P, tol=1e-5)
