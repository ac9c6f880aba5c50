import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anosov_lab.family import Constant, Window, c2_sup_bound
from anosov_lab.sections import (
    AngleFailure,
    GridSection,
    SectionFamily,
    adversarial_section,
    hyperbolic_gap_report,
    power_norm_estimate,
    power_norm_table,
    project_su,
    projection_bound,
    pushforward,
)
from anosov_lab.splitting import SplittingField, cross, extract_splitting, normalize
from anosov_lab.torus import grid_points, perturbed_cat

from conftest import CAT_ES, CAT_EU, LAM_S, LAM_U

W = Window(0, 2)


def _skewed(theta):
    return SplittingField.constant(np.array([1.0, 0.0]), np.array([math.cos(theta), math.sin(theta)]))


def test_family_validation():
    with pytest.raises(ValueError):
        GridSection(0, np.zeros((4, 3, 2)))
    with pytest.raises(ValueError):
        SectionFamily.from_arrays({0: np.zeros((4, 4, 2)), 2: np.zeros((4, 4, 2))})
    with pytest.raises(ValueError):
        SectionFamily.from_arrays({0: np.zeros((4, 4, 2)), 1: np.zeros((8, 8, 2))})
    with pytest.raises(ValueError, match="radius"):
        SectionFamily.from_arrays({0: np.ones((4, 4, 2))}, tau=1.0)
    SectionFamily.from_arrays({0: np.ones((4, 4, 2))}, tau=math.sqrt(2))


def test_norm_consistent_with_indices(rng):
    Z = SectionFamily.random(W, 8, rng)
    assert Z.norm == max(float(np.max(np.linalg.norm(Z[i].values, axis=-1))) for i in W.indices())


def test_zero_maps_to_zero(pcat):
    out = pushforward(pcat, SectionFamily.zeros(W, 16))
    assert out.norm == 0.0 and out.window == Window(1, 3)


def test_unstable_eigen_section_scales(cat):
    out = pushforward(cat, SectionFamily.constant(CAT_EU, W, 16))
    for i in out.window.indices():
        np.testing.assert_allclose(out[i].flat(), np.tile(LAM_U * CAT_EU, (256, 1)), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_norm_bound_random_families(seed):
    rng = np.random.default_rng(seed)
    F = Constant(perturbed_cat(0.01))
    Z = SectionFamily.random(W, 16, rng)
    pts = grid_points(64)
    sup_df = float(np.max(np.linalg.norm(F.map_at(0).jacobian(pts), ord=2, axis=(1, 2))))
    S, _ = c2_sup_bound(F)
    out = pushforward(F, Z)
    # interpolated values are convex combinations of grid values
    assert out.norm <= max(sup_df, S) * Z.norm * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_pushforward_linear(seed, a):
    rng = np.random.default_rng(seed)
    F = Constant(perturbed_cat(0.01))
    Z1, Z2 = SectionFamily.random(W, 8, rng), SectionFamily.random(W, 8, rng)
    lhs = pushforward(F, Z1 + Z2 * a)
    rhs = pushforward(F, Z1) + pushforward(F, Z2) * a
    assert (lhs - rhs).norm < 1e-12 * max(1.0, abs(a)) * 10


def test_cat_subbundles_invariant(cat):
    out = pushforward(cat, SectionFamily.constant(0.3 * CAT_ES, W, 16))
    assert float(np.max(np.abs(cross(normalize(out[1].flat()), CAT_ES)))) < 1e-14


def _stable_section_residual(F, grid_n):
    seed = SplittingField.constant(CAT_ES, CAT_EU)
    S = extract_splitting(F, seed, 20, grid_n=grid_n)
    es, _ = S.grid_directions(0)
    out = pushforward(F, SectionFamily.from_arrays({0: es.reshape(grid_n, grid_n, 2)}))
    target, _ = S.directions(1, grid_points(grid_n), exact=True)
    return float(np.max(np.abs(cross(normalize(out[1].flat()), target))))


def test_extracted_subbundle_invariance_refines():
    F = Constant(perturbed_cat(0.01))
    coarse, fine = _stable_section_residual(F, 64), _stable_section_residual(F, 128)
    # interpolation error of a C^{1+a} direction field: faster than first order
    assert fine < coarse / 2.5
    assert fine < 2e-4


@pytest.mark.xfail(strict=True, reason="bilinear interpolation of the extracted stable field leaves ~1e-4 at grid 128")
def test_extracted_subbundle_invariance_tight():
    assert _stable_section_residual(Constant(perturbed_cat(0.01)), 128) < 1e-8


def test_projection_identities(rng, pcat_split):
    Z = SectionFamily.random(Window(0, 0), 16, rng)
    Zs, Zu, K = project_su(Z, pcat_split)
    assert (Zs + Zu - Z).norm < 1e-14
    Zss, Zsu, _ = project_su(Zs, pcat_split)
    assert (Zss - Zs).norm < 1e-14 and Zsu.norm < 1e-14
    assert math.isfinite(K)


def test_stable_section_has_no_unstable_part(cat_split):
    Zs, Zu, _ = project_su(SectionFamily.constant(2 * CAT_ES, W, 8), cat_split)
    assert Zu.norm < 1e-15


def test_orthogonal_projection_bound(cat_split, rng):
    _, _, K = project_su(SectionFamily.random(W, 8, rng), cat_split)
    assert K <= 1.0 + 1e-14
    assert projection_bound(cat_split, W) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("theta", [0.05, 0.3, 1.0])
def test_oblique_projection_norm(theta):
    S = _skewed(theta)
    Z = adversarial_section(S, Window(0, 0), 8)
    _, _, K = project_su(Z, S)
    assert K == pytest.approx(1 / math.sin(theta), rel=0.05)
    assert projection_bound(S, Window(0, 0)) == pytest.approx(1 / math.sin(theta), rel=1e-12)


def test_degenerate_angle_raises():
    with pytest.raises(AngleFailure):
        project_su(SectionFamily.constant([1.0, 0.0], Window(0, 0), 4), _skewed(1e-5))


def test_power_norm_cat(cat, cat_split):
    for b in ("s", "u"):
        assert power_norm_estimate(cat, cat_split, b, 30) == pytest.approx(LAM_S, abs=5e-3)
    with pytest.raises(ValueError):
        power_norm_estimate(cat, cat_split, "s", 0)


def test_power_norm_identity(identity_family):
    S = SplittingField.constant(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    for n in (1, 7, 30):
        assert power_norm_estimate(identity_family, S, "s", n, grid_n=4) == 1.0


def test_power_norm_stabilizes(pcat, pcat_split):
    table = power_norm_table(pcat, pcat_split, 40, grid_n=16)
    for n in (20,):
        a, b = table[n - 1], table[2 * n - 1]
        assert abs(a[1] - b[1]) < 1e-2 and abs(a[2] - b[2]) < 1e-2
    assert table[29][1] == pytest.approx(power_norm_estimate(pcat, pcat_split, "s", 30, grid_n=16), rel=1e-14)


def test_gap_report_cat(cat, cat_split):
    cert = hyperbolic_gap_report(cat, cat_split, n=30)
    assert cert.certified and cert.failure is None
    assert cert.constants["stable_est"] <= 0.39 and cert.constants["unstable_est"] <= 0.39


def test_gap_report_identity(identity_family):
    S = SplittingField.constant(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    cert = hyperbolic_gap_report(identity_family, S, n=10, grid_n=4)
    assert cert.falsified and cert.failure == "gap"


def test_gap_report_collapsing_angles(shear_pair):
    # per-index unstable lines creep towards the stable one
    es = {i: np.array([1.0, 0.0]) for i in range(4)}
    eu = {i: np.array([math.cos(10.0 ** -(i + 1)), math.sin(10.0 ** -(i + 1))]) for i in range(4)}
    S = SplittingField.constant(es, eu, period=None)
    cert = hyperbolic_gap_report(shear_pair, S, n=5, window=Window(0, 3), grid_n=4)
    assert cert.falsified and cert.failure == "angle"
    assert cert.constants["K_bound"] > 999


def test_gap_report_period_two(shear_pair):
    from anosov_lab.splitting import linear_splitting

    cert = hyperbolic_gap_report(shear_pair, linear_splitting(shear_pair), n=30, window=Window(0, 1), grid_n=4)
    assert cert.certified
    assert cert.constants["stable_est"] == pytest.approx(math.sqrt(LAM_S), abs=5e-3)
