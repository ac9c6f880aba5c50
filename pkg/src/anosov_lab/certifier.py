"""Certification of uniform hyperbolicity for torus families.

Two routes are offered. The direct route fits growth constants along a
given splitting. The cone route checks that every derivative maps the
closed unstable alpha-cone strictly inside the unstable cone at the image
(and the mirrored statement for the stable cones under inverses), with a
uniform expansion factor. Both report a :class:`Certificate`.

Cones are measured in a star norm built from the splitting: a vector
``a e^s + b e^u`` has star norm ``max(|a| w_s, |b| w_u)`` where the weights
come from :func:`adapted_norm` (or are 1 for the plain splitting norm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certificate import CERTIFIED, FALSIFIED, INCONCLUSIVE, Certificate
from .family import Family, Window, c2_sup_bound
from .splitting import SplittingField, cocycle_log_stretch, cross, decompose, normalize
from .torus import cm_distance, grid_points, spectral_norm, tensor_norm

ANGLE_THRESHOLD = 1e-3
CERT_MARGIN = 1e-6
DEFAULT_GRID = 128
DENSE_RAYS = 64
EQUIV_SLACK = 1e-2


# --- cone parameters --------------------------------------------------------------

def sigma_A_eval(alpha: float, lambda_tilde: float) -> float:
    """Cone-stability threshold for aperture ``alpha`` and rate ``lambda_tilde``.

    The formula itself only needs ``alpha`` and ``lambda_tilde`` in ``(0, 1)``
    and a positive result; the tighter aperture bound is enforced by
    :class:`ConeParams`.

    Raises:
        ValueError: if an argument is outside ``(0, 1)`` or the threshold is
            not positive.
    """
    if not 0.0 < lambda_tilde < 1.0:
        raise ValueError(f"lambda_tilde must lie in (0, 1), got {lambda_tilde}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    li = 1.0 / lambda_tilde
    first = (li - lambda_tilde) * alpha / (2.0 * (1.0 + alpha) ** 2)
    second = (li * (1.0 - alpha) - (1.0 + alpha) * alpha) / (2.0 * (1.0 + alpha))
    value = min(first, second)
    if value <= 0.0:
        raise ValueError(f"sigma_A is not positive for alpha={alpha}, lambda_tilde={lambda_tilde}")
    return value


def _check_cone_range(alpha: float, lambda_tilde: float) -> None:
    if not 0.0 < lambda_tilde < 1.0:
        raise ValueError(f"lambda_tilde must lie in (0, 1), got {lambda_tilde}")
    upper = (1.0 - lambda_tilde) / (1.0 + lambda_tilde)
    if not 0.0 < alpha < upper:
        raise ValueError(
            f"alpha must lie in (0, (1 - lambda_tilde)/(1 + lambda_tilde)) = (0, {upper:.6g}), got {alpha}"
        )


@dataclass(frozen=True)
class ConeParams:
    alpha: float
    lambda_tilde: float
    r_tilde: float = 0.005
    sigma_A: float = field(init=False)

    def __post_init__(self) -> None:
        _check_cone_range(self.alpha, self.lambda_tilde)
        if self.r_tilde <= 0:
            raise ValueError("r_tilde must be positive")
        object.__setattr__(self, "sigma_A", sigma_A_eval(self.alpha, self.lambda_tilde))


def check_radius(r_tilde: float, F: Family, window: Window | None = None) -> float:
    """Reject ``r_tilde`` above ``rho / (20 S)``; returns that bound."""
    S, bound = c2_sup_bound(F, window)
    if not 0.0 < r_tilde <= bound:
        raise ValueError(f"violated: r_tilde <= rho/(20 S) (r_tilde={r_tilde:.6g}, S={S:.6g}, bound={bound:.6g})")
    return bound


# --- star norm ----------------------------------------------------------------------

class StarNorm:
    """Adapted norm ``max(||v_s||_*, ||v_u||_*)`` over a splitting.

    ``||v_s||_* = sum_{n=0}^{N} lambda_tilde^-n ||DF^n v_s||`` and the
    unstable part uses backward iterates. Weights are evaluated pointwise
    along orbits, so no interpolation enters the norm itself.
    """

    def __init__(self, family: Family, splitting: SplittingField, lambda_tilde: float = 0.5, n_trunc: int = 0):
        if not 0.0 < lambda_tilde < 1.0:
            raise ValueError("lambda_tilde must lie in (0, 1)")
        if n_trunc < 0:
            raise ValueError("n_trunc must be >= 0")
        self.family = family
        self.splitting = splitting
        self.lambda_tilde = lambda_tilde
        self.n_trunc = n_trunc
        self.C: float | None = None
        self.contraction: float | None = None
        self.tail_bound: float | None = None

    def weights(self, i: int, pts: np.ndarray, es: np.ndarray, eu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = pts.shape[0]
        ws = np.ones(n)
        wu = np.ones(n)
        if self.n_trunc == 0:
            return ws, wu
        lt = self.lambda_tilde
        x, v = pts, es.copy()
        for k in range(self.n_trunc):
            x, J, _ = self.family.map_at(i + k).derivatives(x, 1)
            v = np.einsum("nab,nb->na", J, v)
            ws += lt ** -(k + 1) * np.linalg.norm(v, axis=-1)
        x, v = pts, eu.copy()
        for k in range(self.n_trunc):
            x, Jinv, _ = self.family.map_at(i - 1 - k).inverse_derivatives(x, 1)
            v = np.einsum("nab,nb->na", Jinv, v)
            wu += lt ** -(k + 1) * np.linalg.norm(v, axis=-1)
        return ws, wu

    def components(self, i: int, pts: np.ndarray, vecs: np.ndarray, exact: bool = True):
        """Star norms of the stable and unstable parts of ``vecs`` at ``pts``."""
        pts = np.atleast_2d(pts)
        es, eu = self.splitting.directions(i, pts, exact=exact)
        a, b = decompose(es, eu, vecs)
        ws, wu = self.weights(i, pts, es, eu)
        return np.abs(a) * ws, np.abs(b) * wu

    def norm(self, i: int, pts: np.ndarray, vecs: np.ndarray) -> np.ndarray:
        s, u = self.components(i, pts, vecs)
        return np.maximum(s, u)

    def pointwise_constant(self, i: int, pts: np.ndarray) -> np.ndarray:
        """Smallest ``C`` at each point with ``(1/C)|v|_* <= |v| <= C|v|_*`` for all ``v``.

        The star unit ball is the parallelogram with vertices
        ``+-e_s/w_s +- e_u/w_u``, so both extremes are available in closed form.
        """
        es, eu = self.splitting.directions(i, pts, exact=True)
        ws, wu = self.weights(i, pts, es, eu)
        sin_t = np.abs(cross(es, eu))
        upper = np.maximum(ws, wu) / sin_t
        v1 = es / ws[:, None] + eu / wu[:, None]
        v2 = es / ws[:, None] - eu / wu[:, None]
        lower = np.maximum(np.linalg.norm(v1, axis=-1), np.linalg.norm(v2, axis=-1))
        return np.maximum(upper, lower)


def adapted_norm(
    F: Family,
    S: SplittingField,
    lambda_tilde: float,
    n_trunc: int = 10,
    samples: int = 1000,
    seed: int = 0,
) -> StarNorm:
    """Build a star norm and verify one-step contraction and equivalence.

    Sets ``contraction`` (worst sampled ratio ``||DF v||_*/||v||_*`` over
    stable samples and the inverse over unstable samples), ``C`` (worst
    pointwise equivalence constant over a 64x64 grid, padded by 1% for
    points between grid nodes)
    and ``tail_bound`` (geometric truncation error).

    Raises:
        ValueError: if the fitted rate is not below ``lambda_tilde``.
    """
    direct = anosov_direct_check(F, S, n_max=10, grid_n=8)
    lam, c = direct.constants["lambda"], direct.constants["c"]
    if not lam < lambda_tilde:
        raise ValueError(f"fitted rate {lam:.6g} is not below lambda_tilde {lambda_tilde}")
    norm = StarNorm(F, S, lambda_tilde, n_trunc)
    q = lam / lambda_tilde
    norm.tail_bound = c * q ** (n_trunc + 1) / (1.0 - q)
    rng = np.random.default_rng(seed)
    idx = list(F.default_window().indices())
    worst = 0.0
    ratios = []
    for i in idx:
        pts = rng.random((samples, 2))
        es, eu = S.directions(i, pts, exact=True)
        coef = rng.uniform(0.5, 2.0, samples) * rng.choice([-1.0, 1.0], samples)
        # stable contraction under DF
        vs = es * coef[:, None]
        img, J, _ = F.map_at(i).derivatives(pts, 1)
        before = norm.components(i, pts, vs)[0]
        after = norm.norm(i + 1, img, np.einsum("nab,nb->na", J, vs))
        worst = max(worst, float(np.max(after / before)))
        # unstable contraction under DF^-1
        vu = eu * coef[:, None]
        pre, Jinv, _ = F.map_at(i - 1).inverse_derivatives(pts, 1)
        before = norm.components(i, pts, vu)[1]
        after = norm.norm(i - 1, pre, np.einsum("nab,nb->na", Jinv, vu))
        worst = max(worst, float(np.max(after / before)))
        ratios.append(norm.pointwise_constant(i, grid_points(64)))
    r = np.concatenate(ratios)
    norm.contraction = worst
    norm.C = float(np.max(r)) * (1.0 + EQUIV_SLACK)
    return norm


def star_equivalence_holds(norm: StarNorm, samples: int = 1000, seed: int = 1) -> bool:
    """Re-check ``(1/C)||v||_* <= ||v|| <= C||v||_*`` on fresh samples."""
    rng = np.random.default_rng(seed)
    if norm.C is None:
        raise ValueError("norm has no equivalence constant yet")
    for i in norm.family.default_window().indices():
        pts = rng.random((samples, 2))
        v = rng.normal(size=(samples, 2))
        st = norm.norm(i, pts, v)
        eu = np.linalg.norm(v, axis=-1)
        if np.any(st / norm.C > eu * (1 + 1e-12)) or np.any(eu > norm.C * st * (1 + 1e-12)):
            return False
    return True


# --- direct growth check ------------------------------------------------------------

def _window_for(F: Family, window: Window | None) -> list[int]:
    return list((window or F.default_window()).indices())


def anosov_direct_check(
    F: Family,
    S: SplittingField,
    window: Window | None = None,
    n_max: int = 20,
    grid_n: int = 16,
    margin: float = CERT_MARGIN,
) -> Certificate:
    """Fit ``(c, lambda)`` with ``||DF^n v|| <= c lambda^n ||v||`` on stable samples.

    Unstable samples are treated with backward iterates. ``lambda`` is the
    growth slope over the second half of ``[0, n_max]`` and ``c`` the
    smallest constant making the bound hold for every ``n``.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    pts = grid_points(grid_n)
    env = np.full(n_max + 1, -np.inf)
    env[0] = 0.0
    worst_pt = {}
    defect = 0.0
    for i in _window_for(F, window):
        for bundle in ("s", "u"):
            logs, d = cocycle_log_stretch(F, S, i, pts, n_max, bundle)
            defect = max(defect, d)
            for n in range(1, n_max + 1):
                k = int(np.argmax(logs[n - 1]))
                if logs[n - 1, k] > env[n]:
                    env[n] = logs[n - 1, k]
                    worst_pt[n] = {"i": i, "n": n, "bundle": bundle, "point": pts[k].tolist()}
    n0 = n_max // 2
    slope = (env[n_max] - env[n0]) / (n_max - n0)
    lam = float(math.exp(slope))
    ns = np.arange(n_max + 1)
    c = float(np.exp(np.max(env - ns * slope)))
    status = CERTIFIED if lam < 1.0 - margin else FALSIFIED
    witnesses = [] if status == CERTIFIED else [worst_pt[n_max]]
    return Certificate(
        kind="anosov-direct",
        status=status,
        constants={"lambda": lam, "c": c},
        residuals={"log_envelope": env.tolist(), "invariance_defect": defect},
        witnesses=witnesses,
        notes=[f"grid_n={grid_n}", f"n_max={n_max}", "sampled"],
    )


# --- cones --------------------------------------------------------------------------

def _cone_rays(alpha: float, dense: bool) -> np.ndarray:
    """Star-coordinate rays ``(t, 1)`` with ``|t| <= alpha``: boundary, interior."""
    if dense:
        return np.linspace(-alpha, alpha, DENSE_RAYS)
    return np.array([-alpha, 0.0, alpha])


def cone_invariance_certify(
    G: Family,
    S: SplittingField,
    params: ConeParams,
    window: Window | None = None,
    grid_n: int = DEFAULT_GRID,
    norm: StarNorm | None = None,
    dense: bool = False,
    margin: float = CERT_MARGIN,
) -> Certificate:
    """Check strict cone invariance and uniform expansion on a grid.

    For every grid point ``z`` and index ``i`` the closed unstable cone at
    ``z`` must land strictly inside the unstable cone at ``g_i(z)`` and
    expand by at least ``eta^-1`` in the star norm; stable cones at grid
    points of index ``i + 1`` are checked the same way under ``g_i^-1``.
    Three rays per cone suffice for linear images of planar cones; pass
    ``dense=True`` for a 64-ray sweep.
    """
    star = norm or StarNorm(G, S, 0.5, 0)
    alpha = params.alpha
    rays = _cone_rays(alpha, dense)
    pts = grid_points(grid_n)
    eta_inv = np.inf
    worst_slope = 0.0
    witnesses = []
    for i in _window_for(G, window):
        g = G.map_at(i)
        checks = []
        # unstable: forward
        es, eu = S.directions(i, pts, exact=True)
        ws, wu = star.weights(i, pts, es, eu)
        img, J, _ = g.derivatives(pts, 1)
        checks.append(("u", pts, es, eu, ws, wu, img, J, i + 1))
        # stable: backward from index i+1
        es1, eu1 = S.directions(i + 1, pts, exact=True)
        ws1, wu1 = star.weights(i + 1, pts, es1, eu1)
        pre, Jinv, _ = g.inverse_derivatives(pts, 1)
        checks.append(("s", pts, es1, eu1, ws1, wu1, pre, Jinv, i))
        for bundle, base, e_s, e_u, w_s, w_u, tgt, D, j in checks:
            t_es, t_eu = S.directions(j, tgt, exact=True)
            t_ws, t_wu = star.weights(j, tgt, t_es, t_eu)
            for t in rays:
                if bundle == "u":
                    y = (t / w_s)[:, None] * e_s + (1.0 / w_u)[:, None] * e_u
                else:
                    y = (1.0 / w_s)[:, None] * e_s + (t / w_u)[:, None] * e_u
                y_star = 1.0  # max(|t|, 1) with |t| <= alpha < 1
                Dy = np.einsum("nab,nb->na", D, y)
                a, b = decompose(t_es, t_eu, Dy)
                sa, sb = np.abs(a) * t_ws, np.abs(b) * t_wu
                main, side = (sb, sa) if bundle == "u" else (sa, sb)
                slope = side / main
                expansion = np.maximum(sa, sb) / y_star
                k = int(np.argmax(slope))
                worst_slope = max(worst_slope, float(slope[k]) / alpha)
                if slope[k] > alpha * (1.0 - margin):
                    witnesses.append(
                        {
                            "i": i,
                            "bundle": bundle,
                            "point": base[k].tolist(),
                            "ray": float(t),
                            "image_slope": float(slope[k]),
                            "alpha": alpha,
                        }
                    )
                eta_inv = min(eta_inv, float(np.min(expansion)))
    inclusion_ok = not witnesses
    expanding = eta_inv > 1.0 + margin
    status = CERTIFIED if (inclusion_ok and expanding) else FALSIFIED
    if not expanding and inclusion_ok:
        witnesses.append({"reason": "no expansion", "eta_inv": eta_inv})
    return Certificate(
        kind="cone-invariance",
        status=status,
        constants={
            "alpha": alpha,
            "eta": 1.0 / eta_inv if eta_inv > 0 else math.inf,
            "eta_inv": eta_inv,
            "lambda_tilde": params.lambda_tilde,
            "sigma_A": params.sigma_A,
        },
        residuals={"worst_image_slope_over_alpha": worst_slope},
        witnesses=witnesses[:20],
        notes=[
            f"grid_n={grid_n}",
            f"rays={'dense' if dense else 3}",
            f"cover_radius={math.sqrt(2) / (2 * grid_n):.6g}",
            "certified at sampled resolution",
        ],
    )


# --- angles -------------------------------------------------------------------------

def angle_property(S: SplittingField, window: Window | None = None, threshold: float = ANGLE_THRESHOLD):
    """Return ``(min_angle, spa)``: the smallest stable/unstable angle and the threshold gate."""
    m = S.min_angle(window)
    return m, bool(m >= threshold)


# --- norm growth ----------------------------------------------------------------------

def norm_growth_criterion(
    F: Family, c: float, sigma: float, n_max: int = 20, window: Window | None = None
) -> Certificate:
    """Check ``||A_{i+n-1} ... A_i|| >= c sigma^n`` with exact integer products.

    Raises:
        ValueError: for nonlinear families or ``sigma <= 1``.
    """
    if sigma <= 1.0:
        raise ValueError("sigma must exceed 1")
    if not F.is_linear:
        raise ValueError("norm growth criterion needs a linear family")
    worst = math.inf
    witnesses = []
    for i in _window_for(F, window):
        mat = F.map_at(i).linear
        for n in range(1, n_max + 1):
            if n > 1:
                mat = F.map_at(i + n - 1).linear @ mat
            nrm = float(spectral_norm(np.array(mat.rows(), dtype=float)))
            ratio = nrm / (c * sigma**n)
            worst = min(worst, ratio)
            if ratio < 1.0:
                witnesses.append({"i": i, "n": n, "norm": nrm, "bound": c * sigma**n})
    return Certificate(
        kind="norm-growth",
        status=CERTIFIED if not witnesses else FALSIFIED,
        constants={"c": c, "sigma": sigma},
        residuals={"min_ratio": worst},
        witnesses=witnesses[:20],
        notes=[f"n_max={n_max}"],
    )


# --- second-order defect ---------------------------------------------------------------

@dataclass(frozen=True)
class DefectReport:
    value: float
    bound: float
    K_estimate: float
    lipschitz_slack: float

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "bound": self.bound,
            "K_estimate": self.K_estimate,
            "lipschitz_slack": self.lipschitz_slack,
        }


def second_order_defect(
    F: Family,
    G: Family,
    r_tilde: float,
    window: Window | None = None,
    grid_n: int = 32,
    ray_n: int = 8,
) -> DefectReport:
    """Sampled ``sup ||Df(p) - Dg(p + z)||`` over ``|z| <= r_tilde`` plus the inverse term.

    ``bound`` is ``K (1 + S) S r_tilde + d2(F, G)`` with ``K`` estimated from
    sampled second derivatives; ``lipschitz_slack`` bounds what the sampling
    can miss between grid points.

    Raises:
        ValueError: if ``r_tilde`` is not below the admissible radius.
    """
    S, r_adm = c2_sup_bound(F, window)
    if not 0.0 < r_tilde <= r_adm:
        raise ValueError(f"r_tilde must lie in (0, {r_adm:.6g}], got {r_tilde}")
    base = grid_points(grid_n)
    ang = 2 * np.pi * np.arange(ray_n) / ray_n
    radii = np.array([0.0, 0.5 * r_tilde, r_tilde])
    offsets = np.concatenate([[[0.0, 0.0]]] + [r * np.column_stack([np.cos(ang), np.sin(ang)]) for r in radii[1:]])
    worst = 0.0
    d2max = 0.0
    for i in _window_for(F, window):
        f, g = F.map_at(i), G.map_at(i)
        img, Jf, Hf = f.derivatives(base, 2)
        _, Jfi, Hfi = f.inverse_derivatives(img, 2)
        d2max = max(d2max, float(np.max(tensor_norm(Hf))), float(np.max(tensor_norm(Hfi))))
        for z in offsets:
            Jg = g.jacobian(base + z)
            _, Jgi, _ = g.inverse_derivatives(img + z, 1)
            worst = max(
                worst,
                float(np.max(spectral_norm(Jf - Jg))),
                float(np.max(spectral_norm(Jfi - Jgi))),
            )
    K = d2max / ((1.0 + S) * S) if S > 0 else 0.0
    d2 = max(cm_distance(F.map_at(i), G.map_at(i), 2, max(grid_n, 16)) for i in _window_for(F, window))
    bound = K * (1.0 + S) * S * r_tilde + d2
    slack = (S + d2) * math.sqrt(2) / (2 * grid_n)
    return DefectReport(worst, bound, K, slack)


# --- convenience ------------------------------------------------------------------------

def default_splitting(F: Family, n_iter: int = 20, grid_n: int = 64) -> SplittingField:
    """Eigen-splitting for linear periodic families, otherwise an extracted one.

    Extraction is seeded with the eigen-splitting of the linear parts when
    those form a hyperbolic periodic family, and with the diagonals otherwise.
    """
    from .family import ComposedMap, Constant, Periodic
    from .splitting import extract_splitting, linear_splitting
    from .torus import TorusDiffeo

    if F.is_linear and F.period is not None:
        return linear_splitting(F)
    seed = SplittingField.constant(normalize(np.array([1.0, -1.0])), normalize(np.array([1.0, 1.0])))
    maps = F.distinct_maps()
    if F.period is not None and not any(isinstance(m, ComposedMap) for m in maps):
        lin = [TorusDiffeo(m.linear) for m in maps]
        try:
            seed = linear_splitting(Constant(lin[0]) if F.period == 1 else Periodic(lin))
        except ValueError:
            pass
    return extract_splitting(F, seed, n_iter=n_iter, grid_n=grid_n)


__all__ = [
    "ANGLE_THRESHOLD",
    "CERTIFIED",
    "ConeParams",
    "DefectReport",
    "FALSIFIED",
    "INCONCLUSIVE",
    "StarNorm",
    "adapted_norm",
    "angle_property",
    "anosov_direct_check",
    "cone_invariance_certify",
    "default_splitting",
    "norm_growth_criterion",
    "second_order_defect",
    "sigma_A_eval",
    "star_equivalence_holds",
]
