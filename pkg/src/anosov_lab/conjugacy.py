"""Conjugacies between a strictly Anosov family and a nearby perturbation.

A near-identity family ``h_i(p) = p + Z_i(p)`` is stored as a section
family. The conjugacy equation ``g_{i-1} o h_{i-1} = h_i o f_{i-1}`` is the
fixed-point problem ``G Z = Z`` for

    (G Z)_i(p) = g_{i-1}(q + Z_{i-1}(q)) - p,    q = f_{i-1}^{-1}(p),

which is solved through the contraction

    Z  <-  (G Z)_s + (F^{-1}[Z_u + F Z_u - (G Z)_u])_u

where ``F`` is the push-forward of the base family and the subscripts are
the oblique projections onto its splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from . import _kernels
from .certificate import CERTIFIED, FALSIFIED, Certificate
from .certifier import StarNorm, adapted_norm
from .family import INJECTIVITY_RADIUS, Family, Word, Window, c2_sup_bound
from .sections import SectionFamily
from .splitting import SplittingField, decompose
from .torus import displacement, distance, grid_points, spectral_norm, wrap

TOL = 1e-10
MAX_ITER = 500


class ConfigError(ValueError):
    """A parameter inequality is violated; the message names it."""


class PremiseError(RuntimeError):
    """The contraction premise of the solver does not hold."""


class RadiusEscape(RuntimeError):
    """An iterate left the admissible ball of sections."""


class NonConvergence(RuntimeError):
    def __init__(self, msg: str, result: "ConjugacyResult"):
        super().__init__(msg)
        self.result = result


# --- configuration -------------------------------------------------------------------

def _require(cond: bool, inequality: str, **values) -> None:
    if not cond:
        shown = ", ".join(f"{k}={v:.6g}" for k, v in values.items())
        raise ConfigError(f"violated: {inequality} ({shown})")


@dataclass(frozen=True)
class ConjugacyConfig:
    """Constants of the fixed-point argument, validated on construction.

    ``lam`` is the strict contraction of the base family in the star norm,
    ``eta`` its cone expansion rate, ``zeta`` the admissible Lipschitz defect,
    ``r_prime`` the radius of admissible sections and ``xi_prime`` the
    closeness of the two families.
    """

    lam: float
    eta: float
    zeta: float
    r_prime: float
    xi_prime: float
    r_tilde: float
    xi: float | None = None
    rho: float = INJECTIVITY_RADIUS
    grid_n: int = 128
    window: Window | None = None
    max_iter: int = MAX_ITER
    tol: float = TOL
    n_trunc: int = 0

    def __post_init__(self) -> None:
        _require(0 < self.lam < 1, "0 < lambda < 1", lam=self.lam)
        _require(0 < self.eta < 1, "0 < eta < 1", eta=self.eta)
        bound = min(1 - self.lam, 1 - self.eta, self.rho / 2)
        _require(
            0 < self.zeta < bound, "0 < zeta < min(1 - lambda, 1 - eta, rho/2)",
            zeta=self.zeta, bound=bound,
        )
        _require(self.lam + self.zeta < 1, "lambda + zeta < 1", lam=self.lam, zeta=self.zeta)
        _require(self.r_tilde > 0, "r_tilde > 0", r_tilde=self.r_tilde)
        _require(
            0 < self.r_prime <= self.r_tilde / 3, "0 < r_prime <= r_tilde/3",
            r_prime=self.r_prime, r_tilde=self.r_tilde,
        )
        cap = self.r_prime * (1 - self.lam - self.zeta)
        _require(
            0 < self.xi_prime < cap, "0 < xi_prime < r_prime(1 - lambda - zeta)",
            xi_prime=self.xi_prime, bound=cap,
        )
        if self.xi is not None:
            _require(self.xi_prime < self.xi, "xi_prime < xi", xi_prime=self.xi_prime, xi=self.xi)
        _require(self.grid_n >= 4, "grid_n >= 4", grid_n=self.grid_n)
        _require(self.max_iter >= 1, "max_iter >= 1", max_iter=self.max_iter)
        _require(self.tol > 0, "tol > 0", tol=self.tol)

    @property
    def confinement(self) -> float:
        """Radius ``(lambda + zeta) r' + xi'`` that every iterate must respect."""
        return (self.lam + self.zeta) * self.r_prime + self.xi_prime

    @classmethod
    def from_dict(cls, data: dict) -> "ConjugacyConfig":
        d = dict(data)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        if d.get("window") is not None:
            d["window"] = Window(*d["window"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["lambda"] = out.pop("lam")
        out["window"] = None if self.window is None else [self.window.lo, self.window.hi]
        return out


# --- index bookkeeping ---------------------------------------------------------------

def _lcm(*xs: int) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), xs, 1)


@dataclass(frozen=True)
class IndexSpace:
    """Finite set of stored indices plus the folding of all of Z onto it.

    Periodic presentations form a ring whose length is a multiple of the
    joint period, so folding is exact. Word presentations keep a window
    and fold each tail periodically onto its outermost stored period.
    """

    stored: tuple[int, ...]
    left_period: int
    right_period: int
    ring: bool

    @classmethod
    def build(cls, F: Family, G: Family, window: Window | None = None) -> "IndexSpace":
        if F.period is not None and G.period is not None:
            P = _lcm(F.period, G.period)
            lo = window.lo if window is not None else 0
            n = P if window is None else P * math.ceil(len(window) / P)
            return cls(tuple(range(lo, lo + n)), n, n, True)
        lefts, rights = [], []
        wins = []
        for fam in (F, G):
            if isinstance(fam, Word):
                lefts.append(len(fam.left_tail))
                rights.append(len(fam.right_tail))
            else:
                lefts.append(fam.period)
                rights.append(fam.period)
            wins.append(fam.default_window())
        lp, rp = _lcm(*lefts), _lcm(*rights)
        if window is None:
            lo = min(w.lo for w in wins) - lp
            hi = max(w.hi for w in wins) + rp
            window = Window(lo, hi)
        if len(window) < lp + rp:
            raise ValueError("window too short to hold one period of each tail")
        return cls(tuple(window.indices()), lp, rp, False)

    @property
    def lo(self) -> int:
        return self.stored[0]

    @property
    def hi(self) -> int:
        return self.stored[-1]

    def fold(self, i: int) -> int:
        if self.ring:
            return self.lo + (i - self.lo) % len(self.stored)
        if i < self.lo:
            return self.lo + (i - self.lo) % self.left_period
        if i > self.hi:
            top = self.hi - self.right_period + 1
            return top + (i - top) % self.right_period
        return i

    def slot(self, i: int) -> int:
        return self.fold(i) - self.lo


# --- displacement families -----------------------------------------------------------

@dataclass
class DisplacementFamily:
    """Near-identity maps ``h_i(p) = p + Z_i(p) mod 1`` on the stored indices."""

    space: IndexSpace
    values: np.ndarray  # (len(stored), n, n, 2)
    tau: float | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != len(self.space.stored):
            raise ValueError("one section per stored index is required")
        if self.tau is not None and self.norm > self.tau * (1 + 1e-12):
            raise ValueError("displacement exceeds its radius tag")

    @property
    def grid_n(self) -> int:
        return self.values.shape[1]

    @property
    def norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=-1)))

    def section(self, i: int) -> np.ndarray:
        return self.values[self.space.slot(i)]

    def displacement_at(self, i: int, pts: np.ndarray) -> np.ndarray:
        return _kernels.bilinear_periodic(self.section(i), np.atleast_2d(pts))

    def h(self, i: int, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return wrap(pts + self.displacement_at(i, pts))

    def phi(self, i: int) -> np.ndarray:
        """Chart identification: the displacement read back from ``h_i`` on the grid."""
        g = grid_points(self.grid_n)
        return displacement(g, self.h(i, g)).reshape(self.section(i).shape)

    def to_sections(self) -> SectionFamily:
        return SectionFamily.from_arrays(
            {i: self.values[k] for k, i in enumerate(self.space.stored)}, tau=self.tau
        )

    def csv_rows(self):
        """Rows ``(i, x, y, u, v)`` over the stored grid."""
        g = grid_points(self.grid_n)
        for k, i in enumerate(self.space.stored):
            v = self.values[k].reshape(-1, 2)
            for (x, y), (a, b) in zip(g, v):
                yield i, x, y, a, b


# --- the operators on a fixed grid ---------------------------------------------------

class _Workspace:
    """Precomputed orbits, derivatives and splitting frames on the solver grid."""

    def __init__(self, F: Family, G: Family, S: SplittingField | None, space: IndexSpace, grid_n: int,
                 norm: StarNorm | None = None):
        self.F, self.G, self.S, self.space = F, G, S, space
        self.n = grid_n
        self.grid = grid_points(grid_n)
        idx = space.stored
        self.prev = [space.slot(i - 1) for i in idx]
        self.next = [space.slot(i + 1) for i in idx]
        self.pre, self.Dpre, self.img, self.Dinv = [], [], [], []
        for i in idx:
            f_prev, f_here = F.map_at(i - 1), F.map_at(i)
            q = f_prev.inverse(self.grid)
            self.pre.append(q)
            self.Dpre.append(f_prev.derivatives(q, 1)[1])
            y, D, _ = f_here.derivatives(self.grid, 1)
            self.img.append(y)
            self.Dinv.append(np.linalg.inv(D))
        self.gmaps = [G.map_at(i - 1) for i in idx]
        if S is not None:
            self.es, self.eu, self.ws, self.wu = [], [], [], []
            for i in idx:
                es, eu = S.directions(i, self.grid, exact=True)
                self.es.append(es)
                self.eu.append(eu)
                if norm is None:
                    ws = wu = np.ones(len(self.grid))
                else:
                    ws, wu = norm.weights(i, self.grid, es, eu)
                self.ws.append(ws)
                self.wu.append(wu)

    def flat(self, Z: np.ndarray, k: int) -> np.ndarray:
        return Z[k].reshape(-1, 2)

    def interp(self, Z: np.ndarray, k: int, pts: np.ndarray) -> np.ndarray:
        return _kernels.bilinear_periodic(Z[k], pts)

    def g_op(self, Z: np.ndarray) -> np.ndarray:
        out = np.empty_like(Z)
        for k in range(len(self.pre)):
            q = self.pre[k]
            z = self.interp(Z, self.prev[k], q)
            y = self.gmaps[k](wrap(q + z))
            out[k] = displacement(self.grid, y).reshape(self.n, self.n, 2)
        return out

    def push(self, Z: np.ndarray) -> np.ndarray:
        out = np.empty_like(Z)
        for k in range(len(self.pre)):
            z = self.interp(Z, self.prev[k], self.pre[k])
            out[k] = np.einsum("nab,nb->na", self.Dpre[k], z).reshape(self.n, self.n, 2)
        return out

    def pull(self, Z: np.ndarray) -> np.ndarray:
        out = np.empty_like(Z)
        for k in range(len(self.img)):
            z = self.interp(Z, self.next[k], self.img[k])
            out[k] = np.einsum("nab,nb->na", self.Dinv[k], z).reshape(self.n, self.n, 2)
        return out

    def coeffs(self, Z: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        a, b = [], []
        for k in range(len(self.es)):
            ak, bk = decompose(self.es[k], self.eu[k], self.flat(Z, k))
            a.append(ak)
            b.append(bk)
        return a, b

    def compose(self, a, b) -> np.ndarray:
        out = np.empty((len(a), self.n, self.n, 2))
        for k in range(len(a)):
            v = a[k][:, None] * self.es[k] + b[k][:, None] * self.eu[k]
            out[k] = v.reshape(self.n, self.n, 2)
        return out

    def unstable_part(self, Z: np.ndarray) -> np.ndarray:
        _, b = self.coeffs(Z)
        return self.compose([np.zeros_like(x) for x in b], b)

    def star(self, Z: np.ndarray) -> float:
        a, b = self.coeffs(Z)
        return max(
            float(np.max(np.maximum(np.abs(a[k]) * self.ws[k], np.abs(b[k]) * self.wu[k])))
            for k in range(len(a))
        )

    def tilde(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        GZ = self.g_op(Z)
        aG, bG = self.coeffs(GZ)
        _, bZ = self.coeffs(Z)
        zeros = [np.zeros_like(x) for x in bZ]
        Zu = self.compose(zeros, bZ)
        GZu = self.compose(zeros, bG)
        X = Zu + self.push(Zu) - GZu
        _, bX = self.coeffs(self.pull(X))
        return self.compose(aG, bX), GZ


def _sup(Z: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(Z, axis=-1))) if Z.size else 0.0


def _space_of(F: Family, G: Family, cfg_window: Window | None) -> IndexSpace:
    return IndexSpace.build(F, G, cfg_window)


def _stack(Z: SectionFamily, space: IndexSpace) -> np.ndarray:
    return np.stack([Z[space.fold(i)].values for i in space.stored])


def _c0_distance(F: Family, G: Family, space: IndexSpace, grid_n: int = 64) -> float:
    pts = grid_points(grid_n)
    best = 0.0
    for i in space.stored:
        f, g = F.map_at(i), G.map_at(i)
        if f == g:
            continue
        best = max(best, float(np.max(distance(f(pts), g(pts)))))
    return best


def g_operator(F: Family, G: Family, Z: SectionFamily, cfg: ConjugacyConfig) -> SectionFamily:
    """Apply ``G`` on the stored index set; the output carries the radius tag ``kappa``.

    ``kappa = (xi' + S) r' + xi'`` bounds the output whenever ``|Z| <= r'``
    and the families are ``xi'``-close in the uniform distance.
    """
    if Z.norm > cfg.r_prime * (1 + 1e-12):
        raise ValueError(f"|Z| = {Z.norm:.3g} exceeds r_prime = {cfg.r_prime}")
    space = _space_of(F, G, cfg.window if cfg.window is not None else Z.window)
    S_bound, _ = c2_sup_bound(F)
    kappa = (cfg.xi_prime + S_bound) * cfg.r_prime + cfg.xi_prime
    if kappa >= cfg.rho:
        raise ValueError(f"radius bound {kappa:.3g} exceeds the chart radius {cfg.rho}")
    ws = _Workspace(F, G, None, space, Z.grid_n)
    out = ws.g_op(_stack(Z, space))
    res = SectionFamily.from_arrays({i: out[k] for k, i in enumerate(space.stored)})
    res.tau = kappa
    if res.norm > kappa:
        raise ValueError("output exceeds its radius bound; closeness premise violated")
    return res


def lipschitz_defect(
    F: Family,
    G: Family,
    r_prime: float,
    samples: int = 200,
    grid_n: int = 16,
    seed: int = 0,
    window: Window | None = None,
) -> float:
    """Sampled Lipschitz constant of ``F - G`` on sections of norm at most ``r_prime``.

    Each sample is a pair of random sections on ``grid_n**2`` random
    points; half the pairs are close together to probe the local constant.
    """
    rng = np.random.default_rng(seed)
    space = _space_of(F, G, window)
    idx = space.stored
    m = grid_n * grid_n

    def ball(k):
        r = r_prime * np.sqrt(rng.random(k))
        th = 2 * np.pi * rng.random(k)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])

    worst = 0.0
    for s in range(samples):
        i = idx[s % len(idx)]
        f, g = F.map_at(i), G.map_at(i)
        q = rng.random((m, 2))
        z1 = ball(m)
        if f.is_linear and f == g:
            continue  # the chart map is the derivative itself
        if s % 2:
            z2 = z1 + ball(m) * 10.0 ** rng.uniform(-4, -1)
            over = np.linalg.norm(z2, axis=-1) > r_prime
            z2[over] *= r_prime / np.linalg.norm(z2[over], axis=-1, keepdims=True)
        else:
            z2 = ball(m)
        dz = z1 - z2
        D = f.jacobian(q)
        lin = np.einsum("nab,nb->na", D, dz)
        non = displacement(g(wrap(q + z2)), g(wrap(q + z1)))
        den = float(np.max(np.linalg.norm(dz, axis=-1)))
        if den == 0.0:
            continue
        worst = max(worst, float(np.max(np.linalg.norm(lin - non, axis=-1))) / den)
    return worst


# --- solver ----------------------------------------------------------------------------

@dataclass
class ConjugacyResult:
    displacement: DisplacementFamily
    residual: float
    iterations: int
    contraction_history: list[float] = field(default_factory=list)
    update_history: list[float] = field(default_factory=list)
    radius_history: list[float] = field(default_factory=list)
    fixed_point_residual: float = math.nan
    tilde_residual: float = math.nan
    lam: float = math.nan
    defect: float = math.nan

    def report(self) -> dict:
        return {
            "residual": self.residual,
            "iterations": self.iterations,
            "fixed_point_residual": self.fixed_point_residual,
            "tilde_residual": self.tilde_residual,
            "lambda": self.lam,
            "lipschitz_defect": self.defect,
            "max_contraction_ratio": max(self.contraction_history, default=0.0),
            "max_radius": max(self.radius_history, default=0.0),
            "contraction_history": self.contraction_history,
            "update_history": self.update_history,
        }


def solve_conjugacy(
    F: Family,
    G: Family,
    S: SplittingField,
    cfg: ConjugacyConfig,
    initial: SectionFamily | np.ndarray | None = None,
    norm: StarNorm | None = None,
    defect_samples: int = 200,
) -> ConjugacyResult:
    """Iterate the contraction from ``initial`` (default zero) to its fixed point.

    Raises:
        PremiseError: the star-norm contraction of ``F`` exceeds ``cfg.lam``,
            the families are not ``xi'``-close, or the Lipschitz defect is
            not below ``zeta``.
        RadiusEscape: an iterate leaves the ball of radius ``r'``.
        NonConvergence: ``max_iter`` reached; the partial result is attached.
    """
    if norm is None:
        try:
            norm = adapted_norm(F, S, cfg.lam, n_trunc=cfg.n_trunc)
        except ValueError as exc:
            raise PremiseError(str(exc)) from exc
    lam = float(norm.contraction) if norm.contraction is not None else cfg.lam
    if lam > cfg.lam:
        raise PremiseError(f"star-norm contraction {lam:.6g} exceeds lambda = {cfg.lam}")
    space = _space_of(F, G, cfg.window)
    dist0 = _c0_distance(F, G, space)
    if not dist0 < cfg.xi_prime:
        raise PremiseError(f"uniform distance {dist0:.6g} is not below xi_prime = {cfg.xi_prime}")
    defect = lipschitz_defect(F, G, cfg.r_prime, samples=defect_samples, window=cfg.window)
    if not defect < cfg.zeta:
        raise PremiseError(f"Lipschitz defect {defect:.6g} is not below zeta = {cfg.zeta}")

    ws = _Workspace(F, G, S, space, cfg.grid_n, norm if cfg.n_trunc > 0 else None)
    shape = (len(space.stored), cfg.grid_n, cfg.grid_n, 2)
    if initial is None:
        Z = np.zeros(shape)
    elif isinstance(initial, SectionFamily):
        Z = _stack(initial, space)
    else:
        Z = np.array(initial, dtype=float).reshape(shape)
    if _sup(Z) > cfg.r_prime:
        raise RadiusEscape("initial section lies outside the ball of radius r_prime")

    ratios, updates, radii = [], [], []
    prev = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        new, _ = ws.tilde(Z)
        upd = ws.star(new - Z)
        rad = _sup(new)
        updates.append(upd)
        radii.append(rad)
        if prev is not None and prev > cfg.tol:
            ratios.append(upd / prev)
        Z = new
        if rad > cfg.r_prime:
            raise RadiusEscape(f"iterate {it} has norm {rad:.3g} > r_prime = {cfg.r_prime}")
        prev = upd
        if upd < cfg.tol:
            converged = True
            break

    H = DisplacementFamily(space, Z)
    fixed = _sup(ws.g_op(Z) - Z)
    tilde = _sup(ws.tilde(Z)[0] - Z)
    result = ConjugacyResult(
        displacement=H, residual=fixed, iterations=it, contraction_history=ratios,
        update_history=updates, radius_history=radii, fixed_point_residual=fixed,
        tilde_residual=tilde, lam=lam, defect=defect,
    )
    if not converged:
        raise NonConvergence(f"no convergence in {cfg.max_iter} iterations", result)
    return result


# --- verification --------------------------------------------------------------------

def conjugacy_residual(H: DisplacementFamily, F: Family, G: Family, grid_n: int | None = None) -> float:
    """``sup d(g_i(h_i(x)), h_{i+1}(f_i(x)))`` with ``x = f_i^{-1}(p)`` over a grid of ``p``."""
    pts = grid_points(grid_n or H.grid_n)
    worst = 0.0
    for i in H.space.stored:
        f = F.map_at(i - 1)
        q = f.inverse(pts)
        lhs = G.map_at(i - 1)(H.h(i - 1, q))
        rhs = H.h(i, pts)
        worst = max(worst, float(np.max(distance(lhs, rhs))))
    return worst


def expansivity_bound(N: int, eta: float, zeta: float, r_tilde: float) -> float:
    """``2 sqrt(2) (1/eta - zeta)^-N r_tilde``: separation of orbits that stay close for ``N`` steps."""
    base = 1.0 / eta - zeta
    if not base > 1.0:
        raise ValueError(f"1/eta - zeta = {base:.6g} must exceed 1")
    if N < 0:
        raise ValueError("N must be >= 0")
    return 2.0 * math.sqrt(2.0) * base ** (-N) * r_tilde


def steps_for_modulus(alpha: float, eta: float, zeta: float, r_tilde: float) -> int:
    """Smallest ``N`` whose expansivity bound is at most ``alpha``."""
    base = 1.0 / eta - zeta
    return max(0, math.ceil(math.log(2.0 * math.sqrt(2.0) * r_tilde / alpha) / math.log(base)))


def _lipschitz_bound(F: Family, space: IndexSpace) -> float:
    pts = grid_points(64)
    L = 1.0
    for i in space.stored:
        f = F.map_at(i)
        _, D, _ = f.derivatives(pts, 1)
        _, Di, _ = f.inverse_derivatives(pts, 1)
        L = max(L, float(np.max(spectral_norm(D))), float(np.max(spectral_norm(Di))))
    return L


def verify_conjugacy(
    H: DisplacementFamily,
    F: Family,
    G: Family,
    grid_n: int | None = None,
    eta: float | None = None,
    zeta: float = 0.05,
    r_tilde: float = 0.1,
    alphas: tuple[float, ...] = (1e-1, 1e-2, 1e-3),
    inj_grid: int = 256,
    seed: int = 0,
) -> tuple[float, bool, list[dict]]:
    """Residual, sampled injectivity and an equicontinuity table.

    Injectivity is sampled: neighbouring and random pairs on an
    ``inj_grid`` grid are flagged when their images coincide although their
    separation exceeds the expansivity bound. The table lists, per target
    ``alpha``, the orbit length ``N``, the separation ``beta`` guaranteeing
    ``N`` steps of ``r_tilde``-closeness, and the worst sampled image
    distance at separation ``beta``. ``inverse_beta`` is the image
    separation below which preimages are ``alpha``-close, the modulus of
    ``h_i^{-1}`` implied by the uniform bound on the displacement.
    """
    residual = conjugacy_residual(H, F, G, grid_n)
    space = H.space
    if eta is None:
        eta = 1.0 / _lipschitz_bound(F, space)
    rng = np.random.default_rng(seed)
    pts = grid_points(inj_grid)
    far = expansivity_bound(30, eta, zeta, r_tilde)
    ok = True
    h_step = 1.0 / inj_grid
    for i in space.stored:
        hx = H.h(i, pts)
        for shift in ((h_step, 0.0), (0.0, h_step)):
            hy = H.h(i, wrap(pts + np.array(shift)))
            if np.any((distance(hx, hy) < 1e-12) & (h_step > far)):
                ok = False
        j = rng.integers(0, len(pts), len(pts))
        sep = distance(pts, pts[j])
        img = distance(hx, hx[j])
        if np.any((img < 1e-12) & (sep > far)):
            ok = False

    L = _lipschitz_bound(F, space)
    tau = H.norm
    table = []
    for alpha in alphas:
        N = steps_for_modulus(alpha, eta, zeta, r_tilde)
        beta = max(r_tilde - 2 * tau, 0.0) / L ** N
        worst = 0.0
        if beta > 0:
            for i in space.stored:
                x = rng.random((512, 2))
                th = 2 * np.pi * rng.random(512)
                y = wrap(x + beta * np.column_stack([np.cos(th), np.sin(th)]))
                worst = max(worst, float(np.max(distance(H.h(i, x), H.h(i, y)))))
        # h = id + u with |u| <= tau, so d(x, y) <= d(h x, h y) + 2 tau for every index
        table.append({"alpha": alpha, "N": N, "beta": beta, "observed": worst,
                      "inverse_beta": max(alpha - 2 * tau, 0.0)})
    return residual, ok, table


def expansivity_containment(
    F: Family,
    N: int,
    eta: float,
    zeta: float,
    r_tilde: float,
    grid: int = 512,
    base=(0.3, 0.7),
    i: int = 0,
    extent: float | None = None,
) -> tuple[int, int]:
    """Count separations that stay ``r_tilde``-close for ``|n| <= N`` yet exceed the bound.

    Returns ``(violations, close_pairs)`` over a ``grid x grid`` lattice of
    separations in ``[-extent, extent]^2``; the default extent is twice the
    bound, so the lattice straddles it.
    """
    bound = expansivity_bound(N, eta, zeta, r_tilde)
    extent = 2.0 * bound if extent is None else extent
    s = np.linspace(-extent, extent, grid)
    v = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
    x = np.broadcast_to(np.asarray(base, dtype=float), v.shape).copy()
    y = wrap(x + v)
    close = np.linalg.norm(v, axis=-1) <= r_tilde
    close &= np.linalg.norm(v, axis=-1) > 0
    xf, yf = x.copy(), y.copy()
    xb, yb = x.copy(), y.copy()
    for k in range(N):
        xf, yf = F.map_at(i + k)(xf), F.map_at(i + k)(yf)
        xb, yb = F.map_at(i - 1 - k).inverse(xb), F.map_at(i - 1 - k).inverse(yb)
        close &= (distance(xf, yf) <= r_tilde) & (distance(xb, yb) <= r_tilde)
    viol = int(np.sum(close & (np.linalg.norm(v, axis=-1) > bound)))
    return viol, int(np.sum(close))


def cone_step_inequality_check(
    G: Family,
    S: SplittingField,
    params: ConjugacyConfig,
    samples: int = 500,
    seed: int = 0,
    window: Window | None = None,
) -> Certificate:
    """Sampled chart-pair inequalities for one step of ``G`` and of its inverse.

    Forward, for pairs whose difference is unstable-dominated:
    ``|dS'| <= (1/eta - zeta) |dU| <= |dU'|``. Backward, with the roles of
    the two components exchanged.
    """
    k = 1.0 / params.eta - params.zeta
    rng = np.random.default_rng(seed)
    r = params.r_tilde
    idx = list((window or G.default_window()).indices())
    worst_lo = 0.0  # max |dS'| / (k |dU|)
    worst_hi = 0.0  # max k |dU| / |dU'|
    witnesses = []

    def draw(es, eu, dominant):
        n = es.shape[0]
        big = rng.uniform(0.05, 1.0, n) * rng.choice([-1.0, 1.0], n)
        small = big * rng.uniform(-1.0, 1.0, n)
        w = r * 0.5 * rng.uniform(-1, 1, (n, 2)) / math.sqrt(2)
        scale = 0.5 * r
        if dominant == "u":
            d = scale * (small[:, None] * es + big[:, None] * eu)
        else:
            d = scale * (big[:, None] * es + small[:, None] * eu)
        return w, w + d

    for i in idx:
        n = max(1, samples // len(idx))
        p = rng.random((n, 2))
        for direction in ("forward", "backward"):
            if direction == "forward":
                f = G.map_at(i)
                target = f(p)
                es, eu = S.directions(i, p, exact=True)
                es2, eu2 = S.directions(i + 1, target, exact=True)
                w, v = draw(es, eu, "u")
                mapper = f
            else:
                f = G.map_at(i - 1)
                target = f.inverse(p)
                es, eu = S.directions(i, p, exact=True)
                es2, eu2 = S.directions(i - 1, target, exact=True)
                w, v = draw(es, eu, "s")
                mapper = f.inverse
            gv = displacement(target, mapper(wrap(p + v)))
            gw = displacement(target, mapper(wrap(p + w)))
            a0, b0 = decompose(es, eu, v - w)
            a1, b1 = decompose(es2, eu2, gv - gw)
            if direction == "forward":
                dom, weak_img, dom_img = np.abs(b0), np.abs(a1), np.abs(b1)
            else:
                dom, weak_img, dom_img = np.abs(a0), np.abs(b1), np.abs(a1)
            lo = weak_img / (k * dom)
            hi = k * dom / dom_img
            worst_lo = max(worst_lo, float(lo.max()))
            worst_hi = max(worst_hi, float(hi.max()))
            j = int(np.argmax(np.maximum(lo, hi)))
            if max(lo[j], hi[j]) > 1.0:
                witnesses.append({"i": i, "direction": direction, "point": p[j].tolist(),
                                  "ratio": float(max(lo[j], hi[j]))})
    status = CERTIFIED if worst_lo <= 1.0 and worst_hi <= 1.0 else FALSIFIED
    return Certificate(
        kind="cone-step",
        status=status,
        constants={"eta": params.eta, "zeta": params.zeta, "rate": k, "r_tilde": r},
        residuals={"weak_over_rate": worst_lo, "rate_over_strong": worst_hi},
        witnesses=witnesses,
        notes=[f"samples={samples}", "sampled"],
    )
