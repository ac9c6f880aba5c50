"""Bounded sections of the tangent bundle over a window and the push-forward operator.

A section family assigns to each index ``i`` of a window a vector field on
the torus sampled on a regular ``grid_n x grid_n`` grid; values off the
grid are bilinear interpolants. The push-forward ``(FZ)_i = Df_{i-1} Z_{i-1}``
composed with ``f_{i-1}^{-1}`` is evaluated by Newton inversion followed by
interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .certificate import CERTIFIED, FALSIFIED, Certificate
from .certifier import ANGLE_THRESHOLD, CERT_MARGIN, angle_property
from .family import Family, Window, c2_sup_bound
from .splitting import SplittingField, cocycle_log_stretch, normalize
from .torus import grid_points

UNBOUNDED = 1e12


class AngleFailure(ValueError):
    """The splitting is too close to degenerate for a stable projection."""


@dataclass
class GridSection:
    """Tangent vectors on the regular grid of index ``index``.

    ``values[ix, iy]`` is the vector at ``(ix / n, iy / n)``.
    """

    index: int
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != v.shape[1] or v.shape[2] != 2:
            raise ValueError("values must have shape (n, n, 2)")
        self.values = v
        self._norm = float(np.max(np.linalg.norm(v, axis=-1)))

    @property
    def grid_n(self) -> int:
        return self.values.shape[0]

    @property
    def norm(self) -> float:
        return self._norm

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1, 2)

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return _kernels.bilinear_periodic(self.values, np.atleast_2d(pts))

    def interpolation_slack(self) -> float:
        """Half the largest jump between neighbouring grid values."""
        v = self.values
        jx = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=-1)
        jy = np.linalg.norm(np.roll(v, -1, axis=1) - v, axis=-1)
        return 0.5 * float(max(jx.max(), jy.max()))


@dataclass
class SectionFamily:
    """Per-index grid sections over a contiguous window."""

    sections: dict[int, GridSection]
    tau: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.sections:
            raise ValueError("empty section family")
        keys = sorted(self.sections)
        if keys != list(range(keys[0], keys[-1] + 1)):
            raise ValueError("section indices must be contiguous")
        sizes = {s.grid_n for s in self.sections.values()}
        if len(sizes) != 1:
            raise ValueError("all sections must share one grid size")
        if self.tau is not None and self.norm > self.tau * (1 + 1e-12):
            raise ValueError(f"norm {self.norm} exceeds radius tag {self.tau}")

    @classmethod
    def from_arrays(cls, arrays: dict[int, np.ndarray], tau: float | None = None) -> "SectionFamily":
        return cls({i: GridSection(i, a) for i, a in arrays.items()}, tau=tau)

    @classmethod
    def zeros(cls, window: Window, grid_n: int) -> "SectionFamily":
        return cls.from_arrays({i: np.zeros((grid_n, grid_n, 2)) for i in window.indices()})

    @classmethod
    def constant(cls, vec, window: Window, grid_n: int) -> "SectionFamily":
        v = np.broadcast_to(np.asarray(vec, dtype=float), (grid_n, grid_n, 2)).copy()
        return cls.from_arrays({i: v.copy() for i in window.indices()})

    @classmethod
    def random(cls, window: Window, grid_n: int, rng: np.random.Generator, scale: float = 1.0) -> "SectionFamily":
        return cls.from_arrays(
            {i: scale * rng.standard_normal((grid_n, grid_n, 2)) for i in window.indices()}
        )

    @property
    def window(self) -> Window:
        keys = sorted(self.sections)
        return Window(keys[0], keys[-1])

    @property
    def grid_n(self) -> int:
        return next(iter(self.sections.values())).grid_n

    @property
    def norm(self) -> float:
        return max(s.norm for s in self.sections.values())

    def __getitem__(self, i: int) -> GridSection:
        return self.sections[i]

    def _combine(self, other: "SectionFamily", a: float, b: float) -> "SectionFamily":
        common = sorted(set(self.sections) & set(other.sections))
        if not common:
            raise ValueError("section families have disjoint windows")
        return SectionFamily.from_arrays(
            {i: a * self.sections[i].values + b * other.sections[i].values for i in common}
        )

    def __add__(self, other: "SectionFamily") -> "SectionFamily":
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: "SectionFamily") -> "SectionFamily":
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, a: float) -> "SectionFamily":
        return SectionFamily.from_arrays({i: a * s.values for i, s in self.sections.items()})

    __rmul__ = __mul__


def pushforward(F: Family, Z: SectionFamily) -> SectionFamily:
    """Apply the push-forward operator; the window moves up by one index.

    ``meta['interp_slack']`` records a grid-dependent bound on the
    interpolation error, scaled by the derivative size.
    """
    n = Z.grid_n
    pts = grid_points(n)
    out: dict[int, np.ndarray] = {}
    slack = 0.0
    for j in Z.window.indices():
        f = F.map_at(j)
        pre = f.inverse(pts)
        _, D, _ = f.derivatives(pre, 1)
        z = Z[j](pre)
        w = np.einsum("nab,nb->na", D, z)
        out[j + 1] = w.reshape(n, n, 2)
        dn = float(np.max(np.linalg.norm(D, ord=2, axis=(1, 2))))
        slack = max(slack, dn * Z[j].interpolation_slack())
    res = SectionFamily.from_arrays(out)
    res.meta["interp_slack"] = slack
    return res


def project_su(
    Z: SectionFamily, S: SplittingField, threshold: float = ANGLE_THRESHOLD
) -> tuple[SectionFamily, SectionFamily, float]:
    """Oblique projections onto the stable and unstable lines.

    Returns ``(Zs, Zu, K)`` with ``Zs + Zu == Z`` and ``K`` the largest
    sampled ratio ``|Zs(p)| / |Z|`` or ``|Zu(p)| / |Z|``.
    """
    n = Z.grid_n
    pts = grid_points(n)
    zs: dict[int, np.ndarray] = {}
    zu: dict[int, np.ndarray] = {}
    for i in Z.window.indices():
        es, eu = S.directions(i, pts)
        det = es[:, 0] * eu[:, 1] - es[:, 1] * eu[:, 0]
        if np.min(np.abs(det)) < math.sin(threshold):
            raise AngleFailure(f"splitting angle below {threshold} at index {i}")
        z = Z[i].flat()
        a = (z[:, 0] * eu[:, 1] - z[:, 1] * eu[:, 0]) / det
        s_part = a[:, None] * es
        zs[i] = s_part.reshape(n, n, 2)
        zu[i] = (z - s_part).reshape(n, n, 2)
    Zs = SectionFamily.from_arrays(zs)
    Zu = SectionFamily.from_arrays(zu)
    total = Z.norm
    K = 0.0 if total == 0 else max(Zs.norm, Zu.norm) / total
    return Zs, Zu, K


def adversarial_section(S: SplittingField, window: Window, grid_n: int) -> SectionFamily:
    """Unit section normal to the unstable line, where the stable projection is largest."""
    pts = grid_points(grid_n)
    arrays = {}
    for i in window.indices():
        _, eu = S.directions(i, pts)
        arrays[i] = np.stack([-eu[:, 1], eu[:, 0]], axis=-1).reshape(grid_n, grid_n, 2)
    return SectionFamily.from_arrays(arrays)


def projection_bound(S: SplittingField, window: Window, grid_n: int = 32) -> float:
    """Closed-form norm of the oblique projections, ``1 / sin(angle)``, maximised."""
    pts = grid_points(grid_n)
    worst = 0.0
    for i in window.indices():
        es, eu = S.directions(i, pts)
        sin = np.abs(es[:, 0] * normalize(eu)[:, 1] - es[:, 1] * normalize(eu)[:, 0])
        m = float(np.min(sin))
        if m == 0.0:
            return math.inf
        worst = max(worst, 1.0 / m)
    return worst


def _window(F: Family, window: Window | None) -> Window:
    return window if window is not None else F.default_window()


def power_norm_estimate(
    F: Family,
    S: SplittingField,
    subbundle: str,
    n: int,
    window: Window | None = None,
    grid_n: int = 32,
) -> float:
    """``n``-th root of the largest ``n``-step stretch along one subbundle.

    ``'s'`` follows forward iterates on the stable line, ``'u'`` backward
    iterates on the unstable line.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = grid_points(grid_n)
    best = -math.inf
    for i in _window(F, window).indices():
        logs, _ = cocycle_log_stretch(F, S, i, pts, n, subbundle)
        best = max(best, float(np.max(logs[-1])))
    return math.exp(best / n)


def power_norm_table(
    F: Family, S: SplittingField, n_max: int, window: Window | None = None, grid_n: int = 32
) -> list[tuple[int, float, float]]:
    """Rows ``(n, stable_est, unstable_est)`` for ``n = 1..n_max`` from one pass."""
    pts = grid_points(grid_n)
    best = {b: np.full(n_max, -np.inf) for b in ("s", "u")}
    for i in _window(F, window).indices():
        for b in ("s", "u"):
            logs, _ = cocycle_log_stretch(F, S, i, pts, n_max, b)
            best[b] = np.maximum(best[b], logs.max(axis=1))
    ns = np.arange(1, n_max + 1)
    st = np.exp(best["s"] / ns)
    un = np.exp(best["u"] / ns)
    return [(int(k), float(a), float(b)) for k, a, b in zip(ns, st, un)]


def hyperbolic_gap_report(
    F: Family,
    S: SplittingField,
    n: int = 30,
    window: Window | None = None,
    grid_n: int = 32,
    margin: float = CERT_MARGIN,
    threshold: float = ANGLE_THRESHOLD,
) -> Certificate:
    """Certify a spectral gap through finite-``n`` power-norm surrogates.

    ``failure`` distinguishes ``'angle'``, ``'unbounded'`` and ``'gap'``.
    """
    w = _window(F, window)
    min_ang, spa = angle_property(S, w, threshold)
    K = projection_bound(S, w, grid_n)
    constants = {"min_angle": min_ang, "K_bound": K, "n": n}
    notes = [f"grid_n={grid_n}", f"window=[{w.lo},{w.hi}]"]
    if not spa or not math.isfinite(K):
        return Certificate("hyperbolic-gap", FALSIFIED, constants, notes=notes, failure="angle")
    S_bound, _ = c2_sup_bound(F, w)
    constants["S"] = S_bound
    if not math.isfinite(S_bound) or S_bound > UNBOUNDED:
        return Certificate("hyperbolic-gap", FALSIFIED, constants, notes=notes, failure="unbounded")
    st = power_norm_estimate(F, S, "s", n, w, grid_n)
    un = power_norm_estimate(F, S, "u", n, w, grid_n)
    constants.update(stable_est=st, unstable_est=un)
    ok = st < 1.0 - margin and un < 1.0 - margin
    return Certificate(
        "hyperbolic-gap",
        CERTIFIED if ok else FALSIFIED,
        constants,
        residuals={"margin": margin},
        notes=notes,
        failure=None if ok else "gap",
    )
