"""Stable/unstable direction fields on grids, and how to obtain them.

A field stores unit directions per family index on a uniform grid. Off-grid
values come from bilinear interpolation of the doubled-angle vector
``(cos 2t, sin 2t)``, which treats directions as unoriented lines. Fields
produced by :func:`extract_splitting` can also be re-evaluated exactly at
arbitrary points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .family import Family, Window
from .torus import grid_points

DirectionPair = tuple[np.ndarray, np.ndarray]


def normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def line_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unsigned angle in ``[0, pi/2]`` between the lines spanned by ``a`` and ``b``."""
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    c = np.abs(np.sum(a * b, axis=-1)) / (na * nb)
    s = np.abs(cross(a, b)) / (na * nb)
    return np.arctan2(s, c)


def decompose(es: np.ndarray, eu: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients ``(a, b)`` with ``v = a es + b eu``."""
    det = cross(es, eu)
    return cross(v, eu) / det, cross(es, v) / det


def _doubled(e: np.ndarray) -> np.ndarray:
    return np.stack([e[..., 0] ** 2 - e[..., 1] ** 2, 2 * e[..., 0] * e[..., 1]], axis=-1)


def _undoubled(d: np.ndarray) -> np.ndarray:
    t = 0.5 * np.arctan2(d[..., 1], d[..., 0])
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


@dataclass
class SplittingField:
    """Per-index grids of unit stable and unstable directions.

    Args:
        grid_n: grid side; ``1`` means spatially constant.
        stable, unstable: ``index -> (grid_n, grid_n, 2)`` arrays.
        period: if set, index ``i`` is looked up as ``i mod period``.
        provider: optional fallback ``i -> (stable, unstable)`` for indices
            not stored (used for word families).
        exact: optional ``(i, points) -> (es, eu)`` pointwise evaluator.
    """

    grid_n: int
    stable: dict[int, np.ndarray]
    unstable: dict[int, np.ndarray]
    period: int | None = None
    provider: Callable[[int], DirectionPair] | None = None
    exact: Callable[[int, np.ndarray], DirectionPair] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for store in (self.stable, self.unstable):
            for i, arr in store.items():
                arr = np.asarray(arr, dtype=float).reshape(self.grid_n, self.grid_n, 2)
                store[i] = normalize(arr)
        self._cache: dict[int, np.ndarray] = {}

    @classmethod
    def constant(
        cls, es: np.ndarray | dict, eu: np.ndarray | dict, period: int | None = 1
    ) -> "SplittingField":
        """Spatially constant field; ``es``/``eu`` may be per-index dicts."""
        es_d = es if isinstance(es, dict) else {0: es}
        eu_d = eu if isinstance(eu, dict) else {0: eu}
        return cls(
            1,
            {i: np.asarray(v, dtype=float).reshape(1, 1, 2) for i, v in es_d.items()},
            {i: np.asarray(v, dtype=float).reshape(1, 1, 2) for i, v in eu_d.items()},
            period=period,
        )

    @property
    def indices(self) -> list[int]:
        return sorted(self.stable)

    def key(self, i: int) -> int:
        if i in self.stable:
            return i
        if self.period is not None:
            k = i % self.period
            if k in self.stable:
                return k
        if self.provider is not None:
            es, eu = self.provider(i)
            self.stable[i] = normalize(np.asarray(es, dtype=float).reshape(self.grid_n, self.grid_n, 2))
            self.unstable[i] = normalize(np.asarray(eu, dtype=float).reshape(self.grid_n, self.grid_n, 2))
            return i
        raise KeyError(f"splitting field has no data for index {i}")

    def grid_directions(self, i: int) -> DirectionPair:
        """Stored directions as ``(grid_n**2, 2)`` arrays in :func:`grid_points` order."""
        k = self.key(i)
        return self.stable[k].reshape(-1, 2), self.unstable[k].reshape(-1, 2)

    def directions(self, i: int, points: np.ndarray, exact: bool = False) -> DirectionPair:
        """Unit directions at arbitrary ``(N, 2)`` points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if exact and self.exact is not None:
            return self.exact(i, pts)
        k = self.key(i)
        if self.grid_n == 1:
            n = pts.shape[0]
            return (
                np.broadcast_to(self.stable[k][0, 0], (n, 2)).copy(),
                np.broadcast_to(self.unstable[k][0, 0], (n, 2)).copy(),
            )
        if k not in self._cache:
            self._cache[k] = np.ascontiguousarray(
                np.concatenate([_doubled(self.stable[k]), _doubled(self.unstable[k])], axis=-1)
            )
        vals = _kernels.bilinear_periodic(self._cache[k], pts)
        return _undoubled(vals[:, :2]), _undoubled(vals[:, 2:])

    def min_angle(self, window: Window | None = None) -> float:
        idx = list(window.indices()) if window is not None else self.indices
        return float(min(np.min(line_angle(*self.grid_directions(i))) for i in idx))

    def to_dict(self) -> dict:
        return {
            "grid_n": self.grid_n,
            "period": self.period,
            "indices": {
                str(i): {
                    "stable": self.stable[i].reshape(-1, 2).tolist(),
                    "unstable": self.unstable[i].reshape(-1, 2).tolist(),
                }
                for i in self.indices
            },
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplittingField":
        g = int(data["grid_n"])
        st = {int(i): np.array(v["stable"]) for i, v in data["indices"].items()}
        un = {int(i): np.array(v["unstable"]) for i, v in data["indices"].items()}
        return cls(g, st, un, period=data.get("period"), meta=dict(data.get("meta", {})))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def load_splitting(path: str) -> SplittingField:
    with open(path, encoding="utf-8") as fh:
        return SplittingField.from_dict(json.load(fh))


def field_distance(a: SplittingField, b: SplittingField, indices) -> float:
    """Max angular difference between two fields on their common grid."""
    worst = 0.0
    for i in indices:
        sa, ua = a.grid_directions(i)
        sb, ub = b.grid_directions(i)
        worst = max(worst, float(np.max(line_angle(sa, sb))), float(np.max(line_angle(ua, ub))))
    return worst


# --- closed-form splittings -----------------------------------------------------

def linear_splitting(F: Family) -> SplittingField:
    """Eigen-splitting of a linear constant or periodic family.

    At index ``i`` the directions are eigenvectors of the period product
    starting at ``i``.

    Raises:
        ValueError: if the family is not linear, not periodic, or a period
            product is not hyperbolic.
    """
    if F.period is None:
        raise ValueError("linear_splitting needs a constant or periodic family")
    if not F.is_linear:
        raise ValueError("linear_splitting needs a linear family")
    es_d, eu_d = {}, {}
    for i in range(F.period):
        prod = np.eye(2)
        for k in range(i, i + F.period):
            prod = F.map_at(k).linear.as_array() @ prod
        tr = np.trace(prod)
        if abs(tr) <= 2:
            raise ValueError(f"period product at index {i} is not hyperbolic (trace {tr:g})")
        w, v = np.linalg.eig(prod)
        order = np.argsort(np.abs(w))
        es_d[i] = np.real(v[:, order[0]])
        eu_d[i] = np.real(v[:, order[1]])
    return SplittingField.constant(es_d, eu_d, period=F.period)


def splitting_from_multiplicative(data) -> SplittingField:
    """Constant-in-space field from closed-form multiplicative splitting data."""
    seq = data.seq
    per = seq.period
    if per is not None:
        per = per * (2 // np.gcd(per, 2))
        idx = range(per)
    else:
        idx = data.window.indices()
    es = {i: data.at(i).s for i in idx}
    eu = {i: data.at(i).u for i in idx}
    fld = SplittingField.constant(es, eu, period=per)
    if per is None:
        fld.provider = lambda i: (data.at(i).s.reshape(1, 1, 2), data.at(i).u.reshape(1, 1, 2))
    return fld


def rotated(fld: SplittingField, angle: float) -> SplittingField:
    """Copy of a field with every direction rotated by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    return SplittingField(
        fld.grid_n,
        {i: fld.stable[i] @ R.T for i in fld.indices},
        {i: fld.unstable[i] @ R.T for i in fld.indices},
        period=fld.period,
    )


# --- extraction by iterated cones -----------------------------------------------

def _extract_at(G: Family, seed: SplittingField, n_iter: int, i: int, pts: np.ndarray) -> DirectionPair:
    # unstable: seed at G^-n(p), pushed forward n steps
    orbit = [pts]
    x = pts
    for k in range(1, n_iter + 1):
        x = G.map_at(i - k).inverse(x)
        orbit.append(x)
    v = seed.directions(i - n_iter, x)[1]
    for k in range(n_iter, 0, -1):
        J = G.map_at(i - k).jacobian(orbit[k])
        v = normalize(np.einsum("nab,nb->na", J, v))
    eu = v
    # stable: seed at G^n(p), pulled back n steps
    orbit = [pts]
    x = pts
    jacs = []
    for k in range(n_iter):
        x, J, _ = G.map_at(i + k).derivatives(x, 1)
        orbit.append(x)
        jacs.append(J)
    w = seed.directions(i + n_iter, x)[0]
    for k in range(n_iter - 1, -1, -1):
        w = normalize(np.linalg.solve(jacs[k], w[..., None])[..., 0])
    return w, eu


def _target_indices(G: Family, window: Window | None) -> list[int]:
    if window is not None:
        return list(window.indices())
    return list(G.default_window().indices())


def extract_splitting(
    G: Family,
    seed: SplittingField,
    n_iter: int = 20,
    window: Window | None = None,
    grid_n: int = 128,
    history_points: int = 16,
) -> SplittingField:
    """Invariant splitting of ``G`` as the limit of iterated seed cones.

    The unstable direction at ``p`` is the seed's unstable direction at
    ``G^-n(p)`` pushed forward ``n`` steps; the stable one mirrors this with
    the forward orbit. ``meta['history']`` lists the angular change between
    successive depths on a few sample points, which should shrink
    geometrically.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    pts = grid_points(grid_n)
    idx = _target_indices(G, window)
    st, un = {}, {}
    for i in idx:
        es, eu = _extract_at(G, seed, n_iter, i, pts)
        st[i] = es.reshape(grid_n, grid_n, 2)
        un[i] = eu.reshape(grid_n, grid_n, 2)
    period = G.period if (G.period is not None and window is None) else None
    fld = SplittingField(
        grid_n,
        st,
        un,
        period=period,
        exact=lambda i, p: _extract_at(G, seed, n_iter, i, p),
    )
    # convergence history on a deterministic subset
    sub = pts[:: max(1, len(pts) // history_points)][:history_points]
    prev = None
    hist = []
    for depth in range(1, n_iter + 1):
        cur = _extract_at(G, seed, depth, idx[0], sub)
        if prev is not None:
            hist.append(
                float(max(np.max(line_angle(cur[0], prev[0])), np.max(line_angle(cur[1], prev[1]))))
            )
        prev = cur
    fld.meta = {"n_iter": n_iter, "history": hist, "indices": idx}
    return fld


def cocycle_log_stretch(
    F: Family, S: SplittingField, i: int, pts: np.ndarray, n: int, bundle: str
) -> tuple[np.ndarray, float]:
    """Cumulative log-stretch of the splitting directions along orbits.

    Row ``k`` holds ``log ||DF_i^{k+1} e||`` for ``bundle='s'`` and
    ``log ||DF_i^{-(k+1)} e||`` for ``bundle='u'``. The direction is
    re-anchored on ``S`` after every step, which keeps the stable iterate
    from drifting into the unstable line; the largest angular defect this
    hides is returned alongside.
    """
    if bundle not in ("s", "u"):
        raise ValueError("bundle must be 's' or 'u'")
    x = np.atleast_2d(pts)
    e = S.directions(i, x, exact=True)[0 if bundle == "s" else 1]
    out = np.empty((n, x.shape[0]))
    acc = np.zeros(x.shape[0])
    defect = 0.0
    for k in range(n):
        if bundle == "s":
            x, D, _ = F.map_at(i + k).derivatives(x, 1)
            e_next = S.directions(i + k + 1, x, exact=True)[0]
        else:
            x, D, _ = F.map_at(i - 1 - k).inverse_derivatives(x, 1)
            e_next = S.directions(i - 1 - k, x, exact=True)[1]
        w = np.einsum("nab,nb->na", D, e)
        acc = acc + np.log(np.linalg.norm(w, axis=-1))
        out[k] = acc
        defect = max(defect, float(np.max(np.abs(cross(normalize(w), e_next)))))
        e = e_next
    return out, defect


def invariance_residual(G: Family, S: SplittingField, window: Window | None = None) -> float:
    """Max of ``|normalize(Dg e) x e_image|`` over grid points, both bundles.

    Image directions use the exact evaluator when the field has one.
    """
    pts = grid_points(S.grid_n)
    worst = 0.0
    for i in (window.indices() if window is not None else S.indices):
        es, eu = S.grid_directions(i)
        img, J, _ = G.map_at(i).derivatives(pts, 1)
        es_img, eu_img = S.directions(i + 1, img, exact=True)
        for e, e_img in ((es, es_img), (eu, eu_img)):
            pushed = normalize(np.einsum("nab,nb->na", J, e))
            worst = max(worst, float(np.max(np.abs(cross(pushed, e_img)))))
    return worst
