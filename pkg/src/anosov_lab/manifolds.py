"""Local stable and unstable manifolds by graph transform.

A local manifold through ``p`` is stored as a graph over the side direction
in splitting coordinates: the point with parameter ``t`` is
``p + t * e_side + g(t) * e_other`` (mod 1). The graph is sampled at
Chebyshev-Lobatto nodes on ``[-delta, delta]`` and re-interpolated by cubic
splines after every transform step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .certificate import CERTIFIED, FALSIFIED, Certificate
from .family import Family, c2_sup_bound
from .splitting import SplittingField, decompose
from .torus import displacement, distance, wrap

NODES = 33
INFLATE = 1.05
SATURATION = 0.5
FLOOR = 1e-10
# below this fraction of the initial distance, rounding in the expanding direction dominates
REL_FLOOR = 1e-6
_NEWTON_STEPS = 12


class ManifoldError(RuntimeError):
    """Graph transform broke down; the radius is too large for the cone."""


def chebyshev_nodes(delta: float, n: int = NODES) -> np.ndarray:
    return delta * np.cos(np.pi * np.arange(n - 1, -1, -1) / (n - 1))


# --- orbits and exponents ------------------------------------------------------------

def orbit(F: Family, x, i: int, n: int, forward: bool = True) -> np.ndarray:
    """Points ``x_0..x_n`` of the forward (or backward) orbit starting at index ``i``."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = [pts]
    for k in range(n):
        if forward:
            pts = F.map_at(i + k)(pts)
        else:
            pts = F.map_at(i - 1 - k).inverse(pts)
        out.append(pts)
    return np.stack(out)


@dataclass(frozen=True)
class ConvergenceExponents:
    theta: float
    delta: float
    n_used: int


def _slope(d: np.ndarray) -> tuple[float, int]:
    if d[0] == 0.0:
        return -math.inf, len(d)
    usable = 1
    floor = max(FLOOR, REL_FLOOR * d[0])
    while usable < len(d) and floor < d[usable] < SATURATION:
        usable += 1
    if usable < 2:
        # one step already leaves the resolvable range: use it anyway
        nxt = max(d[1], 1e-300)
        return math.log(nxt / d[0]), 1
    ns = np.arange(usable)
    return float(np.polyfit(ns, np.log(d[:usable]), 1)[0]), usable - 1


def convergence_exponents(F: Family, p, q, i: int = 0, n_max: int = 30) -> ConvergenceExponents:
    """Exponential rates of ``d(F^n p, F^n q)`` forward (theta) and backward (delta)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if distance(p, q) >= SATURATION:
        raise ValueError("points are too far apart to resolve their orbits")
    both = np.stack([p, q])
    fw = orbit(F, both, i, n_max, True)
    bw = orbit(F, both, i, n_max, False)
    th, nf = _slope(distance(fw[:, 0], fw[:, 1]))
    de, nb = _slope(distance(bw[:, 0], bw[:, 1]))
    return ConvergenceExponents(theta=th, delta=de, n_used=min(nf, nb))


# --- graph transform -----------------------------------------------------------------

def _chart_coords(base, e, eo, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(x)
    v = displacement(np.broadcast_to(base, x.shape), x)
    return decompose(np.broadcast_to(e, v.shape), np.broadcast_to(eo, v.shape), v)


def _chart_point(base, e, eo, t, c) -> np.ndarray:
    return wrap(base + np.asarray(t)[..., None] * e + np.asarray(c)[..., None] * eo)


@dataclass
class ChartGraph:
    """Graph over ``[-delta, delta]`` in the frame ``(e_side, e_other)`` at ``base``."""

    index: int
    base: np.ndarray
    e_side: np.ndarray
    e_other: np.ndarray
    t: np.ndarray
    g: np.ndarray

    @property
    def delta(self) -> float:
        return float(self.t[-1])

    @property
    def spline(self) -> CubicSpline:
        return CubicSpline(self.t, self.g)

    def points(self, t: np.ndarray | None = None) -> np.ndarray:
        t = self.t if t is None else np.asarray(t, dtype=float)
        return _chart_point(self.base, self.e_side, self.e_other, t, self.spline(t))

    def coordinates(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Chart coordinates ``(t, c)`` of points near the base."""
        return _chart_coords(self.base, self.e_side, self.e_other, x)

    def membership_defect(self, x: np.ndarray) -> np.ndarray:
        """Distance of points from the graph in chart units; ``inf`` beyond ``delta``."""
        t, c = self.coordinates(x)
        out = np.abs(c - self.spline(np.clip(t, -self.delta, self.delta)))
        out[np.abs(t) > self.delta * (1 + 1e-9)] = np.inf
        return out

    def polyline(self, n: int = 201) -> np.ndarray:
        """Rows ``(t, x, y)`` along the manifold."""
        t = np.linspace(-self.delta, self.delta, n)
        return np.column_stack([t, self.points(t)])


@dataclass
class LocalManifold(ChartGraph):
    """Local manifold through ``base`` plus the transported graphs along its orbit.

    ``orbit_graphs[m]`` is the manifold at the ``m``-th point of the orbit
    along which the side contracts (backward for ``'u'``, forward for
    ``'s'``); ``orbit_graphs[0]`` is this manifold itself.
    """

    side: str = "u"
    iters: int = 0
    K: float = 1.0
    zeta: float = 1.0
    K_fit: float = 1.0
    zeta_fit: float = 1.0
    lipschitz: float = 0.0
    tangency: float = 0.0
    history: list[float] = field(default_factory=list)
    orbit_graphs: list[ChartGraph] = field(default_factory=list, repr=False)
    splitting: SplittingField | None = field(default=None, repr=False)


def _frame(S: SplittingField, i: int, x: np.ndarray, side: str) -> tuple[np.ndarray, np.ndarray]:
    es, eu = S.directions(i, np.atleast_2d(x), exact=True)
    return (es[0], eu[0]) if side == "s" else (eu[0], es[0])


def _regraph(step, src: ChartGraph, dst_base, dst_frame, g: np.ndarray) -> np.ndarray:
    """Map each column of ``g`` (graphs over ``src.t``) and resample over the same nodes."""
    t = src.t
    n, m = g.shape
    e, ec = src.e_side, src.e_other
    e2, ec2 = dst_frame
    spl = CubicSpline(t, g, axis=0)
    dspl = spl.derivative()
    nodes = np.broadcast_to(t[:, None], (n, m))

    def image(tt):
        x = _chart_point(src.base, e, ec, tt, _diag(spl, tt))
        y, D = step(x.reshape(-1, 2))
        side, other = _chart_coords(dst_base, e2, ec2, y)
        tang = e[None, :] + _diag(dspl, tt).reshape(-1)[:, None] * ec[None, :]
        w = np.einsum("nab,nb->na", D, tang)
        ds, _ = decompose(np.broadcast_to(e2, w.shape), np.broadcast_to(ec2, w.shape), w)
        return side.reshape(n, m), other.reshape(n, m), ds.reshape(n, m)

    s0, _, _ = image(nodes)
    diffs = np.diff(s0, axis=0)
    if not np.all((diffs > 0).all(axis=0) | (diffs < 0).all(axis=0)):
        raise ManifoldError("image graph folds")
    if np.any(s0.min(axis=0) > t[0]) or np.any(s0.max(axis=0) < t[-1]):
        raise ManifoldError("image does not cover the target interval")
    tt = np.empty((n, m))
    for k in range(m):
        order = np.argsort(s0[:, k])
        tt[:, k] = np.interp(t, s0[order, k], t[order])
    for _ in range(_NEWTON_STEPS):
        s, _, ds = image(tt)
        r = s - nodes
        tt = np.clip(tt - r / ds, t[0], t[-1])
        if np.max(np.abs(r)) < 5e-16:
            break
    return image(tt)[1]


def _diag(spl: CubicSpline, tt: np.ndarray) -> np.ndarray:
    """Evaluate column ``k`` of a vector-valued spline at ``tt[:, k]``."""
    brk, c = spl.x, spl.c
    idx = np.clip(np.searchsorted(brk, tt, side="right") - 1, 0, len(brk) - 2)
    dx = tt - brk[idx]
    col = np.broadcast_to(np.arange(tt.shape[1]), tt.shape)
    out = np.zeros_like(tt)
    for k in range(c.shape[0]):
        out = out * dx + c[k, idx, col]
    return out


def _against(G: Family, side: str, j: int):
    """Index and map one step along the orbit on which the side contracts."""
    if side == "u":
        f = G.map_at(j - 1)
        return j - 1, lambda x: f.inverse(x)
    f = G.map_at(j)
    return j + 1, lambda x: f(x)


def _along(G: Family, side: str, j: int):
    """Derivative-carrying map used by the transform, from the orbit point at ``j``."""
    if side == "u":
        f = G.map_at(j)
        return lambda x: f.derivatives(x, 1)[:2]
    f = G.map_at(j - 1)
    return lambda x: f.inverse_derivatives(x, 1)[:2]


def _sweep(G, S, p, i, side, delta, iters, depth):
    """Transport flat graphs along the orbit; return recorded charts and iterates at ``p``."""
    nodes = chebyshev_nodes(delta)
    chain = [(i, p)]
    for _ in range(iters + depth):
        j, x = chain[-1]
        j2, f = _against(G, side, j)
        chain.append((j2, f(x[None])[0]))
    frames = [_frame(S, j, x, side) for j, x in chain]
    charts = [ChartGraph(j, x, fr[0], fr[1], nodes, np.zeros_like(nodes)) for (j, x), fr in zip(chain, frames)]

    stack = np.zeros((len(nodes), 0))
    starts: list[int] = []
    recorded: dict[int, np.ndarray] = {}
    L = iters + depth
    for k in range(L, -1, -1):
        if k < L and starts:
            src = charts[k + 1]
            stack = _regraph(_along(G, side, src.index), src, charts[k].base, frames[k], stack)
        keep = [c for c, s0 in enumerate(starts) if s0 <= k + iters]
        stack = stack[:, keep]
        starts = [starts[c] for c in keep]
        if k >= 1:
            stack = np.column_stack([stack, np.zeros(len(nodes))])
            starts.append(k)
        if k <= depth:
            recorded[k] = stack[:, starts.index(k + iters)].copy()
    for k, g in recorded.items():
        charts[k].g = g
    at_p = [stack[:, starts.index(s0)] for s0 in range(1, iters + 1)]
    return charts[: depth + 1], at_p


def compute_local_manifold(
    G: Family,
    S: SplittingField,
    p,
    i: int = 0,
    side: str = "u",
    delta: float | None = None,
    iters: int = 20,
    samples: int = 100,
    alpha: float = 0.2,
    r_tilde: float | None = None,
    n_fit: int = 15,
    seed: int = 0,
) -> LocalManifold:
    """Graph transform for the local manifold through ``p`` at index ``i``.

    The ``k``-th iterate is the flat graph at the ``k``-th point of the
    contracting orbit, transported back to ``p``; ``history`` holds the
    sup distances between consecutive iterates. Graphs along the first
    ``n_fit`` orbit points are kept for rate fitting.
    """
    if side not in ("s", "u"):
        raise ValueError("side must be 's' or 'u'")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if delta is None:
        delta = 0.5 * (r_tilde if r_tilde is not None else c2_sup_bound(G)[1])
    if delta <= 0 or (r_tilde is not None and delta > r_tilde):
        raise ValueError(f"delta must lie in (0, {r_tilde}]")
    p = wrap(np.asarray(p, dtype=float))
    charts, graphs = _sweep(G, S, p, i, side, delta, iters, n_fit)
    hist = [float(np.max(np.abs(graphs[0])))]
    hist += [float(np.max(np.abs(b - a))) for a, b in zip(graphs, graphs[1:])]

    top = charts[0]
    spl = top.spline
    lip = max(
        float(np.max(np.abs(c.spline.derivative()(np.linspace(-delta, delta, 401))))) for c in charts
    )
    if lip > alpha:
        raise ManifoldError(f"graph slope {lip:.3g} leaves the cone of aperture {alpha}")
    M = LocalManifold(
        index=i, base=p, e_side=top.e_side, e_other=top.e_other, t=top.t, g=top.g,
        side=side, iters=iters, lipschitz=lip,
        tangency=float(abs(spl.derivative()(0.0))), history=hist,
        orbit_graphs=charts, splitting=S,
    )
    _fit_rates(M, G, n_fit, samples, seed)
    return M


def _orbit_ratios(M: LocalManifold, G: Family, n_max: int, samples: int, seed: int) -> np.ndarray:
    """``d(q_n, p_n) / d(q_0, p_0)`` along contracting orbits of sampled ``q``.

    Each image is snapped back onto the transported graph at the next
    orbit point, which uses invariance to stop the expanding direction
    from amplifying rounding errors.
    """
    if len(M.orbit_graphs) <= n_max:
        M.orbit_graphs = _sweep(G, M.splitting, M.base, M.index, M.side, M.delta, M.iters, n_max)[0]
    rng = np.random.default_rng(seed)
    t = rng.uniform(-M.delta, M.delta, samples)
    t[np.abs(t) < 1e-3 * M.delta] = 1e-3 * M.delta
    q = M.points(t)
    d = [np.abs(t) * 0 + distance(q, M.base[None])]
    for n in range(1, n_max + 1):
        prev, cur = M.orbit_graphs[n - 1], M.orbit_graphs[n]
        _, f = _against(G, M.side, prev.index)
        tn, _ = cur.coordinates(f(q))
        q = cur.points(tn)
        d.append(distance(q, cur.base[None]))
    d = np.array(d)
    return d / d[0]


def _fit_rates(M: LocalManifold, G: Family, n_fit: int, samples: int, seed: int) -> None:
    """Least-squares ``(K, zeta)`` on the log envelope, then inflated by 5%."""
    ratios = _orbit_ratios(M, G, n_fit, samples, seed)
    env = np.log(np.max(ratios, axis=1))
    ns = np.arange(n_fit + 1)
    slope = float(np.polyfit(ns, env, 1)[0])
    M.zeta_fit = math.exp(slope)
    M.K_fit = math.exp(max(0.0, float(np.max(env - ns * slope))))
    M.zeta = M.zeta_fit * INFLATE
    M.K = M.K_fit * INFLATE


def contraction_rate_check(
    M: LocalManifold, G: Family, n_max: int = 15, samples: int = 100, seed: int = 1
) -> Certificate:
    """Check ``d(q_n, p_n) <= K zeta^n d(q, p)`` on fresh samples of the manifold."""
    ratios = _orbit_ratios(M, G, n_max, samples, seed)
    ns = np.arange(n_max + 1)
    bound = M.K * M.zeta ** ns
    worst = float(np.max(ratios / bound[:, None]))
    status = CERTIFIED if worst <= 1.0 and M.zeta < 1.0 else FALSIFIED
    return Certificate(
        kind="manifold-contraction",
        status=status,
        constants={"K": M.K, "zeta": M.zeta, "K_fit": M.K_fit, "zeta_fit": M.zeta_fit},
        residuals={"max_violation_ratio": worst},
        notes=[f"side={M.side}", f"n_max={n_max}", f"samples={samples}", "orbits snapped to graphs"],
    )


def inclusion_defect(G: Family, S: SplittingField, M: LocalManifold, **kw) -> float:
    """Largest distance of the one-step pulled-back manifold from the manifold there.

    For the unstable side the manifold is mapped backward and compared with
    the manifold at the preimage; the stable side uses forward images.
    """
    if M.side == "u":
        j = M.index - 1
        img = G.map_at(j).inverse(M.points())
        base = G.map_at(j).inverse(M.base[None])[0]
    else:
        j = M.index + 1
        img = G.map_at(M.index)(M.points())
        base = G.map_at(M.index)(M.base[None])[0]
    kw.setdefault("iters", len(M.history))
    other = compute_local_manifold(G, S, base, j, M.side, M.delta, **kw)
    return float(np.max(other.membership_defect(img)))


def limit_point_closure_check(
    G: Family,
    S: SplittingField,
    p_sequence: Sequence,
    q_sequence: Sequence,
    delta: float,
    side: str = "u",
    i: int = 0,
    p_limit=None,
    tol: float = 1e-6,
    **kw,
) -> bool:
    """Does the limit of ``q_m`` lie on the manifold through the limit of ``p_m``?

    With ``p_limit`` given, the limit of ``q_m`` is extrapolated by a
    first-order fit ``q_m = q + A (p_m - p)``.
    """
    ps = np.atleast_2d(np.asarray(p_sequence, dtype=float))
    qs = np.atleast_2d(np.asarray(q_sequence, dtype=float))
    if p_limit is None:
        p, q = ps[-1], qs[-1]
    else:
        p = np.asarray(p_limit, dtype=float)
        dp = displacement(np.broadcast_to(p, ps.shape), ps)
        dq = displacement(np.broadcast_to(qs[-1], qs.shape), qs)
        X = np.column_stack([np.ones(len(ps)), dp])
        coef, *_ = np.linalg.lstsq(X, dq, rcond=None)
        q = wrap(qs[-1] + coef[0])
    M = compute_local_manifold(G, S, p, i, side, delta, **kw)
    return bool(M.membership_defect(q[None])[0] <= tol)


def manifold_separation(Mu: LocalManifold, Ms: LocalManifold, exclude: float = 1e-3, n: int = 400) -> float:
    """Smallest distance between the two curves away from a neighbourhood of the base."""
    t = np.linspace(-Mu.delta, Mu.delta, n)
    t = t[np.abs(t) > exclude]
    a = Mu.points(t)
    b = Ms.points(np.linspace(-Ms.delta, Ms.delta, n))
    d = distance(a[:, None, :], b[None, :, :])
    return float(d.min())
