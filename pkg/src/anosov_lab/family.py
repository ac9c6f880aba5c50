"""Two-sided sequences of torus maps and the operations on them.

A family is finitely presented as a constant map, a periodic list, or a
finite core word flanked by constant tails. Everything indexed by ``Z`` is
evaluated through :meth:`Family.map_at`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import reduce
from typing import Sequence, Union

import numpy as np

from .torus import (
    INJECTIVITY_RADIUS,
    IntMat2,
    TorusDiffeo,
    TorusPoint,
    cm_distance,
    grid_points,
    spectral_norm,
    tensor_norm,
    wrap,
)

COMPOSE_CAP = 10**6


class ComposedMap:
    """Lazy composition ``chain[-1] o ... o chain[0]`` of torus diffeomorphisms."""

    __slots__ = ("chain",)

    def __init__(self, chain: Sequence[TorusDiffeo]):
        if not chain:
            raise ValueError("composition chain must be non-empty")
        flat: list[TorusDiffeo] = []
        for m in chain:
            flat.extend(m.chain if isinstance(m, ComposedMap) else [m])
        self.chain = tuple(flat)

    @property
    def is_linear(self) -> bool:
        return all(m.is_linear for m in self.chain)

    @property
    def linear(self) -> IntMat2:
        return reduce(lambda acc, m: m.linear @ acc, self.chain[1:], self.chain[0].linear)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ComposedMap) and self.chain == other.chain

    def __hash__(self) -> int:
        return hash(self.chain)

    def __repr__(self) -> str:
        return f"ComposedMap(len={len(self.chain)})"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        out = np.atleast_2d(np.asarray(points, dtype=float))
        for m in self.chain:
            out = m(out)
        return out

    def inverse(self, points: np.ndarray, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
        out = np.atleast_2d(np.asarray(points, dtype=float))
        for m in reversed(self.chain):
            out = m.inverse(out, tol=tol, max_iter=max_iter)
        return out

    def derivatives(self, points: np.ndarray, order: int = 2):
        x = np.atleast_2d(np.asarray(points, dtype=float))
        n = x.shape[0]
        jac = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
        hess = np.zeros((n, 2, 2, 2))
        for m in self.chain:
            x, j, h = m.derivatives(x, order)
            if order >= 2:
                # second-order chain rule
                hess = np.einsum("nade,ndb,nec->nabc", h, jac, jac) + np.einsum("nad,ndbc->nabc", j, hess)
            jac = j @ jac
        return x, jac, hess

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        return self.derivatives(points, 1)[1]

    def inverse_derivatives(self, points: np.ndarray, order: int = 2):
        pre = self.inverse(points)
        _, jac, hess = self.derivatives(pre, order)
        jinv = np.linalg.inv(jac)
        hinv = np.zeros_like(hess)
        if order >= 2:
            hinv = -np.einsum("nad,ndef,neb,nfc->nabc", jinv, hess, jinv, jinv)
        return pre, jinv, hinv

    def c2_norms(self, points: np.ndarray) -> np.ndarray:
        _, jac, hess = self.derivatives(points, 2)
        _, jinv, hinv = self.inverse_derivatives(points, 2)
        return np.maximum.reduce(
            [spectral_norm(jac), spectral_norm(jinv), tensor_norm(hess), tensor_norm(hinv)]
        )

    def to_dict(self) -> dict:
        return {"compose": [m.to_dict() for m in self.chain]}


StepMap = Union[TorusDiffeo, ComposedMap]


def compose_maps(chain: Sequence[StepMap]) -> StepMap:
    """Compose step maps (first element applied first).

    Linear chains collapse to a single integer matrix; anything else stays lazy.
    """
    if len(chain) == 1:
        return chain[0]
    comp = ComposedMap(chain)
    if comp.is_linear:
        return TorusDiffeo(comp.linear)
    return comp


def map_from_dict(data: dict) -> StepMap:
    if "compose" in data:
        return ComposedMap([map_from_dict(d) for d in data["compose"]])
    return TorusDiffeo.from_dict(data)


@dataclass(frozen=True)
class Window:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ValueError(f"window lo={self.lo} exceeds hi={self.hi}")

    def indices(self) -> range:
        return range(self.lo, self.hi + 1)

    def __len__(self) -> int:
        return self.hi - self.lo + 1


class Family:
    """Base class for finitely presented two-sided families."""

    period: int | None = None

    def map_at(self, i: int) -> StepMap:
        raise NotImplementedError

    def default_window(self) -> Window:
        raise NotImplementedError

    def distinct_maps(self) -> list[StepMap]:
        w = self.default_window()
        return [self.map_at(i) for i in w.indices()]

    @property
    def is_linear(self) -> bool:
        return all(m.is_linear for m in self.distinct_maps())

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class Constant(Family):
    period = 1

    def __init__(self, f: StepMap):
        self.f = f

    def map_at(self, i: int) -> StepMap:
        return self.f

    def default_window(self) -> Window:
        return Window(0, 0)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Constant) and self.f == other.f

    def __repr__(self) -> str:
        return f"Constant({self.f!r})"

    def to_dict(self) -> dict:
        return {"type": "constant", "map": self.f.to_dict()}


class Periodic(Family):
    def __init__(self, maps: Sequence[StepMap]):
        if len(maps) < 1:
            raise ValueError("periodic family needs at least one map")
        self.maps = tuple(maps)
        self.period = len(self.maps)

    def map_at(self, i: int) -> StepMap:
        return self.maps[i % self.period]

    def default_window(self) -> Window:
        return Window(0, self.period - 1)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Periodic) and self.maps == other.maps

    def __repr__(self) -> str:
        return f"Periodic(period={self.period})"

    def to_dict(self) -> dict:
        return {"type": "periodic", "maps": [m.to_dict() for m in self.maps]}


class Word(Family):
    """Finite core on ``[start, start + len(core) - 1]`` flanked by tails.

    A tail is one map or a tuple of maps repeated by ``i mod len(tail)``;
    the periodic form keeps alternating families finitely presented.
    """

    def __init__(
        self,
        core: Sequence[StepMap],
        left_tail: StepMap | Sequence[StepMap],
        right_tail: StepMap | Sequence[StepMap],
        start: int = 0,
    ):
        if len(core) < 1:
            raise ValueError("word family needs a non-empty core")
        self.core = tuple(core)
        self.left_tail = _as_tail(left_tail)
        self.right_tail = _as_tail(right_tail)
        self.start = int(start)

    @property
    def end(self) -> int:
        return self.start + len(self.core) - 1

    def map_at(self, i: int) -> StepMap:
        if i < self.start:
            return self.left_tail[i % len(self.left_tail)]
        if i > self.end:
            return self.right_tail[i % len(self.right_tail)]
        return self.core[i - self.start]

    def default_window(self) -> Window:
        pad = max(len(self.left_tail), len(self.right_tail))
        return Window(self.start - pad, self.end + pad)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Word)
            and self.core == other.core
            and self.start == other.start
            and self.left_tail == other.left_tail
            and self.right_tail == other.right_tail
        )

    def __repr__(self) -> str:
        return f"Word(start={self.start}, len={len(self.core)})"

    def to_dict(self) -> dict:
        def tail(t):
            return t[0].to_dict() if len(t) == 1 else [m.to_dict() for m in t]

        return {
            "type": "word",
            "start": self.start,
            "core": [m.to_dict() for m in self.core],
            "left_tail": tail(self.left_tail),
            "right_tail": tail(self.right_tail),
        }


def _as_tail(tail) -> tuple[StepMap, ...]:
    if isinstance(tail, (TorusDiffeo, ComposedMap)):
        return (tail,)
    tail = tuple(tail)
    if not tail:
        raise ValueError("tail must contain at least one map")
    return tail


def _tail_from_dict(data) -> tuple[StepMap, ...]:
    if isinstance(data, list):
        return tuple(map_from_dict(d) for d in data)
    return (map_from_dict(data),)


def family_from_dict(data: dict) -> Family:
    """Build a family from its JSON form.

    Besides the three presentations, ``{"type": "multiplicative", "seq": ...}``
    is accepted and expanded through the multiplicative module.
    """
    kind = data.get("type")
    if kind == "constant":
        return Constant(map_from_dict(data["map"]))
    if kind == "periodic":
        return Periodic([map_from_dict(d) for d in data["maps"]])
    if kind == "word":
        return Word(
            [map_from_dict(d) for d in data["core"]],
            _tail_from_dict(data["left_tail"]),
            _tail_from_dict(data["right_tail"]),
            start=int(data.get("start", 0)),
        )
    if kind == "multiplicative":
        from .multiplicative import build_multiplicative, seq_from_dict

        return build_multiplicative(seq_from_dict(data["seq"]))[0]
    raise ValueError(f"unknown family type {kind!r}")


def load_family(path: str) -> Family:
    with open(path, encoding="utf-8") as fh:
        return family_from_dict(json.load(fh))


# --- composition law --------------------------------------------------------

def compose_points(F: Family, i: int, n: int, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized composition law with the cocycle Jacobian.

    For ``n > 0`` applies ``f_i`` first and ``f_{i+n-1}`` last; for ``n < 0``
    applies ``f_{i-1}^-1`` first and ``f_{i+n}^-1`` last.
    """
    if abs(n) > COMPOSE_CAP:
        raise ValueError(f"|n| must be at most {COMPOSE_CAP}")
    x = np.atleast_2d(np.asarray(points, dtype=float))
    x = wrap(x)
    jac = np.broadcast_to(np.eye(2), (x.shape[0], 2, 2)).copy()
    if n > 0:
        for k in range(i, i + n):
            x, j, _ = F.map_at(k).derivatives(x, 1)
            jac = j @ jac
    elif n < 0:
        for k in range(i - 1, i + n - 1, -1):
            x, j, _ = F.map_at(k).inverse_derivatives(x, 1)
            jac = j @ jac
    return x, jac


def compose(F: Family, i: int, n: int, x: TorusPoint) -> tuple[TorusPoint, np.ndarray]:
    """Single-point composition law: returns ``(image, cocycle_jacobian)``."""
    img, jac = compose_points(F, i, n, x.as_array()[None])
    return TorusPoint(*img[0]), jac[0]


def linear_cocycle(F: Family, i: int, n: int) -> IntMat2:
    """Exact integer cocycle of a linear family."""
    mat = IntMat2(1, 0, 0, 1)
    if n >= 0:
        for k in range(i, i + n):
            mat = F.map_at(k).linear @ mat
    else:
        for k in range(i - 1, i + n - 1, -1):
            mat = F.map_at(k).linear.inverse() @ mat
    return mat


# --- gathering ----------------------------------------------------------------

@dataclass(frozen=True)
class Cuts:
    """Strictly increasing cut sequence ``n_i`` with periodic gaps.

    ``n_0 = origin`` and ``n_{i+1} - n_i = lengths[i mod len(lengths)]``.
    """

    lengths: tuple[int, ...] = (1,)
    origin: int = 0

    def __post_init__(self) -> None:
        lengths = tuple(int(x) for x in self.lengths)
        if not lengths or any(x < 1 for x in lengths):
            raise ValueError("cuts must be strictly increasing (all gaps >= 1)")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def from_points(cls, points: Sequence[int]) -> "Cuts":
        """One period of cut points ``n_0 < ... < n_q``; gaps repeat."""
        pts = [int(p) for p in points]
        gaps = [b - a for a, b in zip(pts, pts[1:])]
        if not gaps:
            raise ValueError("need at least two cut points")
        if any(g < 1 for g in gaps):
            raise ValueError("cuts must be strictly increasing")
        return cls(tuple(gaps), pts[0])

    @property
    def span(self) -> int:
        return sum(self.lengths)

    def at(self, i: int) -> int:
        q = len(self.lengths)
        whole, rem = divmod(i, q)
        return self.origin + whole * self.span + sum(self.lengths[:rem])

    def block(self, i: int) -> tuple[int, int]:
        return self.at(i), self.at(i + 1)

    def then(self, outer: "Cuts") -> "Cuts":
        """Cuts of gathering by ``self`` followed by gathering by ``outer``."""
        p = len(self.lengths)
        q_len = len(outer.lengths)
        per = q_len * (p // math.gcd(outer.span, p))
        pts = [self.at(outer.at(k)) for k in range(per + 1)]
        return Cuts.from_points(pts)


def gather(F: Family, cuts: Cuts) -> Family:
    """Gather ``F`` into blocks ``f_{n_{i+1}-1} o ... o f_{n_i}``.

    Linear blocks are materialized as integer matrices; nonlinear blocks are
    kept as composition chains.

    Raises:
        ValueError: for a word family with non-constant block lengths, whose
            gathered tails would not be constant.
    """
    def block_map(i: int) -> StepMap:
        a, b = cuts.block(i)
        return compose_maps([F.map_at(k) for k in range(a, b)])

    if cuts.lengths == (1,) and cuts.origin == 0:
        return F
    if isinstance(F, Word):
        if len(set(cuts.lengths)) != 1:
            raise ValueError("gathering a word family requires constant block lengths")
        L = cuts.lengths[0]
        lo = (F.start - cuts.origin) // L
        while cuts.at(lo) > F.start:
            lo -= 1
        hi = lo
        while cuts.at(hi) <= F.end:
            hi += 1

        def tail(first: int, t_len: int, step: int) -> list[StepMap]:
            reps = t_len // math.gcd(L, t_len)
            blocks = [block_map(first + step * r) for r in range(reps)]
            # order by (index mod reps) so map_at's i mod len lookup lines up
            idx = [first + step * r for r in range(reps)]
            return [b for _, b in sorted(zip([j % reps for j in idx], blocks))]

        core = [block_map(i) for i in range(lo, hi)]
        return Word(
            core,
            tail(lo - 1, len(F.left_tail), -1),
            tail(hi, len(F.right_tail), 1),
            start=lo,
        )
    per_in = F.period or 1
    q = len(cuts.lengths)
    per = q * (per_in // math.gcd(cuts.span, per_in))
    maps = [block_map(i) for i in range(per)]
    if per == 1:
        return Constant(maps[0])
    return Periodic(maps)


# --- uniform distance and C2 bound -------------------------------------------

def _joint_indices(F: Family, G: Family | None, window: Window | None) -> list[int]:
    periods = [fam.period for fam in (F, G) if fam is not None]
    if all(p is not None for p in periods):
        joint = reduce(lambda a, b: a * b // math.gcd(a, b), periods, 1)
        lo = window.lo if window is not None else 0
        if window is None or len(window) >= joint:
            return list(range(lo, lo + joint))
        return list(window.indices())
    if window is None:
        lo = min(f.default_window().lo for f in (F, G) if f is not None)
        hi = max(f.default_window().hi for f in (F, G) if f is not None)
        window = Window(lo, hi)
    return list(window.indices())


def d_unif(
    F: Family, G: Family, order: int = 0, window: Window | None = None, grid_n: int = 64
) -> float:
    """Uniform distance ``sup_i min{d^order(f_i, g_i), 1}``.

    For periodic presentations one joint period is scanned, which gives the
    exact supremum over all indices.
    """
    best = 0.0
    cache: dict[tuple[int, int], float] = {}
    for i in _joint_indices(F, G, window):
        f, g = F.map_at(i), G.map_at(i)
        key = (id(f), id(g))
        if key not in cache:
            cache[key] = 0.0 if f == g else min(cm_distance(f, g, order, grid_n), 1.0)
        best = max(best, cache[key])
    return best


def c2_sup_bound(F: Family, window: Window | None = None, grid_n: int = 64) -> tuple[float, float]:
    """Return ``(S, r_bound)``: the sup of step C2 norms and the radius ``rho / (20 S)``."""
    pts = grid_points(grid_n)
    seen: dict[int, float] = {}
    S = 0.0
    for i in _joint_indices(F, None, window):
        m = F.map_at(i)
        if id(m) not in seen:
            if m.is_linear:
                mat = m.linear.as_array()
                seen[id(m)] = float(max(spectral_norm(mat), spectral_norm(np.linalg.inv(mat))))
            else:
                seen[id(m)] = float(np.max(m.c2_norms(pts)))
        S = max(S, seen[id(m)])
    return S, INJECTIVITY_RADIUS / (20.0 * S)
