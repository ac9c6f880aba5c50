"""Multiplicative families driven by positive-integer sequences.

For a sequence ``(n_i)`` the family alternates lower shears
``[[1, 0], [n_i, 1]]`` (even ``i``) and upper shears ``[[1, n_i], [0, 1]]``
(odd ``i``). Its stable and unstable lines are given in closed form by
continued fractions of the forward and backward tails of the sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .certificate import CERTIFIED, FALSIFIED, Certificate
from .family import Family, Periodic, Window, Word
from .torus import IntMat2, TorusDiffeo

GROWTH_LAMBDA = math.sqrt(2.0 / 3.0)
CF_TOL = 1e-13
M_GEN = IntMat2(1, 0, 1, 1)
N_GEN = IntMat2(1, 1, 0, 1)


# --- sequences ----------------------------------------------------------------

class IntSeq:
    """Two-sided sequence of positive integers."""

    period: int | None = None

    def at(self, i: int) -> int:
        raise NotImplementedError

    def default_window(self) -> Window:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PeriodicSeq(IntSeq):
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        vals = tuple(int(v) for v in self.values)
        if not vals:
            raise ValueError("periodic sequence needs at least one entry")
        if any(v < 1 for v in vals):
            raise ValueError("sequence entries must be >= 1")
        object.__setattr__(self, "values", vals)

    @property
    def period(self) -> int:  # type: ignore[override]
        return len(self.values)

    def at(self, i: int) -> int:
        return self.values[i % len(self.values)]

    def default_window(self) -> Window:
        # family period is lcm(P, 2) because of the parity alternation
        per = len(self.values) * (2 // math.gcd(len(self.values), 2))
        return Window(0, per - 1)

    def to_dict(self) -> dict:
        return {"type": "periodic", "values": list(self.values)}


@dataclass(frozen=True)
class WordSeq(IntSeq):
    core: tuple[int, ...]
    left: int
    right: int
    start: int = 0

    def __post_init__(self) -> None:
        core = tuple(int(v) for v in self.core)
        if not core:
            raise ValueError("word sequence needs a non-empty core")
        if any(v < 1 for v in core + (self.left, self.right)):
            raise ValueError("sequence entries must be >= 1")
        object.__setattr__(self, "core", core)

    @property
    def end(self) -> int:
        return self.start + len(self.core) - 1

    def at(self, i: int) -> int:
        if i < self.start:
            return self.left
        if i > self.end:
            return self.right
        return self.core[i - self.start]

    def default_window(self) -> Window:
        return Window(self.start - 2, self.end + 2)

    def to_dict(self) -> dict:
        return {
            "type": "word",
            "core": list(self.core),
            "left": self.left,
            "right": self.right,
            "start": self.start,
        }


def seq_from_dict(data: dict | list) -> IntSeq:
    if isinstance(data, list):
        return PeriodicSeq(tuple(data))
    kind = data.get("type", "periodic")
    if kind == "periodic":
        return PeriodicSeq(tuple(data["values"]))
    if kind == "word":
        return WordSeq(tuple(data["core"]), int(data["left"]), int(data["right"]), int(data.get("start", 0)))
    raise ValueError(f"unknown sequence type {kind!r}")


# --- continued fractions --------------------------------------------------------

@dataclass(frozen=True)
class CFValue:
    value: float
    depth: int
    error_bound: float
    exact: float | None = None


def _digits(seq: IntSeq, start: int, direction: int, depth: int) -> list[int]:
    return [seq.at(start + direction * k) for k in range(depth)]


def _eventual_period(seq: IntSeq, start: int, direction: int) -> tuple[list[int], list[int]] | None:
    """Split the tail from ``start`` into (pre-period, period) when it is eventually periodic."""
    if isinstance(seq, PeriodicSeq):
        return [], _digits(seq, start, direction, seq.period)
    if isinstance(seq, WordSeq):
        if direction > 0:
            pre = [seq.at(k) for k in range(start, seq.end + 1)]
            return pre, [seq.right]
        pre = [seq.at(k) for k in range(start, seq.start - 1, -1)]
        return pre, [seq.left]
    return None


def _mobius(digits: Sequence[int]) -> tuple[int, int, int, int]:
    """Integer matrix of ``t -> 1/(d_1 + 1/(... + 1/(d_k + t)))``."""
    a, b, c, d = 1, 0, 0, 1
    for n in digits:
        # right-multiply by [[0, 1], [1, n]]
        a, b, c, d = b, a + n * b, d, c + n * d
    return a, b, c, d


def _surd(pre: Sequence[int], per: Sequence[int], ctx=None):
    """Exact value of an eventually periodic continued fraction."""
    al, be, ga, de = _mobius(per)
    sqrt = math.sqrt if ctx is None else ctx.sqrt
    one = 1.0 if ctx is None else ctx.mpf(1)
    # fixed point of (al t + be) / (ga t + de) in (0, 1)
    disc = one * (de - al) ** 2 + 4 * be * ga
    if de >= al:
        x = 2 * be / (one * (de - al) + sqrt(disc))  # avoids cancellation
    else:
        x = (one * (al - de) + sqrt(disc)) / (2 * ga)
    a, b, c, d = _mobius(pre)
    return (a * x + b) / (c * x + d)


def cf_eval(
    seq: IntSeq,
    start: int,
    depth: int | None = None,
    direction: int = 1,
    tol: float = CF_TOL,
    surd: bool = False,
) -> CFValue:
    """Continued fraction ``[n_s n_{s+d} n_{s+2d} ...]`` with ``d = direction``.

    With ``depth=None`` the depth grows until the error bound drops below
    ``tol``. The value is computed by backward recurrence; the bound is
    ``1 / (q_k q_{k+1})`` from the convergent denominators.

    Raises:
        ValueError: if an explicit ``depth`` is below 2 or cannot meet ``tol``.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if depth is not None and depth < 2:
        raise ValueError("depth must be at least 2")
    q_prev, q = 1, seq.at(start)
    k = 1
    limit = depth if depth is not None else 10_000
    while True:
        q_next = seq.at(start + direction * k) * q + q_prev
        bound = 1.0 / (q * q_next)
        if k >= limit or (depth is None and bound < tol and k >= 2):
            break
        q_prev, q = q, q_next
        k += 1
    if bound >= tol and depth is not None:
        raise ValueError(f"depth {depth} gives error bound {bound:.3g}, above tolerance {tol:.3g}")
    digits = _digits(seq, start, direction, k)
    t = 0.0
    for n in reversed(digits):
        t = 1.0 / (n + t)
    exact = None
    if surd:
        split = _eventual_period(seq, start, direction)
        if split is not None:
            exact = float(_surd(*split))
    return CFValue(t, k, bound, exact)


def cf_convergents(digits: Sequence[int]) -> list[Fraction]:
    """All rational convergents of ``[d_1 d_2 ...]``."""
    out = []
    p_prev, p = 1, 0
    q_prev, q = 0, 1
    for n in digits:
        p_prev, p = p, n * p + p_prev
        q_prev, q = q, n * q + q_prev
        out.append(Fraction(p, q))
    return out


def _cf_value(seq: IntSeq, start: int, direction: int, ctx=None):
    split = _eventual_period(seq, start, direction)
    if split is not None:
        val = _surd(*split, ctx=ctx)
        return val if ctx is not None else float(val)
    return cf_eval(seq, start, direction=direction).value


# --- splitting ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPoint:
    """Closed-form splitting data at one index.

    ``a, b, c, d`` are positive; the stable vector is ``s = (a, -b)`` and the
    unstable vector is ``u = (c, d)``, so ``a d + c b = 1`` is the unit-area
    condition ``det[u, s] = -1``.
    """

    i: int
    a: float
    b: float
    c: float
    d: float
    lam: float

    @property
    def s(self) -> np.ndarray:
        return np.array([self.a, -self.b])

    @property
    def u(self) -> np.ndarray:
        return np.array([self.c, self.d])


def _split_values(seq: IntSeq, i: int, ctx=None):
    fwd = _cf_value(seq, i, 1, ctx)
    bwd = _cf_value(seq, i - 1, -1, ctx)
    one = 1.0 if ctx is None else ctx.mpf(1)
    if i % 2 == 0:
        a, b = fwd, one
        c = one / (one + a * bwd)
        d = bwd * c
    else:
        a, b = one, fwd
        d = one / (one + b * bwd)
        c = bwd * d
    return a, b, c, d, fwd


@dataclass
class SplittingData:
    seq: IntSeq
    window: Window
    points: dict[int, SplitPoint] = field(default_factory=dict)
    c_const: float = 1.0

    def at(self, i: int) -> SplitPoint:
        if i not in self.points:
            self.points[i] = _split_point(self.seq, i)
        return self.points[i]

    def arrays(self, window: Window | None = None):
        """Stacked ``(indices, s, u, lam)`` over a window."""
        w = window or self.window
        pts = [self.at(i) for i in w.indices()]
        return (
            np.array([p.i for p in pts]),
            np.array([p.s for p in pts]),
            np.array([p.u for p in pts]),
            np.array([p.lam for p in pts]),
        )


@lru_cache(maxsize=65536)
def _split_point_cached(seq: IntSeq, i: int) -> SplitPoint:
    a, b, c, d, lam = _split_values(seq, i)
    return SplitPoint(i, a, b, c, d, lam)


def _split_point(seq: IntSeq, i: int) -> SplitPoint:
    return _split_point_cached(seq, i)


def _representative_indices(seq: IntSeq) -> list[int]:
    if isinstance(seq, PeriodicSeq):
        return list(seq.default_window().indices())
    # word: core plus a stretch of tail on both sides; tail values converge
    # geometrically, and the limits themselves are added below
    w = seq.default_window()
    return list(range(w.lo - 40, w.hi + 41))


def _tail_limits(seq: IntSeq) -> list[tuple[np.ndarray, np.ndarray]]:
    if not isinstance(seq, WordSeq):
        return []
    out = []
    for n in {seq.left, seq.right}:
        const = PeriodicSeq((n,))
        for par in (0, 1):
            p = _split_point(const, par)
            out.append((p.s, p.u))
    return out


def multiplicative_constant(seq: IntSeq) -> float:
    """``max(sup |s_i|/|s_j|, sup |u_i|/|u_j|)`` over the presentation."""
    pts = [_split_point(seq, i) for i in _representative_indices(seq)]
    s_n = [float(np.linalg.norm(p.s)) for p in pts]
    u_n = [float(np.linalg.norm(p.u)) for p in pts]
    for s, u in _tail_limits(seq):
        s_n.append(float(np.linalg.norm(s)))
        u_n.append(float(np.linalg.norm(u)))
    return max(max(s_n) / min(s_n), max(u_n) / min(u_n))


def shear(n: int, i: int) -> IntMat2:
    return IntMat2(1, 0, n, 1) if i % 2 == 0 else IntMat2(1, n, 0, 1)


def build_multiplicative(seq: IntSeq) -> tuple[Family, SplittingData]:
    """The shear family of ``seq`` together with its closed-form splitting."""
    if isinstance(seq, PeriodicSeq):
        w = seq.default_window()
        fam: Family = Periodic([TorusDiffeo(shear(seq.at(i), i)) for i in w.indices()])
    elif isinstance(seq, WordSeq):
        core = [TorusDiffeo(shear(seq.at(i), i)) for i in range(seq.start, seq.end + 1)]
        # tails alternate parity, so they are 2-periodic in the index
        left = [TorusDiffeo(shear(seq.left, par)) for par in (0, 1)]
        right = [TorusDiffeo(shear(seq.right, par)) for par in (0, 1)]
        fam = Word(core, left, right, start=seq.start)
    else:
        raise TypeError("unsupported sequence presentation")
    data = SplittingData(seq, seq.default_window())
    for i in data.window.indices():
        data.at(i)
    data.c_const = multiplicative_constant(seq)
    return fam, data


def invariance_residual(seq: IntSeq, window: Window) -> float:
    """Max angular defect of ``A_i span(s_i) = span(s_{i+1})`` and the same for ``u``."""
    worst = 0.0
    for i in window.indices():
        A = shear(seq.at(i), i).as_array()
        p, q = _split_point(seq, i), _split_point(seq, i + 1)
        for v, w in ((p.s, q.s), (p.u, q.u)):
            img = A @ v
            cross = abs(img[0] * w[1] - img[1] * w[0]) / (np.linalg.norm(img) * np.linalg.norm(w))
            worst = max(worst, float(cross))
    return worst


# --- growth bounds --------------------------------------------------------------

@dataclass(frozen=True)
class GrowthRow:
    i: int
    n: int
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def verify_growth_bounds(
    seq: IntSeq, window: Window | None = None, n_max: int = 25, rtol: float = 1e-9
) -> tuple[Certificate, list[GrowthRow]]:
    """Check the product and vector growth bounds with ``lambda = sqrt(2/3)``.

    Products and orbit vectors are evaluated in extended precision so that
    the stable direction does not drift into the unstable one.

    Returns:
        The certificate and the product-bound rows ``(i, n, lhs, rhs)``.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    window = window or seq.default_window()
    c = multiplicative_constant(seq)
    lam = GROWTH_LAMBDA
    rows: list[GrowthRow] = []
    worst = {"product": 0.0, "stable": 0.0, "unstable": 0.0, "premise": 0.0}
    witnesses = []
    span_digits = sum(math.log10(seq.at(k) + 2) for k in range(window.lo, window.hi + n_max + 1))
    ctx = mpmath.MPContext()
    ctx.dps = int(40 + 2 * span_digits)
    lam_mp = ctx.sqrt(ctx.mpf(2) / 3)
    for i in window.indices():
        a, b, cc, d, _ = _split_values(seq, i, ctx)
        s = ctx.matrix([[a], [-b]])
        u = ctx.matrix([[cc], [d]])
        s0, u0 = ctx.norm(s), ctx.norm(u)
        prod = ctx.mpf(1)
        for n in range(1, n_max + 1):
            k = i + n - 1
            nk = seq.at(k)
            A = ctx.matrix([[1, 0], [nk, 1]]) if k % 2 == 0 else ctx.matrix([[1, nk], [0, 1]])
            s = A * s
            u = A * u
            prod *= _cf_value(seq, k, 1, ctx)
            lhs, rhs = c * prod, 2 * c * lam_mp**n
            rows.append(GrowthRow(i, n, float(lhs), float(rhs)))
            ratios = {
                "product": float(lhs / rhs),
                "stable": float(ctx.norm(s) / (2 * c * lam_mp**n * s0)),
                "unstable": float((u0 / (2 * c * lam_mp**n)) / ctx.norm(u)),
                "premise": float(ctx.norm(s) / (c * prod * s0)),
            }
            for key, r in ratios.items():
                if r > worst[key]:
                    worst[key] = r
                if r > 1 + rtol:
                    witnesses.append({"i": i, "n": n, "bound": key, "ratio": r})
    status = FALSIFIED if witnesses else CERTIFIED
    cert = Certificate(
        kind="multiplicative-growth",
        status=status,
        constants={"lambda": lam, "c": c, "C": 2 * c},
        residuals={f"max_ratio_{k}": v for k, v in worst.items()},
        witnesses=witnesses[:50],
        notes=[f"window=[{window.lo},{window.hi}]", f"n_max={n_max}", f"rtol={rtol}"],
    )
    return cert, rows


def neighbor_lemma_check(seq: IntSeq, window: Window | None = None) -> Certificate:
    """Whenever ``lambda_j`` exceeds 2/3, check ``lambda_{j-1} < 2/3`` and ``lambda_{j+1} < 1/2``."""
    window = window or seq.default_window()
    triggered = []
    failures = []
    for j in window.indices():
        lj = _cf_value(seq, j, 1)
        if 2.0 / 3.0 < lj < 1.0:
            prev = _cf_value(seq, j - 1, 1)
            nxt = _cf_value(seq, j + 1, 1)
            rec = {"j": j, "lambda_j": lj, "lambda_prev": prev, "lambda_next": nxt}
            triggered.append(rec)
            if not (prev < 2.0 / 3.0 and nxt < 0.5):
                failures.append(rec)
    return Certificate(
        kind="neighbor-lemma",
        status=FALSIFIED if failures else CERTIFIED,
        residuals={"triggered": len(triggered), "counterexamples": len(failures)},
        witnesses=failures or triggered[:10],
    )


# --- factorization --------------------------------------------------------------

@dataclass(frozen=True)
class Factorization:
    """Generator word of a matrix in ``SL(2, N)``.

    ``word`` lists ``(letter, exponent)`` left to right with positive
    exponents. ``exponents`` is the padded alternating form
    ``M^{e_k} N^{e_{k-1}} ... M^{e_2} N^{e_1}`` reported as ``(e_1, ..., e_k)``.
    """

    word: tuple[tuple[str, int], ...]
    exponents: tuple[int, ...]

    @property
    def parity(self) -> str:
        return self.word[0][0]

    @property
    def first_nonzero(self) -> bool:
        return self.exponents[0] != 0

    @property
    def last_nonzero(self) -> bool:
        return self.exponents[-1] != 0

    @property
    def ends_nonzero(self) -> bool:
        return self.first_nonzero and self.last_nonzero

    def product(self) -> IntMat2:
        return word_product(self.word)

    def to_dict(self) -> dict:
        return {
            "word": [[l, e] for l, e in self.word],
            "exponents": list(self.exponents),
            "parity": self.parity,
            "first_nonzero": self.first_nonzero,
            "last_nonzero": self.last_nonzero,
        }


def word_product(word: Sequence[tuple[str, int]]) -> IntMat2:
    out = IntMat2(1, 0, 0, 1)
    for letter, e in word:
        if letter == "M":
            out = out @ IntMat2(1, 0, e, 1)
        elif letter == "N":
            out = out @ IntMat2(1, e, 0, 1)
        else:
            raise ValueError(f"unknown generator {letter!r}")
    return out


def factorize_sl2n(F: IntMat2) -> Factorization:
    """Euclidean factorization into powers of ``M = [[1,0],[1,1]]`` and ``N = [[1,1],[0,1]]``.

    Raises:
        ValueError: for a negative entry or the identity.
    """
    if not isinstance(F, IntMat2):
        F = IntMat2.from_rows(F)
    a, b, c, d = F.a, F.b, F.c, F.d
    if min(a, b, c, d) < 0:
        raise ValueError("matrix entries must be non-negative")
    if (a, b, c, d) == (1, 0, 0, 1):
        raise ValueError("identity has no non-trivial factorization")
    word: list[tuple[str, int]] = []
    while (a, b, c, d) != (1, 0, 0, 1):
        if a >= c and b >= d:
            # top row dominates: strip N from the left
            k = min(x // y for x, y in ((a, c), (b, d)) if y)
            a, b = a - k * c, b - k * d
            letter = "N"
        elif c >= a and d >= b:
            k = min(x // y for x, y in ((c, a), (d, b)) if y)
            c, d = c - k * a, d - k * b
            letter = "M"
        else:  # pragma: no cover - impossible for det 1 non-negative input
            raise ValueError("no dominating row; matrix is not in SL(2, N)")
        if word and word[-1][0] == letter:
            word[-1] = (letter, word[-1][1] + k)
        else:
            word.append((letter, k))
    exps = [e for _, e in reversed(word)]
    # padded alternating form must end (rightmost) in N and start (leftmost) in M
    if word[-1][0] == "M":
        exps = [0] + exps
    if word[0][0] == "N":
        exps = exps + [0]
    return Factorization(tuple(word), tuple(exps))


def parse_matrix(text: str) -> IntMat2:
    """Read ``a,b,c,d``, ``a,b;c,d`` or a JSON nested list ``[[a,b],[c,d]]``."""
    flat = text.translate(str.maketrans(";[]", ",  "))
    vals = [int(v) for v in flat.split(",") if v.strip()]
    if len(vals) != 4:
        raise ValueError("matrix needs four comma-separated entries a,b,c,d")
    return IntMat2(*vals)
