"""Geometry and calculus on the flat 2-torus.

Points live in ``[0, 1)^2`` and tangent spaces are identified with ``R^2``.
The injectivity radius of the flat torus is ``1/2``, so the exponential
chart at any point is a translation and the log chart is valid on the open
ball of radius ``1/2``.

Maps are of the form ``x -> A x + p(x) mod Z^2`` where ``A`` is in
``SL(2, Z)`` and ``p`` is a finite trigonometric sum. All derivatives are
analytic. Array-valued helpers accept ``(N, 2)`` inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels

INJECTIVITY_RADIUS = 0.5
DEFAULT_INVERT_TOL = 1e-12
DEFAULT_INVERT_CAP = 200


class ChartOverflowError(ValueError):
    """Raised when a log chart is requested outside the injectivity ball."""


class InversionError(RuntimeError):
    """Raised when the Newton inversion misses its tolerance within the cap."""


def wrap(points: np.ndarray) -> np.ndarray:
    """Reduce coordinates to ``[0, 1)``."""
    out = np.mod(np.asarray(points, dtype=float), 1.0)
    out[out >= 1.0] = 0.0
    return out


def displacement(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Shortest lift of ``q - p``, each component in ``[-1/2, 1/2]``."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return d - np.rint(d)


def distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Flat torus distance, broadcasting over leading axes."""
    return np.linalg.norm(displacement(p, q), axis=-1)


def spectral_norm(mats: np.ndarray) -> np.ndarray:
    """Operator 2-norm of each ``2x2`` matrix in a ``(..., 2, 2)`` stack."""
    m = np.asarray(mats, dtype=float)
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    fro2 = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
    return np.sqrt(0.5 * (fro2 + disc))


def tensor_norm(tens: np.ndarray) -> np.ndarray:
    """Frobenius norm of each ``2x2x2`` tensor; bounds the bilinear operator norm."""
    t = np.asarray(tens, dtype=float)
    return np.sqrt(np.sum(t * t, axis=(-3, -2, -1)))


def grid_points(n: int) -> np.ndarray:
    """Uniform ``n x n`` lattice on the torus as an ``(n*n, 2)`` array, x-major."""
    ax = np.arange(n) / n
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self) -> None:
        r = wrap(np.array([self.x, self.y]))
        object.__setattr__(self, "x", float(r[0]))
        object.__setattr__(self, "y", float(r[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance(self, other: "TorusPoint") -> float:
        return float(distance(self.as_array(), other.as_array()))


@dataclass(frozen=True)
class TangentVec:
    u: float
    v: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("tangent vector components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])

    def norm(self) -> float:
        return math.hypot(self.u, self.v)


def exp_map(p: TorusPoint, v: TangentVec) -> TorusPoint:
    """Exponential chart: translate ``p`` by ``v``."""
    return TorusPoint(p.x + v.u, p.y + v.v)


def log_map(p: TorusPoint, q: TorusPoint) -> TangentVec:
    """Inverse chart of :func:`exp_map` on the ball of radius 1/2.

    Raises:
        ChartOverflowError: if ``d(p, q) >= 1/2``.
    """
    d = displacement(p.as_array(), q.as_array())
    if np.hypot(d[0], d[1]) >= INJECTIVITY_RADIUS:
        raise ChartOverflowError(
            f"log chart undefined: d(p, q) = {np.hypot(d[0], d[1]):.6g} >= {INJECTIVITY_RADIUS}"
        )
    return TangentVec(float(d[0]), float(d[1]))


@dataclass(frozen=True)
class IntMat2:
    """Integer ``2x2`` matrix with determinant one."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        for name in "abcd":
            val = getattr(self, name)
            if isinstance(val, float):
                if not val.is_integer():
                    raise ValueError(f"entry {name}={val} is not an integer")
                object.__setattr__(self, name, int(val))
            elif not isinstance(val, (int, np.integer)):
                raise ValueError(f"entry {name} must be an integer")
            else:
                object.__setattr__(self, name, int(val))
        if self.a * self.d - self.b * self.c != 1:
            raise ValueError(
                f"determinant must be 1, got {self.a * self.d - self.b * self.c}"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "IntMat2":
        (a, b), (c, d) = rows
        return cls(a, b, c, d)

    def rows(self) -> list[list[int]]:
        return [[self.a, self.b], [self.c, self.d]]

    def as_array(self) -> np.ndarray:
        return np.array(self.rows(), dtype=float)

    def inverse(self) -> "IntMat2":
        return IntMat2(self.d, -self.b, -self.c, self.a)

    def __matmul__(self, other: "IntMat2") -> "IntMat2":
        return IntMat2(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def is_identity(self) -> bool:
        return (self.a, self.b, self.c, self.d) == (1, 0, 0, 1)


IDENTITY_MAT = IntMat2(1, 0, 0, 1)
CAT_MAT = IntMat2(2, 1, 1, 1)


@dataclass(frozen=True)
class Mode:
    k: tuple[int, int]
    cos: tuple[float, float] = (0.0, 0.0)
    sin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", (int(self.k[0]), int(self.k[1])))
        object.__setattr__(self, "cos", (float(self.cos[0]), float(self.cos[1])))
        object.__setattr__(self, "sin", (float(self.sin[0]), float(self.sin[1])))
        if not all(math.isfinite(c) for c in self.cos + self.sin):
            raise ValueError("mode coefficients must be finite")

    def amplitude(self) -> float:
        return math.sqrt(sum(c * c for c in self.cos + self.sin))


@dataclass(frozen=True)
class TrigPerturbation:
    """Finite sum ``p(x) = sum_m cos_m cos(2 pi k_m.x) + sin_m sin(2 pi k_m.x)``.

    The bound properties are triangle-inequality upper bounds, not grid maxima.
    """

    modes: tuple[Mode, ...] = ()
    _ks: np.ndarray = field(init=False, repr=False, compare=False)
    _cos: np.ndarray = field(init=False, repr=False, compare=False)
    _sin: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        modes = tuple(m if isinstance(m, Mode) else Mode(**m) for m in self.modes)
        object.__setattr__(self, "modes", modes)
        ks = np.array([m.k for m in modes], dtype=float).reshape(-1, 2)
        object.__setattr__(self, "_ks", ks)
        object.__setattr__(self, "_cos", np.array([m.cos for m in modes], dtype=float).reshape(-1, 2))
        object.__setattr__(self, "_sin", np.array([m.sin for m in modes], dtype=float).reshape(-1, 2))

    @property
    def is_zero(self) -> bool:
        return all(m.amplitude() == 0.0 for m in self.modes)

    @property
    def sup_bound(self) -> float:
        return sum(m.amplitude() for m in self.modes)

    @property
    def d1_bound(self) -> float:
        return sum(2 * math.pi * math.hypot(*m.k) * m.amplitude() for m in self.modes)

    @property
    def d2_bound(self) -> float:
        return sum((2 * math.pi) ** 2 * (m.k[0] ** 2 + m.k[1] ** 2) * m.amplitude() for m in self.modes)

    def evaluate(self, points: np.ndarray, order: int = 2):
        return _kernels.trig_eval(np.atleast_2d(points), self._ks, self._cos, self._sin, order)

    def scaled(self, factor: float) -> "TrigPerturbation":
        return TrigPerturbation(
            tuple(
                Mode(m.k, (factor * m.cos[0], factor * m.cos[1]), (factor * m.sin[0], factor * m.sin[1]))
                for m in self.modes
            )
        )


class TorusDiffeo:
    """Torus diffeomorphism ``x -> A x + p(x) mod Z^2``.

    Args:
        linear: the ``SL(2, Z)`` part.
        pert: the periodic displacement; omitted means a linear map.

    Raises:
        ValueError: if ``||Dp|| * ||A^-1|| >= 1``, which would break the
            global-diffeomorphism and inversion guarantees.
    """

    __slots__ = ("linear", "pert", "_A", "_Ainv", "margin")

    def __init__(self, linear: IntMat2, pert: TrigPerturbation | None = None):
        if not isinstance(linear, IntMat2):
            linear = IntMat2.from_rows(linear)
        self.linear = linear
        self.pert = pert if pert is not None else TrigPerturbation()
        self._A = linear.as_array()
        self._Ainv = linear.inverse().as_array()
        self.margin = self.pert.d1_bound * float(spectral_norm(self._Ainv))
        if self.margin >= 1.0:
            raise ValueError(
                f"invertibility margin violated: ||Dp|| * ||A^-1|| = {self.margin:.6g} >= 1"
            )

    @classmethod
    def linear_map(cls, mat: IntMat2) -> "TorusDiffeo":
        return cls(mat)

    @classmethod
    def identity(cls) -> "TorusDiffeo":
        return cls(IDENTITY_MAT)

    @classmethod
    def cat(cls) -> "TorusDiffeo":
        return cls(CAT_MAT)

    @property
    def is_linear(self) -> bool:
        return self.pert.is_zero

    @property
    def matrix(self) -> np.ndarray:
        return self._A.copy()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TorusDiffeo):
            return NotImplemented
        return self.linear == other.linear and self.pert == other.pert

    def __hash__(self) -> int:
        return hash((self.linear, self.pert.modes))

    def __repr__(self) -> str:
        return f"TorusDiffeo(linear={self.linear.rows()}, modes={len(self.pert.modes)})"

    # --- forward -------------------------------------------------------
    def lift(self, points: np.ndarray) -> np.ndarray:
        """Lifted map on ``R^2`` (no reduction)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = pts @ self._A.T
        if not self.pert.is_zero:
            out = out + self.pert.evaluate(pts, 0)[0]
        return out

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return wrap(self.lift(points))

    def derivatives(self, points: np.ndarray, order: int = 2):
        """Return ``(image, jacobian, hessian)`` arrays at ``(N, 2)`` points.

        ``hessian[n, a, b, c]`` is the second partial of component ``a``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[0]
        if self.pert.is_zero:
            img = wrap(pts @ self._A.T)
            return img, np.broadcast_to(self._A, (n, 2, 2)).copy(), np.zeros((n, 2, 2, 2))
        val, jac, hess = self.pert.evaluate(pts, order)
        return wrap(pts @ self._A.T + val), jac + self._A, hess

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        return self.derivatives(points, 1)[1]

    # --- inverse -------------------------------------------------------
    def inverse(
        self,
        points: np.ndarray,
        tol: float = DEFAULT_INVERT_TOL,
        max_iter: int = DEFAULT_INVERT_CAP,
    ) -> np.ndarray:
        """Preimages of ``(N, 2)`` points by Newton iteration on the lift.

        Raises:
            InversionError: if the residual stays above ``tol``.
        """
        if tol <= 0:
            raise ValueError("tol must be positive")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.pert.is_zero:
            return wrap(pts @ self._Ainv.T)
        y, _, res = _kernels.invert_newton(
            pts, self._A, self.pert._ks, self.pert._cos, self.pert._sin, tol, max_iter
        )
        if res > tol:
            raise InversionError(f"inversion residual {res:.3g} above tol {tol:.3g} after {max_iter} steps")
        return wrap(y)

    def inverse_derivatives(self, points: np.ndarray, order: int = 2):
        """Return ``(preimage, D(f^-1), D^2(f^-1))`` at ``(N, 2)`` points."""
        pre = self.inverse(points)
        _, jac, hess = self.derivatives(pre, order)
        jinv = np.linalg.inv(jac)
        if order >= 2 and not self.pert.is_zero:
            hinv = -np.einsum("nad,ndef,neb,nfc->nabc", jinv, hess, jinv, jinv)
        else:
            hinv = np.zeros_like(hess)
        return pre, jinv, hinv

    # --- norms ---------------------------------------------------------
    def c2_norms(self, points: np.ndarray) -> np.ndarray:
        """Per-point ``max{||Df||, ||Df^-1||, ||D^2 f||, ||D^2 f^-1||}``.

        Forward quantities are taken at ``points`` and inverse quantities at
        the same points viewed as targets.
        """
        _, jac, hess = self.derivatives(points, 2)
        _, jinv, hinv = self.inverse_derivatives(points, 2)
        return np.maximum.reduce(
            [spectral_norm(jac), spectral_norm(jinv), tensor_norm(hess), tensor_norm(hinv)]
        )

    # --- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "linear": self.linear.rows(),
            "modes": [
                {"k": list(m.k), "cos": list(m.cos), "sin": list(m.sin)} for m in self.pert.modes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TorusDiffeo":
        if "linear" not in data:
            raise ValueError("diffeo JSON needs a 'linear' field")
        modes = tuple(
            Mode(tuple(m["k"]), tuple(m.get("cos", (0.0, 0.0))), tuple(m.get("sin", (0.0, 0.0))))
            for m in data.get("modes", [])
        )
        return cls(IntMat2.from_rows(data["linear"]), TrigPerturbation(modes))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TorusDiffeo":
        return cls.from_dict(json.loads(text))


def translation_pert(c: Sequence[float]) -> TrigPerturbation:
    """Constant displacement ``p(x) = c`` as a zero-frequency mode."""
    return TrigPerturbation((Mode((0, 0), (float(c[0]), float(c[1]))),))


def sine_pert(eps: float, k: Sequence[int] = (1, 0), direction: Sequence[float] = (1.0, 0.0)) -> TrigPerturbation:
    """Single-mode ``eps * direction * sin(2 pi k.x)``."""
    return TrigPerturbation(
        (Mode(tuple(k), (0.0, 0.0), (eps * direction[0], eps * direction[1])),)
    )


def perturbed_cat(eps: float) -> TorusDiffeo:
    """Cat map plus ``eps * (sin 2 pi x, 0)``."""
    return TorusDiffeo(CAT_MAT, sine_pert(eps))


def combine_perts(*perts: TrigPerturbation) -> TrigPerturbation:
    return TrigPerturbation(tuple(m for p in perts for m in p.modes))


# --- point-level operations -------------------------------------------------

def evaluate(f: TorusDiffeo, x: TorusPoint, order: int = 2) -> tuple[TorusPoint, np.ndarray, float]:
    """Image, Jacobian and second-derivative norm of ``f`` at a single point."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    img, jac, hess = f.derivatives(x.as_array()[None], max(order, 0))
    d2 = float(tensor_norm(hess[0])) if order == 2 else 0.0
    return TorusPoint(*img[0]), jac[0], d2


def invert(f: TorusDiffeo, y: TorusPoint, tol: float = DEFAULT_INVERT_TOL) -> TorusPoint:
    """Preimage of a single point."""
    return TorusPoint(*f.inverse(y.as_array()[None], tol=tol)[0])


def cm_distance(f, g, order: int = 0, grid_n: int = 64) -> float:
    """Grid-sampled ``C^order`` distance between two torus maps.

    The zeroth-order term compares images and preimages pointwise; higher
    orders add sup-differences of first and second derivatives of the maps
    and their inverses in the global chart. Any object with the
    ``derivatives``/``inverse_derivatives`` interface is accepted.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if grid_n < 16:
        raise ValueError("grid_n must be at least 16")
    pts = grid_points(grid_n)
    fi, fj, fh = f.derivatives(pts, order)
    gi, gj, gh = g.derivatives(pts, order)
    fp, fjinv, fhinv = f.inverse_derivatives(pts, order)
    gp, gjinv, ghinv = g.inverse_derivatives(pts, order)
    total = max(float(np.max(distance(fi, gi))), float(np.max(distance(fp, gp))))
    if order >= 1:
        total += float(np.max(spectral_norm(fj - gj))) + float(np.max(spectral_norm(fjinv - gjinv)))
    if order >= 2:
        total += float(np.max(tensor_norm(fh - gh))) + float(np.max(tensor_norm(fhinv - ghinv)))
    return total


def load_diffeo(path: str) -> TorusDiffeo:
    with open(path, encoding="utf-8") as fh:
        return TorusDiffeo.from_dict(json.load(fh))
