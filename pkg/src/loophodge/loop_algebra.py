"""Matrix-valued finite Laurent series in the loop parameter lambda.

A :class:`LaurentMatrix` stores the coefficients ``a_lo, ..., a_hi`` of
``sum_k a_k lambda^k`` as a ``(hi - lo + 1, n, n)`` complex array.  Everything
on the circle |lambda| = 1 (adjoints, evaluation, pointwise inverses) uses
``conj(lambda) = 1 / lambda``.
"""

from __future__ import annotations

import enum
import json
import math
from typing import Iterable, NamedTuple

import numpy as np

DEFAULT_TOL = 1e-10
DET_THRESHOLD = 1e-8


class LoopAlgebraError(ValueError):
    pass


class WindowTooSmallError(LoopAlgebraError):
    """Coefficients outside the requested window exceed the tolerance."""


class SingularLoopError(LoopAlgebraError):
    """Pointwise determinant too close to zero on the evaluation grid."""


class InvolutionKind(enum.Enum):
    ALGEBRA = "algebra"
    GROUP = "group"


def grid_size(span: int) -> int:
    """Smallest power of two that is at least ``4 * span``."""
    m = max(4 * int(span), 8)
    return 1 << (m - 1).bit_length()


def circle_points(m: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(m) / m)


class LaurentMatrix:
    __slots__ = ("lo", "coeffs")

    def __init__(self, coeffs, lo: int = 0):
        c = np.array(coeffs, dtype=complex)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] == 0:
            raise LoopAlgebraError(f"coefficient array must be (m, n, n), got {c.shape}")
        c.setflags(write=False)
        self.coeffs = c
        self.lo = int(lo)

    # -- construction -----------------------------------------------------

    @classmethod
    def zeros(cls, n: int) -> "LaurentMatrix":
        return cls(np.zeros((1, n, n)), 0)

    @classmethod
    def identity(cls, n: int) -> "LaurentMatrix":
        return cls(np.eye(n)[None], 0)

    @classmethod
    def constant(cls, a) -> "LaurentMatrix":
        return cls(np.asarray(a, dtype=complex)[None], 0)

    @classmethod
    def monomial(cls, k: int, a) -> "LaurentMatrix":
        return cls(np.asarray(a, dtype=complex)[None], k)

    @classmethod
    def from_dict(cls, terms: dict) -> "LaurentMatrix":
        if not terms:
            raise LoopAlgebraError("empty term dictionary; use LaurentMatrix.zeros")
        lo, hi = min(terms), max(terms)
        first = np.asarray(next(iter(terms.values())))
        out = np.zeros((hi - lo + 1,) + first.shape, dtype=complex)
        for k, a in terms.items():
            out[k - lo] += np.asarray(a, dtype=complex)
        return cls(out, lo)

    @classmethod
    def from_samples(cls, values: np.ndarray, lo: int, hi: int) -> "LaurentMatrix":
        """Coefficients in [lo, hi] of a function sampled on ``circle_points(m)``."""
        m = values.shape[0]
        if hi - lo + 1 > m:
            raise LoopAlgebraError("window wider than the sample grid")
        spectrum = np.fft.fft(values, axis=0) / m
        idx = np.arange(lo, hi + 1) % m
        return cls(spectrum[idx], lo)

    # -- basic accessors --------------------------------------------------

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @property
    def hi(self) -> int:
        return self.lo + self.coeffs.shape[0] - 1

    @property
    def window(self) -> tuple[int, int]:
        return self.lo, self.hi

    @property
    def span(self) -> int:
        return self.hi - self.lo + 1

    def degrees(self) -> range:
        return range(self.lo, self.hi + 1)

    def coeff(self, k: int) -> np.ndarray:
        if self.lo <= k <= self.hi:
            return self.coeffs[k - self.lo]
        return np.zeros((self.n, self.n), dtype=complex)

    def padded(self, lo: int, hi: int) -> np.ndarray:
        """Coefficient array on [lo, hi]; coefficients outside are dropped."""
        out = np.zeros((hi - lo + 1, self.n, self.n), dtype=complex)
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a <= b:
            out[a - lo : b - lo + 1] = self.coeffs[a - self.lo : b - self.lo + 1]
        return out

    def truncated(self, lo: int, hi: int) -> "LaurentMatrix":
        return LaurentMatrix(self.padded(lo, hi), lo)

    def degree_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=(1, 2))

    def max_norm(self) -> float:
        return float(self.degree_norms().max())

    def normalized(self, tol: float = 0.0) -> "LaurentMatrix":
        """Drop boundary coefficients whose Frobenius norm is <= tol."""
        norms = self.degree_norms()
        keep = np.nonzero(norms > tol)[0]
        if keep.size == 0:
            return LaurentMatrix.zeros(self.n)
        a, b = keep[0], keep[-1]
        return LaurentMatrix(self.coeffs[a : b + 1], self.lo + a)

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_norm() <= tol

    # -- pointwise views ----------------------------------------------------

    def evaluate(self, lams) -> np.ndarray:
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        powers = lams[:, None] ** np.arange(self.lo, self.hi + 1)[None, :]
        return np.einsum("mk,kij->mij", powers, self.coeffs)

    def adjoint(self) -> "LaurentMatrix":
        """Pointwise conjugate transpose on the circle: a_k -> a_{-k}^*."""
        c = np.conj(np.transpose(self.coeffs, (0, 2, 1)))[::-1]
        return LaurentMatrix(c, -self.hi)

    def reflect(self) -> "LaurentMatrix":
        """lambda -> -lambda."""
        signs = (-1.0) ** np.arange(self.lo, self.hi + 1)
        return LaurentMatrix(self.coeffs * signs[:, None, None], self.lo)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "LaurentMatrix") -> None:
        if not isinstance(other, LaurentMatrix):
            raise TypeError(f"expected LaurentMatrix, got {type(other).__name__}")
        if other.n != self.n:
            raise LoopAlgebraError(f"size mismatch: {self.n} vs {other.n}")

    def __add__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        self._check(other)
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return LaurentMatrix(self.padded(lo, hi) + other.padded(lo, hi), lo)

    def __sub__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        return self + (-other)

    def __neg__(self) -> "LaurentMatrix":
        return LaurentMatrix(-self.coeffs, self.lo)

    def __mul__(self, scalar) -> "LaurentMatrix":
        if isinstance(scalar, LaurentMatrix):
            return NotImplemented
        return LaurentMatrix(self.coeffs * scalar, self.lo)

    __rmul__ = __mul__

    def __matmul__(self, other: "LaurentMatrix") -> "LaurentMatrix":
        return laurent_mul(self, other)

    def bracket(self, other: "LaurentMatrix") -> "LaurentMatrix":
        return laurent_mul(self, other) - laurent_mul(other, self)

    def equals(self, other: "LaurentMatrix", tol: float = DEFAULT_TOL) -> bool:
        self._check(other)
        return (self - other).max_norm() <= tol

    def __repr__(self) -> str:
        return f"LaurentMatrix(n={self.n}, window=({self.lo}, {self.hi}))"

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        c = self.coeffs
        return {
            "n": self.n,
            "lo": self.lo,
            "hi": self.hi,
            "coeffs": np.stack([c.real, c.imag], axis=-1).tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str | dict) -> "LaurentMatrix":
        return laurent_from_json(text)


def _laurent_from_json_dict(data: dict) -> LaurentMatrix:
    arr = np.asarray(data["coeffs"], dtype=float)
    n, lo, hi = int(data["n"]), int(data["lo"]), int(data["hi"])
    if arr.shape != (hi - lo + 1, n, n, 2):
        raise LoopAlgebraError(f"coeffs shape {arr.shape} does not match n={n}, window=({lo}, {hi})")
    return LaurentMatrix(arr[..., 0] + 1j * arr[..., 1], lo)


def laurent_from_json(text: str | dict) -> LaurentMatrix:
    data = json.loads(text) if isinstance(text, str) else text
    return _laurent_from_json_dict(data)


# -- products -------------------------------------------------------------


def cauchy_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cauchy product of stacked coefficient arrays ``(p, ..., n, n)``, ``(q, ..., n, n)``."""
    p, q = a.shape[0], b.shape[0]
    out = np.zeros((p + q - 1,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]), dtype=complex)
    if p <= q:
        for i in range(p):
            out[i : i + q] += a[i] @ b
    else:
        for j in range(q):
            out[j : j + p] += a @ b[j]
    return out


def laurent_mul(a: LaurentMatrix, b: LaurentMatrix) -> LaurentMatrix:
    a._check(b)
    return LaurentMatrix(cauchy_product(a.coeffs, b.coeffs), a.lo + b.lo)


# -- structure maps -------------------------------------------------------


def _sigma_algebra_coeffs(x: LaurentMatrix) -> LaurentMatrix:
    # sigma_hat(x)_k = (-1)^k sigma(a_{-k}) with sigma(X) = -X^*
    return -x.adjoint().reflect()


def twisted_involution(
    x: LaurentMatrix,
    kind: InvolutionKind = InvolutionKind.ALGEBRA,
    window: int | None = None,
    tol: float = 1e-12,
) -> LaurentMatrix:
    """gamma(lambda) -> sigma(gamma(-lambda)).

    The group variant needs a truncation window because the pointwise inverse
    of a Laurent polynomial is in general an infinite series.
    """
    kind = InvolutionKind(kind)
    if kind is InvolutionKind.ALGEBRA:
        return _sigma_algebra_coeffs(x)
    reflected_adj = x.reflect().adjoint()
    if window is None:
        window = max(abs(x.lo), abs(x.hi))
    return group_inverse(reflected_adj, window, tol=tol)


def decompose_sigma_plus(g: LaurentMatrix) -> tuple[LaurentMatrix, LaurentMatrix]:
    """Split g = g_sigma + g_plus with g_sigma fixed by the twisted involution
    and g_plus supported in nonnegative degrees.

    Degree 0 is split into its anti-Hermitian part (to g_sigma) and its
    Hermitian part (to g_plus).
    """
    m = max(abs(g.lo), abs(g.hi))
    c = g.padded(-m, m)
    sig = np.zeros_like(c)
    plus = np.zeros_like(c)
    sig[: m] = c[: m]
    a0 = c[m]
    sig[m] = (a0 - a0.conj().T) / 2
    plus[m] = (a0 + a0.conj().T) / 2
    for k in range(1, m + 1):
        # sigma(a_{-k}) = -a_{-k}^*
        sig[m + k] = -((-1) ** k) * c[m - k].conj().T
        plus[m + k] = c[m + k] - sig[m + k]
    return LaurentMatrix(sig, -m), LaurentMatrix(plus, -m)


def sobolev_norm(x: LaurentMatrix, s: float) -> float:
    if s < 0:
        raise LoopAlgebraError("Sobolev exponent must be nonnegative")
    k = np.arange(x.lo, x.hi + 1, dtype=float)
    weights = (1.0 + k**2) ** s
    sq = np.einsum("kij,kij->k", x.coeffs, x.coeffs.conj()).real
    return float(math.sqrt(np.dot(weights, sq)))


def j_complex_structure(x: LaurentMatrix, tol: float = 0.0) -> LaurentMatrix:
    """i on negative degrees, -i on positive degrees.  Degree 0 must vanish."""
    if np.linalg.norm(x.coeff(0)) > tol:
        raise LoopAlgebraError("complex structure is defined on zero-mean loops only")
    k = np.arange(x.lo, x.hi + 1)
    phase = np.where(k < 0, 1j, np.where(k > 0, -1j, 0.0))
    return LaurentMatrix(x.coeffs * phase[:, None, None], x.lo)


def horizontal_project(x: LaurentMatrix) -> LaurentMatrix:
    return LaurentMatrix(x.padded(-1, 1) * np.array([1.0, 0.0, 1.0])[:, None, None], -1)


# -- group-level operations ------------------------------------------------


def _sup_bound(x: LaurentMatrix) -> float:
    return float(np.sum(np.linalg.norm(x.coeffs, ord=2, axis=(1, 2))))


def exp_loop(x: LaurentMatrix, window: int, tol: float = 1e-12) -> LaurentMatrix:
    """Exponential in the loop algebra, truncated to [-window, window].

    Scaling and squaring with a Taylor core, all products taken in the
    Laurent algebra on a working window wider than the output window.  Raises
    WindowTooSmallError if the mass falling outside the output window exceeds
    ``tol``.
    """
    if window < max(abs(x.lo), abs(x.hi)):
        raise LoopAlgebraError(f"window {window} smaller than the support of x {x.window}")
    work = window + max(8, window)
    bound = _sup_bound(x)
    squarings = max(0, math.ceil(math.log2(bound / 0.5))) if bound > 0.5 else 0
    y = x * (0.5**squarings)

    n = x.n
    result = LaurentMatrix.identity(n)
    term = LaurentMatrix.identity(n)
    for k in range(1, 40):
        term = laurent_mul(term, y).truncated(-work, work) * (1.0 / k)
        result = result + term
        if term.max_norm() < 1e-18:
            break
    for _ in range(squarings):
        result = laurent_mul(result, result).truncated(-work, work)

    full = result.truncated(-work, work)
    out = full.truncated(-window, window)
    tail = (full - out).max_norm()
    if tail > tol:
        raise WindowTooSmallError(
            f"exp_loop: coefficients beyond degree {window} reach {tail:.3e} > tol {tol:.1e}"
        )
    return out


def group_inverse(
    g: LaurentMatrix, window: int, tol: float = 1e-12, det_threshold: float = DET_THRESHOLD
) -> LaurentMatrix:
    """Pointwise inverse on the circle, truncated to [-window, window]."""
    span = max(g.span, 2 * window + 1)
    m = grid_size(span)
    values = g.evaluate(circle_points(m))
    dets = np.linalg.det(values)
    min_det = float(np.min(np.abs(dets)))
    if min_det <= det_threshold:
        raise SingularLoopError(f"min |det| on the grid is {min_det:.3e} <= {det_threshold:.1e}")
    inv = np.linalg.inv(values)
    half = m // 2
    full = LaurentMatrix.from_samples(inv, -half + 1, half - 1)
    out = full.truncated(-window, window)
    tail = (full - out).max_norm()
    if tail > tol:
        raise WindowTooSmallError(
            f"group_inverse: coefficients beyond degree {window} reach {tail:.3e} > tol {tol:.1e}"
        )
    return out


# -- membership predicates ------------------------------------------------


class Membership(NamedTuple):
    ok: bool
    residual: float


MEMBERSHIP_CLASSES = (
    "sigma_algebra",
    "sigma_group",
    "plus",
    "horizontal",
    "constant_unitary",
    "loop_k",
)


def membership_residual(x: LaurentMatrix, cls: str) -> float:
    if cls == "sigma_algebra":
        return (twisted_involution(x) - x).max_norm()
    if cls == "sigma_group":
        # sigma_hat(g) = g  <=>  g(-lambda)^* g(lambda) = I, a polynomial identity
        prod = laurent_mul(x.reflect().adjoint(), x)
        return (prod - LaurentMatrix.identity(x.n)).max_norm()
    if cls == "plus":
        return float(sum(np.linalg.norm(x.coeff(k)) for k in x.degrees() if k < 0))
    if cls == "horizontal":
        return float(sum(np.linalg.norm(x.coeff(k)) for k in x.degrees() if k not in (-1, 1)))
    if cls == "constant_unitary":
        off = float(sum(np.linalg.norm(x.coeff(k)) for k in x.degrees() if k != 0))
        a0 = x.coeff(0)
        return off + float(np.linalg.norm(a0.conj().T @ a0 - np.eye(x.n)))
    if cls == "loop_k":
        # pointwise anti-Hermitian on the circle: a_{-k}^* = -a_k
        return (x.adjoint() + x).max_norm()
    raise LoopAlgebraError(f"unknown membership class {cls!r}; expected one of {MEMBERSHIP_CLASSES}")


def membership(x: LaurentMatrix, cls: str, tol: float = DEFAULT_TOL) -> Membership:
    r = membership_residual(x, cls)
    return Membership(r <= tol, r)


def pointwise_norm_bound(loops: Iterable[LaurentMatrix]) -> float:
    return max(_sup_bound(x) for x in loops)
