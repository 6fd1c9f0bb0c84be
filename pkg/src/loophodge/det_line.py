"""The fundamental cocycle on the loop algebra and the determinant-line curvature.

``omega(xi, eta) = (i / 2 pi) int_0^{2 pi} <xi(theta), eta'(theta)> d theta`` with
``<X, Y> = -Tr(XY)`` and ``lambda = e^{i theta}``.  Expanding in Fourier modes
gives the coefficient pairing ``omega = -sum_n n Tr(a_n b_{-n})``; that closed
form is only trusted after it agrees with quadrature on a fixed sample
(``self_test``), which runs automatically before the first closed-form use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import conventions
from .harmonic_lattice import DiscreteBundle
from .loop_algebra import (
    LaurentMatrix,
    LoopAlgebraError,
    circle_points,
    grid_size,
    horizontal_project,
    j_complex_structure,
    membership,
)
from .report import Report

SELF_TEST_TOL = 1e-12


class CocycleError(ValueError):
    pass


class AliasingError(CocycleError):
    pass


class MembershipError(CocycleError):
    pass


class SelfTestError(RuntimeError):
    pass


@dataclass(frozen=True)
class CocycleValue:
    value: complex
    closed: complex | None
    quadrature: complex | None

    @property
    def difference(self) -> float:
        if self.closed is None or self.quadrature is None:
            return 0.0
        return abs(self.closed - self.quadrature)


def _check_sizes(xi: LaurentMatrix, eta: LaurentMatrix) -> None:
    if xi.n != eta.n:
        raise CocycleError(f"size mismatch: {xi.n} vs {eta.n}")


def cocycle_closed(xi: LaurentMatrix, eta: LaurentMatrix) -> complex:
    _check_sizes(xi, eta)
    total = 0j
    for k in xi.degrees():
        if k != 0 and eta.lo <= -k <= eta.hi:
            total += k * np.trace(xi.coeff(k) @ eta.coeff(-k))
    return complex(-total)


def quadrature_points(xi: LaurentMatrix, eta: LaurentMatrix) -> int:
    return grid_size(max(xi.span, eta.span))


def cocycle_quadrature(xi: LaurentMatrix, eta: LaurentMatrix, points: int | None = None) -> complex:
    _check_sizes(xi, eta)
    m = quadrature_points(xi, eta) if points is None else int(points)
    top = max(abs(xi.lo + eta.lo), abs(xi.hi + eta.hi))
    if m <= top:
        raise AliasingError(f"{m} points alias products of degree up to {top}")
    lam = circle_points(m)
    x = xi.evaluate(lam)
    # eta'(theta) = sum i k b_k e^{i k theta}
    deta = LaurentMatrix(eta.coeffs * (1j * np.arange(eta.lo, eta.hi + 1))[:, None, None], eta.lo)
    y = deta.evaluate(lam)
    pairing = -np.einsum("mij,mji->m", x, y)
    # (i / 2 pi) * (2 pi / m) * sum
    return complex(1j * pairing.sum() / m)


_self_test_done = False


def self_test(seed: int = 20240611, trials: int = 12) -> float:
    """Closed form against quadrature on random pairs; raises on disagreement."""
    global _self_test_done
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 4))
        lo, hi = int(rng.integers(-5, 0)), int(rng.integers(1, 6))
        shape = (hi - lo + 1, n, n)
        a = LaurentMatrix(rng.normal(size=shape) + 1j * rng.normal(size=shape), lo)
        b = LaurentMatrix(rng.normal(size=shape) + 1j * rng.normal(size=shape), lo)
        worst = max(worst, abs(cocycle_closed(a, b) - cocycle_quadrature(a, b)))
    if worst > SELF_TEST_TOL * 10:
        raise SelfTestError(f"closed-form cocycle disagrees with quadrature by {worst:.3e}")
    _self_test_done = True
    return worst


def cocycle(xi: LaurentMatrix, eta: LaurentMatrix, mode: str = "closed", points: int | None = None) -> CocycleValue:
    if mode not in ("closed", "quadrature", "both"):
        raise CocycleError(f"unknown mode {mode!r}")
    closed = quad = None
    if mode in ("closed", "both"):
        if not _self_test_done:
            self_test()
        closed = cocycle_closed(xi, eta)
    if mode in ("quadrature", "both"):
        quad = cocycle_quadrature(xi, eta, points)
    value = closed if closed is not None else quad
    return CocycleValue(value, closed, quad)


def omega(xi: LaurentMatrix, eta: LaurentMatrix) -> complex:
    return cocycle(xi, eta).value


@dataclass(frozen=True)
class CocycleIdentity:
    standard: float
    displayed: float


def cocycle_identity(xi: LaurentMatrix, eta: LaurentMatrix, zeta: LaurentMatrix) -> CocycleIdentity:
    """Residuals of the standard cyclic sum and of the index pattern
    omega([xi,eta],zeta) + omega([zeta,eta],xi) + omega([eta,xi],zeta)."""
    b = lambda x, y: x.bracket(y)  # noqa: E731
    standard = omega(b(xi, eta), zeta) + omega(b(zeta, xi), eta) + omega(b(eta, zeta), xi)
    displayed = omega(b(xi, eta), zeta) + omega(b(zeta, eta), xi) + omega(b(eta, xi), zeta)
    return CocycleIdentity(abs(standard), abs(displayed))


REALITY_CLASSES = {"lambda_k": "loop_k", "lambda_sigma": "sigma_algebra"}


def reality_check(xi: LaurentMatrix, eta: LaurentMatrix, cls: str = "lambda_sigma", strict: bool = True, tol: float = 1e-10) -> float:
    """|Re omega(xi, eta)|; with ``strict`` both inputs must belong to ``cls``."""
    if cls not in REALITY_CLASSES:
        raise CocycleError(f"unknown class {cls!r}; expected one of {sorted(REALITY_CLASSES)}")
    if strict:
        for name, x in (("xi", xi), ("eta", eta)):
            mem = membership(x, REALITY_CLASSES[cls], tol)
            if not mem.ok:
                raise MembershipError(f"{name} is not in {cls} (residual {mem.residual:.3e})")
    return abs(omega(xi, eta).real)


def _require_zero_mean(x: LaurentMatrix, tol: float) -> None:
    if np.linalg.norm(x.coeff(0)) > tol:
        raise CocycleError("curvature is evaluated on zero-mean loops (degree-0 part must vanish)")


def curvature_pair(xi: LaurentMatrix, eta: LaurentMatrix, tol: float = 1e-12) -> complex:
    """beta(xi, eta) = -omega(xi, eta) / 2 on zero-mean loops."""
    _require_zero_mean(xi, tol)
    _require_zero_mean(eta, tol)
    return -0.5 * omega(xi, eta)


def horizontal_trace(f: LaurentMatrix) -> float:
    a1, am1 = f.coeff(1), f.coeff(-1)
    return float(np.trace(a1 @ a1.conj().T + am1 @ am1.conj().T).real)


def horizontal_definiteness(f: LaurentMatrix, tol: float = 1e-10) -> float:
    """i beta(f, J f) for a nonzero horizontal sigma-loop; the result is real."""
    if f.is_zero(tol):
        raise CocycleError("f must be nonzero")
    if not membership(f, "horizontal", tol).ok:
        raise MembershipError("f must be supported in degrees -1 and +1")
    if not membership(f, "sigma_algebra", tol).ok:
        raise MembershipError("f must be fixed by the twisted involution")
    value = 1j * curvature_pair(f, j_complex_structure(f))
    scale = max(1.0, horizontal_trace(f))
    if abs(value.imag) > 1e-12 * scale:
        raise CocycleError(f"i beta(f, Jf) has imaginary part {value.imag:.3e}")
    return float(value.real)


def calibrate_horizontal_constant(n: int = 2) -> tuple[int, float]:
    """Sign and constant c in i beta(f, Jf) = sign * c * Tr(a_1 a_1^* + a_{-1} a_{-1}^*),
    from quadrature on f = lambda^{-1} E_11 + lambda E_11."""
    e = np.zeros((n, n))
    e[0, 0] = 1.0
    f = LaurentMatrix.from_dict({-1: e, 1: e})
    jf = j_complex_structure(f)
    beta = -0.5 * cocycle(f, jf, mode="quadrature").value
    value = (1j * beta).real
    c = abs(value) / horizontal_trace(f)
    return int(np.sign(value)), float(c)


def energy_density_at(bundle: DiscreteBundle, site, axis_pair: int = 0) -> float:
    """Hitchin energy beta_X(d/dx_i, d/dy_i) at an arbitrary point, i = axis_pair."""
    d = bundle.d
    z = np.atleast_1d(np.asarray(site, dtype=complex)).reshape(d, 1)
    _, th, ths = bundle.fields_at(z)
    i = axis_pair
    ux = np.zeros(2 * d, dtype=complex)
    uy = np.zeros(2 * d, dtype=complex)
    ux[2 * i], ux[2 * i + 1] = 1.0, 1.0
    uy[2 * i], uy[2 * i + 1] = 1j, -1j
    tx = np.tensordot(ux, th[:, 0], axes=(0, 0))
    ty = np.tensordot(uy, th[:, 0], axes=(0, 0))
    sx = np.tensordot(ux, ths[:, 0], axes=(0, 0))
    sy = np.tensordot(uy, ths[:, 0], axes=(0, 0))
    val = (np.trace(tx @ sy) - np.trace(ty @ sx)) / (4j * math.pi)
    return float(val.real)


def _zero_mean(x: LaurentMatrix) -> LaurentMatrix:
    c = np.array(x.coeffs)
    if x.lo <= 0 <= x.hi:
        c[-x.lo] = 0
    return LaurentMatrix(c, x.lo)


def energy_curvature_relation(
    bundle: DiscreteBundle,
    site,
    window: int = 12,
    spacing: float = 1e-2,
    tol: float = 1e-5,
    base=None,
) -> Report:
    """Hitchin energy density against (i / 2 pi) beta_D(df(d/dx), df(d/dy))."""
    from .period_engine import period_differential

    rep = Report("energy_curvature_relation")
    density = energy_density_at(bundle, site)
    data = period_differential(bundle, site, window, spacing, base)
    xi_x, xi_y = _zero_mean(data.xi[0]), _zero_mean(data.xi[1])
    pullback = (1j / (2 * math.pi)) * curvature_pair(xi_x, xi_y, tol=math.inf)
    rep.note("density", density)
    rep.note("pullback", pullback)
    rep.add("pullback_imaginary", abs(pullback.imag), max(tol * abs(density), 1e-12))
    expected = conventions.ENERGY_CURVATURE_RATIO * density
    if abs(density) > 0:
        ratio = pullback.real / density
        rep.note("ratio", ratio)
        rep.add("relative_error", abs(pullback.real - expected) / abs(density), tol)
    else:
        rep.note("ratio", None)
        rep.add("absolute_error", abs(pullback.real - expected), 1e-10)
    return rep
