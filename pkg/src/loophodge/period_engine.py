"""Parallel transport of the lambda-family of flat connections and the period map.

Transport solves ``dP/ds = -A_lambda(gamma'(s)) P`` with ``P(0) = I`` where
``A_lambda = A + lambda^{-1} theta + lambda theta^*``, so ``P`` is a loop in
lambda, stored as a LaurentMatrix on a window [-N, N].  The period map is
``g = P^{-1}``; its Maurer-Cartan form ``g^{-1} dg`` equals ``A_lambda`` on a
flat family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .harmonic_lattice import BaseLattice, DiscreteBundle
from .loop_algebra import LaurentMatrix, group_inverse, membership_residual
from .report import Report

RELIABLE_MARGIN = 2


class TransportError(RuntimeError):
    pass


class DecayBandError(TransportError):
    """Coefficients near the window edge exceed tolerance at the maximal window."""


class StepUnderflowError(TransportError):
    pass


@dataclass(frozen=True)
class PathSpec:
    """Piecewise-straight path through ``waypoints`` (complex coordinates, shape (m, d))."""

    waypoints: np.ndarray
    max_step: float = 0.02
    lattice: BaseLattice | None = None

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=complex)
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2 or w.shape[0] < 2:
            raise ValueError("a path needs at least two waypoints")
        if self.max_step <= 0:
            raise StepUnderflowError("max_step must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)
        if self.lattice is not None:
            if self.lattice.d != w.shape[1]:
                raise ValueError("waypoint dimension does not match the lattice")
            if not self.lattice.periodic:
                coords = self.lattice.coords().reshape(self.lattice.d, -1)
                for i in range(self.lattice.d):
                    lo_x, hi_x = coords[i].real.min(), coords[i].real.max()
                    lo_y, hi_y = coords[i].imag.min(), coords[i].imag.max()
                    x, y = w[:, i].real, w[:, i].imag
                    eps = 1e-12
                    if (x < lo_x - eps).any() or (x > hi_x + eps).any() or (y < lo_y - eps).any() or (y > hi_y + eps).any():
                        raise ValueError("waypoints leave the patch")

    @classmethod
    def segment(cls, start, end, max_step: float = 0.02, lattice: BaseLattice | None = None) -> "PathSpec":
        return cls(np.array([np.atleast_1d(start), np.atleast_1d(end)]), max_step, lattice)

    @property
    def d(self) -> int:
        return self.waypoints.shape[1]

    @property
    def closed(self) -> bool:
        gap = self.waypoints[-1] - self.waypoints[0]
        if np.allclose(gap, 0, atol=1e-12):
            return True
        if self.lattice is not None and self.lattice.periodic:
            for i in range(self.d):
                tau = self.lattice.tau[i]
                # gap = m + n tau with integers m, n
                n = gap[i].imag / tau.imag
                m = gap[i].real - n * tau.real
                if abs(n - round(n)) > 1e-9 or abs(m - round(m)) > 1e-9:
                    return False
            return True
        return False

    def segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.waypoints[i], self.waypoints[i + 1]) for i in range(len(self.waypoints) - 1)]

    def then(self, other: "PathSpec") -> "PathSpec":
        if not np.allclose(self.waypoints[-1], other.waypoints[0]):
            raise ValueError("paths do not meet")
        return PathSpec(np.vstack([self.waypoints, other.waypoints[1:]]), min(self.max_step, other.max_step), self.lattice)


@dataclass(frozen=True)
class TransportResult:
    g: LaurentMatrix
    window: int
    decay_profile: np.ndarray
    sigma_residual: float
    steps: int
    band_max: float

    def to_dict(self) -> dict:
        return {
            "g": self.g.to_dict(),
            "window": self.window,
            "decay_profile": self.decay_profile.tolist(),
            "sigma_residual": self.sigma_residual,
            "steps": self.steps,
            "band_max": self.band_max,
        }


Injection = Mapping[int, np.ndarray]


def connection_coefficients(
    bundle: DiscreteBundle, z: np.ndarray, velocity: np.ndarray, injected: Injection | None = None
) -> dict[int, np.ndarray]:
    """Laurent coefficients of A_lambda(velocity) at the point z (shape (d,)).

    ``injected`` maps a degree to a constant 1-form (2d, r, r) added to the
    family, for fault-injection experiments.
    """
    a, th, ths = bundle.fields_at(np.asarray(z, dtype=complex)[:, None])
    d = bundle.d
    u = np.zeros(2 * d, dtype=complex)
    u[0::2] = velocity
    u[1::2] = np.conj(velocity)
    out = {
        -1: np.tensordot(u, th[:, 0], axes=(0, 0)),
        0: np.tensordot(u, a[:, 0], axes=(0, 0)),
        1: np.tensordot(u, ths[:, 0], axes=(0, 0)),
    }
    for k, form in (injected or {}).items():
        out[k] = out.get(k, 0) + np.tensordot(u, np.asarray(form, dtype=complex), axes=(0, 0))
    return out


def _apply(coeffs: dict[int, np.ndarray], p: np.ndarray, n: int) -> np.ndarray:
    """-(A P) truncated to degrees [-n, n]; p has shape (2n+1, r, r)."""
    out = np.zeros_like(p)
    for k, a in coeffs.items():
        if k >= 0:
            out[k:] -= a @ p[: p.shape[0] - k]
        else:
            out[:k] -= a @ p[-k:]
    return out


def _integrate(bundle, path: PathSpec, n: int, injected, steps_override: int | None) -> tuple[np.ndarray, int]:
    r = bundle.rank
    p = np.zeros((2 * n + 1, r, r), dtype=complex)
    p[n] = np.eye(r)
    total = 0
    for start, end in path.segments():
        vel = end - start
        length = float(np.linalg.norm(vel))
        if length == 0:
            continue
        m = steps_override or max(1, math.ceil(length / path.max_step))
        ds = 1.0 / m
        if ds * length < 1e-14:
            raise StepUnderflowError("step size underflow")
        for j in range(m):
            s0 = j * ds
            c0 = connection_coefficients(bundle, start + s0 * vel, vel, injected)
            cm = connection_coefficients(bundle, start + (s0 + ds / 2) * vel, vel, injected)
            c1 = connection_coefficients(bundle, start + (s0 + ds) * vel, vel, injected)
            k1 = _apply(c0, p, n)
            k2 = _apply(cm, p + ds / 2 * k1, n)
            k3 = _apply(cm, p + ds / 2 * k2, n)
            k4 = _apply(c1, p + ds * k3, n)
            p = p + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        total += m
    return p, total


def decay_profile(g: LaurentMatrix, n: int) -> np.ndarray:
    """max(|g_k|, |g_{-k}|) for k = 0..n."""
    return np.array([max(np.linalg.norm(g.coeff(k)), np.linalg.norm(g.coeff(-k))) for k in range(n + 1)])


def transport(
    bundle: DiscreteBundle,
    path: PathSpec,
    window: int = 12,
    tol: float = 1e-10,
    auto_expand: bool = True,
    max_window: int = 64,
    injected: Injection | None = None,
    steps: int | None = None,
) -> TransportResult:
    """Endpoint of P along ``path``; the window doubles while the outer band
    (degrees beyond N - 2 in absolute value) carries more than ``tol``."""
    if path.d != bundle.d:
        raise TransportError("path dimension does not match the bundle")
    n = int(window)
    if n < RELIABLE_MARGIN + 1:
        raise TransportError(f"window {n} too small; need at least {RELIABLE_MARGIN + 1}")
    extra = max([abs(k) for k in (injected or {})] + [1])
    while True:
        p, count = _integrate(bundle, path, n, injected, steps)
        g = LaurentMatrix(p, -n)
        profile = decay_profile(g, n)
        band = float(profile[n - RELIABLE_MARGIN + 1 :].max()) if n > RELIABLE_MARGIN else float(profile.max())
        if band <= tol:
            break
        if not auto_expand or 2 * n > max_window:
            raise DecayBandError(
                f"coefficients in the outer band of window {n} reach {band:.3e} > tol {tol:.1e}"
            )
        n *= 2
    sigma = membership_residual(g, "sigma_group") if extra == 1 else float("nan")
    return TransportResult(g, n, profile, sigma, count, band)


def monodromy(
    bundle: DiscreteBundle, loop: PathSpec, window: int = 12, tol: float = 1e-10, **kwargs
) -> LaurentMatrix:
    if not loop.closed:
        raise TransportError("monodromy needs a closed loop")
    return transport(bundle, loop, window, tol, **kwargs).g


# -- period map -------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodPoint:
    """Gauge-fixed representative of gK and the projector onto g . (degrees 0..depth)."""

    representative: LaurentMatrix
    projector: np.ndarray
    projector_window: tuple[int, int]
    depth: int

    def distance(self, other: "PeriodPoint") -> float:
        lo = min(self.projector_window[0], other.projector_window[0])
        hi = max(self.projector_window[1], other.projector_window[1])
        a = _embed_projector(self, lo, hi)
        b = _embed_projector(other, lo, hi)
        return float(np.linalg.norm(a - b, 2))


def _embed_projector(pt: PeriodPoint, lo: int, hi: int) -> np.ndarray:
    n = pt.representative.n
    size = n * (hi - lo + 1)
    out = np.zeros((size, size), dtype=complex)
    a = (pt.projector_window[0] - lo) * n
    m = pt.projector.shape[0]
    out[a : a + m, a : a + m] = pt.projector
    return out


def period_element(result: TransportResult, tol: float = 1e-12) -> LaurentMatrix:
    """g = P^{-1} (pointwise inverse on the circle)."""
    return group_inverse(result.g, result.window + 4, tol=max(tol, 1e-12) * 1e3)


def coset_point(g: LaurentMatrix, depth: int = 4) -> PeriodPoint:
    """Right-multiply by the unitary polar factor of g_0 and span g . (degrees 0..depth)."""
    g0 = g.coeff(0)
    if abs(np.linalg.det(g0)) < 1e-12:
        raise TransportError("degree-0 coefficient is singular; cannot fix the gauge")
    u, _ = sla.polar(g0, side="left")  # g0 = p u with p Hermitian positive
    rep = LaurentMatrix(g.coeffs @ u.conj().T, g.lo)
    n = g.n
    lo, hi = rep.lo, rep.hi + depth
    cols = []
    for k in range(depth + 1):
        for j in range(n):
            col = np.zeros((hi - lo + 1, n), dtype=complex)
            col[k : k + rep.span] = rep.coeffs[:, :, j]
            cols.append(col.reshape(-1))
    q = sla.orth(np.stack(cols, axis=1))
    return PeriodPoint(rep, q @ q.conj().T, (lo, hi), depth)


def period_coset(result: TransportResult, depth: int = 4, tol: float = 1e-8) -> PeriodPoint:
    if not (result.sigma_residual <= tol):
        raise TransportError(f"transport is not sigma-real (residual {result.sigma_residual:.3e})")
    return coset_point(period_element(result), depth)


# -- differential of the period map ------------------------------------------------


STENCIL = ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12))


def _point(site, d: int) -> np.ndarray:
    return np.atleast_1d(np.asarray(site, dtype=complex)).reshape(d)


@dataclass(frozen=True)
class DifferentialData:
    """Maurer-Cartan components xi_a = g^{-1} d_a g along the real directions (x_i, y_i)
    and the raw right-invariant forms zeta_a = (d_a g) g^{-1}."""

    xi: list[LaurentMatrix]
    zeta: list[LaurentMatrix]
    g: LaurentMatrix


def period_differential(
    bundle: DiscreteBundle,
    site,
    window: int = 12,
    spacing: float = 1e-2,
    base=None,
    max_step: float = 0.02,
    injected: Injection | None = None,
    tol: float = 1e-10,
) -> DifferentialData:
    """Fourth-order centered differences of g = P^{-1} around ``site``.

    Every stencil point is reached by a straight segment from ``base`` with the
    same number of RK4 steps so that integrator errors vary smoothly.
    """
    d = bundle.d
    x = _point(site, d)
    x0 = np.zeros(d, dtype=complex) if base is None else _point(base, d)
    reach = float(np.linalg.norm(x - x0)) + 2 * spacing
    steps = max(4, math.ceil(reach / max_step))

    # fix the window once (at the center) so every stencil point shares it
    probe = transport(bundle, PathSpec(np.array([x0, x]), max_step), window, tol, injected=injected, steps=steps)
    n = probe.window

    def g_at(point):
        path = PathSpec(np.array([x0, point]), max_step)
        res = transport(bundle, path, n, tol, auto_expand=False, injected=injected, steps=steps)
        return res.g

    p_center = probe.g
    g = group_inverse(p_center, n + 4, tol=1e-9)
    ginv = p_center.truncated(-n - 4, n + 4)
    xi, zeta = [], []
    for i in range(d):
        for direction in (1.0, 1j):
            e = np.zeros(d, dtype=complex)
            e[i] = direction
            dg = None
            for offset, weight in STENCIL:
                term = group_inverse(g_at(x + offset * spacing * e), n + 4, tol=1e-9) * weight
                dg = term if dg is None else dg + term
            dg = dg * (1.0 / spacing)
            xi.append((ginv @ dg).truncated(-n, n))
            zeta.append((dg @ ginv).truncated(-n, n))
    return DifferentialData(xi, zeta, g)


def _band_norm(x: LaurentMatrix, keep: Sequence[int]) -> float:
    return float(math.sqrt(sum(np.linalg.norm(x.coeff(k)) ** 2 for k in x.degrees() if k not in keep)))


def differential_check(
    bundle: DiscreteBundle,
    site,
    window: int = 12,
    spacing: float = 1e-2,
    tol: float = 1e-6,
    base=None,
    injected: Injection | None = None,
    max_step: float = 0.02,
) -> Report:
    """Horizontality, holomorphy and identification of the period-map differential."""
    data = period_differential(bundle, site, window, spacing, base, max_step, injected)
    d = bundle.d
    x = _point(site, d)
    _, th, _ = bundle.fields_at(x[:, None])
    rep = Report("differential_check")
    horiz, holo, ident, raw = 0.0, 0.0, 0.0, 0.0
    for i in range(d):
        xi_x, xi_y = data.xi[2 * i], data.xi[2 * i + 1]
        horiz = max(horiz, _band_norm(xi_x, (-1, 0, 1)), _band_norm(xi_y, (-1, 0, 1)))
        raw = max(raw, _band_norm(data.zeta[2 * i], (-1, 0, 1)), _band_norm(data.zeta[2 * i + 1], (-1, 0, 1)))
        xi_z = (xi_x - xi_y * 1j) * 0.5
        xi_zbar = (xi_x + xi_y * 1j) * 0.5
        holo = max(holo, float(np.linalg.norm(xi_zbar.coeff(-1))), float(np.linalg.norm(xi_z.coeff(1))))
        ident = max(ident, float(np.linalg.norm(xi_z.coeff(-1) - th[2 * i, 0])))
    rep.add("horizontality", horiz, tol)
    rep.add("holomorphy", holo, tol)
    rep.add("identification", ident, tol)
    rep.note("right_invariant_horizontality", raw)
    rep.note("spacing", spacing)
    rep.note("window", window)
    return rep


@dataclass(frozen=True)
class DecayReport:
    profile: np.ndarray
    rates: np.ndarray
    fitted_rate: float
    super_exponential: bool
    sub_exponential: bool
    reliable_degrees: int


def coefficient_decay(result: TransportResult, floor: float = 1e-14) -> DecayReport:
    """Fit log of the per-degree coefficient norm against |degree|."""
    prof = result.decay_profile
    scale = max(prof[0], 1e-300)
    usable = [k for k in range(1, len(prof)) if prof[k] > floor * scale]
    # stop at the first degree under the noise floor
    cut = 1
    while cut < len(prof) and prof[cut] > floor * scale:
        cut += 1
    ks = np.arange(1, cut)
    if len(ks) < 2:
        return DecayReport(prof, np.array([]), math.inf, False, False, len(ks))
    logs = np.log(prof[1:cut])
    rates = -np.diff(logs)
    slope = -np.polyfit(ks, logs, 1)[0]
    increasing = bool(np.all(np.diff(rates) > -1e-9)) if len(rates) > 1 else False
    sub = bool(np.any(rates <= 0))
    return DecayReport(prof, rates, float(slope), increasing and not sub, sub, len(ks))
