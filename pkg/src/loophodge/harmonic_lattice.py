"""Discrete harmonic bundles on lattice patches and tori of complex dimension 1 or 2.

Differential forms are stored by components in the complex coframe
``(dz_1, dzbar_1, dz_2, dzbar_2)``: a 1-form is an array ``(2d, *shape, r, r)``
and a 2-form an antisymmetric array ``(2d, 2d, *shape, r, r)`` with
``F = 1/2 sum F_{mu nu} dx^mu ^ dx^nu``.  Evaluating a 2-form on real tangent
vectors ``u, v`` (given by their complex components) uses
``F(u, v) = sum F_{mu nu} u^mu v^nu`` with ``u^{zbar_i} = conj(u^{z_i})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .report import Report

HARMONIC_RTOL = 1e-8


class LatticeError(ValueError):
    pass


# -- base lattice ---------------------------------------------------------------


def _per_dim(value, d: int, name: str) -> tuple:
    vals = tuple(value) if isinstance(value, (list, tuple)) else (value,)
    if len(vals) == 1:
        vals = vals * d
    if len(vals) != d:
        raise LatticeError(f"{name} needs 1 or {d} entries, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class BaseLattice:
    """Grid over a patch or torus.

    ``shape`` lists the number of sites along each real axis, ordered
    ``(x_1, y_1, x_2, y_2)``.  A patch has steps ``spacing`` and
    ``i * spacing`` per complex dimension and starts at ``origin``; a torus
    has periods 1 and ``tau`` per complex dimension.
    """

    d: int = 1
    topology: str = "patch"
    shape: tuple[int, ...] = (8, 8)
    spacing: tuple[float, ...] = (0.1,)
    tau: tuple[complex, ...] = (1j,)
    origin: tuple[complex, ...] = (0j,)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise LatticeError(f"complex dimension must be 1 or 2, got {self.d}")
        if self.topology not in ("patch", "torus"):
            raise LatticeError(f"topology must be 'patch' or 'torus', got {self.topology!r}")
        shape = tuple(int(s) for s in _per_dim(self.shape, 2 * self.d, "shape"))
        if any(s < 4 for s in shape):
            raise LatticeError(f"every grid size must be at least 4, got {shape}")
        spacing = tuple(float(s) for s in _per_dim(self.spacing, self.d, "spacing"))
        if any(s <= 0 for s in spacing):
            raise LatticeError("spacing must be positive")
        tau = tuple(complex(t) for t in _per_dim(self.tau, self.d, "tau"))
        if self.topology == "torus" and any(t.imag <= 0 for t in tau):
            raise LatticeError("torus modulus needs Im(tau) > 0")
        origin = tuple(complex(o) for o in _per_dim(self.origin, self.d, "origin"))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "origin", origin)

    @property
    def periodic(self) -> bool:
        return self.topology == "torus"

    @property
    def ncomp(self) -> int:
        return 2 * self.d

    def step(self, axis: int) -> complex:
        """Complex step of real axis ``axis`` inside complex dimension ``axis // 2``."""
        i, kind = divmod(axis, 2)
        if self.periodic:
            period = 1.0 if kind == 0 else self.tau[i]
            return complex(period) / self.shape[axis]
        return complex(self.spacing[i]) * (1.0 if kind == 0 else 1j)

    def steps(self) -> list[complex]:
        return [self.step(a) for a in range(self.ncomp)]

    def step_vector(self, axis: int) -> np.ndarray:
        """Coframe components (z_1, zbar_1, ...) of the real step along ``axis``."""
        u = np.zeros(self.ncomp, dtype=complex)
        e = self.step(axis)
        i = axis // 2
        u[2 * i], u[2 * i + 1] = e, np.conj(e)
        return u

    def coords(self) -> np.ndarray:
        """Complex coordinates z_i at every site: array (d, *shape)."""
        idx = np.indices(self.shape)
        out = np.zeros((self.d,) + self.shape, dtype=complex)
        for i in range(self.d):
            out[i] = self.origin[i] + idx[2 * i] * self.step(2 * i) + idx[2 * i + 1] * self.step(2 * i + 1)
        return out

    def cell_area(self, i: int = 0) -> float:
        ea, eb = self.step(2 * i), self.step(2 * i + 1)
        return float((np.conj(ea) * eb).imag)

    def area(self, i: int = 0) -> float:
        if self.periodic:
            return float(self.tau[i].imag)
        return self.cell_area(i) * (self.shape[2 * i] - 1) * (self.shape[2 * i + 1] - 1)

    def plane_weights(self, i: int = 0) -> np.ndarray:
        """Quadrature weights over the (x_i, y_i) plane (cell areas; trapezoid on patches)."""
        na, nb = self.shape[2 * i], self.shape[2 * i + 1]
        wa, wb = np.ones(na), np.ones(nb)
        if not self.periodic:
            wa[[0, -1]] = 0.5
            wb[[0, -1]] = 0.5
        return np.outer(wa, wb) * self.cell_area(i)

    def refined(self, factor: int = 2) -> "BaseLattice":
        """Patch with spacing / factor covering the same region (shared sites included)."""
        if self.periodic:
            return replace(self, shape=tuple(s * factor for s in self.shape))
        return replace(
            self,
            shape=tuple((s - 1) * factor + 1 for s in self.shape),
            spacing=tuple(h / factor for h in self.spacing),
        )


# -- fields -----------------------------------------------------------------------


Monomial = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass(frozen=True)
class PolyField:
    """Matrix polynomial sum_{alpha, beta} C z^alpha zbar^beta, evaluated exactly."""

    d: int
    r: int
    terms: tuple[tuple[tuple[int, ...], tuple[int, ...], np.ndarray], ...] = ()

    def __post_init__(self):
        clean = []
        for alpha, beta, c in self.terms:
            alpha, beta = tuple(int(a) for a in alpha), tuple(int(b) for b in beta)
            if len(alpha) != self.d or len(beta) != self.d or min(alpha + beta) < 0:
                raise LatticeError(f"bad multi-index {alpha}, {beta} for d={self.d}")
            c = np.array(c, dtype=complex)
            if c.shape != (self.r, self.r):
                raise LatticeError(f"coefficient shape {c.shape} is not ({self.r}, {self.r})")
            c.setflags(write=False)
            clean.append((alpha, beta, c))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def constant(cls, c, d: int = 1) -> "PolyField":
        c = np.atleast_2d(np.asarray(c, dtype=complex))
        return cls(d, c.shape[0], (((0,) * d, (0,) * d, c),))

    @classmethod
    def zero(cls, r: int, d: int = 1) -> "PolyField":
        return cls(d, r, ())

    @classmethod
    def monomial(cls, c, alpha: Sequence[int], beta: Sequence[int] | None = None) -> "PolyField":
        c = np.atleast_2d(np.asarray(c, dtype=complex))
        d = len(alpha)
        beta = tuple(beta) if beta is not None else (0,) * d
        return cls(d, c.shape[0], ((tuple(alpha), beta, c),))

    def __add__(self, other: "PolyField") -> "PolyField":
        if (self.d, self.r) != (other.d, other.r):
            raise LatticeError("field shape mismatch")
        return PolyField(self.d, self.r, self.terms + other.terms)

    def scaled(self, s: complex) -> "PolyField":
        return PolyField(self.d, self.r, tuple((a, b, c * s) for a, b, c in self.terms))

    def conjugated(self, g: np.ndarray, ginv: np.ndarray) -> "PolyField":
        return PolyField(self.d, self.r, tuple((a, b, ginv @ c @ g) for a, b, c in self.terms))

    @property
    def is_constant(self) -> bool:
        return all(sum(a) + sum(b) == 0 or not np.any(c) for a, b, c in self.terms)

    @property
    def is_holomorphic(self) -> bool:
        return all(sum(b) == 0 or not np.any(c) for a, b, c in self.terms)

    def magnitude(self) -> float:
        return float(sum(np.linalg.norm(c) for _, _, c in self.terms))

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """``z`` has shape (d, *pts); returns (*pts, r, r)."""
        z = np.asarray(z, dtype=complex)
        pts = z.shape[1:]
        out = np.zeros(pts + (self.r, self.r), dtype=complex)
        zc = np.conj(z)
        for alpha, beta, c in self.terms:
            mono = np.ones(pts, dtype=complex)
            for i in range(self.d):
                if alpha[i]:
                    mono = mono * z[i] ** alpha[i]
                if beta[i]:
                    mono = mono * zc[i] ** beta[i]
            out += mono[..., None, None] * c
        return out

    def derivative(self, comp: int) -> "PolyField":
        """Wirtinger derivative along coframe component ``comp`` (2i: d/dz_i, 2i+1: d/dzbar_i)."""
        i, bar = divmod(comp, 2)
        terms = []
        for alpha, beta, c in self.terms:
            power = beta[i] if bar else alpha[i]
            if power == 0:
                continue
            if bar:
                nb = list(beta)
                nb[i] -= 1
                terms.append((alpha, tuple(nb), c * power))
            else:
                na = list(alpha)
                na[i] -= 1
                terms.append((tuple(na), beta, c * power))
        return PolyField(self.d, self.r, tuple(terms))


@dataclass(frozen=True)
class GridField:
    """Field known only by its samples at the lattice sites: array (*shape, r, r)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> int:
        return self.values.shape[-1]

    @property
    def is_constant(self) -> bool:
        flat = self.values.reshape(-1, self.r, self.r)
        return bool(np.all(flat == flat[0]))

    def magnitude(self) -> float:
        return float(np.linalg.norm(self.values, axis=(-2, -1)).max())

    def scaled(self, s: complex) -> "GridField":
        return GridField(self.values * s)

    def conjugated(self, g: np.ndarray, ginv: np.ndarray) -> "GridField":
        return GridField(ginv @ self.values @ g)


Field = Union[PolyField, GridField]


def _axis_differences(values: np.ndarray, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / 2.0
    return np.gradient(values, axis=axis, edge_order=2)


def grid_derivatives(values: np.ndarray, lattice: BaseLattice) -> np.ndarray:
    """Wirtinger derivatives of sampled values by second-order centered differences.

    Along real axes the differences give e_a d/dz + conj(e_a) d/dzbar; a 2x2
    solve per complex dimension recovers the two Wirtinger derivatives.
    """
    out = np.zeros((lattice.ncomp,) + values.shape, dtype=complex)
    for i in range(lattice.d):
        da = _axis_differences(values, 2 * i, lattice.periodic)
        db = _axis_differences(values, 2 * i + 1, lattice.periodic)
        ea, eb = lattice.step(2 * i), lattice.step(2 * i + 1)
        det = ea * np.conj(eb) - np.conj(ea) * eb
        out[2 * i] = (np.conj(eb) * da - np.conj(ea) * db) / det
        out[2 * i + 1] = (ea * db - eb * da) / det
    return out


def sample_field(f: Field, lattice: BaseLattice) -> np.ndarray:
    if isinstance(f, PolyField):
        return f.evaluate(lattice.coords())
    if f.values.shape[:-2] != lattice.shape:
        raise LatticeError(f"grid field shape {f.values.shape[:-2]} does not match lattice {lattice.shape}")
    return np.asarray(f.values)


def field_with_derivatives(f: Field, lattice: BaseLattice, method: str = "exact") -> tuple[np.ndarray, np.ndarray]:
    """Values (*shape, r, r) and derivatives (2d, *shape, r, r)."""
    values = sample_field(f, lattice)
    if isinstance(f, PolyField) and method == "exact":
        z = lattice.coords()
        derivs = np.stack([f.derivative(c).evaluate(z) for c in range(lattice.ncomp)])
    else:
        derivs = grid_derivatives(values, lattice)
    return values, derivs


# -- form algebra ---------------------------------------------------------------------


def wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a ^ b)_{mu nu} = a_mu b_nu - a_nu b_mu for matrix-valued 1-forms."""
    return a[:, None] @ b[None, :] - a[None, :] @ b[:, None]


def exterior_d(da: np.ndarray) -> np.ndarray:
    """From da[mu, nu] = d_mu a_nu, the 2-form (d a)_{mu nu}."""
    return da - np.swapaxes(da, 0, 1)


def twoform_site_norm(f: np.ndarray) -> np.ndarray:
    """Per-site Frobenius norm over independent components mu < nu."""
    m = f.shape[0]
    iu = np.triu_indices(m, 1)
    comps = f[iu]  # (ncomp_pairs, *shape, r, r)
    return np.sqrt(np.sum(np.abs(comps) ** 2, axis=(0, -2, -1)))


def oneform_site_norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(0, -2, -1)))


def _conj_comp(c: int) -> int:
    return c ^ 1


def _dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


# -- bundles ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteBundle:
    """Metric h, connection coefficients A_{z_i}, A_{zbar_i} and Higgs
    coefficients Theta_i (theta = sum Theta_i dz_i) on a lattice."""

    lattice: BaseLattice
    rank: int
    theta: tuple[Field, ...]
    a_z: tuple[Field, ...] | None = None
    a_zbar: tuple[Field, ...] | None = None
    h: Field | None = None
    metric_connection: bool = True
    name: str = ""

    def __post_init__(self):
        d, r = self.lattice.d, self.rank
        zero = PolyField.zero(r, d)
        theta = tuple(self.theta)
        a_z = tuple(self.a_z) if self.a_z is not None else (zero,) * d
        a_zbar = tuple(self.a_zbar) if self.a_zbar is not None else (zero,) * d
        h = self.h if self.h is not None else PolyField.constant(np.eye(r), d)
        for name, group in (("theta", theta), ("a_z", a_z), ("a_zbar", a_zbar)):
            if len(group) != d:
                raise LatticeError(f"{name} needs {d} components, got {len(group)}")
        for f in theta + a_z + a_zbar + (h,):
            if f.r != r:
                raise LatticeError(f"field rank {f.r} does not match bundle rank {r}")
            if isinstance(f, PolyField) and f.d != d:
                raise LatticeError("polynomial field dimension does not match the lattice")
            if self.lattice.periodic and not f.is_constant:
                raise LatticeError("fields on a torus must be translation invariant (constant)")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "a_z", a_z)
        object.__setattr__(self, "a_zbar", a_zbar)
        object.__setattr__(self, "h", h)
        hv = sample_field(h, self.lattice)
        if not np.allclose(hv, _dagger(hv), atol=1e-12):
            raise LatticeError("metric h is not Hermitian")
        if np.linalg.eigvalsh(hv).min() <= 0:
            raise LatticeError("metric h is not positive definite at every site")

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def analytic(self) -> bool:
        return all(isinstance(f, PolyField) for f in self.fields())

    def fields(self) -> tuple[Field, ...]:
        return self.theta + self.a_z + self.a_zbar + (self.h,)

    def connection_fields(self) -> tuple[Field, ...]:
        """A as a 1-form in coframe order (z_1, zbar_1, ...)."""
        out = []
        for i in range(self.d):
            out += [self.a_z[i], self.a_zbar[i]]
        return tuple(out)

    def magnitude(self) -> float:
        return max(f.magnitude() for f in self.fields())

    def with_theta(self, theta: Sequence[Field]) -> "DiscreteBundle":
        return replace(self, theta=tuple(theta))

    def data(self, method: str = "exact") -> "BundleData":
        return BundleData.build(self, method)

    def fields_at(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """A, theta, theta^* as 1-forms at arbitrary points (analytic fields only).

        ``z`` has shape (d, *pts); outputs have shape (2d, *pts, r, r).
        """
        if not self.analytic:
            raise LatticeError("pointwise evaluation needs analytic (polynomial) field specs")
        z = np.asarray(z, dtype=complex)
        pts = z.shape[1:]
        a = np.stack([f.evaluate(z) for f in self.connection_fields()])
        th = np.zeros((2 * self.d,) + pts + (self.rank, self.rank), dtype=complex)
        ths = np.zeros_like(th)
        h = self.h.evaluate(z)
        hinv = np.linalg.inv(h)
        for i, f in enumerate(self.theta):
            t = f.evaluate(z)
            th[2 * i] = t
            ths[2 * i + 1] = hinv @ _dagger(t) @ h
        return a, th, ths


@dataclass(frozen=True)
class BundleData:
    """Sampled fields and their derivatives, assembled into 1-forms."""

    a: np.ndarray
    da: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    theta_star: np.ndarray
    dtheta_star: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    method: str

    @classmethod
    def build(cls, bundle: DiscreteBundle, method: str = "exact") -> "BundleData":
        lat, r = bundle.lattice, bundle.rank
        m = lat.ncomp
        shape = lat.shape
        a = np.zeros((m,) + shape + (r, r), dtype=complex)
        da = np.zeros((m, m) + shape + (r, r), dtype=complex)
        for nu, f in enumerate(bundle.connection_fields()):
            v, dv = field_with_derivatives(f, lat, method)
            a[nu] = v
            da[:, nu] = dv
        h, dh = field_with_derivatives(bundle.h, lat, method)
        hinv = np.linalg.inv(h)
        th = np.zeros_like(a)
        dth = np.zeros_like(da)
        ths = np.zeros_like(a)
        dths = np.zeros_like(da)
        for i, f in enumerate(bundle.theta):
            t, dt = field_with_derivatives(f, lat, method)
            th[2 * i] = t
            dth[:, 2 * i] = dt
            td = _dagger(t)
            ths[2 * i + 1] = hinv @ td @ h
            for mu in range(m):
                # d_mu (Theta^dagger) = (d_{conj mu} Theta)^dagger
                dtd = _dagger(dt[_conj_comp(mu)])
                dhinv = -hinv @ dh[mu] @ hinv
                dths[mu, 2 * i + 1] = dhinv @ td @ h + hinv @ dtd @ h + hinv @ td @ dh[mu]
        return cls(a, da, th, dth, ths, dths, h, dh, method)


def adjoint_higgs(bundle: DiscreteBundle) -> np.ndarray:
    """Theta^*_i = h^{-1} Theta_i^dagger h per site: array (d, *shape, r, r)."""
    h = sample_field(bundle.h, bundle.lattice)
    hinv = np.linalg.inv(h)
    return np.stack([hinv @ _dagger(sample_field(t, bundle.lattice)) @ h for t in bundle.theta])


def h_adjoint(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    return np.linalg.inv(h) @ _dagger(x) @ h


# -- curvature ------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureField:
    values: np.ndarray
    method: str
    sites: str  # "vertices" or "plaquettes"

    def component(self, mu: int, nu: int) -> np.ndarray:
        return self.values[mu, nu]


def connection_curvature(a: np.ndarray, da: np.ndarray) -> np.ndarray:
    """F = dA + A ^ A from 1-form values and derivatives."""
    return exterior_d(da) + wedge(a, a)


def curvature(bundle: DiscreteBundle, method: str = "auto") -> CurvatureField:
    """Curvature of the connection A.

    ``exact`` differentiates polynomial specs symbolically, ``fd`` samples
    every field and uses centered differences, ``plaquette`` takes the log of
    the holonomy around each lattice cell (d = 1, values at cell centers).
    ``auto`` picks ``exact`` for analytic bundles and ``fd`` otherwise.
    """
    if method == "auto":
        method = "exact" if bundle.analytic else "fd"
    if method in ("exact", "fd"):
        if method == "exact" and not bundle.analytic:
            raise LatticeError("exact curvature needs polynomial field specs")
        data = bundle.data(method)
        return CurvatureField(connection_curvature(data.a, data.da), method, "vertices")
    if method == "plaquette":
        return CurvatureField(_plaquette_curvature(bundle), method, "plaquettes")
    raise LatticeError(f"unknown curvature method {method!r}")


def _link_transport(a_mid: np.ndarray, u: np.ndarray) -> np.ndarray:
    import scipy.linalg as sla

    gen = np.tensordot(u, a_mid, axes=(0, 0))
    flat = gen.reshape((-1,) + gen.shape[-2:])
    return np.stack([sla.expm(-g) for g in flat]).reshape(gen.shape)


def _plaquette_curvature(bundle: DiscreteBundle) -> np.ndarray:
    import scipy.linalg as sla

    lat = bundle.lattice
    if lat.d != 1:
        raise LatticeError("plaquette curvature is implemented for d = 1")
    comps = bundle.connection_fields()
    z = lat.coords()[0]
    ea, eb = lat.step(0), lat.step(1)
    ua, ub = lat.step_vector(0), lat.step_vector(1)
    if lat.periodic:
        z_ext = z
        corner = z
    else:
        corner = z[:-1, :-1]

    def sample(points):
        if bundle.analytic:
            return np.stack([f.evaluate(points[None]) for f in comps])
        raise LatticeError("plaquette curvature needs analytic fields")

    # link midpoints around the cell corner -> corner+ea -> corner+ea+eb -> corner+eb -> corner
    p0 = corner
    u1 = _link_transport(sample(p0 + ea / 2), ua)
    u2 = _link_transport(sample(p0 + ea + eb / 2), ub)
    u3 = _link_transport(sample(p0 + ea / 2 + eb), -ua)
    u4 = _link_transport(sample(p0 + eb / 2), -ub)
    hol = u4 @ u3 @ u2 @ u1
    flat = hol.reshape((-1,) + hol.shape[-2:])
    logs = np.stack([sla.logm(m) for m in flat]).reshape(hol.shape)
    # holonomy ~ exp(-F(ea, eb)); F(ea, eb) = F_{z zbar} (ea conj(eb) - conj(ea) eb)
    pair = ea * np.conj(eb) - np.conj(ea) * eb
    fzz = -logs / pair
    out = np.zeros((2, 2) + fzz.shape, dtype=complex)
    out[0, 1] = fzz
    out[1, 0] = -fzz
    return out


# -- Hitchin residuals ------------------------------------------------------------------


def covariant_d(phi: np.ndarray, dphi: np.ndarray, a: np.ndarray) -> np.ndarray:
    """nabla phi = d phi + A ^ phi + phi ^ A for an End-valued 1-form."""
    return exterior_d(dphi) + wedge(a, phi) + wedge(phi, a)


def _r1_components(F: np.ndarray, data: BundleData, d: int) -> np.ndarray:
    """F + theta ^ theta^* + theta^* ^ theta built from index formulas:
    the (z_i, zbar_j) component gains [Theta_i, Theta^*_j]."""
    r1 = F.copy()
    for i in range(d):
        for j in range(d):
            t = data.theta[2 * i]
            ts = data.theta_star[2 * j + 1]
            comm = t @ ts - ts @ t
            r1[2 * i, 2 * j + 1] += comm
            r1[2 * j + 1, 2 * i] -= comm
    return r1


def _r3_components(data: BundleData, d: int) -> np.ndarray:
    m = 2 * d
    out = np.zeros((m, m) + data.theta.shape[1:], dtype=complex)
    for i in range(d):
        for j in range(d):
            if i != j:
                ti, tj = data.theta[2 * i], data.theta[2 * j]
                out[2 * i, 2 * j] = ti @ tj - tj @ ti
    return out


@dataclass(frozen=True)
class HitchinFields:
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    curvature: np.ndarray
    method: str


def hitchin_fields(bundle: DiscreteBundle, method: str = "auto") -> HitchinFields:
    if method == "auto":
        method = "exact" if bundle.analytic else "fd"
    data = bundle.data(method)
    F = connection_curvature(data.a, data.da)
    r1 = _r1_components(F, data, bundle.d)
    r2 = covariant_d(data.theta, data.dtheta, data.a)
    r3 = _r3_components(data, bundle.d)
    return HitchinFields(r1, r2, r3, F, method)


def harmonic_tolerance(bundle: DiscreteBundle, rtol: float = HARMONIC_RTOL) -> float:
    return rtol * (1.0 + bundle.magnitude())


def hitchin_residuals(bundle: DiscreteBundle, method: str = "auto", tol: float | None = None) -> Report:
    tol = harmonic_tolerance(bundle) if tol is None else tol
    fields = hitchin_fields(bundle, method)
    rep = Report("hitchin_residuals")
    rep.add("R1", float(twoform_site_norm(fields.r1).max()), tol)
    rep.add("R2", float(twoform_site_norm(fields.r2).max()), tol)
    rep.add("R3", float(twoform_site_norm(fields.r3).max()), tol)
    rep.note("R3_zero_by_type", bundle.d == 1)
    rep.note("curvature_method", fields.method)
    if bundle.metric_connection:
        rep.add("metric_compatibility", metric_compatibility_residual(bundle, fields.method), tol)
    return rep


def metric_compatibility_residual(bundle: DiscreteBundle, method: str = "exact") -> float:
    """max |(dh)_mu - h A_mu - A_{conj mu}^dagger h| over sites and components."""
    data = bundle.data(method)
    worst = 0.0
    for mu in range(bundle.lattice.ncomp):
        res = data.dh[mu] - data.h @ data.a[mu] - _dagger(data.a[_conj_comp(mu)]) @ data.h
        worst = max(worst, float(np.linalg.norm(res, axis=(-2, -1)).max()))
    return worst


# -- circle of connections ------------------------------------------------------------------


@dataclass(frozen=True)
class FormalConnection:
    """Laurent 1-form sum_k lambda^k B_k with its derivatives.

    ``coeffs`` has shape (K, 2d, *shape, r, r) for degrees lo .. lo + K - 1 and
    ``derivs`` shape (K, 2d, 2d, *shape, r, r) with derivs[k, mu, nu] = d_mu B_{k, nu}.
    """

    coeffs: np.ndarray
    derivs: np.ndarray
    lo: int = -1

    @property
    def degrees(self) -> range:
        return range(self.lo, self.lo + self.coeffs.shape[0])

    def evaluate(self, lam: complex) -> tuple[np.ndarray, np.ndarray]:
        powers = lam ** np.arange(self.lo, self.lo + self.coeffs.shape[0], dtype=float)
        a = np.tensordot(powers, self.coeffs, axes=(0, 0))
        da = np.tensordot(powers, self.derivs, axes=(0, 0))
        return a, da

    def curvature_coefficients(self) -> dict[int, np.ndarray]:
        """C_k with F(lambda) = sum_k lambda^k C_k."""
        out: dict[int, np.ndarray] = {}
        ks = list(self.degrees)
        for i, k in enumerate(ks):
            out[k] = out.get(k, 0) + exterior_d(self.derivs[i])
        for i, j_deg in enumerate(ks):
            for j, l_deg in enumerate(ks):
                out[j_deg + l_deg] = out.get(j_deg + l_deg, 0) + (
                    self.coeffs[i][:, None] @ self.coeffs[j][None, :]
                    - self.coeffs[j][None, :] @ self.coeffs[i][:, None]
                )
        return dict(sorted(out.items()))


def circle_connection(bundle: DiscreteBundle, lam: complex | None = None, method: str = "auto"):
    """A + lambda^{-1} theta + lambda theta^*.

    With ``lam`` given (|lam| = 1) returns the connection 1-form (2d, *shape, r, r);
    with ``lam=None`` returns the formal Laurent version.
    """
    if method == "auto":
        method = "exact" if bundle.analytic else "fd"
    data = bundle.data(method)
    formal = FormalConnection(
        np.stack([data.theta, data.a, data.theta_star]),
        np.stack([data.dtheta, data.da, data.dtheta_star]),
        -1,
    )
    if lam is None:
        return formal
    lam = complex(lam)
    if abs(abs(lam) - 1.0) > 1e-12:
        raise LatticeError(f"numeric mode needs |lambda| = 1, got {abs(lam)}")
    return formal.evaluate(lam)[0]


def circle_samples(count: int) -> np.ndarray:
    return np.exp(2j * np.pi * np.arange(count) / count)


def flatness_sweep(
    bundle: DiscreteBundle,
    lambdas: int | Sequence[complex] = 16,
    method: str = "auto",
    tol: float | None = None,
    match_tol: float = 1e-12,
) -> Report:
    """Curvature of D_lambda at sampled lambda against the Hitchin residuals.

    The formal curvature has Laurent degrees -2..2 whose coefficients are
    theta^theta, nabla theta, F + [theta, theta^*], nabla theta^*, theta^*^theta^*.
    """
    if method == "auto":
        method = "exact" if bundle.analytic else "fd"
    tol = harmonic_tolerance(bundle) if tol is None else tol
    lams = circle_samples(lambdas) if isinstance(lambdas, int) else np.asarray(lambdas, dtype=complex)
    formal = circle_connection(bundle, None, method)
    coeffs = formal.curvature_coefficients()
    hf = hitchin_fields(bundle, method)
    data = bundle.data(method)

    rep = Report("flatness_sweep")
    per_lambda = []
    consistency = 0.0
    for lam in lams:
        a, da = formal.evaluate(lam)
        F = connection_curvature(a, da)
        per_lambda.append(float(twoform_site_norm(F).max()))
        summed = sum(lam**k * c for k, c in coeffs.items())
        consistency = max(consistency, float(np.abs(F - summed).max()))
    flat_max = max(per_lambda)
    rep.add("flat_max", flat_max, tol)
    rep.note("per_lambda", per_lambda)
    rep.note("lambda_count", len(lams))
    rep.add("expansion_consistency", consistency, match_tol * (1 + bundle.magnitude()) ** 2)

    expected = {
        -2: hf.r3,
        -1: hf.r2,
        0: hf.r1,
        1: covariant_d(data.theta_star, data.dtheta_star, data.a),
        2: wedge(data.theta_star, data.theta_star),
    }
    labels = {-2: "R3", -1: "R2", 0: "R1", 1: "R2_adjoint", 2: "R3_adjoint"}
    coeff_norms = {}
    for k, exp in expected.items():
        got = coeffs.get(k, np.zeros_like(exp))
        rep.add(f"coefficient_match_{labels[k]}", float(np.abs(got - exp).max()), match_tol * (1 + bundle.magnitude()) ** 2)
        coeff_norms[k] = float(twoform_site_norm(got).max())
    rep.note("coefficient_norms", {labels[k]: v for k, v in coeff_norms.items()})
    max_coeff = max(coeff_norms.values())
    hitchin_max = max(coeff_norms[-2], coeff_norms[-1], coeff_norms[0])
    rep.note("hitchin_max", hitchin_max)
    # per site: ||C_k|| <= max_lambda ||F(lambda)|| <= (#nonzero C_k) max_k ||C_k||; theta ^ theta vanishes
    # identically for d = 1, leaving d + 2 = 3 terms, while d = 2 keeps all five.
    # The lower bound holds on >= 5 equispaced samples since F is a trigonometric polynomial of degree 2.
    terms = 3 if bundle.d == 1 else 5
    rep.note("bound_factor", terms)
    rep.add("bound_lower_defect", max(0.0, max_coeff - flat_max * (1 + 1e-9) - 1e-14) if len(lams) >= 5 else 0.0, 0.0)
    rep.add("bound_upper_defect", max(0.0, flat_max - terms * max_coeff * (1 + 1e-9) - 1e-14), 0.0)
    flat = flat_max <= tol
    harmonic = hitchin_max <= tol
    rep.note("flat", flat)
    rep.note("harmonic", harmonic)
    rep.add("flat_iff_harmonic_disagreement", float(flat != harmonic), 0.0)
    return rep


# -- Hitchin energy ------------------------------------------------------------------------


def real_frame_matrix(lattice: BaseLattice) -> np.ndarray:
    """Rows: coframe components of the real unit vectors d/dx_i, d/dy_i."""
    m = lattice.ncomp
    out = np.zeros((m, m), dtype=complex)
    for i in range(lattice.d):
        out[2 * i, 2 * i], out[2 * i, 2 * i + 1] = 1.0, 1.0
        out[2 * i + 1, 2 * i], out[2 * i + 1, 2 * i + 1] = 1j, -1j
    return out


def evaluate_twoform(f: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """F(u, v) = sum F_{mu nu} u^mu v^nu for scalar-valued 2-form arrays (m, m, *shape)."""
    return np.einsum("m,n,mn...->...", u, v, f)


@dataclass(frozen=True)
class EnergyResult:
    """Hitchin energy beta_X = (1/4 i pi) Tr(theta ^ theta^*).

    ``density`` holds real components beta(d/dx_a, d/dx_b) in the real frame
    (x_1, y_1, x_2, y_2), shape (2d, 2d, *shape).  For d = 1 ``density_xy``
    is the dx^dy coefficient.
    """

    form: np.ndarray
    density: np.ndarray
    integrals: dict[str, float]
    closedness: float | None
    imaginary_part: float

    @property
    def density_xy(self) -> np.ndarray:
        return self.density[0, 1]


def energy_form(bundle: DiscreteBundle, method: str = "auto") -> np.ndarray:
    if method == "auto":
        method = "exact" if bundle.analytic else "fd"
    data = bundle.data(method)
    w = wedge(data.theta, data.theta_star)
    return np.trace(w, axis1=-2, axis2=-1) / (4j * math.pi)


def hitchin_energy(bundle: DiscreteBundle, method: str = "auto") -> EnergyResult:
    lat = bundle.lattice
    beta = energy_form(bundle, method)
    frame = real_frame_matrix(lat)
    real = np.einsum("am,bn,mn...->ab...", frame, frame, beta)
    imag = float(np.abs(real.imag).max())

    integrals: dict[str, float] = {}
    steps = [lat.step_vector(a) for a in range(lat.ncomp)]
    for a in range(lat.ncomp):
        for b in range(a + 1, lat.ncomp):
            vals = evaluate_twoform(beta, steps[a], steps[b]).real
            other = [ax for ax in range(lat.ncomp) if ax not in (a, b)]
            index = [slice(None)] * lat.ncomp
            for ax in other:
                index[ax] = 0 if lat.periodic else lat.shape[ax] // 2
            plane = vals[tuple(index)]
            if lat.periodic:
                total = float(plane.sum())
            else:
                wa, wb = np.ones(lat.shape[a]), np.ones(lat.shape[b])
                wa[[0, -1]] = 0.5
                wb[[0, -1]] = 0.5
                total = float(np.einsum("i,j,ij->", wa, wb, plane))
            integrals[f"{a}{b}"] = total

    closed = None
    if lat.d == 2:
        closed = _discrete_closedness(beta, lat)
    return EnergyResult(beta, real.real, integrals, closed, imag)


def _discrete_closedness(beta: np.ndarray, lat: BaseLattice) -> float:
    """Max |d beta| on lattice 3-cells, from centered differences of beta(e_a, e_b)."""
    m = lat.ncomp
    steps = [lat.step_vector(a) for a in range(m)]
    b = np.zeros((m, m) + lat.shape)
    for a in range(m):
        for c in range(m):
            b[a, c] = evaluate_twoform(beta, steps[a], steps[c]).real
    worst = 0.0
    for a in range(m):
        for c in range(a + 1, m):
            for e in range(c + 1, m):
                db = (
                    _axis_differences(b[c, e], a, lat.periodic)
                    - _axis_differences(b[a, e], c, lat.periodic)
                    + _axis_differences(b[a, c], e, lat.periodic)
                )
                vol = abs(lat.step(a)) * abs(lat.step(c)) * abs(lat.step(e))
                worst = max(worst, float(np.abs(db).max()) / vol)
    return worst


# -- circle action, gauge, kernels -------------------------------------------------------------


def circle_action(bundle: DiscreteBundle, mu: complex) -> DiscreteBundle:
    """Keep h and nabla, replace theta by mu^{-1} theta."""
    mu = complex(mu)
    if abs(abs(mu) - 1.0) > 1e-12:
        raise LatticeError(f"circle action needs |mu| = 1, got {abs(mu)}")
    return bundle.with_theta([t.scaled(1.0 / mu) for t in bundle.theta])


def gauge_transform(bundle: DiscreteBundle, g: np.ndarray) -> DiscreteBundle:
    """Constant frame change: A -> g^{-1} A g, Theta -> g^{-1} Theta g, h -> g^dagger h g."""
    g = np.asarray(g, dtype=complex)
    ginv = np.linalg.inv(g)
    h = bundle.h
    if isinstance(h, PolyField):
        new_h = PolyField(h.d, h.r, tuple((a, b, g.conj().T @ c @ g) for a, b, c in h.terms))
    else:
        new_h = GridField(g.conj().T @ h.values @ g)
    return replace(
        bundle,
        theta=tuple(t.conjugated(g, ginv) for t in bundle.theta),
        a_z=tuple(t.conjugated(g, ginv) for t in bundle.a_z),
        a_zbar=tuple(t.conjugated(g, ginv) for t in bundle.a_zbar),
        h=new_h,
    )


@dataclass(frozen=True)
class KernelMap:
    dims: np.ndarray
    histogram: dict[int, int]
    singular_sites: list[tuple[int, ...]]
    generic_dim: int


def higgs_kernel_map(bundle: DiscreteBundle, rtol: float = 1e-10) -> KernelMap:
    """dim ker(v -> sum v_i Theta_i) on tangent directions, per site."""
    lat = bundle.lattice
    th = np.stack([sample_field(t, lat) for t in bundle.theta])  # (d, *shape, r, r)
    r = bundle.rank
    mats = np.moveaxis(th.reshape((lat.d,) + lat.shape + (r * r,)), 0, -1)  # (*shape, r*r, d)
    sv = np.linalg.svd(mats, compute_uv=False)
    scale = max(1.0, float(np.abs(th).max()))
    rank = np.sum(sv > rtol * scale, axis=-1)
    dims = lat.d - rank
    values, counts = np.unique(dims, return_counts=True)
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    generic = int(values[np.argmax(counts)])
    singular = [tuple(int(i) for i in idx) for idx in zip(*np.nonzero(dims > generic))]
    return KernelMap(dims, hist, singular, generic)


# -- non-polarized pairs --------------------------------------------------------------------------


@dataclass(frozen=True)
class NonPolarizedPair:
    """D' = d' + sum P_i dz_i + Q_i dzbar_i and D'' = d'' + sum R_i dz_i + S_i dzbar_i,
    where d' and d'' are the plain (1,0) and (0,1) differentials."""

    lattice: BaseLattice
    rank: int
    p: tuple[Field, ...]
    q: tuple[Field, ...]
    r: tuple[Field, ...]
    s: tuple[Field, ...]

    def __post_init__(self):
        for name in ("p", "q", "r", "s"):
            group = tuple(getattr(self, name))
            if len(group) != self.lattice.d:
                raise LatticeError(f"{name} needs {self.lattice.d} components")
            object.__setattr__(self, name, group)

    @classmethod
    def from_bundle(cls, bundle: DiscreteBundle) -> "NonPolarizedPair":
        """D' = partial_nabla + theta^*, D'' = dbar_nabla + theta (analytic bundles with constant h)."""
        if not bundle.analytic or not bundle.h.is_constant:
            raise LatticeError("polarized pair construction needs analytic fields and constant h")
        h = bundle.h.evaluate(np.zeros((bundle.d, 1)))[0]
        hinv = np.linalg.inv(h)
        q = []
        for t in bundle.theta:
            # Theta^* = h^{-1} Theta^dagger h with z <-> zbar exchanged in every monomial
            q.append(PolyField(t.d, t.r, tuple((b, a, hinv @ c.conj().T @ h) for a, b, c in t.terms)))
        return cls(bundle.lattice, bundle.rank, bundle.a_z, tuple(q), bundle.theta, bundle.a_zbar)

    def _oneforms(self, method: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        lat = self.lattice
        m = lat.ncomp
        shape = lat.shape
        r = self.rank
        dprime = np.zeros((m,) + shape + (r, r), dtype=complex)
        ddprime = np.zeros_like(dprime)
        ddp = np.zeros((m, m) + shape + (r, r), dtype=complex)
        dddp = np.zeros_like(ddp)
        for i in range(lat.d):
            for target, deriv, comp, f in (
                (dprime, ddp, 2 * i, self.p[i]),
                (dprime, ddp, 2 * i + 1, self.q[i]),
                (ddprime, dddp, 2 * i, self.r[i]),
                (ddprime, dddp, 2 * i + 1, self.s[i]),
            ):
                v, dv = field_with_derivatives(f, lat, method)
                target[comp] = v
                deriv[:, comp] = dv
        return dprime, ddp, ddprime, dddp


def _partial_d(dphi: np.ndarray, holomorphic: bool) -> np.ndarray:
    """(1,0) or (0,1) exterior derivative from d_mu phi_nu."""
    m = dphi.shape[0]
    mask = np.array([(mu % 2 == 0) == holomorphic for mu in range(m)], dtype=float)
    shaped = mask.reshape((m, 1) + (1,) * (dphi.ndim - 2))
    part = dphi * shaped
    return part - np.swapaxes(part, 0, 1)


def _type_mask(m: int, kind: str) -> np.ndarray:
    """Mask selecting (2,0), (1,1) or (0,2) components of a 2-form."""
    hol = np.array([mu % 2 == 0 for mu in range(m)])
    if kind == "20":
        return np.outer(hol, hol)
    if kind == "02":
        return np.outer(~hol, ~hol)
    return np.outer(hol, ~hol) | np.outer(~hol, hol)


@dataclass(frozen=True)
class NonPolarizedResult:
    report: Report
    formal: FormalConnection
    squares: dict[str, np.ndarray]


def nonpolarized_check(pair: NonPolarizedPair, method: str = "auto", tol: float = 1e-10) -> NonPolarizedResult:
    """Integrability residuals of (D', D'') and the formal family
    D_lambda = d + P + S + lambda^{-1} R + lambda Q."""
    analytic = all(isinstance(f, PolyField) for f in pair.p + pair.q + pair.r + pair.s)
    if method == "auto":
        method = "exact" if analytic else "fd"
    c1, dc1, c2, dc2 = pair._oneforms(method)
    m = pair.lattice.ncomp
    sq1 = _partial_d(dc1, True) + wedge(c1, c1)
    sq2 = _partial_d(dc2, False) + wedge(c2, c2)
    anti = _partial_d(dc2, True) + _partial_d(dc1, False) + wedge(c1, c2) + wedge(c2, c1)
    squares = {"Dp_squared": sq1, "Dpp_squared": sq2, "anticommutator": anti}

    hol = np.array([mu % 2 == 0 for mu in range(m)])
    hol_mask = hol.reshape((m,) + (1,) * (c1.ndim - 1))
    # split each operator's 1-form into (1,0) and (0,1) parts
    p1, q1 = c1 * hol_mask, c1 * ~hol_mask
    r2, s2 = c2 * hol_mask, c2 * ~hol_mask
    dmask = hol.reshape((1, m) + (1,) * (c1.ndim - 1))
    dp1, dq1 = dc1 * dmask, dc1 * ~dmask
    dr2, ds2 = dc2 * dmask, dc2 * ~dmask
    formal = FormalConnection(np.stack([r2, p1 + s2, q1]), np.stack([dr2, dp1 + ds2, dq1]), -1)
    coeffs = formal.curvature_coefficients()

    rep = Report("nonpolarized_check")
    for name, arr in squares.items():
        rep.add(name, float(twoform_site_norm(arr).max()), tol)

    # each lambda-degree and type component of F(D_lambda) is one type component of the squares
    mapping = {
        (-2, "20"): ("Dpp_squared", "20"),
        (-1, "20"): ("anticommutator", "20"),
        (-1, "11"): ("Dpp_squared", "11"),
        (0, "20"): ("Dp_squared", "20"),
        (0, "11"): ("anticommutator", "11"),
        (0, "02"): ("Dpp_squared", "02"),
        (1, "11"): ("Dp_squared", "11"),
        (1, "02"): ("anticommutator", "02"),
        (2, "02"): ("Dp_squared", "02"),
    }
    worst = 0.0
    seen = set()
    for (k, kind), (sq_name, sq_kind) in mapping.items():
        mask = _type_mask(m, kind).reshape((m, m) + (1,) * (c1.ndim - 1))
        got = coeffs.get(k, 0) * mask
        want = squares[sq_name] * _type_mask(m, sq_kind).reshape(mask.shape)
        worst = max(worst, float(np.abs(got - want).max()))
        seen.add((k, kind))
    leftover = 0.0
    for k, c in coeffs.items():
        for kind in ("20", "11", "02"):
            if (k, kind) not in seen:
                mask = _type_mask(m, kind).reshape((m, m) + (1,) * (c1.ndim - 1))
                leftover = max(leftover, float(np.abs(c * mask).max()))
    rep.add("lambda_coefficient_match", worst, tol)
    rep.add("unmatched_components", leftover, tol)
    return NonPolarizedResult(rep, formal, squares)
