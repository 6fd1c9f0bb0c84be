"""Finite-window model of the Krein space L^2(S^1, C^n).

Vectors are finitely supported sequences ``f_k`` in C^n.  On a degree window
[lo, hi] they are flattened degree-major: coordinate ``(k - lo) * n + i``.
The Krein form is ``B(f, g) = sum_k (-1)^k h(f_k, g_k)`` for a fiber Hermitian
form ``h`` (the identity unless a graded Hodge input says otherwise), linear
in the first slot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .loop_algebra import LaurentMatrix, LoopAlgebraError, membership_residual
from .report import Report

PIVOT_TOL = 1e-10


class KreinError(ValueError):
    pass


class DegenerateSubspaceError(KreinError):
    pass


class HodgeInputError(KreinError):
    pass


# -- vectors ------------------------------------------------------------------


@dataclass(frozen=True)
class KreinVector:
    coeffs: np.ndarray
    lo: int = 0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c[None]
        if c.ndim != 2 or c.shape[0] == 0:
            raise KreinError(f"coefficients must be (m, n), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "lo", int(self.lo))

    @classmethod
    def unit(cls, n: int, i: int, degree: int) -> "KreinVector":
        c = np.zeros((1, n))
        c[0, i] = 1.0
        return cls(c, degree)

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @property
    def hi(self) -> int:
        return self.lo + self.coeffs.shape[0] - 1

    def coeff(self, k: int) -> np.ndarray:
        if self.lo <= k <= self.hi:
            return self.coeffs[k - self.lo]
        return np.zeros(self.n, dtype=complex)

    def padded(self, lo: int, hi: int) -> np.ndarray:
        out = np.zeros((hi - lo + 1, self.n), dtype=complex)
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a <= b:
            out[a - lo : b - lo + 1] = self.coeffs[a - self.lo : b - self.lo + 1]
        return out

    def flat(self, lo: int, hi: int) -> np.ndarray:
        return self.padded(lo, hi).reshape(-1)

    @classmethod
    def from_flat(cls, x: np.ndarray, n: int, lo: int) -> "KreinVector":
        return cls(np.asarray(x).reshape(-1, n), lo)

    def __add__(self, other: "KreinVector") -> "KreinVector":
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return KreinVector(self.padded(lo, hi) + other.padded(lo, hi), lo)

    def __sub__(self, other: "KreinVector") -> "KreinVector":
        return self + other * -1.0

    def __mul__(self, scalar) -> "KreinVector":
        return KreinVector(self.coeffs * scalar, self.lo)

    __rmul__ = __mul__

    def distance(self, other: "KreinVector") -> float:
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return float(np.linalg.norm(self.padded(lo, hi) - other.padded(lo, hi)))

    def to_dict(self) -> dict:
        c = self.coeffs
        return {"n": self.n, "lo": self.lo, "coeffs": np.stack([c.real, c.imag], -1).tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "KreinVector":
        arr = np.asarray(data["coeffs"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1], int(data["lo"]))


def krein_form(f: KreinVector, g: KreinVector, form: np.ndarray | None = None) -> complex:
    if f.n != g.n:
        raise KreinError(f"size mismatch: {f.n} vs {g.n}")
    h = np.eye(f.n) if form is None else np.asarray(form)
    lo, hi = min(f.lo, g.lo), max(f.hi, g.hi)
    fp, gp = f.padded(lo, hi), g.padded(lo, hi)
    signs = (-1.0) ** np.arange(lo, hi + 1)
    # H[i, j] = h(e_i, e_j), so h(u, v) = sum_ij H[i, j] u_i conj(v_j)
    return complex(np.sum(signs * np.einsum("ki,ij,kj->k", gp.conj(), h.T, fp)))


def right_shift(f: KreinVector, k: int = 1) -> KreinVector:
    return KreinVector(f.coeffs, f.lo + k)


def circle_rotate(f: KreinVector, mu: complex) -> KreinVector:
    """phi_mu(f)(lambda) = f(mu lambda): degree-k coefficient times mu^k."""
    mu = complex(mu)
    if abs(abs(mu) - 1.0) > 1e-12:
        raise KreinError(f"rotation parameter must have modulus 1, got |mu| = {abs(mu)}")
    powers = mu ** np.arange(f.lo, f.hi + 1)
    return KreinVector(f.coeffs * powers[:, None], f.lo)


def intertwine_check(mu: complex, vectors: list[KreinVector]) -> float:
    """max over vectors of |mu T phi(f) - phi(T f)|."""
    worst = 0.0
    for f in vectors:
        lhs = right_shift(circle_rotate(f, mu)) * mu
        rhs = circle_rotate(right_shift(f), mu)
        worst = max(worst, lhs.distance(rhs))
    return worst


def apply_loop(g: LaurentMatrix, f: KreinVector) -> KreinVector:
    """Pointwise multiplication (g f)(lambda) = g(lambda) f(lambda), exact."""
    if g.n != f.n:
        raise KreinError(f"size mismatch: loop {g.n} vs vector {f.n}")
    m = g.span + f.coeffs.shape[0] - 1
    out = np.zeros((m, f.n), dtype=complex)
    for i, a in enumerate(g.coeffs):
        out[i : i + f.coeffs.shape[0]] += f.coeffs @ a.T
    return KreinVector(out, g.lo + f.lo)


# -- windowed coordinate helpers -------------------------------------------


def gram_matrix(n: int, lo: int, hi: int, form: np.ndarray | None = None) -> np.ndarray:
    """Matrix G with B(x, y) = y^* G x on flattened window coordinates."""
    h = np.eye(n) if form is None else np.asarray(form, dtype=complex)
    signs = (-1.0) ** np.arange(lo, hi + 1)
    return np.kron(np.diag(signs), h.T)


def _reembed(basis: np.ndarray, n: int, lo: int, hi: int, new_lo: int, new_hi: int) -> np.ndarray:
    d = basis.shape[1]
    blocks = basis.reshape(hi - lo + 1, n, d)
    out = np.zeros((new_hi - new_lo + 1, n, d), dtype=complex)
    a, b = max(lo, new_lo), min(hi, new_hi)
    if a <= b:
        out[a - new_lo : b - new_lo + 1] = blocks[a - lo : b - lo + 1]
    degrees = np.arange(lo, hi + 1)
    dropped = blocks[(degrees < new_lo) | (degrees > new_hi)]
    if dropped.size and np.abs(dropped).max() > 0:
        raise KreinError("basis has support outside the target window")
    return out.reshape(-1, d)


def _orth(a: np.ndarray) -> np.ndarray:
    if a.shape[1] == 0:
        return a
    return sla.orth(a, rcond=PIVOT_TOL)


def _null(a: np.ndarray, width: int) -> np.ndarray:
    if a.shape[0] == 0:
        return np.eye(width, dtype=complex)
    return sla.null_space(a, rcond=PIVOT_TOL)


# -- subspaces ------------------------------------------------------------------


@dataclass(frozen=True)
class KreinSubspace:
    """Span of the columns of ``basis`` inside the degree window [lo, hi].

    ``shift_domain`` optionally fixes which part of W is pushed forward when
    forming TW; by default it is the part of W with vanishing top coefficient,
    the largest subspace whose shift stays inside the window.
    """

    n: int
    lo: int
    hi: int
    basis: np.ndarray
    form: np.ndarray = field(default=None)
    shift_domain: np.ndarray | None = None

    def __post_init__(self):
        b = np.array(self.basis, dtype=complex)
        if b.ndim != 2 or b.shape[0] != self.n * (self.hi - self.lo + 1):
            raise KreinError(f"basis shape {b.shape} does not fit n={self.n}, window=({self.lo}, {self.hi})")
        if b.shape[1] and np.linalg.matrix_rank(b, tol=PIVOT_TOL * max(1.0, np.abs(b).max())) < b.shape[1]:
            raise KreinError("basis vectors are linearly dependent")
        form = np.eye(self.n, dtype=complex) if self.form is None else np.array(self.form, dtype=complex)
        if form.shape != (self.n, self.n) or not np.allclose(form, form.conj().T, atol=1e-12):
            raise KreinError("fiber form must be a Hermitian n x n matrix")
        b.setflags(write=False)
        form.setflags(write=False)
        object.__setattr__(self, "basis", b)
        object.__setattr__(self, "form", form)
        if self.shift_domain is not None:
            s = np.array(self.shift_domain, dtype=complex)
            s.setflags(write=False)
            object.__setattr__(self, "shift_domain", s)

    # construction
    @classmethod
    def from_vectors(
        cls,
        vectors: list[KreinVector],
        window: tuple[int, int] | None = None,
        form: np.ndarray | None = None,
        shift_domain: list[KreinVector] | None = None,
    ) -> "KreinSubspace":
        if not vectors:
            raise KreinError("need at least one vector (use KreinSubspace.zero for the zero subspace)")
        n = vectors[0].n
        if window is None:
            window = (min(v.lo for v in vectors), max(v.hi for v in vectors))
        lo, hi = window
        basis = np.stack([v.flat(lo, hi) for v in vectors], axis=1)
        for v in vectors:
            if v.lo < lo and np.abs(v.coeffs[: lo - v.lo]).max() > 0:
                raise KreinError("vector support extends below the window")
            if v.hi > hi and np.abs(v.coeffs[hi - v.lo + 1 :]).max() > 0:
                raise KreinError("vector support extends above the window")
        dom = None
        if shift_domain is not None:
            dom = np.stack([v.flat(lo, hi) for v in shift_domain], axis=1)
        return cls(n, lo, hi, basis, form, dom)

    @classmethod
    def fourier_nonnegative(cls, n: int, top: int, form: np.ndarray | None = None) -> "KreinSubspace":
        """Degrees 0..top, the windowed model outgoing subspace."""
        return cls(n, 0, top, np.eye(n * (top + 1), dtype=complex), form)

    @classmethod
    def generated_by_loop(cls, g: LaurentMatrix, top: int) -> "KreinSubspace":
        """g . (degrees 0..top), stored exactly, with shift domain g . (degrees 0..top-1)."""
        n = g.n
        vecs = [apply_loop(g, KreinVector.unit(n, i, k)) for k in range(top + 1) for i in range(n)]
        dom = vecs[: n * top]
        return cls.from_vectors(vecs, (g.lo, g.hi + top), shift_domain=dom)

    # basic accessors
    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def window(self) -> tuple[int, int]:
        return self.lo, self.hi

    def vectors(self) -> list[KreinVector]:
        return [KreinVector.from_flat(col, self.n, self.lo) for col in self.basis.T]

    def gram(self, basis: np.ndarray | None = None) -> np.ndarray:
        b = self.basis if basis is None else basis
        g = gram_matrix(self.n, self.lo, self.hi, self.form)
        return b.conj().T @ g @ b

    def projector(self) -> np.ndarray:
        q = _orth(self.basis)
        return q @ q.conj().T

    def shifted(self, k: int = 1) -> "KreinSubspace":
        return KreinSubspace(self.n, self.lo + k, self.hi + k, self.basis, self.form, self.shift_domain)

    def _domain(self) -> np.ndarray:
        if self.shift_domain is not None:
            return self.shift_domain
        top = self.basis[-self.n :]
        return self.basis @ _null(top, self.dim)

    def shift_image(self) -> "KreinSubspace":
        """TW, as a subspace on the window [lo, hi + 1]."""
        dom = _orth(self._domain())
        shifted = _reembed(dom, self.n, self.lo + 1, self.hi + 1, self.lo, self.hi + 1)
        return KreinSubspace(self.n, self.lo, self.hi + 1, shifted, self.form)

    def complement(self) -> "KreinSubspace":
        """H = W minus_B TW: vectors of W that are B-orthogonal to TW."""
        tw = self.shift_image()
        w = _reembed(self.basis, self.n, self.lo, self.hi, self.lo, self.hi + 1)
        g = gram_matrix(self.n, self.lo, self.hi + 1, self.form)
        coeffs = _null(tw.basis.conj().T @ g @ w, self.dim)
        return KreinSubspace(self.n, self.lo, self.hi, self.basis @ coeffs, self.form)

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "lo": self.lo,
            "hi": self.hi,
            "form": np.stack([self.form.real, self.form.imag], -1).tolist(),
            "basis": [v.to_dict() for v in self.vectors()],
        }
        if self.shift_domain is not None:
            dom = [KreinVector.from_flat(c, self.n, self.lo).to_dict() for c in self.shift_domain.T]
            out["shift_domain"] = dom
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str | dict) -> "KreinSubspace":
        data = json.loads(text) if isinstance(text, str) else text
        form = np.asarray(data["form"], dtype=float)
        vecs = [KreinVector.from_dict(v) for v in data["basis"]]
        dom = data.get("shift_domain")
        dom_vecs = [KreinVector.from_dict(v) for v in dom] if dom is not None else None
        return cls.from_vectors(vecs, (data["lo"], data["hi"]), form[..., 0] + 1j * form[..., 1], dom_vecs)


def _intersect_window(basis: np.ndarray, n: int, lo: int, hi: int, wlo: int, whi: int) -> int:
    """dim of span(basis) ∩ (vectors supported in [wlo, whi])."""
    blocks = basis.reshape(hi - lo + 1, n, -1)
    degrees = np.arange(lo, hi + 1)
    outside = blocks[(degrees < wlo) | (degrees > whi)].reshape(-1, basis.shape[1])
    return _null(outside, basis.shape[1]).shape[1]


def check_outgoing(W: KreinSubspace, window: tuple[int, int] | None = None, depth: int = 4) -> Report:
    """Windowed outgoing-subspace axioms.

    The exact checks are TW in W, nondegeneracy of B on W, positivity of B on
    H = W minus_B TW, and that every graded step W/TW has dimension dim H.
    Shrinking intersections and filling unions have no finite-window meaning;
    their dimension counts inside ``window`` are reported as information with
    ``window_limited`` set.
    """
    rep = Report("check_outgoing")
    if W.dim == 0:
        raise DegenerateSubspaceError("zero subspace")
    tw = W.shift_image()
    w_ext = _reembed(W.basis, W.n, W.lo, W.hi, W.lo, W.hi + 1)
    q = _orth(w_ext)
    leak = tw.basis - q @ (q.conj().T @ tw.basis)
    rep.add("TW_in_W", float(np.linalg.norm(leak, 2)) if tw.dim else 0.0, 1e-10)

    qw = _orth(W.basis)
    eig_w = np.linalg.eigvalsh(W.gram(qw))
    rep.add("nondegenerate_min_abs_eig", float(np.min(np.abs(eig_w))), PIVOT_TOL, "min")

    H = W.complement()
    if H.dim == 0:
        rep.add("H_min_eig", -np.inf, PIVOT_TOL, "min")
    else:
        eig_h = np.linalg.eigvalsh(H.gram(_orth(H.basis)))
        rep.add("H_min_eig", float(eig_h.min()), PIVOT_TOL, "min")
        rep.note("H_eigs", eig_h.tolist())
    rep.add("graded_step_defect", abs(W.dim - tw.dim - H.dim), 0.0)
    rep.note("virtual_dimension", H.dim)

    wlo, whi = window if window is not None else W.window
    shrink, fill = [], []
    for k in range(depth + 1):
        shrink.append(_intersect_window(W.basis, W.n, W.lo + k, W.hi + k, wlo, whi))
        fill.append(_intersect_window(W.basis, W.n, W.lo - k, W.hi - k, wlo, whi))
    rep.note("shrink_dims", shrink)
    rep.note("fill_dims", fill)
    rep.note("window_dim", W.n * (whi - wlo + 1))
    rep.note("window_limited", True)
    return rep


def virtual_dimension(W: KreinSubspace) -> int:
    H = W.complement()
    if H.dim:
        eig = np.linalg.eigvalsh(H.gram(_orth(H.basis)))
        if np.min(np.abs(eig)) <= PIVOT_TOL:
            raise DegenerateSubspaceError("B is degenerate on W minus TW")
    return H.dim


# -- canonical isomorphism ---------------------------------------------------


def b_gram_schmidt(vectors: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """B-orthonormalize columns in input order; first nonzero entry made real positive."""
    out = []
    for v in vectors.T:
        w = v.astype(complex).copy()
        for u in out:
            w = w - (u.conj() @ gram @ w) * u
        nrm2 = (w.conj() @ gram @ w).real
        if nrm2 <= PIVOT_TOL:
            raise DegenerateSubspaceError(f"B-norm^2 {nrm2:.3e} below pivot threshold; H is not positive definite")
        w = w / np.sqrt(nrm2)
        lead = np.nonzero(np.abs(w) > PIVOT_TOL)[0][0]
        w = w * (abs(w[lead]) / w[lead])
        out.append(w)
    return np.stack(out, axis=1)


@dataclass(frozen=True)
class CanonicalIsomorphism:
    """Phi(sum_m a_m lambda^m) = sum_m T^m (sum_j a_{m,j} h_j) for a B-orthonormal basis h_j of H."""

    columns: tuple[KreinVector, ...]

    @property
    def n(self) -> int:
        return self.columns[0].n

    @property
    def virtual_dimension(self) -> int:
        return len(self.columns)

    @property
    def multiplier(self) -> LaurentMatrix:
        if self.virtual_dimension != self.n:
            raise KreinError("multiplier is square only when the virtual dimension equals n")
        lo = min(c.lo for c in self.columns)
        hi = max(c.hi for c in self.columns)
        stack = np.stack([c.padded(lo, hi) for c in self.columns], axis=-1)
        return LaurentMatrix(stack, lo).normalized(1e-14)

    def apply(self, f: KreinVector) -> KreinVector:
        if f.n != self.virtual_dimension:
            raise KreinError("model vector has the wrong fiber dimension")
        out = None
        for k in range(f.lo, f.hi + 1):
            for j, h in enumerate(self.columns):
                term = right_shift(h, k) * f.coeff(k)[j]
                out = term if out is None else out + term
        return out

    def matrix(self, lo: int, hi: int) -> tuple[np.ndarray, tuple[int, int]]:
        """Matrix of Phi from model window [lo, hi] to its image window."""
        clo = min(c.lo for c in self.columns)
        chi = max(c.hi for c in self.columns)
        out_lo, out_hi = lo + clo, hi + chi
        cols = []
        for k in range(lo, hi + 1):
            for j in range(self.virtual_dimension):
                cols.append(right_shift(self.columns[j], k).flat(out_lo, out_hi))
        return np.stack(cols, axis=1), (out_lo, out_hi)


def canonical_isomorphism(W: KreinSubspace) -> CanonicalIsomorphism:
    H = W.complement()
    if H.dim == 0:
        raise DegenerateSubspaceError("W minus TW is zero")
    g = gram_matrix(W.n, W.lo, W.hi, W.form)
    hb = b_gram_schmidt(H.basis, g)
    cols = tuple(KreinVector.from_flat(c, W.n, W.lo) for c in hb.T)
    return CanonicalIsomorphism(cols)


def isomorphism_residuals(phi: CanonicalIsomorphism, lo: int, hi: int, form: np.ndarray | None = None) -> dict:
    """Shift intertwining and B preservation of Phi on a model window."""
    v = phi.virtual_dimension
    m, (olo, ohi) = phi.matrix(lo, hi)
    g_out = gram_matrix(phi.n, olo, ohi, form)
    g_model = gram_matrix(v, lo, hi)
    b_res = float(np.abs(m.conj().T @ g_out @ m - g_model).max())
    # T Phi x = Phi T x for x supported in [lo, hi - 1]
    m_next, (nlo, nhi) = phi.matrix(lo + 1, hi + 1)
    t_res = float(np.abs(m[:, : v * (hi - lo)] - m_next[:, : v * (hi - lo)]).max()) if hi > lo else 0.0
    return {"B_preservation": b_res, "shift_intertwining": t_res}


def right_unitary_factor(phi: CanonicalIsomorphism, g: LaurentMatrix) -> tuple[np.ndarray, float]:
    """Best U with multiplier(Phi) ~ g U; returns U and the coefficient residual."""
    m = phi.multiplier
    lo, hi = min(m.lo, g.lo), max(m.hi, g.hi)
    gs = g.padded(lo, hi).reshape(-1, g.n)
    ms = m.padded(lo, hi).reshape(-1, g.n)
    u, *_ = np.linalg.lstsq(gs, ms, rcond=None)
    residual = float(np.abs(gs @ u - ms).max())
    return u, residual


# -- classical Hodge embedding ------------------------------------------------


@dataclass(frozen=True)
class GradedHodgeInput:
    """V = sum_p V^p with Hermitian form blocks gram[p] that are (-1)^p definite."""

    dims: dict[int, int]
    gram: dict[int, np.ndarray]

    def __post_init__(self):
        for p, d in self.dims.items():
            if d < 0:
                raise HodgeInputError(f"negative dimension at weight {p}")
            block = np.asarray(self.gram.get(p, np.eye(d) * (-1) ** p), dtype=complex)
            if block.shape != (d, d):
                raise HodgeInputError(f"weight {p}: form block has shape {block.shape}, expected {(d, d)}")
            if not np.allclose(block, block.conj().T, atol=1e-12):
                raise HodgeInputError(f"weight {p}: form block is not Hermitian")
            if d and np.min(np.linalg.eigvalsh((-1) ** p * block)) <= 0:
                raise HodgeInputError(f"weight {p}: form block is not (-1)^{p} positive definite")

    @classmethod
    def standard(cls, dims: dict[int, int]) -> "GradedHodgeInput":
        return cls(dict(dims), {p: (-1) ** p * np.eye(d) for p, d in dims.items()})

    @property
    def weights(self) -> list[int]:
        return sorted(p for p, d in self.dims.items() if d > 0)

    @property
    def total_dim(self) -> int:
        return sum(self.dims.values())

    def offsets(self) -> dict[int, int]:
        off, out = 0, {}
        for p in sorted(self.dims):
            out[p] = off
            off += self.dims[p]
        return out

    def form(self) -> np.ndarray:
        return sla.block_diag(*[np.asarray(self.gram[p], dtype=complex) for p in sorted(self.dims)])


def embed_classical_hodge(data: GradedHodgeInput, window: tuple[int, int]) -> KreinSubspace:
    """W = sum_k T^{-k} F^k V: degree k carries F^{-k} V."""
    lo, hi = window
    ws = data.weights
    if not ws:
        raise HodgeInputError("empty Hodge structure")
    if lo > -max(ws) or hi < -min(ws) + 1:
        raise KreinError(
            f"window {window} must contain degrees {-max(ws)}..{-min(ws) + 1} to see every graded piece"
        )
    n = data.total_dim
    off = data.offsets()
    vecs = []
    for k in range(lo, hi + 1):
        for p in sorted(data.dims):
            if p >= -k:
                for i in range(data.dims[p]):
                    vecs.append(KreinVector.unit(n, off[p] + i, k))
    return KreinSubspace.from_vectors(vecs, window, data.form())


# -- commutant and isometry characterizations ---------------------------------


def multiplication_operator(g: LaurentMatrix, lo: int, hi: int) -> np.ndarray:
    """Matrix of f -> g f on the window [lo, hi], truncated to the same window."""
    n, span = g.n, hi - lo + 1
    m = np.zeros((span * n, span * n), dtype=complex)
    for j in range(span):
        for d in g.degrees():
            i = j + d
            if 0 <= i < span:
                m[i * n : (i + 1) * n, j * n : (j + 1) * n] = g.coeff(d)
    return m


@dataclass(frozen=True)
class CommutantResult:
    commutes: bool
    residual: float
    multiplier: LaurentMatrix | None


def commutant_check(M: np.ndarray, n: int, tol: float = 1e-12) -> CommutantResult:
    """Test [M, T] = 0 on the window interior (block-Toeplitz structure)."""
    span = M.shape[0] // n
    if M.shape != (span * n, span * n):
        raise KreinError(f"operator shape {M.shape} is not a square block matrix of block size {n}")
    blocks = M.reshape(span, n, span, n).transpose(0, 2, 1, 3)
    if span > 1:
        residual = float(np.abs(blocks[1:, 1:] - blocks[:-1, :-1]).max())
    else:
        residual = 0.0
    if residual > tol:
        return CommutantResult(False, residual, None)
    coeffs = np.zeros((2 * span - 1, n, n), dtype=complex)
    for d in range(-(span - 1), span):
        coeffs[d + span - 1] = blocks[d, 0] if d >= 0 else blocks[0, -d]
    return CommutantResult(True, residual, LaurentMatrix(coeffs, -(span - 1)).normalized(0.0))


def isometry_iff_sigma(
    g: LaurentMatrix, tol: float = 1e-9, samples: int = 8, seed: int = 0, support: int = 3
) -> Report:
    """Compare the sigma-fixedness residual with the B-isometry residual."""
    rep = Report("isometry_iff_sigma")
    scale = max(1.0, g.max_norm()) ** 2
    sigma_res = membership_residual(g, "sigma_group") / scale
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        f = KreinVector(rng.normal(size=(support, g.n)) + 1j * rng.normal(size=(support, g.n)), -(support // 2))
        h = KreinVector(rng.normal(size=(support, g.n)) + 1j * rng.normal(size=(support, g.n)), -(support // 2))
        lhs = krein_form(apply_loop(g, f), apply_loop(g, h))
        rhs = krein_form(f, h)
        nf = np.linalg.norm(f.coeffs) * np.linalg.norm(h.coeffs)
        worst = max(worst, abs(lhs - rhs) / (nf * scale))
    s_ok = sigma_res <= tol
    b_ok = worst <= tol
    rep.note("sigma_residual", sigma_res)
    rep.note("B_isometry_residual", worst)
    rep.note("sigma_fixed", s_ok)
    rep.note("B_isometric", b_ok)
    rep.add("verdict_disagreement", float(s_ok != b_ok), 0.0)
    return rep


__all__ = [
    "KreinVector",
    "KreinSubspace",
    "GradedHodgeInput",
    "CanonicalIsomorphism",
    "CommutantResult",
    "KreinError",
    "DegenerateSubspaceError",
    "HodgeInputError",
    "krein_form",
    "right_shift",
    "circle_rotate",
    "intertwine_check",
    "apply_loop",
    "gram_matrix",
    "check_outgoing",
    "virtual_dimension",
    "canonical_isomorphism",
    "isomorphism_residuals",
    "right_unitary_factor",
    "embed_classical_hodge",
    "multiplication_operator",
    "commutant_check",
    "isometry_iff_sigma",
    "LoopAlgebraError",
]
