"""Seeded random generators for loops, Krein vectors and unitaries."""

from __future__ import annotations

import numpy as np
from scipy.stats import unitary_group

from .krein_model import KreinVector
from .loop_algebra import LaurentMatrix, WindowTooSmallError, exp_loop, twisted_involution


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_laurent(rng: np.random.Generator, n: int, lo: int, hi: int, scale: float = 1.0) -> LaurentMatrix:
    return LaurentMatrix(scale * complex_normal(rng, (hi - lo + 1, n, n)), lo)


def random_sigma(rng: np.random.Generator, n: int, m: int, scale: float = 1.0, zero_mean: bool = False) -> LaurentMatrix:
    """Random element of the twisted loop algebra supported in [-m, m]."""
    x = random_laurent(rng, n, -m, m, scale)
    s = (x + twisted_involution(x)) * 0.5
    if zero_mean:
        c = np.array(s.coeffs)
        c[m] = 0
        s = LaurentMatrix(c, -m)
    return s


def random_horizontal(rng: np.random.Generator, n: int, unit: bool = True) -> LaurentMatrix:
    """lambda^{-1} A + lambda A^*, normalized to unit Frobenius norm of A if ``unit``."""
    a = complex_normal(rng, (n, n))
    if unit:
        a = a / np.linalg.norm(a)
    return LaurentMatrix.from_dict({-1: a, 1: a.conj().T})


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    if n == 1:
        return np.exp(2j * np.pi * rng.random()) * np.eye(1)
    return unitary_group.rvs(n, random_state=rng)


def _exp_grow(x: LaurentMatrix, window: int, limit: int = 256) -> LaurentMatrix:
    while True:
        try:
            return exp_loop(x, window).normalized(1e-15)
        except WindowTooSmallError:
            if 2 * window > limit:
                raise
            window *= 2


def random_sigma_loop(rng: np.random.Generator, n: int, m: int = 2, scale: float = 0.3, window: int = 24) -> LaurentMatrix:
    """exp of a random twisted-algebra element: a point of the real loop group."""
    return _exp_grow(random_sigma(rng, n, m, scale), window)


def random_plain_loop(rng: np.random.Generator, n: int, m: int = 1, scale: float = 0.3, window: int = 24) -> LaurentMatrix:
    """exp of a generic (non-twisted) element: invertible but generally not real."""
    return _exp_grow(random_laurent(rng, n, -m, m, scale), window)


def random_krein_vector(rng: np.random.Generator, n: int, lo: int, hi: int) -> KreinVector:
    return KreinVector(complex_normal(rng, (hi - lo + 1, n)), lo)
