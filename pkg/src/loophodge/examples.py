"""Built-in bundles used by the CLI scenarios, the tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .harmonic_lattice import BaseLattice, DiscreteBundle, PolyField

DIAGONAL_MU = (0.2 + 0.1j, -0.15 + 0.1j)
NILPOTENT = np.array([[0, 1], [0, 0]], dtype=complex)
E12 = NILPOTENT
E21 = NILPOTENT.T.copy()


def diagonal(mu=DIAGONAL_MU, tau: complex = 1j, grid: int = 8) -> DiscreteBundle:
    """Rank 2, Theta = diag(mu) constant, h = I, A = 0 on the torus C / (Z + tau Z)."""
    lat = BaseLattice(1, "torus", (grid, grid), tau=tau)
    return DiscreteBundle(lat, 2, (PolyField.constant(np.diag(np.asarray(mu, dtype=complex))),), name="diagonal")


def nilpotent(spacing: float = 0.25, grid: int = 8) -> DiscreteBundle:
    """Rank 2, Theta = [[0, 1], [0, 0]], h = I, A = 0 on a patch: not harmonic."""
    lat = BaseLattice(1, "patch", (grid, grid), spacing=spacing)
    return DiscreteBundle(lat, 2, (PolyField.constant(NILPOTENT),), name="nilpotent")


def elliptic(t: complex = 0.7, tau: complex = 1j, grid: int = 8) -> DiscreteBundle:
    """Rank 1, Theta = t constant on the torus C / (Z + tau Z)."""
    lat = BaseLattice(1, "torus", (grid, grid), tau=tau)
    return DiscreteBundle(lat, 1, (PolyField.constant([[t]]),), name="elliptic")


def noncommuting2d(spacing: float = 0.25, grid: int = 4) -> DiscreteBundle:
    """d = 2, Theta_1 = E_12, Theta_2 = E_21: theta ^ theta != 0."""
    lat = BaseLattice(2, "patch", (grid,) * 4, spacing=spacing)
    return DiscreteBundle(
        lat, 2, (PolyField.constant(E12, 2), PolyField.constant(E21, 2)), name="noncommuting2d"
    )


def harmonic2d(spacing: float = 0.2, grid: int = 5) -> DiscreteBundle:
    """d = 2, rank 1, theta = df with f = z1^2 + z1 z2 + (i/4) z2^2 on a centered patch."""
    lat = BaseLattice(2, "patch", (grid,) * 4, spacing=spacing, origin=-(grid - 1) / 2 * spacing)
    t1 = PolyField.monomial([[2.0]], (1, 0)) + PolyField.monomial([[1.0]], (0, 1))
    t2 = PolyField.monomial([[1.0]], (1, 0)) + PolyField.monomial([[0.5j]], (0, 1))
    return DiscreteBundle(lat, 1, (t1, t2), name="harmonic2d")


def kernel2d(spacing: float = 0.25, grid: int = 5) -> DiscreteBundle:
    """d = 2, rank 2, Theta_1 = z_1 E_11, Theta_2 = 0 on a centered patch."""
    lat = BaseLattice(2, "patch", (grid,) * 4, spacing=spacing, origin=-(grid - 1) / 2 * spacing)
    e11 = np.diag([1.0, 0.0])
    return DiscreteBundle(
        lat, 2, (PolyField.monomial(e11, (1, 0)), PolyField.zero(2, 2)), name="kernel2d"
    )


BUILTINS = {
    "diagonal": diagonal,
    "nilpotent": nilpotent,
    "elliptic": elliptic,
    "noncommuting2d": noncommuting2d,
    "harmonic2d": harmonic2d,
    "kernel2d": kernel2d,
}


def builtin(name: str, **params) -> DiscreteBundle:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown built-in example {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)
