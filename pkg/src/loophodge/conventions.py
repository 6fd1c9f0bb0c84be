"""Convention ledger: the sign, orientation and gauge choices behind every
signed number this package reports.  Bump ``LEDGER_VERSION`` whenever an
entry changes meaning."""

from __future__ import annotations

LEDGER_VERSION = "1.0"

# iβ(f, Jf) = HORIZONTAL_SIGN * HORIZONTAL_CONSTANT * Tr(a_1 a_1^* + a_{-1} a_{-1}^*),
# fixed once by quadrature (see det_line.calibrate_horizontal_constant).
HORIZONTAL_SIGN = -1
HORIZONTAL_CONSTANT = 0.5

# (i/2π) β_D(df ∂x, df ∂y) divided by the Hitchin energy density (dx∧dy coefficient).
ENERGY_CURVATURE_RATIO = 1.0

_LEDGER = {
    "orientation": "dz^dzbar = -2i dx^dy; volume form dx^dy; z = x + i y",
    "curvature": "F = dA + A^A; F_{mu nu} = d_mu A_nu - d_nu A_mu + [A_mu, A_nu] "
    "in coordinates (z1, zbar1, z2, zbar2)",
    "metric_adjoint": "Theta^* = h^{-1} Theta^dagger h",
    "circle_connection": "D_lambda = nabla + lambda^{-1} theta + lambda theta^*",
    "transport": "dP/ds = -A_lambda(gamma'(s)) P, P(0) = I; period map g = P^{-1}",
    "coset_gauge": "right-multiply by the unitary polar factor of the degree-0 coefficient",
    "cocycle": "omega(xi, eta) = (i/2pi) int <xi, eta'> dtheta, <X, Y> = -Tr(XY)",
    "circle_measure": "circle integrals normalized to mass 1 (trapezoid on 2^k points)",
    "hitchin_energy": "beta_X = (1/4 i pi) Tr(theta ^ theta^*), density reported as dx^dy coefficient",
    "horizontal_sign": HORIZONTAL_SIGN,
    "horizontal_constant": HORIZONTAL_CONSTANT,
    "energy_curvature_ratio": ENERGY_CURVATURE_RATIO,
}


def ledger() -> dict:
    return dict(_LEDGER, version=LEDGER_VERSION)
