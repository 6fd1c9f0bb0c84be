import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from strategies import laurent, laurent_pair, laurent_triple, seeds, sigma_part

from loophodge import conventions, examples
from loophodge.det_line import (
    AliasingError,
    CocycleError,
    MembershipError,
    calibrate_horizontal_constant,
    cocycle,
    cocycle_closed,
    cocycle_identity,
    cocycle_quadrature,
    curvature_pair,
    energy_curvature_relation,
    energy_density_at,
    horizontal_definiteness,
    horizontal_trace,
    omega,
    reality_check,
    self_test,
)
from loophodge.harmonic_lattice import BaseLattice, DiscreteBundle, PolyField, hitchin_energy
from loophodge.loop_algebra import LaurentMatrix
from loophodge.sampling import complex_normal, random_horizontal, random_laurent, random_sigma


def scale_of(*xs):
    return 1 + math.prod(x.max_norm() for x in xs) * max(x.span for x in xs) ** 2


# -- cocycle values -------------------------------------------------------------------------


def test_self_test_agrees():
    assert self_test() < 1e-12


def test_constants_pair_to_zero(rng):
    a = LaurentMatrix.constant(complex_normal(rng, (2, 2)))
    b = random_laurent(rng, 2, -3, 3)
    assert omega(a, b) == 0 and omega(b, a) == 0


def test_single_mode_value():
    # omega(lambda E, lambda^{-1} F) = -Tr(E F)
    e = np.array([[1.0, 2.0], [0.0, 1j]])
    f = np.array([[0.5, 0.0], [1.0, 1.0]])
    assert omega(LaurentMatrix.monomial(1, e), LaurentMatrix.monomial(-1, f)) == pytest.approx(-np.trace(e @ f))
    assert omega(LaurentMatrix.monomial(3, e), LaurentMatrix.monomial(-3, f)) == pytest.approx(-3 * np.trace(e @ f))
    assert omega(LaurentMatrix.monomial(2, e), LaurentMatrix.monomial(-1, f)) == 0


@given(laurent_pair())
def test_skew_symmetry(pair):
    a, b = pair
    assert abs(omega(a, b) + omega(b, a)) <= 1e-12 * scale_of(a, b)


@given(laurent_pair())
def test_closed_form_matches_64_point_quadrature(pair):
    a, b = pair
    v = cocycle(a, b, mode="both", points=64)
    assert v.difference <= 1e-12 * scale_of(a, b)


@given(laurent_triple(), st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_bilinearity(triple, c):
    a, b, z = triple
    lhs = omega(a * c + b, z)
    rhs = c * omega(a, z) + omega(b, z)
    assert abs(lhs - rhs) <= 1e-11 * scale_of(a, b, z) * (1 + abs(c))


def test_quadrature_refuses_to_alias(rng):
    a = random_laurent(rng, 2, -4, 4)
    with pytest.raises(AliasingError):
        cocycle_quadrature(a, a, points=8)
    assert abs(cocycle_quadrature(a, a, points=9) - cocycle_closed(a, a)) < 1e-12


def test_size_mismatch_and_mode_are_rejected(rng):
    with pytest.raises(CocycleError):
        omega(random_laurent(rng, 2, -1, 1), random_laurent(rng, 3, -1, 1))
    with pytest.raises(CocycleError):
        cocycle(LaurentMatrix.identity(1), LaurentMatrix.identity(1), mode="spline")


# -- identities -------------------------------------------------------------------------------


@given(laurent_triple(lo=-2, hi=2))
def test_standard_cyclic_identity(triple):
    res = cocycle_identity(*triple)
    assert res.standard <= 1e-11 * scale_of(*triple) ** 2


def test_displayed_index_pattern_is_not_an_identity(rng):
    worst = 0.0
    for _ in range(5):
        a, b, c = (random_laurent(rng, 2, -2, 2) for _ in range(3))
        res = cocycle_identity(a, b, c)
        assert res.standard < 1e-11
        worst = max(worst, res.displayed)
    assert worst > 1e-2


@given(seeds)
def test_reality_on_the_twisted_algebra(seed):
    rng = np.random.default_rng(seed)
    a, b = random_sigma(rng, 2, 3), random_sigma(rng, 2, 3)
    assert reality_check(a, b) <= 1e-12 * scale_of(a, b)


def test_reality_negative_control(rng):
    a, b = random_laurent(rng, 2, -2, 2), random_laurent(rng, 2, -2, 2)
    with pytest.raises(MembershipError):
        reality_check(a, b)
    assert reality_check(a, b, strict=False) > 1e-3
    with pytest.raises(CocycleError):
        reality_check(a, b, cls="nope")


@given(laurent(n=2, elements=st.integers(-64, 64).map(lambda k: k / 16.0)))
def test_reality_on_dyadic_sigma_parts(x):
    y = sigma_part(x)
    z = sigma_part(LaurentMatrix(x.coeffs[::-1], x.lo))
    assert reality_check(y, z) <= 1e-12 * scale_of(y, z)


# -- curvature pairing ------------------------------------------------------------------------


def test_curvature_pair_requires_zero_mean(rng):
    a = random_sigma(rng, 2, 2)
    b = random_sigma(rng, 2, 2, zero_mean=True)
    with pytest.raises(CocycleError):
        curvature_pair(a, b)
    assert curvature_pair(b, b) == pytest.approx(0, abs=1e-12)


def test_curvature_pair_is_linear_and_skew(rng):
    a, b, c = (random_sigma(rng, 2, 3, zero_mean=True) for _ in range(3))
    assert abs(curvature_pair(a * 2.5 + c, b) - 2.5 * curvature_pair(a, b) - curvature_pair(c, b)) < 1e-12
    assert abs(curvature_pair(a, b) + curvature_pair(b, a)) < 1e-12
    assert curvature_pair(a, b) == pytest.approx(-0.5 * omega(a, b))


# -- horizontal definiteness -----------------------------------------------------------------


def test_calibration_matches_ledger():
    sign, c = calibrate_horizontal_constant()
    assert sign == conventions.HORIZONTAL_SIGN
    assert c == pytest.approx(conventions.HORIZONTAL_CONSTANT, abs=1e-14)


def test_unit_diagonal_horizontal_value():
    e = np.diag([1.0, 0.0])
    f = LaurentMatrix.from_dict({-1: e, 1: e})
    assert horizontal_trace(f) == 2
    assert horizontal_definiteness(f) == pytest.approx(-2 * conventions.HORIZONTAL_CONSTANT, abs=1e-14)


@given(seeds, st.integers(1, 3))
def test_horizontal_sweep_is_negative_definite(seed, n):
    rng = np.random.default_rng(seed)
    f = random_horizontal(rng, n)
    value = horizontal_definiteness(f)
    assert value < -1e-12
    expected = conventions.HORIZONTAL_SIGN * conventions.HORIZONTAL_CONSTANT * horizontal_trace(f)
    assert abs(value - expected) <= 1e-10 * max(1, abs(expected))


@pytest.mark.parametrize("r", [1e-3, 0.5, 7.0])
def test_horizontal_value_scales_quadratically(rng, r):
    f = random_horizontal(rng, 2)
    assert horizontal_definiteness(f * r) == pytest.approx(r**2 * horizontal_definiteness(f), rel=1e-12)


def test_horizontal_definiteness_input_checks(rng):
    with pytest.raises(CocycleError):
        horizontal_definiteness(LaurentMatrix.zeros(2))
    with pytest.raises(MembershipError):
        horizontal_definiteness(LaurentMatrix.monomial(2, np.eye(2)))
    a = complex_normal(rng, (2, 2))
    with pytest.raises(MembershipError):
        horizontal_definiteness(LaurentMatrix.from_dict({-1: a, 1: a}))


# -- energy and curvature ----------------------------------------------------------------------


def test_energy_density_matches_lattice_energy():
    b = examples.elliptic(t=0.7)
    assert energy_density_at(b, 0.3) == pytest.approx(hitchin_energy(b).density_xy[0, 0], rel=1e-12)
    assert energy_density_at(b, 0.3) == pytest.approx(-0.49 / (2 * math.pi), rel=1e-12)


def test_zero_higgs_relation_is_absolute():
    rep = energy_curvature_relation(examples.elliptic(t=0), 0.2 + 0.1j)
    assert rep.passed
    assert rep.info["ratio"] is None


@pytest.mark.parametrize("site", [0.1 + 0.1j, 0.4 + 0.3j, -0.2 + 0.5j])
def test_rank_one_ratio_is_site_independent(site):
    rep = energy_curvature_relation(examples.elliptic(t=0.7), site)
    assert rep.passed, rep.failures
    assert rep.info["ratio"] == pytest.approx(conventions.ENERGY_CURVATURE_RATIO, rel=1e-5)


@pytest.mark.parametrize("site", [0.3 + 0.2j, -0.25 + 0.4j])
def test_diagonal_relation(site):
    rep = energy_curvature_relation(examples.diagonal(), site)
    assert rep["relative_error"] < 1e-5


def test_relation_on_nonconstant_higgs_field():
    lat = BaseLattice(1, "patch", (9, 9), spacing=0.1, origin=-0.4 - 0.4j)
    b = DiscreteBundle(lat, 1, (PolyField.monomial([[1.0]], (1,)) + PolyField.constant([[0.5]]),))
    rep = energy_curvature_relation(b, 0.2 + 0.1j)
    assert rep["relative_error"] < 1e-5


def test_rank_one_ratio_spread_is_tight():
    b = examples.elliptic(t=0.9 - 0.3j)
    ratios = np.array([energy_curvature_relation(b, s).info["ratio"] for s in (0.1, 0.3 + 0.4j, -0.2 + 0.25j, 0.45j)])
    assert np.ptp(ratios) / abs(ratios.mean()) < 1e-6
