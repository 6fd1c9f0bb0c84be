import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from strategies import seeds

from loophodge import examples
from loophodge.harmonic_lattice import (
    BaseLattice,
    DiscreteBundle,
    GridField,
    LatticeError,
    NonPolarizedPair,
    PolyField,
    adjoint_higgs,
    circle_action,
    circle_connection,
    curvature,
    flatness_sweep,
    gauge_transform,
    h_adjoint,
    higgs_kernel_map,
    hitchin_energy,
    hitchin_residuals,
    metric_compatibility_residual,
    nonpolarized_check,
    sample_field,
)
from loophodge.sampling import complex_normal, random_unitary

N = examples.NILPOTENT


def patch(d=1, grid=6, spacing=0.2, origin=0.0):
    return BaseLattice(d, "patch", (grid,) * (2 * d), spacing=spacing, origin=origin)


def random_poly(rng, r, d=1, degree=1, scale=0.3):
    f = PolyField.zero(r, d)
    for _ in range(3):
        alpha = tuple(int(a) for a in rng.integers(0, degree + 1, size=d))
        beta = tuple(int(b) for b in rng.integers(0, degree + 1, size=d))
        f = f + PolyField.monomial(scale * complex_normal(rng, (r, r)), alpha, beta)
    return f


def random_bundle(rng, r=2, d=1, grid=5):
    lat = patch(d, grid, 0.15, origin=-0.3)
    theta = tuple(random_poly(rng, r, d) for _ in range(d))
    a_z = tuple(random_poly(rng, r, d) for _ in range(d))
    a_zbar = tuple(random_poly(rng, r, d) for _ in range(d))
    return DiscreteBundle(lat, r, theta, a_z, a_zbar, metric_connection=False)


# -- lattice and fields --------------------------------------------------------------


def test_lattice_validation():
    with pytest.raises(LatticeError):
        BaseLattice(1, "patch", (3, 8))
    with pytest.raises(LatticeError):
        BaseLattice(1, "torus", (8, 8), tau=-1j)
    with pytest.raises(LatticeError):
        BaseLattice(3, "patch", (4,) * 6)
    with pytest.raises(LatticeError):
        BaseLattice(1, "patch", (8, 8), spacing=0.0)


def test_torus_steps_cover_periods():
    lat = BaseLattice(1, "torus", (8, 4), tau=0.5 + 2j)
    assert lat.step(0) * 8 == pytest.approx(1)
    assert lat.step(1) * 4 == pytest.approx(0.5 + 2j)
    assert lat.area() == pytest.approx(2.0)
    assert lat.plane_weights().sum() == pytest.approx(2.0)


def test_patch_area_and_weights():
    lat = patch(1, 5, 0.25)
    assert lat.area() == pytest.approx(1.0)
    assert lat.plane_weights().sum() == pytest.approx(1.0)
    fine = lat.refined(2)
    assert fine.area() == pytest.approx(1.0)
    np.testing.assert_allclose(fine.coords()[0, ::2, ::2], lat.coords()[0])


def test_polyfield_derivatives(rng):
    c = complex_normal(rng, (2, 2))
    f = PolyField.monomial(c, (2,), (1,))  # z^2 zbar
    z = np.array([[0.3 + 0.2j]])
    np.testing.assert_allclose(f.derivative(0).evaluate(z)[0], 2 * z[0, 0] * np.conj(z[0, 0]) * c)
    np.testing.assert_allclose(f.derivative(1).evaluate(z)[0], z[0, 0] ** 2 * c)
    assert not f.is_holomorphic and not f.is_constant


def test_torus_rejects_nonconstant_fields():
    lat = BaseLattice(1, "torus", (8, 8))
    with pytest.raises(LatticeError):
        DiscreteBundle(lat, 1, (PolyField.monomial([[1.0]], (1,)),))


def test_bundle_rejects_indefinite_metric():
    lat = patch()
    with pytest.raises(LatticeError):
        DiscreteBundle(lat, 2, (PolyField.zero(2),), h=PolyField.constant(np.diag([1.0, -1.0])))


# -- adjoint ----------------------------------------------------------------------------


def test_adjoint_with_identity_metric(rng):
    c = complex_normal(rng, (2, 2))
    b = DiscreteBundle(patch(), 2, (PolyField.constant(c),))
    np.testing.assert_allclose(adjoint_higgs(b)[0], np.broadcast_to(c.conj().T, (6, 6, 2, 2)))


def test_adjoint_of_diagonal():
    b = examples.diagonal()
    np.testing.assert_allclose(adjoint_higgs(b)[0][0, 0], np.diag(np.conj(examples.DIAGONAL_MU)))


def test_adjoint_is_the_metric_adjoint(rng):
    m = complex_normal(rng, (3, 3))
    h = m @ m.conj().T + np.eye(3)
    theta = complex_normal(rng, (3, 3))
    b = DiscreteBundle(patch(), 3, (PolyField.constant(theta),), h=PolyField.constant(h))
    ts = adjoint_higgs(b)[0][0, 0]
    for _ in range(10):
        u, v = complex_normal(rng, 3), complex_normal(rng, 3)
        # h(x, y) = y^dagger h x
        lhs = v.conj() @ h @ (theta @ u)
        rhs = (ts @ v).conj() @ h @ u
        assert abs(lhs - rhs) < 1e-12


@given(seeds)
def test_adjoint_is_involutive_and_reverses_order(seed):
    rng = np.random.default_rng(seed)
    m = complex_normal(rng, (3, 3))
    h = m @ m.conj().T + np.eye(3)
    x, y = complex_normal(rng, (3, 3)), complex_normal(rng, (3, 3))
    scale = np.linalg.cond(h) * (1 + np.abs(x).max() * np.abs(y).max())
    assert np.abs(h_adjoint(h_adjoint(x, h), h) - x).max() < 1e-12 * scale
    assert np.abs(h_adjoint(x @ y, h) - h_adjoint(y, h) @ h_adjoint(x, h)).max() < 1e-12 * scale


# -- curvature ----------------------------------------------------------------------------


def test_zero_connection_is_flat():
    b = DiscreteBundle(patch(), 2, (PolyField.zero(2),))
    assert np.abs(curvature(b).values).max() == 0


def test_constant_commuting_connection_is_flat():
    a = PolyField.constant(np.diag([1.0, 2.0j]))
    b = DiscreteBundle(patch(), 2, (PolyField.zero(2),), a_z=(a,), a_zbar=(a.scaled(0.5),), metric_connection=False)
    assert np.abs(curvature(b).values).max() == 0


@pytest.mark.parametrize("method", ["exact", "fd", "plaquette"])
def test_abelian_curvature_of_a_zbar_equals_z(method):
    # F = dA with A = z dzbar gives F_{z zbar} = d_z A_zbar = +1 under F = dA + A ^ A
    b = DiscreteBundle(
        patch(grid=6, spacing=0.1),
        1,
        (PolyField.zero(1),),
        a_zbar=(PolyField.monomial([[1.0]], (1,)),),
        metric_connection=False,
    )
    f = curvature(b, method)
    assert f.method == method
    np.testing.assert_allclose(f.component(0, 1)[..., 0, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(f.component(1, 0)[..., 0, 0], -1.0, atol=1e-12)


def test_fd_curvature_is_second_order():
    def err(lat):
        b = DiscreteBundle(lat, 1, (PolyField.zero(1),), a_zbar=(PolyField.monomial([[1.0]], (2,), (1,)),), metric_connection=False)
        z = lat.coords()[0]
        exact = 2 * z * np.conj(z)
        return np.abs(curvature(b, "fd").component(0, 1)[..., 0, 0] - exact).max()

    lat = patch(grid=9, spacing=0.1, origin=0.2 + 0.1j)
    e1, e2 = err(lat), err(lat.refined(2))
    assert e1 / e2 >= 3.5


def test_exact_curvature_of_nonabelian_constant_connection():
    a = PolyField.constant(examples.E12)
    abar = PolyField.constant(examples.E21)
    b = DiscreteBundle(patch(), 2, (PolyField.zero(2),), a_z=(a,), a_zbar=(abar,), metric_connection=False)
    f = curvature(b).component(0, 1)[0, 0]
    np.testing.assert_allclose(f, examples.E12 @ examples.E21 - examples.E21 @ examples.E12)


def test_plaquette_rejects_d2():
    with pytest.raises(LatticeError):
        curvature(examples.harmonic2d(), "plaquette")


def test_unitary_gauge_connection_is_metric():
    # A_zbar = -A_z^dagger for constant h = I
    a = PolyField.constant(np.array([[1j, 2.0], [0.5, 0.0]]))
    b = DiscreteBundle(patch(), 2, (PolyField.zero(2),), a_z=(a,), a_zbar=(PolyField.constant(-a.terms[0][2].conj().T),))
    assert metric_compatibility_residual(b) < 1e-15


# -- Hitchin residuals ---------------------------------------------------------------------


def test_constant_rank_one_is_harmonic():
    rep = hitchin_residuals(examples.elliptic())
    assert rep.passed
    assert rep["R1"] == 0 and rep["R2"] == 0 and rep["R3"] == 0
    assert rep.info["R3_zero_by_type"] is True


def test_nilpotent_is_not_harmonic():
    rep = hitchin_residuals(examples.nilpotent())
    assert rep["R1"] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert not rep.verdict("R1") and rep.verdict("R2")
    assert np.linalg.norm(N @ N.T - N.T @ N) == pytest.approx(math.sqrt(2))


def test_noncommuting_fails_r3():
    rep = hitchin_residuals(examples.noncommuting2d())
    assert rep["R3"] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert not rep.verdict("R3")


@pytest.mark.parametrize("name", ["diagonal", "elliptic", "harmonic2d", "kernel2d"])
def test_builtin_harmonic_examples(name):
    assert hitchin_residuals(examples.builtin(name)).passed


def test_nonholomorphic_higgs_field_fails_r2():
    b = DiscreteBundle(patch(), 1, (PolyField.monomial([[1.0]], (0,), (1,)),))
    rep = hitchin_residuals(b)
    assert rep["R2"] > 0.5 and not rep.verdict("R2")


# -- circle of connections -------------------------------------------------------------------


def test_circle_connection_at_plus_minus_one(rng):
    b = random_bundle(rng)
    data = b.data("exact")
    alpha = data.theta + data.theta_star
    np.testing.assert_allclose(circle_connection(b, 1.0), data.a + alpha, atol=1e-15)
    np.testing.assert_allclose(circle_connection(b, -1.0), data.a - alpha, atol=1e-15)


def test_formal_connection_round_trip(rng):
    b = random_bundle(rng)
    formal = circle_connection(b)
    data = b.data("exact")
    for k in range(8):
        lam = np.exp(2j * np.pi * k / 8)
        expected = data.a + data.theta / lam + lam * data.theta_star
        np.testing.assert_allclose(circle_connection(b, lam), expected, atol=1e-14)
        np.testing.assert_allclose(formal.evaluate(lam)[0], expected, atol=1e-14)


def test_circle_connection_rejects_off_circle(rng):
    with pytest.raises(LatticeError):
        circle_connection(random_bundle(rng), 1.5)


def test_diagonal_is_flat_at_sampled_lambdas():
    rep = flatness_sweep(examples.diagonal(), 16)
    assert rep.passed
    assert rep["flat_max"] < 1e-12
    assert len(rep.info["per_lambda"]) == 16


def test_nilpotent_degree_zero_coefficient_is_r1():
    rep = flatness_sweep(examples.nilpotent(), 16)
    assert rep["coefficient_match_R1"] < 1e-12
    assert rep.info["coefficient_norms"]["R1"] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert not rep.verdict("flat_max")
    assert rep.verdict("flat_iff_harmonic_disagreement")


def test_perturbation_grows_linearly():
    base = examples.diagonal()
    values = []
    for eps in (1e-4, 2e-4, 4e-4):
        b = base.with_theta([base.theta[0] + PolyField.constant(eps * N)])
        values.append(flatness_sweep(b, 16)["flat_max"])
    assert values[1] / values[0] == pytest.approx(2, rel=1e-2)
    assert values[2] / values[1] == pytest.approx(2, rel=1e-2)


@given(seeds)
def test_flatness_and_residuals_within_bound_d1(seed):
    b = random_bundle(np.random.default_rng(seed))
    rep = flatness_sweep(b, 32)
    for name in ("expansion_consistency", "bound_upper_defect", "flat_iff_harmonic_disagreement"):
        assert rep.verdict(name), (name, rep[name])
    assert all(rep.verdict(f"coefficient_match_{k}") for k in ("R3", "R2", "R1", "R2_adjoint", "R3_adjoint"))
    flat, hmax = rep["flat_max"], rep.info["hitchin_max"]
    assert hmax <= 3 * flat * (1 + 1e-9) and flat <= 3 * max(rep.info["coefficient_norms"].values()) * (1 + 1e-9)


@given(seeds)
def test_coefficient_matching_d2(seed):
    rng = np.random.default_rng(seed)
    b = random_bundle(rng, d=2, grid=4)
    rep = flatness_sweep(b, 16)
    assert all(rep.verdict(f"coefficient_match_{k}") for k in ("R3", "R2", "R1", "R2_adjoint", "R3_adjoint"))
    assert rep.verdict("expansion_consistency")
    assert rep.verdict("bound_upper_defect") and rep.verdict("bound_lower_defect")
    assert rep.info["bound_factor"] == 5


# -- Hitchin energy ---------------------------------------------------------------------------


def test_zero_higgs_has_zero_energy():
    res = hitchin_energy(examples.elliptic(t=0))
    assert np.abs(res.density).max() == 0 and res.integrals["01"] == 0


@pytest.mark.parametrize("t", [0.7, 1.3j, 0.2 - 0.5j, 2.0, 0.05])
def test_elliptic_energy_integral(t):
    res = hitchin_energy(examples.elliptic(t=t))
    expected = -abs(t) ** 2 / (2 * math.pi)
    assert res.integrals["01"] == pytest.approx(expected, rel=1e-10, abs=1e-15)
    np.testing.assert_allclose(res.density_xy, expected, rtol=1e-12)


def test_elliptic_energy_integrality():
    t = math.sqrt(2 * math.pi)
    assert hitchin_energy(examples.elliptic(t=t)).integrals["01"] == pytest.approx(-1.0, abs=1e-12)
    generic = hitchin_energy(examples.elliptic(t=0.7)).integrals["01"]
    assert abs(generic - round(generic)) > 0.01


def test_energy_scales_with_torus_area():
    b = DiscreteBundle(BaseLattice(1, "torus", (8, 8), tau=0.3 + 2j), 1, (PolyField.constant([[0.7]]),))
    assert hitchin_energy(b).integrals["01"] == pytest.approx(-0.49 / (2 * math.pi) * 2.0, rel=1e-12)


def test_d2_energy_is_closed_on_harmonic_input():
    res = hitchin_energy(examples.harmonic2d())
    assert res.closedness < 1e-8
    assert res.imaginary_part < 1e-12


def test_energy_invariant_under_circle_action_and_gauge(rng):
    b = examples.diagonal()
    base = hitchin_energy(b).density
    rotated = hitchin_energy(circle_action(b, np.exp(0.7j))).density
    gauged = hitchin_energy(gauge_transform(b, random_unitary(rng, 2))).density
    assert np.abs(rotated - base).max() < 1e-12
    assert np.abs(gauged - base).max() < 1e-12


def test_energy_density_is_real_on_random_bundles(rng):
    for _ in range(5):
        assert hitchin_energy(random_bundle(rng)).imaginary_part < 1e-12


# -- circle action and gauge --------------------------------------------------------------------


def test_circle_action_identity_and_composition():
    b = examples.diagonal()
    for f, g in zip(circle_action(b, 1).theta, b.theta):
        np.testing.assert_array_equal(f.terms[0][2], g.terms[0][2])
    twice = circle_action(circle_action(b, 1j), 1j)
    once = circle_action(b, -1)
    for f, g in zip(twice.theta, once.theta):
        np.testing.assert_array_equal(f.terms[0][2], g.terms[0][2])


@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_circle_action_is_a_group_action(a, c):
    b = examples.harmonic2d()
    mu, nu = np.exp(1j * a), np.exp(1j * c)
    left = circle_action(circle_action(b, mu), nu)
    right = circle_action(b, mu * nu)
    for f, g in zip(left.theta, right.theta):
        for (_, _, x), (_, _, y) in zip(f.terms, g.terms):
            assert np.abs(x - y).max() <= 4e-16 * (1 + np.abs(x).max())


def test_circle_action_preserves_harmonicity():
    for name in ("diagonal", "harmonic2d"):
        b = examples.builtin(name)
        base = hitchin_residuals(b)
        rot = hitchin_residuals(circle_action(b, np.exp(2.1j)))
        assert rot.passed
        for k in ("R1", "R2", "R3"):
            assert rot[k] == pytest.approx(base[k], abs=1e-14)


def test_circle_action_rejects_non_unit():
    with pytest.raises(LatticeError):
        circle_action(examples.diagonal(), 2.0)


def test_gauge_transform_preserves_residual_norms(rng):
    b = examples.nilpotent()
    g = gauge_transform(b, random_unitary(rng, 2))
    assert hitchin_residuals(g)["R1"] == pytest.approx(math.sqrt(2), abs=1e-12)


# -- kernel map -------------------------------------------------------------------------------


def test_invertible_higgs_has_no_kernel():
    km = higgs_kernel_map(examples.diagonal())
    assert km.histogram == {0: 64}


def test_zero_higgs_has_full_kernel():
    km = higgs_kernel_map(examples.elliptic(t=0))
    assert km.histogram == {1: 64}


def test_kernel_jumps_on_coordinate_hyperplane():
    b = examples.kernel2d()
    km = higgs_kernel_map(b)
    z1 = b.lattice.coords()[0]
    on_line = np.abs(z1) < 1e-12
    assert np.all(km.dims[on_line] == 2)
    assert np.all(km.dims[~on_line] == 1)
    assert km.generic_dim == 1
    assert len(km.singular_sites) == int(on_line.sum())


# -- non-polarized pairs ------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["diagonal", "harmonic2d"])
def test_polarized_pair_passes_and_matches_circle_connection(name):
    b = examples.builtin(name)
    res = nonpolarized_check(NonPolarizedPair.from_bundle(b))
    assert res.report.passed, res.report.failures
    for k in range(5):
        lam = np.exp(2j * np.pi * k / 5)
        np.testing.assert_allclose(res.formal.evaluate(lam)[0], circle_connection(b, lam), atol=1e-14)


def test_zero_pair_passes():
    lat = patch()
    z = (PolyField.zero(2),)
    assert nonpolarized_check(NonPolarizedPair(lat, 2, z, z, z, z)).report.passed


def test_non_integrable_pair_is_flagged():
    lat = patch()
    z = (PolyField.zero(2),)
    pair = NonPolarizedPair(lat, 2, (PolyField.constant(examples.E12),), z, z, (PolyField.constant(examples.E21),))
    res = nonpolarized_check(pair)
    assert not res.report.verdict("anticommutator")
    assert res.report["anticommutator"] > 0.5
    assert res.report.verdict("Dp_squared") and res.report.verdict("Dpp_squared")
    assert res.report.verdict("lambda_coefficient_match")
    assert res.report.verdict("unmatched_components")


def test_nonpolarized_on_grid_fields(rng):
    lat = patch(grid=6)
    vals = sample_field(PolyField.monomial([[0.3]], (1,)), lat)
    z = (GridField(np.zeros(lat.shape + (1, 1))),)
    pair = NonPolarizedPair(lat, 1, z, z, (GridField(vals),), z)
    rep = nonpolarized_check(pair).report
    assert rep.verdict("lambda_coefficient_match")
