"""Acceptance suite: twelve quantitative criteria, one PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -v -s`` (or execute this file) to see the
lines; they are also echoed into the pytest log through ``capsys.disabled``.
"""

import json
import math

import numpy as np
import pytest
from scipy.special import iv

from loophodge import cli, conventions, examples
from loophodge.config import load
from loophodge.det_line import energy_curvature_relation
from loophodge.harmonic_lattice import flatness_sweep, hitchin_energy, hitchin_residuals
from loophodge.krein_model import (
    KreinSubspace,
    KreinVector,
    check_outgoing,
    commutant_check,
    isometry_iff_sigma,
    krein_form,
    multiplication_operator,
    right_shift,
)
from loophodge.loop_algebra import LaurentMatrix
from loophodge.period_engine import PathSpec, differential_check, monodromy, transport
from loophodge.sampling import random_krein_vector, random_laurent, random_plain_loop, random_sigma_loop
from loophodge.scenarios import run_cocycle, run_embed_hodge

COEFFICIENT_KEYS = ("R3", "R2", "R1", "R2_adjoint", "R3_adjoint")


@pytest.fixture
def announce(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


@pytest.fixture(scope="module")
def cocycle_report():
    return run_cocycle(load({"scenario": "cocycle", "seed": 0}, env={})).report


def diagonal_closed_form(z: complex, n: int) -> np.ndarray:
    """P(z) = diag(exp(-(mu_j z / lam + conj(mu_j z) lam))) via the modified Bessel series."""
    ks = np.arange(-n, n + 1)
    out = np.zeros((2 * n + 1, 2, 2), dtype=complex)
    for j, mu in enumerate(examples.DIAGONAL_MU):
        a = mu * z
        out[:, j, j] = (-1.0) ** ks * iv(np.abs(ks), 2 * abs(a)) * np.exp(-1j * ks * np.angle(a))
    return out


def gap(a: LaurentMatrix, b: LaurentMatrix, n: int = 32) -> float:
    return (a.truncated(-n, n) - b.truncated(-n, n)).max_norm()


def test_criterion_01_cocycle_cross_validation(announce, cocycle_report):
    value = cocycle_report["cross_validation"]
    pairs = cocycle_report.info["pairs"]
    ok = pairs == 200 and value < 1e-12
    announce(1, ok, f"closed form vs 64-point quadrature on {pairs} pairs, window [-8,8]: max diff {value:.2e} < 1e-12")


def test_criterion_02_cocycle_structure(announce, cocycle_report):
    skew = cocycle_report["skew_symmetry"]
    cyc = cocycle_report["cyclic_identity"]
    real = cocycle_report["reality"]
    ok = skew < 1e-11 and cyc < 1e-11 and real < 1e-12
    announce(2, ok, f"skew {skew:.2e}, cyclic {cyc:.2e} (< 1e-11); reality on twisted loops {real:.2e} < 1e-12")


def test_criterion_03_krein_axioms(announce):
    rng = np.random.default_rng(3)
    anti = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 4))
        f, g = random_krein_vector(rng, n, -4, 4), random_krein_vector(rng, n, -4, 4)
        scale = max(1.0, float(np.linalg.norm(f.coeffs) * np.linalg.norm(g.coeffs)))
        anti = max(anti, abs(krein_form(right_shift(f), right_shift(g)) + krein_form(f, g)) / scale)
    model = check_outgoing(KreinSubspace.fourier_nonnegative(3, 4))
    vecs = [KreinVector.unit(1, 0, 1)] + [KreinVector.unit(1, 0, k) for k in range(2, 6)]
    bad = check_outgoing(KreinSubspace.from_vectors(vecs, (1, 5)))
    eig = bad["H_min_eig"]
    ok = anti < 1e-12 and model.passed and not bad.passed and abs(eig + 1) <= 1e-12
    announce(
        3,
        ok,
        f"shift anti-isometry {anti:.2e} < 1e-12 (500 pairs); model outgoing {model.passed}; "
        f"designed failure H-Gram eigenvalue {eig:+.12f}",
    )


def test_criterion_04_classical_hodge_embedding(announce):
    rep = run_embed_hodge(load({"scenario": "embed-hodge", "hodge": {"dims": {"0": 1, "1": 2, "2": 1}}}, env={})).report
    outgoing = all(rep.verdict(k) for k in rep.checks if k.startswith("outgoing."))
    e_min, rot = rep["E_min_eig"], rep["rotation_intertwining"]
    ok = outgoing and e_min >= 1 - 1e-12 and rot < 1e-14 and rep.passed
    announce(4, ok, f"(1,2,1) embedding outgoing {outgoing}; E-Gram min eig {e_min:.15f}; rotation residual {rot:.1e} < 1e-14")


def test_criterion_05_isometry_and_commutant(announce):
    rng = np.random.default_rng(5)
    disagreements = 0
    for i in range(100):
        n = int(rng.integers(1, 4))
        g = random_sigma_loop(rng, n) if i % 2 == 0 else random_plain_loop(rng, n)
        disagreements += int(isometry_iff_sigma(g, seed=i)["verdict_disagreement"])
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        g = random_laurent(rng, n, -2, 2)
        res = commutant_check(multiplication_operator(g, -5, 5), n)
        worst = max(worst, (res.multiplier - g).max_norm() if res.commutes else math.inf)
    ok = disagreements == 0 and worst < 1e-12
    announce(5, ok, f"sigma-fixed vs B-isometric verdict disagreements {disagreements}/100; commutant round trip {worst:.2e} < 1e-12")


def test_criterion_06_harmonicity_and_flatness(announce):
    diag = flatness_sweep(examples.diagonal(), 16)
    nil = flatness_sweep(examples.nilpotent(), 16)
    r1 = hitchin_residuals(examples.nilpotent())["R1"]
    match = max(rep[f"coefficient_match_{k}"] for rep in (diag, nil) for k in COEFFICIENT_KEYS)
    ok = diag["flat_max"] < 1e-12 and abs(r1 - math.sqrt(2)) <= 1e-12 and not nil.verdict("flat_max") and match < 1e-12
    announce(
        6,
        ok,
        f"diagonal flat at 16 lambdas ({diag['flat_max']:.1e}); nilpotent rejected with R1 = {r1:.15f}; "
        f"coefficient match {match:.1e}",
    )


def test_criterion_07_hitchin_energy(announce):
    err = 0.0
    for t in (0.7, 1.1 - 0.4j, 0.3j):
        b = examples.elliptic(t=t)
        got = abs(hitchin_energy(b).integrals["01"])
        err = max(err, abs(got - abs(t) ** 2 / (2 * math.pi) * b.lattice.area()))
    # |t|^2 = 2 pi k / 4: integral is an integer exactly when 4 | k
    integral_ok = True
    for k in range(1, 13):
        val = hitchin_energy(examples.elliptic(t=math.sqrt(2 * math.pi * k / 4))).integrals["01"]
        is_int = abs(val - round(val)) < 1e-10
        integral_ok &= is_int == (k % 4 == 0)
    scaling = 0.0
    for s in (0.25, 0.5, 1.0, 2.0, 4.0):
        val = hitchin_energy(examples.elliptic(t=s * 0.7)).integrals["01"]
        expected = -((s * 0.7) ** 2) / (2 * math.pi)
        scaling = max(scaling, abs(val - expected) / abs(expected))
    closed = hitchin_energy(examples.harmonic2d()).closedness
    ok = err < 1e-10 and integral_ok and scaling < 1e-10 and closed < 1e-8
    announce(
        7,
        ok,
        f"|integral| vs |t|^2/(2 pi) area {err:.1e}; integrality exactly on 2 pi Z: {integral_ok}; "
        f"scaling rel err {scaling:.1e}; d=2 closedness {closed:.1e}",
    )


def test_criterion_08_period_engine(announce):
    b = examples.diagonal()
    lat = b.lattice
    z = 0.6 + 0.8j
    res = transport(b, PathSpec.segment(0, z, lattice=lat), window=12, auto_expand=False)
    closed = float(np.abs(res.g.coeffs - diagonal_closed_form(z, 12)).max())
    sigma = res.sigma_residual

    square = PathSpec(np.array([0.3, 0.6, 0.6 + 0.3j, 0.3 + 0.3j, 0.3]), 0.02, lat)
    contract = gap(monodromy(b, square), LaurentMatrix.identity(2))
    ga = monodromy(b, PathSpec.segment(0, 1, lattice=lat))
    gb = monodromy(b, PathSpec.segment(0, 1j, lattice=lat))
    commute = gap(ga @ gb, gb @ ga)

    exact = diagonal_closed_form(1, 12)

    def step_err(m):
        g = transport(b, PathSpec.segment(0, 1, lattice=lat), window=12, auto_expand=False, steps=m).g
        return float(np.abs(g.coeffs - exact).max())

    ratio = step_err(4) / step_err(8)
    path = PathSpec.segment(0, 1, lattice=lat)
    w8 = transport(b, path, window=8, tol=1.0, auto_expand=False).g
    w16 = transport(b, path, window=16, tol=1.0, auto_expand=False).g
    stab = gap(w8, w16)
    ok = closed < 1e-8 and sigma < 1e-10 and contract < 1e-8 and commute < 1e-8 and ratio >= 8 and stab < 1e-10
    announce(
        8,
        ok,
        f"closed form {closed:.1e}; sigma {sigma:.1e}; contractible {contract:.1e}; commutator {commute:.1e}; "
        f"step ratio {ratio:.1f}; window 8->16 {stab:.1e}",
    )


def test_criterion_09_period_map_structure(announce):
    worst = {"horizontality": 0.0, "holomorphy": 0.0, "identification": 0.0}
    for bundle, site in ((examples.diagonal(), 0.3 + 0.2j), (examples.diagonal(), -0.25 + 0.4j), (examples.elliptic(), 0.4 + 0.1j)):
        rep = differential_check(bundle, site, spacing=1e-2)
        for k in worst:
            worst[k] = max(worst[k], rep[k])
    ok = all(v < 1e-6 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    announce(9, ok, f"{detail} (all < 1e-6 at spacing 1e-2)")


def test_criterion_10_curvature_definiteness(announce, cocycle_report):
    rep = cocycle_report
    changes, smallest, law = rep["horizontal.sign_changes"], rep["horizontal.min_abs"], rep["horizontal.magnitude_law"]
    sign = rep.info["horizontal.sign"]
    c = rep.info["horizontal.constant"]
    ok = changes == 0 and smallest > 1e-12 and law < 1e-10 and sign == conventions.HORIZONTAL_SIGN
    announce(
        10,
        ok,
        f"100 directions, common sign {sign:+d}; min |i beta| {smallest:.3f}; c = {c} by quadrature, law residual {law:.1e}",
    )


def test_criterion_11_energy_curvature_relation(announce):
    ratios = []
    cases = [(examples.elliptic(t=0.7), s) for s in (0.1 + 0.1j, 0.4 + 0.3j)]
    cases += [(examples.elliptic(t=1.3j), 0.2 + 0.5j)]
    cases += [(examples.diagonal(), s) for s in (0.3 + 0.2j, -0.25 + 0.4j)]
    for bundle, site in cases:
        ratios.append(energy_curvature_relation(bundle, site).info["ratio"])
    ratios = np.array(ratios)
    spread = float(np.ptp(ratios) / abs(ratios.mean()))
    ok = spread < 1e-5
    announce(11, ok, f"ratio {ratios.mean():.8f} over {len(ratios)} rank-1/rank-2 cases; relative spread {spread:.1e} < 1e-5")


def test_criterion_12_determinism(announce, tmp_path):
    identical = True
    for scenario in cli.SCENARIOS:
        texts = []
        for run in range(2):
            out = tmp_path / f"{scenario}-{run}.json"
            cli.main([scenario, "--seed", "11", "--out", str(out), "--quiet"])
            data = json.loads(out.read_text())
            data.pop("runtime_ms")
            texts.append(json.dumps(data, sort_keys=True))
        identical &= texts[0] == texts[1]
    announce(12, identical, f"identical reports modulo runtime for all {len(cli.SCENARIOS)} scenario kinds")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
