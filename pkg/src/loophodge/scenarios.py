"""Scenario runners behind the command-line subcommands.

Each runner takes a validated :class:`ScenarioConfig` and returns a
:class:`Report` together with CSV tables ``{file name: (header, rows)}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import conventions
from .config import ConfigError, ScenarioConfig, to_point
from .det_line import (
    calibrate_horizontal_constant,
    cocycle,
    cocycle_identity,
    energy_curvature_relation,
    horizontal_definiteness,
    horizontal_trace,
    omega,
    reality_check,
)
from .harmonic_lattice import (
    DiscreteBundle,
    flatness_sweep,
    harmonic_tolerance,
    higgs_kernel_map,
    hitchin_energy,
    hitchin_fields,
    hitchin_residuals,
    twoform_site_norm,
)
from .krein_model import (
    GradedHodgeInput,
    KreinSubspace,
    check_outgoing,
    embed_classical_hodge,
    intertwine_check,
    isometry_iff_sigma,
    krein_form,
    right_shift,
    virtual_dimension,
)
from .loop_algebra import LaurentMatrix, decompose_sigma_plus, membership_residual
from .period_engine import PathSpec, coefficient_decay, differential_check, transport
from .report import Report
from .sampling import (
    random_horizontal,
    random_krein_vector,
    random_laurent,
    random_plain_loop,
    random_sigma,
    random_sigma_loop,
)

Table = tuple[list[str], list[list]]


@dataclass
class Outcome:
    report: Report
    tables: dict[str, Table] = field(default_factory=dict)


def _coord_header(d: int) -> list[str]:
    out = []
    for i in range(1, d + 1):
        out += [f"x{i}", f"y{i}"]
    return out


def _site_coords(bundle: DiscreteBundle) -> np.ndarray:
    z = bundle.lattice.coords().reshape(bundle.d, -1)
    cols = []
    for i in range(bundle.d):
        cols += [z[i].real, z[i].imag]
    return np.stack(cols, axis=1)


def _bundle_tol(cfg: ScenarioConfig, bundle: DiscreteBundle) -> float:
    return harmonic_tolerance(bundle, cfg.numerics["tol"])


# -- verify ---------------------------------------------------------------------------


def run_verify(cfg: ScenarioConfig) -> Outcome:
    bundle = cfg.bundle()
    tol = _bundle_tol(cfg, bundle)
    rep = Report(cfg.id)
    rep.note("bundle", bundle.name)
    rep.merge(hitchin_residuals(bundle, tol=tol), "hitchin")
    rep.merge(flatness_sweep(bundle, cfg.numerics["lambda_samples"], tol=tol), "flatness")

    energy = hitchin_energy(bundle)
    rep.add("energy.imaginary_part", energy.imaginary_part, 1e-12 * (1 + bundle.magnitude()) ** 2)
    rep.note("energy.integrals", energy.integrals)
    harmonic = rep.info["flatness.harmonic"]
    if energy.closedness is not None:
        if harmonic:
            rep.add("energy.closedness", energy.closedness, 1e-8)
        else:
            rep.note("energy.closedness", energy.closedness)

    kernels = higgs_kernel_map(bundle)
    rep.note("kernel.histogram", kernels.histogram)
    rep.note("kernel.generic_dim", kernels.generic_dim)
    rep.note("kernel.singular_sites", len(kernels.singular_sites))

    fields = hitchin_fields(bundle)
    header = _coord_header(bundle.d) + ["R1", "R2", "R3", "energy_x1y1", "kernel_dim"]
    cols = [
        _site_coords(bundle),
        twoform_site_norm(fields.r1).reshape(-1, 1),
        twoform_site_norm(fields.r2).reshape(-1, 1),
        twoform_site_norm(fields.r3).reshape(-1, 1),
        energy.density_xy.reshape(-1, 1),
        kernels.dims.reshape(-1, 1),
    ]
    rows = np.hstack(cols).tolist()
    return Outcome(rep, {"fields.csv": (header, rows)})


# -- period ---------------------------------------------------------------------------


def _default_paths(bundle: DiscreteBundle) -> list[tuple[str, np.ndarray]]:
    lat = bundle.lattice
    d = bundle.d
    if lat.periodic:
        out = []
        for i in range(d):
            for name, step in (("a", 1.0), ("b", lat.tau[i])):
                w = np.zeros((2, d), dtype=complex)
                w[1, i] = step
                out.append((f"generator_{name}{i + 1}", w))
        square = np.zeros((5, d), dtype=complex)
        square[:, 0] = [0, 0.5, 0.5 + 0.5 * lat.tau[0], 0.5 * lat.tau[0], 0]
        out.append(("contractible", square))
        return out
    h = 0.5
    z0 = lat.coords().reshape(d, -1)[:, 0]
    square = np.tile(z0, (5, 1))
    square[:, 0] += np.array([0, h, h + 1j * h, 1j * h, 0])
    return [("contractible", square)]


def _default_sites(bundle: DiscreteBundle) -> list[np.ndarray]:
    lat = bundle.lattice
    if lat.periodic:
        return [np.full(bundle.d, 0.3 + 0.2j)]
    z = lat.coords().reshape(bundle.d, -1)
    center = np.array([z[i].mean() for i in range(bundle.d)])
    return [center]


def _paths(cfg: ScenarioConfig, bundle: DiscreteBundle) -> list[tuple[str, PathSpec]]:
    max_step = cfg.numerics["max_step"]
    if "paths" not in cfg.raw:
        return [(name, PathSpec(w, max_step, None)) for name, w in _default_paths(bundle)]
    out = []
    for i, spec in enumerate(cfg.raw["paths"]):
        w = np.array([to_point(p, bundle.d) for p in spec["waypoints"]])
        out.append((spec.get("name", f"path{i}"), PathSpec(w, spec.get("max_step", max_step), None)))
    return out


def _sites(cfg: ScenarioConfig, bundle: DiscreteBundle) -> list[np.ndarray]:
    if "sites" not in cfg.raw:
        return _default_sites(bundle)
    return [to_point(s, bundle.d) for s in cfg.raw["sites"]]


def _returns_to_start(path: PathSpec) -> bool:
    return bool(np.allclose(path.waypoints[-1], path.waypoints[0], atol=1e-12))


def _is_generator(path: PathSpec, bundle: DiscreteBundle) -> bool:
    spec = PathSpec(path.waypoints, path.max_step, bundle.lattice) if bundle.lattice.periodic else path
    return spec.closed and not _returns_to_start(path)


def run_period(cfg: ScenarioConfig) -> Outcome:
    bundle = cfg.bundle()
    if not bundle.analytic:
        raise ConfigError("period scenarios need analytic (polynomial) fields")
    window = cfg.numerics["window"]
    tol = cfg.numerics["tol"]
    rep = Report(cfg.id)
    rep.note("bundle", bundle.name)
    decay_rows = []
    generators = []
    paths = _paths(cfg, bundle)
    for name, path in paths:
        res = transport(bundle, path, window, tol)
        rep.add(f"{name}.sigma_residual", res.sigma_residual, 1e-10)
        rep.note(f"{name}.window", res.window)
        rep.note(f"{name}.steps", res.steps)
        rep.note(f"{name}.band_max", res.band_max)
        if _returns_to_start(path):
            dev = float(np.linalg.norm((res.g - LaurentMatrix.identity(bundle.rank)).coeffs))
            rep.add(f"{name}.contractible_monodromy", dev, 1e-8)
        elif _is_generator(path, bundle):
            generators.append((name, res.g))
        if not _returns_to_start(path):
            # a contractible loop ends near I, whose profile is pure noise
            decay = coefficient_decay(res)
            rep.note(f"{name}.decay_rate", decay.fitted_rate)
            rep.note(f"{name}.super_exponential", decay.super_exponential)
            rep.add(f"{name}.sub_exponential", float(decay.sub_exponential), 0.0)
        for k, v in enumerate(res.decay_profile):
            decay_rows.append([name, k, float(v)])
    for i in range(len(generators)):
        for j in range(i + 1, len(generators)):
            (na, a), (nb, b) = generators[i], generators[j]
            comm = float(np.linalg.norm((a @ b - b @ a).coeffs))
            rep.add(f"commutator.{na}.{nb}", comm, 1e-8)

    # window stability on the first path
    name, path = paths[0]
    n = transport(bundle, path, window, tol).window
    small = transport(bundle, path, n, tol, auto_expand=False).g
    large = transport(bundle, path, 2 * n, tol, auto_expand=False).g
    rep.note("window_stability_windows", [n, 2 * n])
    rep.add("window_stability", float(np.abs(large.padded(-n, n) - small.padded(-n, n)).max()), 1e-10)

    for i, site in enumerate(_sites(cfg, bundle)):
        sub = differential_check(
            bundle, site, window, cfg.numerics["spacing"], max_step=cfg.numerics["max_step"]
        )
        rep.merge(sub, f"site{i}")
    return Outcome(rep, {"decay.csv": (["path", "degree", "norm"], decay_rows)})


# -- energy ---------------------------------------------------------------------------


def run_energy(cfg: ScenarioConfig) -> Outcome:
    bundle = cfg.bundle()
    rep = Report(cfg.id)
    rep.note("bundle", bundle.name)
    res = hitchin_energy(bundle)
    scale = (1 + bundle.magnitude()) ** 2
    rep.add("imaginary_part", res.imaginary_part, 1e-12 * scale)
    rep.note("integrals", res.integrals)
    harmonic = hitchin_residuals(bundle, tol=_bundle_tol(cfg, bundle))
    rep.note("harmonic", harmonic.passed)
    if res.closedness is not None:
        if harmonic.passed:
            rep.add("closedness", res.closedness, 1e-8)
        else:
            rep.note("closedness", res.closedness)
    if bundle.d == 1 and bundle.rank == 1 and bundle.lattice.periodic:
        t2 = abs(complex(bundle.theta[0].terms[0][2][0, 0])) ** 2 if bundle.theta[0].terms else 0.0
        expected = -t2 / (2 * math.pi) * bundle.lattice.area()
        rep.note("integral_expected", expected)
        rep.add("integral_error", abs(res.integrals["01"] - expected), 1e-10 * max(1.0, abs(expected)))
    if bundle.analytic and harmonic.passed:
        ratios = []
        for i, site in enumerate(_sites(cfg, bundle)):
            sub = energy_curvature_relation(bundle, site, cfg.numerics["window"], cfg.numerics["spacing"])
            rep.merge(sub, f"relation.site{i}")
            if sub.info.get("ratio") is not None:
                ratios.append(sub.info["ratio"])
        if ratios:
            rep.note("relation.ratio_mean", float(np.mean(ratios)))
            rep.add("relation.ratio_spread", float(np.ptp(ratios)) / abs(float(np.mean(ratios))), 1e-5)
    header = _coord_header(bundle.d)
    m = 2 * bundle.d
    names = [f"beta_{a}{b}" for a in range(m) for b in range(a + 1, m)]
    comps = [res.density[a, b].reshape(-1, 1) for a in range(m) for b in range(a + 1, m)]
    rows = np.hstack([_site_coords(bundle)] + comps).tolist()
    return Outcome(rep, {"energy.csv": (header + names, rows)})


# -- cocycle --------------------------------------------------------------------------


def _random_n(rng: np.random.Generator, max_n: int) -> int:
    return int(rng.integers(1, max_n + 1))


def run_cocycle(cfg: ScenarioConfig) -> Outcome:
    sec = cfg.section("cocycle")
    pairs = sec.get("pairs", 200)
    w = sec.get("window", 8)
    max_n = sec.get("max_n", 4)
    horizontal = sec.get("horizontal", 100)
    points = cfg.numerics["quadrature_points"]
    rng = np.random.default_rng(cfg.seed)
    rep = Report(cfg.id)
    rep.note("pairs", pairs)

    cross = skew = ident = displayed = real = bilin = 0.0
    for _ in range(pairs):
        n = _random_n(rng, max_n)
        a, b = random_laurent(rng, n, -w, w), random_laurent(rng, n, -w, w)
        val = cocycle(a, b, mode="both", points=points)
        cross = max(cross, val.difference)

        x, y, z = (random_laurent(rng, n, -3, 3) for _ in range(3))
        skew = max(skew, abs(omega(x, y) + omega(y, x)))
        s, t = complex(rng.normal(), rng.normal()), complex(rng.normal(), rng.normal())
        bilin = max(bilin, abs(omega(x * s + y * t, z) - s * omega(x, z) - t * omega(y, z)))
        res = cocycle_identity(x, y, z)
        ident = max(ident, res.standard)
        displayed = max(displayed, res.displayed)

        u, v = random_sigma(rng, n, 3), random_sigma(rng, n, 3)
        real = max(real, reality_check(u, v, "lambda_sigma"))
    rep.add("cross_validation", cross, 1e-12)
    rep.add("skew_symmetry", skew, 1e-12)
    rep.add("bilinearity", bilin, 1e-11)
    rep.add("cyclic_identity", ident, 1e-11)
    rep.note("displayed_pattern_residual", displayed)
    rep.add("reality", real, 1e-12)
    if pairs:
        bad = random_laurent(rng, 2, -2, 2)
        rep.note("reality_negative_control", reality_check(bad, bad.adjoint() * 1j, "lambda_sigma", strict=False))

    sign, c = calibrate_horizontal_constant()
    rep.note("horizontal.sign", sign)
    rep.note("horizontal.constant", c)
    rep.add("horizontal.sign_vs_ledger", float(sign != conventions.HORIZONTAL_SIGN), 0.0)
    rep.add("horizontal.constant_vs_ledger", abs(c - conventions.HORIZONTAL_CONSTANT), 1e-12)
    rows = []
    signs = set()
    smallest = math.inf
    law = 0.0
    for i in range(horizontal):
        f = random_horizontal(rng, _random_n(rng, max_n))
        value = horizontal_definiteness(f)
        trace = horizontal_trace(f)
        signs.add(int(np.sign(value)))
        smallest = min(smallest, abs(value))
        law = max(law, abs(abs(value) - c * trace))
        rows.append([i, f.n, value, trace])
    if horizontal:
        rep.add("horizontal.sign_changes", float(len(signs) - 1), 0.0)
        rep.add("horizontal.min_abs", smallest, 1e-12, "min")
        rep.add("horizontal.magnitude_law", law, 1e-10)
    return Outcome(rep, {"horizontal.csv": (["index", "n", "i_beta", "trace"], rows)})


# -- embed-hodge ----------------------------------------------------------------------


def run_embed_hodge(cfg: ScenarioConfig) -> Outcome:
    sec = cfg.section("hodge")
    dims = {int(k): int(v) for k, v in sec.get("dims", {"0": 1, "1": 2, "2": 1}).items()}
    data = GradedHodgeInput.standard(dims)
    ws = data.weights
    if not ws:
        raise ConfigError("hodge.dims describes an empty structure")
    window = tuple(sec.get("window", [-max(ws) - 1, -min(ws) + 2]))
    rep = Report(cfg.id)
    try:
        W = embed_classical_hodge(data, window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = check_outgoing(W)
    rep.merge(out, "outgoing")
    eigs = out.info.get("H_eigs", [])
    rep.add("E_min_eig", float(min(eigs)) if eigs else -math.inf, 1 - 1e-12, "min")
    rep.add("virtual_dimension_defect", abs(virtual_dimension(W) - data.total_dim), 0.0)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    vecs = W.vectors()
    for _ in range(sec.get("rotations", 8)):
        mu = np.exp(2j * math.pi * rng.random())
        worst = max(worst, intertwine_check(mu, vecs))
    rep.add("rotation_intertwining", worst, 1e-14)

    ref = KreinSubspace.fourier_nonnegative(data.total_dim, 3, data.form())
    rep.note("reference_virtual_dimension", virtual_dimension(ref))
    rows = [[p, dims[p], (-1) ** p] for p in sorted(dims)]
    return Outcome(rep, {"hodge.csv": (["weight", "dim", "form_sign"], rows)})


# -- fuzz -----------------------------------------------------------------------------


def run_fuzz(cfg: ScenarioConfig) -> Outcome:
    sec = cfg.section("fuzz")
    iterations = sec.get("iterations", 100)
    n_max = sec.get("n", 3)
    w = sec.get("window", 3)
    rng = np.random.default_rng(cfg.seed)
    rep = Report(cfg.id)
    rep.note("iterations", iterations)
    worst = {"cyclic_identity": 0.0, "anti_isometry": 0.0, "verdict_disagreement": 0.0, "decomposition": 0.0, "sigma_part_residual": 0.0}
    rows = []
    for it in range(iterations):
        n = _random_n(rng, n_max)
        x, y, z = (random_laurent(rng, n, -w, w) for _ in range(3))
        ident = cocycle_identity(x, y, z).standard

        f, g = random_krein_vector(rng, n, -w, w), random_krein_vector(rng, n, -w, w)
        anti = abs(krein_form(right_shift(f), right_shift(g)) + krein_form(f, g))
        anti /= max(1.0, float(np.linalg.norm(f.coeffs) * np.linalg.norm(g.coeffs)))

        seed = int(rng.integers(2**31))
        loop = random_sigma_loop(rng, n) if it % 2 == 0 else random_plain_loop(rng, n)
        disagree = isometry_iff_sigma(loop, seed=seed)["verdict_disagreement"]

        a = random_laurent(rng, n, -w, w)
        sig, plus = decompose_sigma_plus(a)
        recon = float(np.abs((sig + plus).padded(-w, w) - a.padded(-w, w)).max())
        sres = membership_residual(sig, "sigma_algebra")
        for key, val in (
            ("cyclic_identity", ident),
            ("anti_isometry", anti),
            ("verdict_disagreement", disagree),
            ("decomposition", recon),
            ("sigma_part_residual", sres),
        ):
            worst[key] = max(worst[key], float(val))
        rows.append([it, n, ident, anti, disagree, recon, sres])
    rep.add("cyclic_identity", worst["cyclic_identity"], 1e-11)
    rep.add("anti_isometry", worst["anti_isometry"], 1e-12)
    rep.add("verdict_disagreement", worst["verdict_disagreement"], 0.0)
    rep.add("decomposition", worst["decomposition"], 1e-12)
    rep.add("sigma_part_residual", worst["sigma_part_residual"], 1e-12)
    header = ["iteration", "n", "cyclic_identity", "anti_isometry", "verdict_disagreement", "decomposition", "sigma_part_residual"]
    return Outcome(rep, {"fuzz.csv": (header, rows)})


RUNNERS = {
    "verify": run_verify,
    "period": run_period,
    "energy": run_energy,
    "cocycle": run_cocycle,
    "embed-hodge": run_embed_hodge,
    "fuzz": run_fuzz,
}
