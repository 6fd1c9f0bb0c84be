"""Scenario configuration: schema validation, YAML/JSON loading and bundle construction.

A configuration is a mapping validated against ``schema/scenario.schema.json``.
The same schema is accepted in YAML (human-friendly) and JSON (machine-friendly)
syntax.  Complex numbers are written as a real number, a Python-style literal
string such as ``"0.2+0.1j"``, or an object ``{re: ..., im: ...}``.
"""

from __future__ import annotations

import copy
import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .examples import builtin
from .harmonic_lattice import BaseLattice, DiscreteBundle, PolyField

SCENARIOS = ("verify", "period", "energy", "cocycle", "embed-hodge", "fuzz")
TOL_ENV = "LOOPHODGE_TOL"
BUILTIN_PREFIX = "builtin:"

DEFAULT_NUMERICS = {
    "window": 12,
    "tol": 1e-10,
    "lambda_samples": 16,
    "spacing": 1e-2,
    "max_step": 0.02,
    "quadrature_points": 64,
}

_FLOAT_RE = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")


class ConfigError(ValueError):
    """Raised for anything wrong with a configuration before numerics start."""


def schema() -> dict:
    text = resources.files("loophodge").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def _coerce_floats(obj: Any) -> Any:
    # YAML 1.1 reads "1e-8" (no dot) as a string
    if isinstance(obj, dict):
        return {k: _coerce_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_coerce_floats(v) for v in obj]
    if isinstance(obj, str) and _FLOAT_RE.match(obj.strip()):
        return float(obj)
    return obj


def parse_text(text: str, fmt: str | None = None) -> dict:
    """Parse YAML or JSON text; ``fmt`` is ``"json"``, ``"yaml"`` or ``None`` to sniff."""
    try:
        if fmt == "json" or (fmt is None and text.lstrip().startswith("{")):
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    return _coerce_floats(data)


def builtin_configs() -> list[str]:
    folder = resources.files("loophodge").joinpath("configs")
    return sorted(p.name for p in folder.iterdir() if p.name.endswith((".yaml", ".json")))


def read_config(path: str | os.PathLike) -> dict:
    """Load a config file, or a packaged one via ``builtin:<file name>``."""
    path = str(path)
    if path.startswith(BUILTIN_PREFIX):
        name = path[len(BUILTIN_PREFIX):]
        if name not in builtin_configs():
            raise ConfigError(f"no packaged config {name!r}; available: {builtin_configs()}")
        text = resources.files("loophodge").joinpath("configs", name).read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
    fmt = "json" if path.endswith(".json") else "yaml" if path.endswith((".yaml", ".yml")) else None
    return parse_text(text, fmt)


def validate(data: dict) -> None:
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {where}: {exc.message}") from None


def to_complex(value) -> complex:
    if isinstance(value, dict):
        return complex(value["re"], value["im"])
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"bad complex literal {value!r}") from None
    return complex(value)


def to_matrix(rows) -> np.ndarray:
    mat = np.array([[to_complex(v) for v in row] for row in rows], dtype=complex)
    if mat.ndim != 2:
        raise ConfigError("matrix rows must have equal length")
    return mat


def to_point(value, d: int) -> np.ndarray:
    items = value if isinstance(value, list) else [value]
    if len(items) != d:
        raise ConfigError(f"point {value!r} must have {d} complex coordinate(s)")
    return np.array([to_complex(v) for v in items], dtype=complex)


def _field(spec: dict, d: int, rank: int) -> PolyField:
    if "constant" in spec:
        out = PolyField.constant(to_matrix(spec["constant"]), d)
    else:
        out = PolyField.zero(rank, d)
        for term in spec["terms"]:
            alpha = term.get("alpha", [0] * d)
            beta = term.get("beta", [0] * d)
            if len(alpha) != d or len(beta) != d:
                raise ConfigError(f"multi-indices must have length {d}")
            out = out + PolyField.monomial(to_matrix(term["coeff"]), alpha, beta)
    if out.r != rank:
        raise ConfigError(f"field has rank {out.r}, bundle rank is {rank}")
    return out


def _scalar_or_list(value, convert):
    if isinstance(value, list):
        return tuple(convert(v) for v in value)
    return convert(value)


def build_bundle(spec: dict) -> DiscreteBundle:
    try:
        if "example" in spec:
            params = {k: (to_complex(v) if isinstance(v, (str, dict)) else v) for k, v in spec.get("params", {}).items()}
            if "mu" in params:
                params["mu"] = tuple(to_complex(v) for v in params["mu"])
            return builtin(spec["example"], **params)
        lat_spec = spec["lattice"]
        d = lat_spec["d"]
        kwargs = {}
        if "spacing" in lat_spec:
            kwargs["spacing"] = _scalar_or_list(lat_spec["spacing"], float)
        if "tau" in lat_spec:
            kwargs["tau"] = _scalar_or_list(lat_spec["tau"], to_complex)
        if "origin" in lat_spec:
            kwargs["origin"] = _scalar_or_list(lat_spec["origin"], to_complex)
        lattice = BaseLattice(d, lat_spec["topology"], tuple(lat_spec["shape"]), **kwargs)
        rank = spec["rank"]
        theta = tuple(_field(f, d, rank) for f in spec["theta"])
        a_z = tuple(_field(f, d, rank) for f in spec["a_z"]) if "a_z" in spec else None
        a_zbar = tuple(_field(f, d, rank) for f in spec["a_zbar"]) if "a_zbar" in spec else None
        h = _field(spec["h"], d, rank) if "h" in spec else None
        return DiscreteBundle(
            lattice,
            rank,
            theta,
            a_z=a_z,
            a_zbar=a_zbar,
            h=h,
            metric_connection=spec.get("metric_connection", True),
            name=spec.get("name", "custom"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot build bundle: {exc}") from None


@dataclass
class ScenarioConfig:
    """A validated configuration with defaults filled in."""

    raw: dict
    scenario: str
    numerics: dict = field(default_factory=dict)
    seed: int = 0

    @property
    def id(self) -> str:
        return self.raw.get("id", self.scenario)

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def bundle(self) -> DiscreteBundle:
        if "bundle" not in self.raw:
            raise ConfigError(f"scenario {self.scenario!r} needs a bundle section")
        return build_bundle(self.raw["bundle"])

    def echo(self) -> dict:
        out = copy.deepcopy(self.raw)
        out["scenario"] = self.scenario
        out["seed"] = self.seed
        out["numerics"] = dict(self.numerics)
        return out


def load(
    data: dict,
    scenario: str | None = None,
    overrides: dict | None = None,
    env: dict | None = None,
) -> ScenarioConfig:
    """Validate ``data`` and merge overrides; precedence is flags > config > env > defaults."""
    data = copy.deepcopy(data)
    validate(data)
    kind = data.get("scenario", scenario)
    if kind is None:
        raise ConfigError("no scenario kind given")
    if scenario is not None and kind != scenario:
        raise ConfigError(f"config describes a {kind!r} scenario, not {scenario!r}")
    data["scenario"] = kind
    numerics = dict(DEFAULT_NUMERICS)
    env = os.environ if env is None else env
    if env.get(TOL_ENV):
        try:
            numerics["tol"] = float(env[TOL_ENV])
        except ValueError:
            raise ConfigError(f"{TOL_ENV}={env[TOL_ENV]!r} is not a number") from None
        if numerics["tol"] <= 0:
            raise ConfigError(f"{TOL_ENV} must be positive")
    numerics.update(data.get("numerics", {}))
    seed = data.get("seed", 0)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            seed = value
        else:
            numerics[key] = value
    data["numerics"] = numerics
    data["seed"] = seed
    validate(data)
    return ScenarioConfig(data, kind, numerics, seed)
