"""Named residuals with tolerances and verdicts, shared by every module."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from . import __version__
from .conventions import LEDGER_VERSION, ledger


@dataclass(frozen=True)
class Check:
    """One residual compared against a tolerance.

    ``kind`` is ``"max"`` when the value must not exceed ``tol`` and ``"min"``
    when it must be at least ``tol``.
    """

    value: float
    tol: float
    kind: str = "max"

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.kind == "max":
            return self.value <= self.tol
        if self.kind == "min":
            return self.value >= self.tol
        raise ValueError(f"unknown check kind {self.kind!r}")


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


@dataclass
class Report:
    scenario: str
    checks: dict[str, Check] = field(default_factory=dict)
    info: dict[str, Any] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    runtime_ms: float | None = None

    def add(self, name: str, value: float, tol: float, kind: str = "max") -> Check:
        check = Check(float(value), float(tol), kind)
        self.checks[name] = check
        return check

    def note(self, name: str, value: Any) -> None:
        self.info[name] = value

    def merge(self, other: "Report", prefix: str | None = None) -> "Report":
        pre = f"{prefix or other.scenario}."
        for name, check in other.checks.items():
            self.checks[pre + name] = check
        for name, value in other.info.items():
            self.info[pre + name] = value
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def __getitem__(self, name: str) -> float:
        return self.checks[name].value

    def verdict(self, name: str) -> bool:
        return self.checks[name].passed

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "tool_version": __version__,
            "ledger_version": LEDGER_VERSION,
            "ledger": ledger(),
            "params": _plain(self.params),
            "residuals": {k: c.value for k, c in self.checks.items()},
            "tolerances": {k: c.tol for k, c in self.checks.items()},
            "comparisons": {k: c.kind for k, c in self.checks.items()},
            "verdicts": {k: c.passed for k, c in self.checks.items()},
            "info": _plain(self.info),
            "passed": self.passed,
            "runtime_ms": self.runtime_ms,
        }
        return out

    def to_yaml(self) -> str:
        buf = io.StringIO()
        yaml.safe_dump(self.to_dict(), buf, sort_keys=False, default_flow_style=None, width=100)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary_lines(self) -> list[str]:
        lines = []
        for name, c in self.checks.items():
            op = "<=" if c.kind == "max" else ">="
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status}  {name}: {c.value:.3e} {op} {c.tol:.1e}")
        return lines
