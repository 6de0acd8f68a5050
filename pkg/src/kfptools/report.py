"""Structured numeric outcome of an inequality probe."""

from dataclasses import dataclass, field
import json

import numpy as np


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    return x


@dataclass(frozen=True)
class ProbeReport:
    """One probe outcome: LHS/RHS of an inequality, their ratio, witnesses.

    ``passed`` is True/False for structural checks and the string
    "report-only" for probes whose constants the theory does not pin down.
    ``details`` carries probe-specific numbers (empirical constants, sample
    counts, per-slice data); it is flattened into the JSON output.
    """

    probe: str
    lhs: float = 0.0
    rhs: float = 0.0
    ratio: float = 0.0
    witnesses: list = field(default_factory=list)
    passed: object = "report-only"
    details: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "probe": self.probe,
            "lhs": _jsonable(self.lhs),
            "rhs": _jsonable(self.rhs),
            "ratio": _jsonable(self.ratio),
            "witnesses": _jsonable(self.witnesses),
            "pass": _jsonable(self.passed),
        }
        for k, v in self.details.items():
            d.setdefault(k, _jsonable(v))
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def make_report(probe, lhs, rhs, passed="report-only", witnesses=None, **details):
    lhs = float(lhs)
    rhs = float(rhs)
    ratio = lhs / rhs if rhs > 0 else float("inf") if lhs > 0 else 0.0
    return ProbeReport(probe=probe, lhs=lhs, rhs=rhs, ratio=ratio,
                       witnesses=list(witnesses or []), passed=passed,
                       details=details)
