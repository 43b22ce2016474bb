from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

PASS, FAIL, INCONCLUSIVE, INFORMATIONAL = "pass", "fail", "inconclusive", "informational"

MAX_OFFENDERS = 10


@dataclass
class DiagnosticsReport:
    """Outcome of one numeric check.

    ``max_residual`` is set for residual checks and ``slopes`` for checks that
    fit or track ratios; ``extra`` carries check-specific fields.
    """

    check: str
    params: dict[str, Any]
    samples: int
    tolerance: float | None
    verdict: str
    max_residual: float | None = None
    slopes: list[float] | None = None
    offenders: list[dict[str, Any]] = field(default_factory=list)
    message: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"check": self.check, "params": _jsonable(self.params), "samples": self.samples}
        if self.max_residual is not None:
            out["max_residual"] = float(self.max_residual)
        if self.slopes is not None:
            out["slopes"] = [float(s) for s in self.slopes]
        out["tolerance"] = None if self.tolerance is None else float(self.tolerance)
        out["verdict"] = self.verdict
        out["offenders"] = _jsonable(self.offenders[:MAX_OFFENDERS])
        if self.message:
            out["message"] = self.message
        if self.extra:
            out.update(_jsonable(self.extra))
        return out


def worst(offenders: list[dict[str, Any]], key: str = "residual") -> list[dict[str, Any]]:
    """The ``MAX_OFFENDERS`` entries with the largest ``key``."""
    return sorted(offenders, key=lambda o: -o[key])[:MAX_OFFENDERS]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj
