"""Strict JSON run configuration.

Example::

    {
      "problem": {"kind": "l1_mf", "M": [[0.0]], "rank": 1},
      "x0": [1.0, 0.05],
      "alpha": 0.01,
      "steps": 1000,
      "seed": 0
    }

Unknown keys are rejected. Errors carry the line of the offending key.
"""

from __future__ import annotations

import json
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import lie
from .objectives import Objective, build_objective

TOP_KEYS = {"problem", "group", "x0", "alpha", "steps", "horizon", "chetaev_w", "checks", "scan", "seed", "output_dir"}
PROBLEM_KEYS = {
    "l1_mf": {"kind", "M", "shape", "rank"},
    "frobenius_mf": {"kind", "M", "shape", "rank", "nonnegative"},
    "lorentz": {"kind", "n"},
    "relu_net": {"kind", "inputs", "targets", "data_points", "widths", "leak", "relu_zero_slope"},
}
SCAN_KEYS = {"center", "epsilon", "trials", "k_max", "alpha"}
CHECK_KEYS = {"name", "params"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        prefix = f"line {self.line}: " if self.line is not None else ""
        return prefix + super().__str__()


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Independent stream for one labelled component of a run."""
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), zlib.crc32(label.encode())]))


@dataclass
class RunConfig:
    problem: dict[str, Any]
    objective: Objective
    algebra: lie.LieAlgebraBasis
    seed: int = 0
    x0: Any = None
    alpha: float | None = None
    steps: int | None = None
    horizon: float | None = None
    chetaev_w: Any = None
    checks: list[dict[str, Any]] = field(default_factory=list)
    scan: dict[str, Any] | None = None
    output_dir: Path = Path(".")

    def initial_point(self) -> np.ndarray:
        if self.x0 is None:
            raise ConfigError("x0 is required for this command")
        if isinstance(self.x0, dict):
            from .dynamics import sample_ball

            return sample_ball(rng_for(self.seed, "x0"), self.x0["center"], self.x0["radius"])
        return np.asarray(self.x0, dtype=float)


class _Locator:
    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, key: str) -> int | None:
        pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
        for i, line in enumerate(self.lines, 1):
            if pat.search(line):
                return i
        return None


def _require(cond, msg, loc, key):
    if not cond:
        raise ConfigError(msg, loc.line_of(key))


def _check_keys(obj, allowed, loc, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}", loc.line_of(key))


def _matrix(value, loc, key):
    try:
        M = np.array(value, dtype=float, ndmin=2)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a numeric matrix", loc.line_of(key)) from None
    _require(M.ndim == 2 and np.all(np.isfinite(M)), f"{key} must be a finite 2-d matrix", loc, key)
    return M


def _positive_int(value, loc, key, allow_zero=False):
    ok = isinstance(value, int) and not isinstance(value, bool) and (value >= 0 if allow_zero else value > 0)
    _require(ok, f"{key} must be a {'nonnegative' if allow_zero else 'positive'} integer", loc, key)
    return value


def _positive_float(value, loc, key):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0
    _require(ok, f"{key} must be a positive number", loc, key)
    return float(value)


def _build_problem(p, seed, loc):
    _require(isinstance(p, dict) and "kind" in p, "problem must be an object with a 'kind'", loc, "problem")
    kind = p["kind"]
    _require(kind in PROBLEM_KEYS, f"unknown problem kind {kind!r}", loc, "kind")
    _check_keys(p, PROBLEM_KEYS[kind], loc, "problem")
    if kind in ("l1_mf", "frobenius_mf"):
        if "M" in p:
            M = _matrix(p["M"], loc, "M")
        else:
            _require("shape" in p, "give either M or shape", loc, "problem")
            shape = p["shape"]
            _require(isinstance(shape, list) and len(shape) == 2, "shape must be [m, n]", loc, "shape")
            m, n = (_positive_int(s, loc, "shape") for s in shape)
            M = rng_for(seed, "problem.M").standard_normal((m, n))
        rank = _positive_int(p.get("rank", 1), loc, "rank")
        kwargs = {"M": M, "r": rank}
        if kind == "frobenius_mf":
            kwargs["nonnegative"] = bool(p.get("nonnegative", False))
        return build_objective(kind, **kwargs)
    if kind == "lorentz":
        n = _positive_int(p.get("n"), loc, "n")
        _require(n >= 2, "n must be >= 2", loc, "n")
        return build_objective(kind, n=n)
    widths = p.get("widths")
    _require(isinstance(widths, list) and len(widths) >= 3, "widths must list at least three layer sizes", loc, "widths")
    widths = [_positive_int(w, loc, "widths") for w in widths]
    if "inputs" in p or "targets" in p:
        inputs = _matrix(p.get("inputs"), loc, "inputs")
        targets = _matrix(p.get("targets"), loc, "targets")
    else:
        count = _positive_int(p.get("data_points", 5), loc, "data_points")
        rng = rng_for(seed, "problem.data")
        inputs = rng.standard_normal((count, widths[0]))
        targets = rng.standard_normal((count, widths[-1]))
    try:
        return build_objective(
            kind,
            inputs=inputs,
            targets=targets,
            widths=widths,
            leak=float(p.get("leak", 0.0)),
            relu_zero_slope=float(p.get("relu_zero_slope", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), loc.line_of("widths")) from None


def build_algebra(group, loc=None) -> lie.LieAlgebraBasis:
    loc = loc or _Locator("")
    _require(isinstance(group, dict) and "kind" in group, "group must be an object with a 'kind'", loc, "group")
    params = {k: v for k, v in group.items() if k != "kind"}
    try:
        return lie.builtin_algebra(group["kind"], **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid group: {exc}", loc.line_of("group")) from None


def _vector(value, dim, loc, key):
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a numeric vector", loc.line_of(key)) from None
    _require(v.shape == (dim,), f"{key} must have length {dim}", loc, key)
    return v


def parse_config(text: str, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Parse and validate a configuration document."""
    loc = _Locator(text)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    _check_keys(raw, TOP_KEYS, loc, "config")
    overrides = overrides or {}
    seed = overrides.get("seed")
    if seed is None:
        seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool), "seed must be an integer", loc, "seed")
    _require("problem" in raw, "missing required key 'problem'", loc, "problem")
    obj = _build_problem(raw["problem"], seed, loc)
    algebra = obj.algebra
    if "group" in raw:
        algebra = build_algebra(raw["group"], loc)
        _require(algebra.n == obj.dim, f"group acts on R^{algebra.n} but the problem lives in R^{obj.dim}", loc, "group")

    cfg = RunConfig(problem=raw["problem"], objective=obj, algebra=algebra, seed=seed)
    if "x0" in raw:
        x0 = raw["x0"]
        if isinstance(x0, dict):
            _check_keys(x0, {"center", "radius"}, loc, "x0")
            _require("center" in x0 and "radius" in x0, "x0 object needs center and radius", loc, "x0")
            cfg.x0 = {"center": _vector(x0["center"], obj.dim, loc, "center"), "radius": _positive_float(x0["radius"], loc, "radius")}
        else:
            cfg.x0 = _vector(x0, obj.dim, loc, "x0")
    if "alpha" in raw:
        cfg.alpha = _positive_float(raw["alpha"], loc, "alpha")
    _require(not ("steps" in raw and "horizon" in raw), "give steps or horizon, not both", loc, "horizon")
    if "steps" in raw:
        cfg.steps = _positive_int(raw["steps"], loc, "steps", allow_zero=True)
    if "horizon" in raw:
        cfg.horizon = _positive_float(raw["horizon"], loc, "horizon")
    if "chetaev_w" in raw:
        w = raw["chetaev_w"]
        if w != "auto":
            w = _matrix(w, loc, "chetaev_w")
            _require(w.shape == (obj.dim, obj.dim), f"chetaev_w must be {obj.dim}x{obj.dim}", loc, "chetaev_w")
        cfg.chetaev_w = w
    if "checks" in raw:
        checks = raw["checks"]
        _require(isinstance(checks, list), "checks must be a list", loc, "checks")
        for c in checks:
            _check_keys(c, CHECK_KEYS, loc, "checks entry")
            _require("name" in c, "every check needs a name", loc, "checks")
            _require(isinstance(c.get("params", {}), dict), "check params must be an object", loc, "params")
        cfg.checks = [{"name": c["name"], "params": dict(c.get("params", {}))} for c in checks]
    if "scan" in raw:
        s = raw["scan"]
        _check_keys(s, SCAN_KEYS, loc, "scan")
        for key in ("center", "epsilon", "trials", "k_max"):
            _require(key in s, f"scan needs {key!r}", loc, "scan")
        cfg.scan = {
            "center": _vector(s["center"], obj.dim, loc, "center"),
            "epsilon": _positive_float(s["epsilon"], loc, "epsilon"),
            "trials": _positive_int(s["trials"], loc, "trials"),
            "k_max": _positive_int(s["k_max"], loc, "k_max", allow_zero=True),
            "alpha": _positive_float(s["alpha"], loc, "alpha") if "alpha" in s else cfg.alpha,
        }
        _require(cfg.scan["alpha"] is not None, "scan needs an alpha", loc, "scan")
    out = overrides.get("output_dir") or raw.get("output_dir", ".")
    _require(isinstance(out, str), "output_dir must be a string", loc, "output_dir")
    cfg.output_dir = Path(out)
    return cfg


def load_config(path, overrides=None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, overrides)
