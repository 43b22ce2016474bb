"""Command line entry point: ``orbitflow run|check|scan <config.json>``."""

from __future__ import annotations

import argparse
import inspect
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, dynamics, objectives
from .config import ConfigError, RunConfig, build_algebra, load_config, rng_for
from .report import FAIL, INCONCLUSIVE

EXIT_OK, EXIT_FAIL, EXIT_DIVERGED, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3, 64


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n")


def cmd_run(cfg: RunConfig) -> int:
    obj = cfg.objective
    if cfg.alpha is None:
        raise ConfigError("run needs alpha")
    x0 = cfg.initial_point()
    w = cfg.chetaev_w
    if isinstance(w, str):
        w = dynamics.default_chetaev_direction(obj, x0, cfg.algebra)
    kwargs = {"seed": cfg.seed, "algebra": cfg.algebra, "chetaev_w": w}
    if cfg.horizon is not None:
        traj = dynamics.flow_integrate(obj, x0, cfg.horizon, cfg.alpha, **kwargs)
    elif cfg.steps is not None:
        traj = dynamics.subgradient_descent(obj, x0, cfg.alpha, cfg.steps, **kwargs)
    else:
        raise ConfigError("run needs steps or horizon")
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    traj.write_csv(out / "trajectory.csv")
    summary = {
        "problem": obj.name,
        "algebra": cfg.algebra.name,
        "seed": cfg.seed,
        "alpha": traj.alpha,
        "steps": traj.K,
        "stopped": traj.stopped,
        "diverged": traj.diverged,
        "final_value": float(traj.values[-1]),
        "max_identity_residual": traj.max_identity_residual(),
        "max_relative_identity_residual": float(traj.relative_identity_residual().max()) if traj.K else 0.0,
        "total_drift": traj.total_drift,
        "chetaev_w": None if w is None else np.asarray(w).tolist(),
        "points": traj.points.tolist(),
        "subgradients": traj.steps.tolist(),
    }
    write_json(out / "summary.json", summary)
    return EXIT_DIVERGED if traj.diverged else EXIT_OK


def _sample_points(cfg, count, label):
    rng = rng_for(cfg.seed, label)
    return [cfg.objective.sample_point(rng) for _ in range(count)]


def _check_orbital_projection(cfg, label, points=100, tol=1e-8, use_enumerator=True):
    pts = _sample_points(cfg, points, label) if isinstance(points, int) else points
    return diagnostics.orbital_projection_check(cfg.objective, pts, g=cfg.algebra, tol=tol, use_enumerator=use_enumerator)


def _check_perturbed_projection(cfg, label, xbar, radii=(0.1, 0.05, 0.025), samples_per_radius=200, on_orbit=True):
    return diagnostics.perturbed_projection_slope(
        cfg.objective, xbar, radii, samples_per_radius, g=cfg.algebra, seed=_seed(cfg, label), on_orbit=on_orbit
    )


def _check_tangent_lipschitz(cfg, label, xbar, radii=(0.1, 0.05, 0.025), samples=200, group=None):
    g = build_algebra(group) if group is not None else cfg.algebra
    return diagnostics.tangent_lipschitz_check(g, xbar, radii, samples, seed=_seed(cfg, label))


def _check_image_distance(cfg, label, Abar, perturbation_scale, trials=100):
    return diagnostics.image_distance_check(Abar, perturbation_scale, trials, seed=_seed(cfg, label))


def _check_subregularity(cfg, label, xbar, radii=(0.1, 0.05, 0.025), samples=100):
    return diagnostics.subregularity_fit(cfg.objective, xbar, radii, samples, seed=_seed(cfg, label))


def _check_chetaev_condition(cfg, label, xbar, radius=0.1, samples=200, tol=0.0):
    return diagnostics.chetaev_condition_check(cfg.objective, xbar, radius, samples, tol, seed=_seed(cfg, label), g=cfg.algebra)


def _check_equivariance(cfg, label, trials=50, tol=1e-10, scales=(0.5, 2.0), group=None):
    g = build_algebra(group) if group is not None else None
    return objectives.conservative_field_equivariance_check(cfg.objective, trials, tol, seed=_seed(cfg, label), scales=tuple(scales), algebra=g)


def _check_invariance(cfg, label, points=100):
    pts = _sample_points(cfg, points, label) if isinstance(points, int) else points
    return objectives.invariance_check(cfg.objective, pts)


CHECKS = {
    "orbital_projection": _check_orbital_projection,
    "perturbed_projection": _check_perturbed_projection,
    "tangent_lipschitz": _check_tangent_lipschitz,
    "image_distance": _check_image_distance,
    "subregularity": _check_subregularity,
    "chetaev_condition": _check_chetaev_condition,
    "equivariance": _check_equivariance,
    "invariance": _check_invariance,
}


def _seed(cfg, label):
    return int(rng_for(cfg.seed, label).integers(2**63))


def _as_arrays(params):
    out = {}
    for k, v in params.items():
        if k in ("xbar", "Abar") or (k == "points" and isinstance(v, list)):
            v = np.asarray(v, dtype=float)
            if k == "points":
                v = list(v)
        out[k] = v
    return out


def run_checks(cfg: RunConfig) -> list:
    reports = []
    for i, check in enumerate(cfg.checks):
        name = check["name"]
        if name not in CHECKS:
            raise ConfigError(f"unknown check {name!r}; expected one of {sorted(CHECKS)}")
        fn = CHECKS[name]
        allowed = set(inspect.signature(fn).parameters) - {"cfg", "label"}
        unknown = set(check["params"]) - allowed
        if unknown:
            raise ConfigError(f"unknown params {sorted(unknown)} for check {name!r}")
        try:
            reports.append(fn(cfg, f"check:{i}:{name}", **_as_arrays(check["params"])))
        except TypeError as exc:
            raise ConfigError(f"check {name!r}: {exc}") from None
        except diagnostics.PreconditionError as exc:
            raise ConfigError(f"check {name!r}: {exc}") from None
    return reports


def cmd_check(cfg: RunConfig) -> int:
    reports = run_checks(cfg)
    write_json(cfg.output_dir / "report.json", [r.to_dict() for r in reports])
    verdicts = {r.verdict for r in reports}
    if FAIL in verdicts:
        return EXIT_FAIL
    if INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_scan(cfg: RunConfig, jobs: int = 1) -> int:
    s = cfg.scan
    if s is None:
        raise ConfigError("scan needs a 'scan' section")
    result = dynamics.instability_scan(
        cfg.objective, s["center"], s["epsilon"], s["alpha"], s["k_max"], s["trials"], seed=cfg.seed, jobs=jobs
    )
    write_json(cfg.output_dir / "scan.json", result.to_dict())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=argparse.SUPPRESS, help="override output_dir of the config")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel scan trials")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the root seed")
    parser = _Parser(prog="orbitflow", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in (("run", "run the subgradient method"), ("check", "run diagnostics"), ("scan", "escape statistics")):
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": getattr(args, "seed", None), "output_dir": getattr(args, "output_dir", None)}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "check":
            return cmd_check(cfg)
        return cmd_scan(cfg, jobs=max(1, getattr(args, "jobs", 1)))
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
