"""Constant-step subgradient method, its use as an explicit Euler scheme for
the subgradient flow, and conservation and Chetaev accounting along the
iterates."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lie
from .objectives import BoundaryError, Objective

CSV_COLUMNS = ("k", "f", "identity_residual", "drift_from_start", "chetaev")
MAX_FLOW_STEPS = 10**7


@dataclass(eq=False)
class Trajectory:
    """Iterates ``x_0, ..., x_K`` of ``x_{k+1} = x_k - alpha v_k``.

    ``conserved[k]`` holds the coordinates of C(x_k) in the orthonormal s(g)
    basis, so Euclidean norms of coordinate differences are Frobenius norms.
    ``identity_residual[k]`` is ``|C(x_{k+1}) - C(x_k) - alpha^2 C(v_k)|``.
    """

    points: np.ndarray
    values: np.ndarray
    steps: np.ndarray
    alpha: float
    conserved: np.ndarray
    identity_residual: np.ndarray
    algebra: lie.LieAlgebraBasis = field(repr=False)
    chetaev: np.ndarray | None = None
    stopped: str | None = None

    @property
    def K(self) -> int:
        return len(self.steps)

    @property
    def diverged(self) -> bool:
        return self.stopped == "diverged"

    @property
    def drift_from_start(self) -> np.ndarray:
        return np.linalg.norm(self.conserved - self.conserved[0], axis=1)

    @property
    def total_drift(self) -> float:
        return float(self.drift_from_start[-1])

    def max_identity_residual(self) -> float:
        return float(self.identity_residual.max()) if self.K else 0.0

    def relative_identity_residual(self) -> np.ndarray:
        """Residuals divided by ``1 + |x_k|^2 + alpha^2 |v_k|^2``.

        The step term only matters once a run blows up, where roundoff in
        ``C(x_{k+1})`` scales with ``|x_{k+1}|^2`` rather than ``|x_k|^2``.
        """
        scale = 1.0 + np.sum(self.points[:-1] ** 2, axis=1) + self.alpha**2 * np.sum(self.steps**2, axis=1)
        return self.identity_residual / scale

    def write_csv(self, path) -> None:
        """One row per iterate. The residual of the step ending at ``x_k``
        is written in row ``k``; row 0 and absent Chetaev values are ``nan``."""
        drift = self.drift_from_start
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for k in range(self.K + 1):
                res = self.identity_residual[k - 1] if k > 0 else math.nan
                chet = self.chetaev[k] if self.chetaev is not None else math.nan
                w.writerow([k, _fmt(self.values[k]), _fmt(res), _fmt(drift[k]), _fmt(chet)])


def _fmt(v: float) -> str:
    return f"{float(v):.16e}"


def step_identity_residual(g: lie.LieAlgebraBasis, x, v, x_next, alpha: float) -> float:
    """``|C(x_next) - C(x) - alpha^2 C(v)|_F``."""
    c = lie.conserved_coords(g, x_next) - lie.conserved_coords(g, x) - alpha**2 * lie.conserved_coords(g, v)
    return float(np.linalg.norm(c))


def subgradient_descent(
    obj: Objective,
    x0,
    alpha: float,
    K: int,
    seed: int | None = None,
    algebra: lie.LieAlgebraBasis | None = None,
    chetaev_w=None,
    stop: Callable[[np.ndarray], bool] | None = None,
) -> Trajectory:
    """Run ``K`` steps of ``x_{k+1} = x_k - alpha * obj.subgrad(x_k)``.

    The feasible projection of ``obj`` is applied after every step when
    present. The run ends early (``stopped`` set) on non-finite values, on a
    boundary point of a constrained objective, or when ``stop(x_k)`` is true.
    ``seed`` is accepted for API stability; built-in selections are
    deterministic.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if K < 0:
        raise ValueError("K must be nonnegative")
    g = obj.algebra if algebra is None else algebra
    x = np.array(x0, dtype=float).ravel()
    if x.size != obj.dim:
        raise ValueError(f"x0 has {x.size} entries, objective expects {obj.dim}")

    points, values, steps, conserved, residuals = [x], [obj.eval(x)], [], [lie.conserved_coords(g, x)], []
    stopped = None
    if not np.isfinite(values[0]):
        stopped = "diverged"
    elif stop is not None and stop(x):
        stopped = "stop"
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(K if stopped is None else 0):
            try:
                v = np.asarray(obj.subgrad(x), dtype=float)
            except BoundaryError:
                stopped = "boundary"
                break
            if not np.all(np.isfinite(v)):
                stopped = "diverged"
                break
            x_next = x - alpha * v
            if obj.feasible_projection is not None:
                x_next = obj.feasible_projection(x_next)
            f_next = obj.eval(x_next)
            if not (np.isfinite(f_next) and np.all(np.isfinite(x_next))):
                stopped = "diverged"
                break
            c_next = lie.conserved_coords(g, x_next)
            res = np.linalg.norm(c_next - conserved[-1] - alpha**2 * lie.conserved_coords(g, v))
            steps.append(v)
            points.append(x_next)
            values.append(f_next)
            conserved.append(c_next)
            residuals.append(res)
            x = x_next
            if stop is not None and stop(x):
                stopped = "stop"
                break

    traj = Trajectory(
        points=np.array(points),
        values=np.array(values),
        steps=np.array(steps).reshape(len(steps), obj.dim),
        alpha=float(alpha),
        conserved=np.array(conserved).reshape(len(conserved), -1),
        identity_residual=np.array(residuals, dtype=float),
        algebra=g,
        stopped=stopped,
    )
    if chetaev_w is not None:
        traj.chetaev = chetaev_monitor(traj, g, chetaev_w).values
    return traj


def flow_integrate(obj: Objective, x0, horizon: float, alpha: float, **kwargs) -> Trajectory:
    """Explicit Euler for ``x' in -df(x)`` over ``[0, horizon]``:
    ``ceil(horizon / alpha)`` subgradient steps."""
    if horizon <= 0 or alpha <= 0:
        raise ValueError("horizon and alpha must be positive")
    K = math.ceil(horizon / alpha - 1e-9)
    if K > MAX_FLOW_STEPS:
        raise ValueError(f"horizon / alpha = {K} exceeds {MAX_FLOW_STEPS} steps")
    return subgradient_descent(obj, x0, alpha, K, **kwargs)


@dataclass
class ChetaevResult:
    values: np.ndarray
    increments: np.ndarray
    predicted: np.ndarray
    monotone: bool
    identity_ok: bool
    max_identity_error: float

    @property
    def verdict(self) -> str:
        return "monotone" if self.monotone else "not monotone"


def symmetric_coords(g: lie.LieAlgebraBasis, w) -> np.ndarray:
    """Coordinates of a matrix ``w`` in s(g); raises if ``w`` is not in s(g)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (g.n, g.n):
        raise ValueError(f"w must be a {g.n}x{g.n} matrix")
    S = lie.symmetric_basis_matrices(g)
    coords = np.tensordot(S, w, axes=([1, 2], [0, 1]))
    back = np.tensordot(coords, S, axes=1) if len(coords) else np.zeros_like(w)
    if np.linalg.norm(back - w) > 1e-10 * (1.0 + np.linalg.norm(w)):
        raise ValueError("w does not lie in the symmetric part of the algebra")
    return coords


def chetaev_monitor(traj: Trajectory, g: lie.LieAlgebraBasis, w) -> ChetaevResult:
    """Track ``<C(x_k), w>`` along a trajectory.

    Increments must be nonnegative up to ``1e-12 (1 + |C(x_k)|)`` for a
    ``monotone`` verdict, and must equal ``alpha^2 <C(v_k), w>`` up to
    ``1e-10 (1 + |C(x_k)|)``.
    """
    if traj.points.shape[1] != g.n:
        raise ValueError("trajectory and algebra dimensions differ")
    wc = symmetric_coords(g, w)
    Cx = np.array([lie.conserved_coords(g, x) for x in traj.points]).reshape(len(traj.points), -1)
    Cv = np.array([lie.conserved_coords(g, v) for v in traj.steps]).reshape(len(traj.steps), -1)
    values = Cx @ wc
    increments = np.diff(values)
    predicted = traj.alpha**2 * (Cv @ wc) if traj.K else np.zeros(0)
    scale = 1.0 + np.linalg.norm(Cx[:-1], axis=1)
    err = np.abs(increments - predicted)
    return ChetaevResult(
        values=values,
        increments=increments,
        predicted=predicted,
        monotone=bool(np.all(increments >= -1e-12 * scale)),
        identity_ok=bool(np.all(err <= 1e-10 * scale)),
        max_identity_error=float(err.max()) if err.size else 0.0,
    )


def default_chetaev_direction(obj: Objective, probe, g: lie.LieAlgebraBasis | None = None) -> np.ndarray:
    """Unit-norm ``C(v)`` for the selected subgradient ``v`` at ``probe``,
    an off-orbit point.

    With this sign ``<C(v), w> > 0`` at the probe, so the Chetaev value
    grows there. Raises if ``C(v)`` vanishes.
    """
    g = obj.algebra if g is None else g
    C = lie.conserved_quantity(g, obj.subgrad(np.asarray(probe, dtype=float))).value
    norm = np.linalg.norm(C)
    if norm <= 1e-14:
        raise ValueError("C(v) vanishes at the probe point; pick another probe")
    return C / norm


def sample_ball(rng: np.random.Generator, center, radius: float) -> np.ndarray:
    """Uniform sample from the Euclidean ball."""
    center = np.asarray(center, dtype=float)
    d = rng.standard_normal(center.size)
    d /= np.linalg.norm(d)
    return center + radius * rng.random() ** (1.0 / center.size) * d


@dataclass
class ScanResult:
    escape_fraction: float
    per_trial: list[dict]
    trajectories: list[Trajectory] | None = None

    def to_dict(self) -> dict:
        return {"escape_fraction": self.escape_fraction, "per_trial": self.per_trial}


def instability_scan(
    obj: Objective,
    center,
    epsilon: float,
    alpha: float,
    k_max: int,
    trials: int,
    seed: int = 0,
    jobs: int = 1,
    starts=None,
    keep_trajectories: bool = False,
) -> ScanResult:
    """Empirical escape statistics from the ball ``B_epsilon(center)``.

    Trial ``i`` draws its start uniformly from the ball with seed
    ``seed + i`` (or uses ``starts[i]``) and runs until an iterate satisfies
    ``|x_k - center| >= epsilon`` or ``k_max`` steps elapse.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    center = np.asarray(center, dtype=float)

    def outside(x):
        return np.linalg.norm(x - center) >= epsilon

    def run(i):
        trial_seed = seed + i
        if starts is not None:
            x0 = np.asarray(starts[i], dtype=float)
        else:
            x0 = sample_ball(np.random.default_rng(trial_seed), center, epsilon)
        traj = subgradient_descent(obj, x0, alpha, k_max, seed=trial_seed, stop=outside)
        escaped = traj.stopped == "stop"
        record = {"seed": trial_seed, "escaped": escaped, "escape_step": traj.K if escaped else None}
        return record, traj

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(i) for i in range(trials)]
    per_trial = [r for r, _ in results]
    frac = sum(r["escaped"] for r in per_trial) / trials
    return ScanResult(
        escape_fraction=frac,
        per_trial=per_trial,
        trajectories=[t for _, t in results] if keep_trajectories else None,
    )
