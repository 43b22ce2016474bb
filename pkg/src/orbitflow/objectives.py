"""Invariant nonsmooth objectives with subgradient selections.

Every objective exposes ``eval`` and a deterministic ``subgrad`` selection
from the Clarke subdifferential (or, for the ReLU network, from the
backpropagation conservative field). The l1 factorization also offers a
brute-force enumerator of the extreme points of the subdifferential at
tiny scale.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import lie
from .layout import NetworkLayout, pack_factors, unpack_factors
from .report import FAIL, INCONCLUSIVE, PASS, DiagnosticsReport, worst

MAX_ENUMERATED_KINKS = 16


class BoundaryError(ValueError):
    """Subgradient requested on the boundary of a constrained domain."""


class EnumerationUnavailable(ValueError):
    """Too many nonsmooth activations to enumerate extreme subgradients."""


@dataclass(frozen=True, eq=False)
class Objective:
    dim: int
    eval: Callable[[np.ndarray], float]
    subgrad: Callable[[np.ndarray], np.ndarray]
    algebra: lie.LieAlgebraBasis
    name: str
    enumerate_extreme: Callable[[np.ndarray], np.ndarray] | None = None
    feasible_projection: Callable[[np.ndarray], np.ndarray] | None = None
    sampler: Callable[[np.random.Generator], np.ndarray] | None = field(default=None, repr=False)
    params: dict[str, Any] = field(default_factory=dict)

    def sample_point(self, rng: np.random.Generator) -> np.ndarray:
        """A random point in the selection domain."""
        if self.sampler is not None:
            return self.sampler(rng)
        return rng.standard_normal(self.dim)


def l1_matrix_factorization(M, r: int) -> Objective:
    """``f(X, Y) = ||X Y - M||_1`` on ``R^{(m+n) r}``.

    The selection uses ``sign(0) = 0``; extreme points are enumerated over all
    ``+-1`` choices on the exactly-zero residual entries.
    """
    M = np.array(M, dtype=float, ndmin=2)
    m, n = M.shape
    if r < 1:
        raise ValueError("rank must be >= 1")

    def residual(x):
        X, Y = unpack_factors(x, m, n, r)
        return X, Y, X @ Y - M

    def f(x):
        return float(np.abs(residual(x)[2]).sum())

    def subgrad(x):
        X, Y, R = residual(x)
        S = np.sign(R)
        return pack_factors(S @ Y.T, X.T @ S)

    def enumerate_extreme(x):
        X, Y, R = residual(x)
        zeros = np.argwhere(R == 0)
        if len(zeros) > MAX_ENUMERATED_KINKS:
            raise EnumerationUnavailable(f"{len(zeros)} zero residuals exceed the limit of {MAX_ENUMERATED_KINKS}")
        S0 = np.sign(R)
        pts = []
        for signs in itertools.product((-1.0, 1.0), repeat=len(zeros)):
            S = S0.copy()
            for (i, j), s in zip(zeros, signs):
                S[i, j] = s
            pts.append(pack_factors(S @ Y.T, X.T @ S))
        return np.unique(np.array(pts), axis=0)

    return Objective(
        dim=(m + n) * r,
        eval=f,
        subgrad=subgrad,
        algebra=lie.factorization(m, n, r),
        name="l1_mf",
        enumerate_extreme=enumerate_extreme,
        params={"M": M, "m": m, "n": n, "r": r},
    )


def frobenius_mf(M, r: int, nonnegative: bool = False) -> Objective:
    """``f(X, Y) = ||X Y - M||_F^2``, optionally restricted to the nonnegative
    orthant (``+inf`` outside)."""
    M = np.array(M, dtype=float, ndmin=2)
    m, n = M.shape
    if r < 1:
        raise ValueError("rank must be >= 1")
    dim = (m + n) * r

    def f(x):
        x = np.asarray(x, dtype=float)
        if nonnegative and np.any(x < 0):
            return float("inf")
        X, Y = unpack_factors(x, m, n, r)
        return float(np.sum((X @ Y - M) ** 2))

    def grad(x):
        x = np.asarray(x, dtype=float)
        if nonnegative and np.any(x <= 0):
            raise BoundaryError("gradient requested at a non-interior point of the nonnegative orthant")
        X, Y = unpack_factors(x, m, n, r)
        R = X @ Y - M
        return pack_factors(2.0 * R @ Y.T, 2.0 * X.T @ R)

    if nonnegative:
        algebra = lie.diagonal_rescaling(m, n, r)

        def sampler(rng):
            return np.abs(rng.standard_normal(dim)) + 0.1

        projection = _nonnegative_part
    else:
        algebra = lie.factorization(m, n, r)
        sampler = None
        projection = None

    return Objective(
        dim=dim,
        eval=f,
        subgrad=grad,
        algebra=algebra,
        name="frobenius_mf",
        feasible_projection=projection,
        sampler=sampler,
        params={"M": M, "m": m, "n": n, "r": r, "nonnegative": nonnegative},
    )


def _nonnegative_part(x):
    return np.maximum(x, 0.0)


def lorentz_quartic(n: int) -> Objective:
    """``f(x) = (<x, D x> - 1)^2`` with ``D = diag(1, ..., 1, -1)``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    D = np.ones(n)
    D[-1] = -1.0

    def f(x):
        x = np.asarray(x, dtype=float)
        return float((x @ (D * x) - 1.0) ** 2)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return 4.0 * (x @ (D * x) - 1.0) * (D * x)

    return Objective(dim=n, eval=f, subgrad=grad, algebra=lie.lorentz(n), name="lorentz", params={"n": n})


def relu_network(inputs, targets, widths, leak: float = 0.0, relu_zero_slope: float = 0.0) -> Objective:
    """Mean squared loss of a fully connected leaky-ReLU network.

    Parameters are ``(W_1, ..., W_l, b_1, ..., b_l)`` flattened by
    :class:`NetworkLayout`. ``subgrad`` is backpropagation with the
    activation derivative at zero set to ``relu_zero_slope``.
    """
    layout = NetworkLayout(tuple(widths))
    Xin = np.array(inputs, dtype=float, ndmin=2)
    Yout = np.array(targets, dtype=float, ndmin=2)
    if Xin.shape[1] != layout.widths[0] or Yout.shape[1] != layout.widths[-1] or Xin.shape[0] != Yout.shape[0]:
        raise ValueError(
            f"data shapes {Xin.shape} -> {Yout.shape} do not match widths {layout.widths}"
        )
    if not 0.0 <= leak < 1.0:
        raise ValueError("leak must lie in [0, 1)")
    if not 0.0 <= relu_zero_slope <= 1.0:
        raise ValueError("relu_zero_slope must lie in [0, 1]")
    n_data = Xin.shape[0]

    def activation(Z):
        return np.where(Z > 0, Z, leak * Z)

    def slope(Z):
        return np.where(Z > 0, 1.0, np.where(Z < 0, leak, relu_zero_slope))

    def forward(theta):
        Ws, bs = layout.unpack(theta)
        H = [Xin]
        Zs = []
        for i, (W, b) in enumerate(zip(Ws, bs)):
            Z = H[-1] @ W.T + b
            Zs.append(Z)
            if i < layout.layers - 1:
                H.append(activation(Z))
        return Ws, H, Zs

    def f(theta):
        _, _, Zs = forward(theta)
        return float(np.sum((Zs[-1] - Yout) ** 2) / n_data)

    def backprop(theta):
        Ws, H, Zs = forward(theta)
        G = 2.0 * (Zs[-1] - Yout) / n_data
        dWs, dbs = [None] * layout.layers, [None] * layout.layers
        for i in range(layout.layers - 1, -1, -1):
            dWs[i] = G.T @ H[i]
            dbs[i] = G.sum(axis=0)
            if i > 0:
                G = (G @ Ws[i]) * slope(Zs[i - 1])
        return layout.pack(dWs, dbs)

    return Objective(
        dim=layout.size,
        eval=f,
        subgrad=backprop,
        algebra=lie.nn_rescaling(layout.widths),
        name="relu_net",
        params={
            "inputs": Xin,
            "targets": Yout,
            "widths": list(layout.widths),
            "leak": leak,
            "relu_zero_slope": relu_zero_slope,
        },
    )


def _surrogate(B, t, order=1):
    G = np.eye(B.shape[0]) + t * B
    if order >= 2:
        G = G + 0.5 * t * t * (B @ B)
    return G


def invariance_check(obj: Objective, points, ts=(1e-2, 1e-3), floor: float = 1e-13) -> DiagnosticsReport:
    """Second-order invariance test ``f((I + tB + t^2 B^2 / 2) x) = f(x) + O(t^3)``.

    For each point and generator the change at the two step sizes must either
    sit below ``floor * (1 + |f(x)|)`` or shrink with an observed order of at
    least 2.5.
    """
    t_big, t_small = ts
    worst_order = np.inf
    offenders = []
    count = 0
    for idx, x in enumerate(points):
        x = np.asarray(x, dtype=float)
        fx = obj.eval(x)
        for b, B in enumerate(obj.algebra.generators):
            for sign in (1.0, -1.0):
                d_big = abs(obj.eval(_surrogate(B, sign * t_big, 2) @ x) - fx)
                d_small = abs(obj.eval(_surrogate(B, sign * t_small, 2) @ x) - fx)
                count += 1
                if d_small <= floor * (1.0 + abs(fx)):
                    continue
                order = np.log(max(d_big, 1e-300) / max(d_small, 1e-300)) / np.log(t_big / t_small)
                worst_order = min(worst_order, order)
                if order < 2.5:
                    offenders.append({"point": idx, "generator": b, "order": float(order), "residual": float(d_small)})
    verdict = FAIL if offenders else PASS
    return DiagnosticsReport(
        check="invariance",
        params={"objective": obj.name, "ts": list(ts)},
        samples=count,
        tolerance=2.5,
        verdict=verdict,
        max_residual=max((o["residual"] for o in offenders), default=0.0),
        offenders=worst(offenders),
        extra={"min_observed_order": None if np.isinf(worst_order) else float(worst_order)},
    )


def _relative(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def conservative_field_equivariance_check(
    obj: Objective,
    trials: int,
    tol: float = 1e-10,
    seed: int = 0,
    scales=(0.5, 2.0),
    ts=(1e-2, 5e-3, 2.5e-3),
    points=None,
    algebra: lie.LieAlgebraBasis | None = None,
) -> DiagnosticsReport:
    """Compare ``subgrad(g^{-1} x)`` with ``g^T subgrad(x)``.

    Diagonal algebras use exact group elements: all hidden scalings set to
    each ``d`` in ``scales``, and a random subset scaled by ``d``. Other
    algebras use ``g = I + tB``, which lies in the group only to first order;
    there a sample passes if the residual is below ``tol`` or decays with
    ``t`` at an observed order of at least 1.5. ``algebra`` overrides
    ``obj.algebra`` (e.g. a diagonal subgroup).
    """
    rng = np.random.default_rng(seed)
    g_alg = obj.algebra if algebra is None else algebra
    if points is None:
        points = [obj.sample_point(rng) for _ in range(trials)]
    residuals, offenders = [], []
    skipped = 0
    exact = g_alg.is_diagonal
    for idx, x in enumerate(points):
        x = np.asarray(x, dtype=float)
        v = obj.subgrad(x)
        if exact:
            for d in scales:
                for mask in (np.ones(g_alg.k), (rng.random(g_alg.k) < 0.5).astype(float)):
                    gdiag = np.diag(g_alg.group_element(np.log(d) * mask))
                    res = _relative(obj.subgrad(x / gdiag), gdiag * v)
                    residuals.append(res)
                    if res > tol:
                        offenders.append({"point": idx, "d": d, "residual": res})
        else:
            for b, B in enumerate(g_alg.generators):
                series = []
                for t in ts:
                    g = _surrogate(B, t)
                    try:
                        y = np.linalg.solve(g, x)
                    except np.linalg.LinAlgError:
                        skipped += 1
                        continue
                    series.append(_relative(obj.subgrad(y), g.T @ v))
                if len(series) < 2:
                    continue
                res = series[-1]
                residuals.append(res)
                orders = [
                    np.log(max(a, 1e-300) / max(c, 1e-300)) / np.log(ts[0] / ts[1])
                    for a, c in zip(series, series[1:])
                ]
                if res > tol and min(orders) < 1.5:
                    offenders.append({"point": idx, "generator": b, "residual": res, "orders": orders})
    if not residuals:
        verdict = INCONCLUSIVE
    else:
        verdict = FAIL if offenders else PASS
    return DiagnosticsReport(
        check="equivariance",
        params={"objective": obj.name, "algebra": g_alg.name, "trials": trials, "seed": seed, "exact": exact},
        samples=len(residuals),
        tolerance=tol,
        verdict=verdict,
        max_residual=max(residuals, default=0.0),
        offenders=worst(offenders),
        extra={"skipped": skipped},
    )


def build_objective(kind: str, **params) -> Objective:
    """Construct a built-in objective by name."""
    builders = {
        "l1_mf": l1_matrix_factorization,
        "frobenius_mf": frobenius_mf,
        "lorentz": lorentz_quartic,
        "relu_net": relu_network,
    }
    if kind not in builders:
        raise ValueError(f"unknown problem {kind!r}; expected one of {sorted(builders)}")
    return builders[kind](**params)
