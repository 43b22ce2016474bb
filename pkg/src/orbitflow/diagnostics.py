"""Numeric checks of the orbit-geometry and instability statements.

Each check returns a :class:`~orbitflow.report.DiagnosticsReport`. O(.)
statements are tested on a decreasing radius schedule: the sup of the
relevant ratio over sampled pairs may at most double from one radius to the
next.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import lie
from .dynamics import sample_ball
from .objectives import EnumerationUnavailable, Objective
from .report import FAIL, INCONCLUSIVE, INFORMATIONAL, MAX_OFFENDERS, PASS, DiagnosticsReport, worst
from .subspace import orthonormalize, project, subspace_distance

GROWTH_FACTOR = 2.0
MIN_SEPARATION = 1e-9
ORBIT_REJECT = 1e-7
# roundoff allowance on distance - bound
IMAGE_SLACK = 1e-12


class PreconditionError(ValueError):
    pass


def _algebra(obj, g):
    if g is not None:
        return g
    if obj is None:
        raise ValueError("an algebra is required")
    return obj.algebra


def _sup_ratio_verdict(sups):
    finite = [s for s in sups if s is not None]
    if len(finite) < len(sups) or not finite:
        return INCONCLUSIVE
    ok = all(b <= GROWTH_FACTOR * a for a, b in zip(finite, finite[1:]))
    return PASS if ok else FAIL


def orbital_projection_check(obj: Objective, points, g: lie.LieAlgebraBasis | None = None, tol: float = 1e-8, use_enumerator: bool = True) -> DiagnosticsReport:
    """Residual ``|P_{T_x G x} v| / (1 + |v|)`` for the selected subgradient
    and, when available, every enumerated extreme subgradient."""
    g = _algebra(obj, g)
    offenders, count, max_res = [], 0, 0.0
    for idx, x in enumerate(points):
        x = np.asarray(x, dtype=float)
        T = lie.orbit_tangent(g, x)
        vs = [("selection", obj.subgrad(x))]
        if use_enumerator and obj.enumerate_extreme is not None:
            try:
                vs += [("extreme", v) for v in obj.enumerate_extreme(x)]
            except EnumerationUnavailable:
                pass
        for label, v in vs:
            res = float(np.linalg.norm(project(T, v)) / (1.0 + np.linalg.norm(v)))
            count += 1
            max_res = max(max_res, res)
            if res > tol:
                offenders.append({"point": idx, "kind": label, "residual": res})
    return DiagnosticsReport(
        check="orbital_projection",
        params={"objective": obj.name, "algebra": g.name},
        samples=count,
        tolerance=tol,
        verdict=FAIL if offenders else PASS,
        max_residual=max_res,
        offenders=worst(offenders),
    )


def convex_combination_residual(v, extremes) -> float:
    """Upper bound on the distance from ``v`` to the convex hull of the rows
    of ``extremes``.

    Nonnegative least squares with a sum-to-one row at the data scale; the
    weights are renormalized, so the bound is attained by a hull point and is
    exact (zero up to roundoff) when ``v`` lies in the hull.
    """
    from scipy.optimize import nnls

    E = np.asarray(extremes, dtype=float)
    v = np.asarray(v, dtype=float)
    weight = 1.0 + np.abs(E).max()
    A = np.vstack([E.T, weight * np.ones(len(E))])
    b = np.concatenate([v, [weight]])
    lam, _ = nnls(A, b)
    if lam.sum() <= 0:
        return float(np.linalg.norm(v) + 1.0)
    return float(np.linalg.norm(E.T @ (lam / lam.sum()) - v))


def orbit_sampler(g: lie.LieAlgebraBasis, xbar) -> Callable[[np.random.Generator, float], np.ndarray]:
    """Random points ``exp(A) xbar``, ``A`` in the algebra, within a given
    distance of ``xbar``."""
    xbar = np.asarray(xbar, dtype=float)

    def sample(rng, rho):
        c = rng.standard_normal(g.k)
        c /= np.linalg.norm(c)
        t = rho * rng.random()
        direction = np.linalg.norm(g.combine(c) @ xbar)
        if direction > 0:
            t /= direction
        for _ in range(60):
            x = g.group_element(t * c) @ xbar
            if np.linalg.norm(x - xbar) <= rho:
                return x
            t *= 0.5
        return xbar.copy()

    return sample


def perturbed_projection_slope(
    obj: Objective,
    xbar,
    radii=(0.1, 0.05, 0.025),
    samples_per_radius: int = 200,
    g: lie.LieAlgebraBasis | None = None,
    seed: int = 0,
    on_orbit: bool = True,
) -> DiagnosticsReport:
    """Sup over pairs of ``|P_{T_x G x} v| / (|x - y| |v|)``, ``v = subgrad(y)``.

    ``y`` is uniform in ``B_rho(xbar)``; ``x`` is drawn on the orbit of
    ``xbar`` (``on_orbit=True``) or uniformly in the ball.
    """
    g = _algebra(obj, g)
    xbar = np.asarray(xbar, dtype=float)
    rng = np.random.default_rng(seed)
    on_orbit_sample = orbit_sampler(g, xbar)
    sups, offenders, used = [], [], 0
    for rho in radii:
        best = None
        for _ in range(samples_per_radius):
            x = on_orbit_sample(rng, rho) if on_orbit else sample_ball(rng, xbar, rho)
            y = sample_ball(rng, xbar, rho)
            v = obj.subgrad(y)
            dist, vnorm = np.linalg.norm(x - y), np.linalg.norm(v)
            if dist <= MIN_SEPARATION or vnorm == 0:
                continue
            ratio = float(np.linalg.norm(project(lie.orbit_tangent(g, x), v)) / (dist * vnorm))
            used += 1
            if best is None or ratio > best:
                best = ratio
            offenders.append({"radius": rho, "x": x, "y": y, "residual": ratio})
        sups.append(best)
    return DiagnosticsReport(
        check="perturbed_projection",
        params={"objective": obj.name, "xbar": xbar, "radii": list(radii), "on_orbit": on_orbit, "seed": seed},
        samples=used,
        tolerance=GROWTH_FACTOR,
        verdict=_sup_ratio_verdict(sups),
        slopes=[s if s is not None else float("nan") for s in sups],
        offenders=worst(offenders),
    )


def tangent_lipschitz_check(
    g: lie.LieAlgebraBasis,
    xbar,
    radii=(0.1, 0.05, 0.025),
    samples: int = 200,
    seed: int = 0,
) -> DiagnosticsReport:
    """Sup over pairs in ``B_rho(xbar)`` of ``d(T_x G x, T_y G y) / |x - y|``.

    Fails outright if the orbit dimension at some sample differs from the
    one at ``xbar``.
    """
    xbar = np.asarray(xbar, dtype=float)
    rng = np.random.default_rng(seed)
    base_dim = lie.orbit_tangent(g, xbar).dim
    params = {"algebra": g.name, "xbar": xbar, "radii": list(radii), "seed": seed}
    sups, offenders, jumps, used = [], [], [], 0
    for rho in radii:
        best = None
        for _ in range(samples):
            x, y = sample_ball(rng, xbar, rho), sample_ball(rng, xbar, rho)
            Tx, Ty = lie.orbit_tangent(g, x), lie.orbit_tangent(g, y)
            for p, T in ((x, Tx), (y, Ty)):
                if T.dim != base_dim:
                    jumps.append({"radius": rho, "point": p, "dim": T.dim, "base_dim": base_dim, "residual": float(abs(T.dim - base_dim))})
            dist = np.linalg.norm(x - y)
            if dist <= MIN_SEPARATION:
                continue
            ratio = float(subspace_distance(Tx, Ty) / dist)
            used += 1
            if best is None or ratio > best:
                best = ratio
            offenders.append({"radius": rho, "x": x, "y": y, "residual": ratio})
        sups.append(best)
    slopes = [s if s is not None else float("nan") for s in sups]
    if jumps:
        return DiagnosticsReport(
            check="tangent_lipschitz",
            params=params,
            samples=used,
            tolerance=GROWTH_FACTOR,
            verdict=FAIL,
            slopes=slopes,
            offenders=jumps[:MAX_OFFENDERS],
            message="orbit dimension not locally constant",
        )
    return DiagnosticsReport(
        check="tangent_lipschitz",
        params=params,
        samples=used,
        tolerance=GROWTH_FACTOR,
        verdict=_sup_ratio_verdict(sups),
        slopes=slopes,
        offenders=worst(offenders),
    )


def _spectral_perturbation(rng, shape, scale):
    E = rng.standard_normal(shape)
    return E * (scale * rng.random() / np.linalg.norm(E, 2))


def image_distance_check(Abar, perturbation_scale: float, trials: int = 100, seed: int = 0) -> DiagnosticsReport:
    """``d(Im A, Im B) <= 2 |A - B| / sigma_min(Abar)`` for ``A, B`` within
    ``perturbation_scale`` (spectral norm) of an injective ``Abar``.
    The first trial uses ``A = B``."""
    Abar = np.asarray(Abar, dtype=float)
    s = np.linalg.svd(Abar, compute_uv=False)
    if Abar.shape[1] > Abar.shape[0] or s[-1] <= 1e-12 * max(1.0, s[0]):
        raise PreconditionError("Abar is not injective")
    smin = float(s[-1])
    if perturbation_scale > smin / 2:
        raise PreconditionError(f"perturbation_scale must be <= sigma_min / 2 = {smin / 2:.6g}")
    rng = np.random.default_rng(seed)
    offenders, max_excess, ratios = [], -np.inf, []
    for t in range(trials):
        A = Abar + _spectral_perturbation(rng, Abar.shape, perturbation_scale)
        B = A.copy() if t == 0 else Abar + _spectral_perturbation(rng, Abar.shape, perturbation_scale)
        lhs = subspace_distance(orthonormalize(A.T), orthonormalize(B.T))
        bound = 2.0 * np.linalg.norm(A - B, 2) / smin
        excess = lhs - bound
        max_excess = max(max_excess, excess)
        if bound > 0:
            ratios.append(lhs / bound)
        if excess > IMAGE_SLACK:
            offenders.append({"trial": t, "distance": lhs, "bound": bound, "residual": excess})
    return DiagnosticsReport(
        check="image_distance",
        params={"shape": list(Abar.shape), "perturbation_scale": perturbation_scale, "trials": trials, "seed": seed},
        samples=trials,
        tolerance=IMAGE_SLACK,
        verdict=FAIL if offenders else PASS,
        max_residual=float(max_excess),
        offenders=worst(offenders),
        extra={"sigma_min": smin, "max_distance_over_bound": max(ratios, default=0.0)},
    )


def local_orbit_distance(obj: Objective, xbar) -> Callable[[np.ndarray], float]:
    """Closed-form local distance to the orbit of ``xbar`` for the presets.

    Scalar factorization (``m = n = r = 1``): the orbit of ``(a, b)`` is the
    branch of ``xy = ab`` through it, a half-axis when ``ab = 0``. Lorentz:
    the level set ``<x, Dx> = <xbar, D xbar>``, distance to first order.
    """
    xbar = np.asarray(xbar, dtype=float)
    p = obj.params
    if obj.name in ("l1_mf", "frobenius_mf") and (p["m"], p["n"], p["r"]) == (1, 1, 1):
        a, b = xbar
        if b == 0 and a != 0:
            return lambda x: float(abs(x[1]))
        if a == 0 and b != 0:
            return lambda x: float(abs(x[0]))
        level = a * b

        def hyperbola(x):
            gnorm = np.hypot(x[0], x[1])
            return float(abs(x[0] * x[1] - level) / gnorm) if gnorm > 0 else float(np.linalg.norm(x - xbar))

        return hyperbola
    if obj.name == "lorentz":
        D = np.ones(xbar.size)
        D[-1] = -1.0
        level = xbar @ (D * xbar)

        def level_set(x):
            return float(abs(x @ (D * x) - level) / (2.0 * np.linalg.norm(D * x)))

        return level_set
    raise ValueError(f"no closed-form orbit description for {obj.name} with params {p}")


def subregularity_fit(
    obj: Objective,
    xbar,
    radii=(0.1, 0.05, 0.025),
    samples: int = 100,
    seed: int = 0,
    orbit_distance: Callable | None = None,
) -> DiagnosticsReport:
    """Least-squares fit of ``log a = log kappa + eta log b`` with
    ``a = d(x, G xbar)`` and ``b = |subgrad(x)|``. Informational."""
    xbar = np.asarray(xbar, dtype=float)
    dist = orbit_distance or local_orbit_distance(obj, xbar)
    rng = np.random.default_rng(seed)
    a_vals, b_vals = [], []
    for rho in radii:
        for _ in range(samples):
            x = sample_ball(rng, xbar, rho)
            a_vals.append(dist(x))
            b_vals.append(float(np.linalg.norm(obj.subgrad(x))))
    a, b = np.array(a_vals), np.array(b_vals)
    params = {"objective": obj.name, "xbar": xbar, "radii": list(radii), "samples": samples, "seed": seed}
    keep = (a > 0) & (b > 1e-12)
    if not keep.any():
        return DiagnosticsReport("subregularity", params, len(a), None, INCONCLUSIVE, message="no samples with positive orbit distance and subgradient norm")
    la, lb = np.log(a[keep]), np.log(b[keep])
    flags = []
    if lb.max() - lb.min() < 0.25 * max(la.max() - la.min(), 1e-12):
        flags.append("b not vanishing")
    if keep.sum() < 2 or np.ptp(lb) == 0:
        return DiagnosticsReport("subregularity", params, int(keep.sum()), None, INCONCLUSIVE, message="; ".join(flags or ["degenerate samples"]))
    eta, logk = np.polyfit(lb, la, 1)
    fit_residual = float(np.sqrt(np.mean((la - (logk + eta * lb)) ** 2)))
    return DiagnosticsReport(
        check="subregularity",
        params=params,
        samples=int(keep.sum()),
        tolerance=None,
        verdict=INFORMATIONAL,
        slopes=[float(eta)],
        message="; ".join(flags),
        extra={"kappa": float(np.exp(logk)), "eta": float(eta), "fit_residual": fit_residual, "flags": flags},
    )


def chetaev_condition_check(
    obj: Objective,
    xbar,
    radius: float = 0.1,
    samples: int = 200,
    tol: float = 0.0,
    seed: int = 0,
    g: lie.LieAlgebraBasis | None = None,
    orbit_distance: Callable | None = None,
) -> DiagnosticsReport:
    """``<C(u), C(v)> > tol |C(u)| |C(v)|`` for subgradients ``u, v`` at
    off-orbit pairs in ``B_radius(xbar)``.

    Points within ``1e-7`` of the orbit are resampled; pairs with a zero
    subgradient are excluded. Inconclusive when every ``C`` value vanishes.
    """
    g = _algebra(obj, g)
    xbar = np.asarray(xbar, dtype=float)
    dist = orbit_distance or local_orbit_distance(obj, xbar)
    rng = np.random.default_rng(seed)

    def off_orbit():
        for _ in range(1000):
            x = sample_ball(rng, xbar, radius)
            if dist(x) > ORBIT_REJECT:
                return x
        raise PreconditionError("could not sample off-orbit points")

    offenders, values, used, nonzero = [], [], 0, 0
    for _ in range(samples):
        x, y = off_orbit(), off_orbit()
        u, v = obj.subgrad(x), obj.subgrad(y)
        if not np.any(u) or not np.any(v):
            continue
        Cu, Cv = lie.conserved_quantity(g, u).value, lie.conserved_quantity(g, v).value
        nu, nv = np.linalg.norm(Cu), np.linalg.norm(Cv)
        used += 1
        if nu > 1e-14 and nv > 1e-14:
            nonzero += 1
        inner = float(np.sum(Cu * Cv))
        margin = inner - tol * nu * nv
        cosine = inner / (nu * nv) if nu * nv > 0 else 0.0
        values.append(cosine)
        if not margin > 0 or nu <= 1e-14 or nv <= 1e-14:
            offenders.append({"x": x, "y": y, "inner": inner, "residual": -cosine})
    params = {"objective": obj.name, "xbar": xbar, "radius": radius, "samples": samples, "tol": tol, "seed": seed}
    if nonzero == 0:
        return DiagnosticsReport("chetaev_condition", params, used, tol, INCONCLUSIVE, message="all C values vanish")
    return DiagnosticsReport(
        check="chetaev_condition",
        params=params,
        samples=used,
        tolerance=tol,
        verdict=FAIL if offenders else PASS,
        max_residual=-min(values),
        offenders=worst(offenders),
        extra={"min_cosine": min(values)},
    )
