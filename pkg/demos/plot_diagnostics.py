"""
Numerical checks of orbit geometry
==================================

Subgradients of an invariant function are orthogonal to the orbit tangent.
Nearby, the tangent projection grows at most linearly with the distance
between points, and so does the distance between tangent spaces. These
checks estimate the ratios on shrinking balls and ask that they stay bounded.
"""

import numpy as np

from orbitflow import diagnostics, lie, objectives

lorentz = objectives.lorentz_quartic(2)
abs_xy = objectives.l1_matrix_factorization(np.zeros((1, 1)), 1)
rng = np.random.default_rng(2)

###############################################################################
# Orthogonality at random points.
report = diagnostics.orbital_projection_check(lorentz, [lorentz.sample_point(rng) for _ in range(100)])
print(report.verdict, report.max_residual)

###############################################################################
# Sup ratios on radii 0.1, 0.05, 0.025.
for name, rep in [
    ("perturbed projection, |xy|", diagnostics.perturbed_projection_slope(abs_xy, [1.0, 0.0])),
    ("tangent Lipschitz, Lorentz", diagnostics.tangent_lipschitz_check(lie.lorentz(2), [1.0, 0.0])),
    ("tangent Lipschitz, factorization at 0", diagnostics.tangent_lipschitz_check(lie.factorization(1, 1, 1), [0.0, 0.0])),
]:
    print(f"{name}: {rep.verdict} {rep.slopes} {rep.message}")

###############################################################################
# The sign condition holds near (1, 0) and fails across the diagonal |x| = |y|.
for xbar in ([1.0, 0.0], np.array([1.0, 1.0]) / np.sqrt(2)):
    rep = diagnostics.chetaev_condition_check(abs_xy, xbar)
    print(xbar, rep.verdict, rep.extra.get("min_cosine"))

###############################################################################
# Subregularity is informational: the fitted exponent for the Lorentz quartic
# is close to one.
fit = diagnostics.subregularity_fit(lorentz, [1.0, 0.0])
print("eta =", fit.extra["eta"], "kappa =", fit.extra["kappa"])
