"""
Conserved quantities of invariant objectives
============================================

A linear group action leaves the projection of ``x x^T`` onto the symmetric
part of its Lie algebra unchanged along subgradient flow. A constant step
subgradient method changes it by exactly ``alpha^2 C(v)`` per step, so the
total drift over a fixed horizon shrinks linearly with the step size.
"""

import numpy as np

from orbitflow import dynamics, lie, objectives
from orbitflow.layout import unpack_factors

rng = np.random.default_rng(1)

###############################################################################
# Matrix factorization: the conserved quantity of the GL(r) action is
# X^T X - Y Y^T, up to a fixed linear map.
f = objectives.frobenius_mf(rng.standard_normal((3, 3)), 2)
x0 = rng.standard_normal(f.dim)
X, Y = unpack_factors(x0, 3, 3, 2)
print("X^T X - Y Y^T at start:\n", X.T @ X - Y @ Y.T)
print("adjoint form with the parameter metric:\n", lie.adjoint_conserved(f.algebra, x0, metric="parameter"))

###############################################################################
# Each step obeys the identity to roundoff; the drift is first order in alpha.
for alpha in (4e-3, 2e-3, 1e-3):
    traj = dynamics.flow_integrate(f, x0, 1.0, alpha)
    print(f"alpha={alpha:.0e}  steps={traj.K}  drift={traj.total_drift:.3e}  "
          f"max identity residual={traj.max_identity_residual():.1e}")

###############################################################################
# A leaky ReLU network is invariant under hidden-unit rescaling; the
# conserved coordinates are the stacked node balances.
net = objectives.relu_network(rng.standard_normal((8, 2)), rng.standard_normal((8, 1)), [2, 4, 1], leak=0.1)
theta = net.sample_point(rng)
traj = dynamics.subgradient_descent(net, theta, 0.01, 500)
print("network loss", traj.values[0], "->", traj.values[-1])
print("node balances at start:", lie.adjoint_conserved(net.algebra, theta, metric="parameter"))
print("node balances at end:  ", lie.adjoint_conserved(net.algebra, traj.points[-1], metric="parameter"))
