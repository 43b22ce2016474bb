"""
Escaping an unstable critical orbit
===================================

For ``f(x, y) = |xy|`` the points on the x axis are critical. Starting near
``(1, 0)`` but off the axis, the subgradient method with a constant step
leaves any small ball: each step adds ``alpha^2 C(v_k)`` to the conserved
quantity, so the monitored value ``<C(x_k), w>`` never decreases.
"""

import numpy as np

from orbitflow import dynamics, objectives

f = objectives.l1_matrix_factorization(np.zeros((1, 1)), 1)
w = -np.diag([1.0, -1.0]) / np.sqrt(2)

###############################################################################
# One trajectory, stopped when it leaves the ball of radius 0.1.
center = np.array([1.0, 0.0])
traj = dynamics.subgradient_descent(
    f, [1.0, 0.02], 0.01, 10**5, chetaev_w=w, stop=lambda x: np.linalg.norm(x - center) >= 0.1
)
res = dynamics.chetaev_monitor(traj, f.algebra, w)
print(f"left the ball after {traj.K} steps at {traj.points[-1]}")
print(f"monitor increments nonnegative: {res.monotone}, identity error {res.max_identity_error:.1e}")

###############################################################################
# A start exactly on the axis never moves: the selection returns 0 there.
axis = dynamics.subgradient_descent(f, center, 0.01, 100)
print("axis start moved:", bool(np.any(axis.points != center)))

###############################################################################
# Monte Carlo estimate of the escape fraction from uniform starts in the ball.
scan = dynamics.instability_scan(f, center, 0.1, 0.01, 10**5, 20, seed=0)
steps = [t["escape_step"] for t in scan.per_trial if t["escaped"]]
print(f"escape fraction {scan.escape_fraction:.2f}, median escape step {int(np.median(steps))}")
