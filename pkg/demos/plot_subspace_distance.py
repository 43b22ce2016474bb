"""
Distances between subspaces
===========================

The gap between two subspaces is the largest distance from a unit vector of
the first to the second. For subspaces of equal dimension it coincides with
the spectral norm of the difference of the orthogonal projectors.
"""

import numpy as np

from orbitflow import orthonormalize, projector_gap, subspace_distance

###############################################################################
# Two planes in R^4 sharing one direction and tilted by an angle theta in the
# other: the distance is sin(theta).
V = orthonormalize([[1, 0, 0, 0], [0, 1, 0, 0]])
for theta in np.linspace(0, np.pi / 2, 5):
    W = orthonormalize([[1, 0, 0, 0], [0, np.cos(theta), np.sin(theta), 0]])
    print(f"theta={theta:.3f}  d={subspace_distance(V, W):.6f}  sin={np.sin(theta):.6f}")

###############################################################################
# The projector gap agrees with the distance for random pairs of equal
# dimension, but the distance is not symmetric once dimensions differ.
rng = np.random.default_rng(0)
A, B = orthonormalize(rng.standard_normal((3, 6))), orthonormalize(rng.standard_normal((3, 6)))
print("gap - distance:", projector_gap(A, B) - subspace_distance(A, B))
line = orthonormalize([[1, 0, 0, 0]])
print("d(line, plane) =", subspace_distance(line, V), " d(plane, line) =", subspace_distance(V, line))
