"""Conserved quantities, orbit geometry and subgradient dynamics for
nonsmooth objectives invariant under a matrix Lie group."""

from .subspace import Subspace, orthonormalize, project, projector_gap, subspace_distance
from .lie import (
    ConservedQuantity,
    LieAlgebraBasis,
    adjoint_conserved,
    builtin_algebra,
    conserved_quantity,
    diagonal_rescaling,
    factorization,
    lorentz,
    nn_rescaling,
    orbit_tangent,
    rotation_pair,
    symmetric_part,
)
from .objectives import (
    Objective,
    conservative_field_equivariance_check,
    frobenius_mf,
    l1_matrix_factorization,
    lorentz_quartic,
    relu_network,
)
from .dynamics import Trajectory, chetaev_monitor, flow_integrate, instability_scan, subgradient_descent
from .report import DiagnosticsReport

__version__ = "0.1.0"
