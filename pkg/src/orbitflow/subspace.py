"""Linear subspaces stored by orthonormal bases, projections and the
Grassmannian distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-10


class DimensionError(ValueError):
    """Raised when ambient dimensions of operands disagree."""


@dataclass(frozen=True, eq=False)
class Subspace:
    """A linear subspace of R^n.

    ``basis`` has shape ``(ambient_dim, k)`` with orthonormal columns; ``k``
    may be zero.
    """

    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float).reshape(self.ambient_dim, -1)
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def __repr__(self):
        return f"Subspace(ambient_dim={self.ambient_dim}, dim={self.dim})"


def zero_subspace(n: int) -> Subspace:
    return Subspace(n, np.zeros((n, 0)))


def orthonormalize(vectors, rank_tol: float = DEFAULT_RANK_TOL, ambient_dim: int | None = None) -> Subspace:
    """Orthonormal basis of the span of ``vectors`` by modified Gram-Schmidt
    with one re-orthogonalization pass.

    A candidate column is dropped when its residual after projection onto the
    columns accepted so far is at most ``rank_tol * (1 + max input norm)``.
    ``ambient_dim`` is needed only when ``vectors`` is empty.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not vecs:
        if ambient_dim is None:
            raise DimensionError("ambient_dim is required for an empty vector list")
        return zero_subspace(ambient_dim)
    n = vecs[0].size
    if any(v.size != n for v in vecs) or (ambient_dim is not None and ambient_dim != n):
        raise DimensionError("vectors do not share one ambient dimension")

    threshold = rank_tol * (1.0 + max(np.linalg.norm(v) for v in vecs))
    accepted: list[np.ndarray] = []
    for v in vecs:
        w = v.copy()
        for _ in range(2):
            for q in accepted:
                w -= (q @ w) * q
        norm = np.linalg.norm(w)
        if norm > threshold:
            accepted.append(w / norm)
    if not accepted:
        return zero_subspace(n)
    return Subspace(n, np.column_stack(accepted))


def _check_dims(a: Subspace, b) -> None:
    other = b.ambient_dim if isinstance(b, Subspace) else np.shape(b)[0]
    if a.ambient_dim != other:
        raise DimensionError(f"ambient dimensions differ: {a.ambient_dim} vs {other}")


def project(S: Subspace, x) -> np.ndarray:
    """Orthogonal projection of ``x`` onto ``S``."""
    x = np.asarray(x, dtype=float)
    _check_dims(S, x)
    if S.dim == 0:
        return np.zeros_like(x)
    return S.basis @ (S.basis.T @ x)


def subspace_distance(V: Subspace, W: Subspace) -> float:
    """sup over unit v in V of the distance from v to W.

    Equals the largest singular value of ``(I - P_W)`` restricted to ``V``.
    Zero when ``V = {0}``.
    """
    _check_dims(V, W)
    if V.dim == 0:
        return 0.0
    residual = V.basis - W.basis @ (W.basis.T @ V.basis)
    s = np.linalg.svd(residual, compute_uv=False)
    return float(min(1.0, s[0]))


def projector_gap(V: Subspace, W: Subspace) -> float:
    """Spectral norm of ``P_V - P_W``."""
    _check_dims(V, W)
    return float(np.linalg.norm(V.projector() - W.projector(), 2))
