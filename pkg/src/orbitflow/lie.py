"""Matrix Lie algebras acting linearly on R^n.

An algebra is given by a list of generator matrices ``B_1, ..., B_k``. From it
we derive the symmetric part ``s(g) = g ∩ Sym(n)``, orbit tangent spaces
``g x = span{B_i x}`` and the conserved quantity ``C(x) = P_{s(g)}(x x^T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.linalg

from .layout import NetworkLayout
from .subspace import Subspace, orthonormalize

INDEPENDENCE_TOL = 1e-10
CLOSURE_TOL = 1e-8


class GeneratorDependenceError(ValueError):
    """The generator list is not linearly independent."""


class ClosureError(ValueError):
    """The span of the generators is not closed under the commutator."""


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


@dataclass(frozen=True, eq=False)
class ConservedQuantity:
    """``value`` is the n x n matrix C(x); ``coords`` are its coefficients in
    the orthonormal basis of s(g) returned by :func:`symmetric_part`."""

    value: np.ndarray
    coords: np.ndarray


@dataclass(frozen=True, eq=False)
class LieAlgebraBasis:
    """A Lie subalgebra of gl(n, R) given by linearly independent generators.

    ``parameters`` optionally holds, for each generator, the element of the
    abstract algebra it represents (e.g. the r x r matrix ``B`` behind a
    factorization generator). It only affects :func:`adjoint_conserved` with
    ``metric="parameter"``.
    """

    n: int
    generators: np.ndarray
    name: str = "algebra"
    parameters: tuple = field(default=None, repr=False)
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        gens = np.asarray(self.generators, dtype=float)
        if gens.ndim == 2:
            gens = gens[None]
        if gens.ndim != 3 or gens.shape[1:] != (self.n, self.n) or gens.shape[0] == 0:
            raise ValueError(f"generators must be a nonempty stack of {self.n}x{self.n} matrices")
        gens.setflags(write=False)
        object.__setattr__(self, "generators", gens)
        if self.parameters is not None:
            params = tuple(np.asarray(p, dtype=float) for p in self.parameters)
            if len(params) != gens.shape[0]:
                raise ValueError("one parameter element per generator is required")
            object.__setattr__(self, "parameters", params)
        if self.check:
            self._check_independence()
            self._check_closure()

    @property
    def k(self) -> int:
        return self.generators.shape[0]

    @cached_property
    def _flat(self) -> np.ndarray:
        return self.generators.reshape(self.k, -1)

    @cached_property
    def gram(self) -> np.ndarray:
        """Frobenius Gram matrix of the generators."""
        return self._flat @ self._flat.T

    @cached_property
    def is_diagonal(self) -> bool:
        off = self.generators.copy()
        idx = np.arange(self.n)
        off[:, idx, idx] = 0.0
        return not np.any(off)

    def _check_independence(self):
        s = np.linalg.svd(self._flat, compute_uv=False)
        if s[-1] <= INDEPENDENCE_TOL * max(1.0, s[0]):
            raise GeneratorDependenceError(f"{self.name}: generators are linearly dependent")

    def closure_residuals(self) -> np.ndarray:
        """Residual of each commutator ``[B_i, B_j]`` after projection onto
        span(g), divided by ``1 + |B_i| |B_j|``."""
        out = []
        for i, j in combinations(range(self.k), 2):
            Bi, Bj = self.generators[i], self.generators[j]
            c = commutator(Bi, Bj).ravel()
            coef, *_ = np.linalg.lstsq(self._flat.T, c, rcond=None)
            res = np.linalg.norm(c - self._flat.T @ coef)
            out.append(res / (1.0 + np.linalg.norm(Bi) * np.linalg.norm(Bj)))
        return np.asarray(out)

    def _check_closure(self):
        res = self.closure_residuals()
        if res.size and res.max() > CLOSURE_TOL:
            raise ClosureError(f"{self.name}: span is not closed under the commutator (residual {res.max():.3e})")

    def combine(self, coeffs) -> np.ndarray:
        """The matrix ``sum_i coeffs[i] B_i``."""
        return np.tensordot(np.asarray(coeffs, dtype=float), self.generators, axes=1)

    def combine_parameters(self, coeffs) -> np.ndarray:
        if self.parameters is None:
            return self.combine(coeffs)
        return sum(c * p for c, p in zip(coeffs, self.parameters))

    def group_element(self, coeffs) -> np.ndarray:
        """``exp(sum_i coeffs[i] B_i)``; elementwise for diagonal algebras."""
        A = self.combine(coeffs)
        if self.is_diagonal:
            return np.diag(np.exp(np.diag(A)))
        return scipy.linalg.expm(A)

    @cached_property
    def _symmetric_basis(self) -> np.ndarray:
        antisym = (self.generators - self.generators.transpose(0, 2, 1)).reshape(self.k, -1).T
        u, s, vt = np.linalg.svd(antisym, full_matrices=True)
        scale = max(1.0, float(np.linalg.norm(self.generators)))
        rank = int(np.sum(s > INDEPENDENCE_TOL * scale))
        null = vt[rank:].T
        if null.shape[1] == self.k:
            null = np.eye(self.k)
        elements = [self.combine(c) for c in null.T]
        # symmetrize to strip rounding-level skew parts
        elements = [0.5 * (E + E.T) for E in elements]
        S = orthonormalize([E.ravel() for E in elements], ambient_dim=self.n * self.n)
        mats = S.basis.T.reshape(-1, self.n, self.n)
        return np.ascontiguousarray(mats)


def symmetric_part(g: LieAlgebraBasis) -> Subspace:
    """Orthonormal (Frobenius) basis of s(g), as a subspace of R^{n^2}.

    Matrices are vectorized row-major; use :func:`symmetric_basis_matrices`
    for the n x n form.
    """
    mats = g._symmetric_basis
    return Subspace(g.n * g.n, mats.reshape(mats.shape[0], g.n * g.n).T)


def symmetric_basis_matrices(g: LieAlgebraBasis) -> np.ndarray:
    """Stack of shape ``(dim s(g), n, n)``."""
    return g._symmetric_basis


def conserved_coords(g: LieAlgebraBasis, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    S = g._symmetric_basis
    if S.shape[0] == 0:
        return np.zeros(0)
    return np.einsum("i,kij,j->k", x, S, x)


def conserved_quantity(g: LieAlgebraBasis, x) -> ConservedQuantity:
    """``C(x) = P_{s(g)}(x x^T)`` under the Frobenius inner product."""
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n,):
        raise ValueError(f"expected a vector of length {g.n}")
    coords = conserved_coords(g, x)
    S = g._symmetric_basis
    value = np.tensordot(coords, S, axes=1) if S.shape[0] else np.zeros((g.n, g.n))
    return ConservedQuantity(value=value, coords=coords)


def orbit_tangent(g: LieAlgebraBasis, x) -> Subspace:
    """Tangent space ``g x = span{B_i x}`` of the orbit through ``x``."""
    x = np.asarray(x, dtype=float)
    return orthonormalize(list(g.generators @ x), ambient_dim=g.n)


def adjoint_conserved(g: LieAlgebraBasis, x, metric: str = "frobenius") -> np.ndarray:
    """Coefficients over the generators of the adjoint of ``B -> B x``
    applied to ``x``.

    Solves ``G c = r`` with ``r_i = <B_i x, x>``. With ``metric="frobenius"``
    ``G`` is the Frobenius Gram matrix of the generators; with
    ``metric="parameter"`` it is the Gram matrix of ``g.parameters``, which
    gives e.g. ``X^T X - Y Y^T`` for the factorization algebra via
    :meth:`LieAlgebraBasis.combine_parameters`.
    """
    x = np.asarray(x, dtype=float)
    r = np.einsum("i,kij,j->k", x, g.generators, x)
    if metric == "frobenius" or g.parameters is None:
        G = g.gram
    elif metric == "parameter":
        P = np.stack([p.ravel() for p in g.parameters])
        G = P @ P.T
    else:
        raise ValueError(f"unknown metric {metric!r}")
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= INDEPENDENCE_TOL * max(1.0, s[0]):
        raise GeneratorDependenceError("singular Gram matrix")
    return np.linalg.solve(G, r)


# built-in algebras


def _unit(n, i, j):
    E = np.zeros((n, n))
    E[i, j] = 1.0
    return E


def _positive(**sizes):
    for name, v in sizes.items():
        if int(v) != v or v <= 0:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")


def lorentz(n: int) -> LieAlgebraBasis:
    """Lie algebra of ``{A : A^T D A = D}``, ``D = diag(1, ..., 1, -1)``:
    rotations among the first n-1 coordinates and boosts against the last."""
    _positive(n=n)
    if n < 2:
        raise ValueError("lorentz algebra needs n >= 2")
    gens = [_unit(n, i, j) - _unit(n, j, i) for i, j in combinations(range(n - 1), 2)]
    gens += [_unit(n, i, n - 1) + _unit(n, n - 1, i) for i in range(n - 1)]
    return LieAlgebraBasis(n, np.stack(gens), name=f"lorentz({n})")


def _factorization_generator(B, m, n):
    r = B.shape[0]
    out = np.zeros(((m + n) * r, (m + n) * r))
    out[: m * r, : m * r] = np.kron(B.T, np.eye(m))
    out[m * r :, m * r :] = -np.kron(np.eye(n), B)
    return out


def factorization(m: int, n: int, r: int) -> LieAlgebraBasis:
    """gl(r) acting on ``(X, Y)`` by ``(X B, -B Y)``."""
    _positive(m=m, n=n, r=r)
    params = [_unit(r, a, b) for a in range(r) for b in range(r)]
    gens = np.stack([_factorization_generator(B, m, n) for B in params])
    return LieAlgebraBasis((m + n) * r, gens, name=f"factorization({m},{n},{r})", parameters=params)


def diagonal_rescaling(m: int, n: int, r: int) -> LieAlgebraBasis:
    """Diagonal subalgebra of :func:`factorization`."""
    _positive(m=m, n=n, r=r)
    params = [_unit(r, a, a) for a in range(r)]
    gens = np.stack([_factorization_generator(B, m, n) for B in params])
    return LieAlgebraBasis((m + n) * r, gens, name=f"diagonal_rescaling({m},{n},{r})", parameters=params)


def nn_rescaling(widths) -> LieAlgebraBasis:
    """Positive rescaling of hidden units.

    Unit ``j`` of hidden layer ``i`` scales row ``j`` of ``W_i`` and entry
    ``j`` of ``b_i`` up, and column ``j`` of ``W_{i+1}`` down. The parameter
    element of each generator is the corresponding unit vector of
    ``R^{n_1 + ... + n_{l-1}}``.
    """
    layout = NetworkLayout(tuple(widths))
    N = layout.size
    hidden = sum(layout.widths[1:-1])
    gens, params = [], []
    for i in range(1, layout.layers):
        rows, cols = layout.widths[i], layout.widths[i - 1]
        nxt = layout.widths[i + 1]
        for j in range(rows):
            d = np.zeros(N)
            w_in = np.zeros((rows, cols))
            w_in[j, :] = 1.0
            d[layout.weight_slice(i)] = w_in.ravel(order="F")
            w_out = np.zeros((nxt, rows))
            w_out[:, j] = -1.0
            d[layout.weight_slice(i + 1)] = w_out.ravel(order="F")
            d[layout.bias_slice(i).start + j] = 1.0
            gens.append(np.diag(d))
            e = np.zeros(hidden)
            e[len(params)] = 1.0
            params.append(e)
    return LieAlgebraBasis(N, np.stack(gens), name=f"nn_rescaling({'-'.join(map(str, layout.widths))})", parameters=params)


def rotation_pair(a: float) -> LieAlgebraBasis:
    """One-parameter group rotating two planes of R^4 at speeds 1 and ``a``."""
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    gen = scipy.linalg.block_diag(J, a * J)
    return LieAlgebraBasis(4, gen[None], name=f"rotation_pair({a:g})")


BUILTINS = {
    "lorentz": lorentz,
    "factorization": factorization,
    "diagonal_rescaling": diagonal_rescaling,
    "nn_rescaling": nn_rescaling,
    "rotation_pair": rotation_pair,
}


def builtin_algebra(kind: str, **params) -> LieAlgebraBasis:
    """Construct a built-in algebra by name, e.g.
    ``builtin_algebra("factorization", m=2, n=3, r=1)``."""
    if kind not in BUILTINS:
        raise ValueError(f"unknown algebra {kind!r}; expected one of {sorted(BUILTINS)}")
    return BUILTINS[kind](**params)
