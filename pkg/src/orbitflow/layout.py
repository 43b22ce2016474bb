"""Flat parameter-vector layouts shared by the algebras and the objectives.

Matrix factors are vectorized column-major, so that ``vec(X A) =
(A^T kron I_m) vec(X)`` and ``vec(A Y) = (I_n kron A) vec(Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def vec(A) -> np.ndarray:
    return np.asarray(A, dtype=float).ravel(order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def pack_factors(X, Y) -> np.ndarray:
    return np.concatenate([vec(X), vec(Y)])


def unpack_factors(x, m: int, n: int, r: int):
    x = np.asarray(x, dtype=float)
    if x.size != (m + n) * r:
        raise ValueError(f"expected {(m + n) * r} entries, got {x.size}")
    return unvec(x[: m * r], m, r), unvec(x[m * r :], r, n)


@dataclass(frozen=True)
class NetworkLayout:
    """Offsets of ``(W_1, ..., W_l, b_1, ..., b_l)`` inside one flat vector.

    ``W_i`` has shape ``(widths[i], widths[i-1])``; ``b_i`` has length
    ``widths[i]``.
    """

    widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 3:
            raise ValueError("a network needs at least two layers (three widths)")
        if any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")

    @property
    def layers(self) -> int:
        return len(self.widths) - 1

    def weight_slice(self, i: int) -> slice:
        """Slice of ``W_i`` (1-based layer index)."""
        start = sum(self.widths[j] * self.widths[j - 1] for j in range(1, i))
        return slice(start, start + self.widths[i] * self.widths[i - 1])

    def bias_slice(self, i: int) -> slice:
        start = self.weight_size + sum(self.widths[1:i])
        return slice(start, start + self.widths[i])

    @property
    def weight_size(self) -> int:
        return sum(self.widths[j] * self.widths[j - 1] for j in range(1, len(self.widths)))

    @property
    def size(self) -> int:
        return self.weight_size + sum(self.widths[1:])

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.size:
            raise ValueError(f"expected {self.size} parameters, got {theta.size}")
        Ws = [unvec(theta[self.weight_slice(i)], self.widths[i], self.widths[i - 1]) for i in range(1, self.layers + 1)]
        bs = [theta[self.bias_slice(i)].copy() for i in range(1, self.layers + 1)]
        return Ws, bs

    def pack(self, Ws, bs) -> np.ndarray:
        return np.concatenate([vec(W) for W in Ws] + [np.asarray(b, dtype=float).ravel() for b in bs])
