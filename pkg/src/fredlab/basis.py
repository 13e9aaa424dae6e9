"""Trigonometric stream bases and Gram machinery.

Basis elements are products of channel harmonics ``sin(l pi y / L)``
with ``1``, ``cos(kx)`` or ``sin(kx)``, normalized to unit norm in the
velocity pairing (the Dirichlet energy of the stream function).  The
basis is not exactly orthogonal in the discrete pairing, so operator
spectra are always computed against the assembled Gram matrix.
"""

from __future__ import annotations

import numpy as np

from .derivatives import x_derivative, y_derivative
from .errors import ConfigError, NumericsError
from .grid import ChannelGrid

__all__ = [
    "StreamBasis",
    "velocity_pair_matrix",
    "random_stream_values",
    "random_smooth_values",
]


def _gradient_stacks(stack: np.ndarray, grid: ChannelGrid) -> tuple[np.ndarray, np.ndarray]:
    return x_derivative(stack, grid, 1), y_derivative(stack, grid)


def velocity_pair_matrix(A: np.ndarray, B: np.ndarray, grid: ChannelGrid) -> np.ndarray:
    """Pairing matrix ``<v_{A_i}, v_{B_j}>`` of two stream stacks."""
    qw = grid.quad_weights()
    Ax, Ay = _gradient_stacks(A, grid)
    Bx, By = _gradient_stacks(B, grid)
    return np.einsum("aij,bij->ab", qw * Ax, Bx, optimize=True) + np.einsum(
        "aij,bij->ab", qw * Ay, By, optimize=True
    )


class StreamBasis:
    """Finite family of normalized stream functions on one grid."""

    def __init__(self, grid: ChannelGrid, max_k: int = 8, max_l: int = 12):
        if max_k < 0 or max_l < 1:
            raise ConfigError(f"invalid basis bounds max_k={max_k}, max_l={max_l}")
        if max_k > grid.nx // 3:
            raise ConfigError(
                f"max_k={max_k} exceeds the dealiased band of nx={grid.nx}"
            )
        if max_l >= grid.ny - 1:
            raise ConfigError(f"max_l={max_l} is unresolved on ny={grid.ny} rows")
        self.grid = grid
        self.max_k = max_k
        self.max_l = max_l
        X, Y = grid.meshgrid()
        fields = []
        names = []
        for l in range(1, max_l + 1):
            wall = np.sin(l * np.pi * Y / grid.height)
            wall[:, 0] = 0.0
            wall[:, -1] = 0.0
            fields.append(wall.copy())
            names.append(f"k0l{l}")
            for k in range(1, max_k + 1):
                fields.append(np.cos(k * X) * wall)
                names.append(f"c{k}l{l}")
                fields.append(np.sin(k * X) * wall)
                names.append(f"s{k}l{l}")
        stack = np.stack(fields)
        g = velocity_pair_matrix(stack, stack, grid)
        norms = np.sqrt(np.diag(g))
        if np.any(norms <= 0.0) or not np.all(np.isfinite(norms)):
            raise NumericsError("degenerate basis element")
        self.fields = stack / norms[:, None, None]
        self.names = names
        self._gram: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.fields.shape[0]

    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = velocity_pair_matrix(self.fields, self.fields, self.grid)
        return self._gram

    def pair_with(self, stack: np.ndarray) -> np.ndarray:
        """Matrix ``<v_{e_i}, v_{stack_j}>`` for an arbitrary stream stack."""
        return velocity_pair_matrix(self.fields, stack, self.grid)

    def coords(self, stack: np.ndarray) -> np.ndarray:
        """Pairing-orthogonal coordinates of fields in the basis span."""
        return np.linalg.solve(self.gram(), self.pair_with(stack)).T

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(coords)
        return np.einsum("ca,aij->cij", coords, self.fields, optimize=True)


def random_smooth_values(
    grid: ChannelGrid,
    rng: np.random.Generator,
    max_k: int = 6,
    max_l: int = 6,
    decay: float = 2.5,
) -> np.ndarray:
    """A random band-limited smooth field with generic (nonzero) wall
    traces, normalized to unit sup norm.  Used to exercise boundary
    estimates where wall values must not vanish."""
    X, Y = grid.meshgrid()
    vals = np.zeros(grid.shape)
    for l in range(0, max_l + 1):
        psi = rng.uniform(0.0, 2.0 * np.pi)
        wall = np.cos(l * np.pi * Y / grid.height + psi)
        for k in range(0, max_k + 1):
            w = (1.0 + k * k + l * l) ** (-decay / 2.0)
            if k == 0:
                vals += w * rng.normal() * wall
            else:
                c, s = rng.normal(size=2)
                vals += w * (c * np.cos(k * X) + s * np.sin(k * X)) * wall
    return vals / np.abs(vals).max()


def random_stream_values(
    grid: ChannelGrid,
    rng: np.random.Generator,
    max_k: int = 8,
    max_l: int = 12,
    decay: float = 2.0,
    normalize: bool = True,
) -> np.ndarray:
    """A random band-limited stream function with decaying spectrum,
    normalized to unit velocity-pairing norm.

    With ``normalize=False`` the raw coefficient field is returned; the
    same generator state then defines the same analytic function on
    every grid, which matters for cross-resolution convergence studies.
    """
    X, Y = grid.meshgrid()
    vals = np.zeros(grid.shape)
    for l in range(1, max_l + 1):
        wall = np.sin(l * np.pi * Y / grid.height)
        for k in range(0, max_k + 1):
            w = (1.0 + k * k + l * l) ** (-decay / 2.0)
            if k == 0:
                vals += w * rng.normal() * wall
            else:
                c, s = rng.normal(size=2)
                vals += w * (c * np.cos(k * X) + s * np.sin(k * X)) * wall
    vals[:, 0] = 0.0
    vals[:, -1] = 0.0
    if not normalize:
        return vals
    nrm = np.sqrt(velocity_pair_matrix(vals[None], vals[None], grid)[0, 0])
    return vals / nrm
