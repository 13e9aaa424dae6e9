"""Derivative stacks: spectral along x, matrix-based along y.

Two y-stacks coexist on purpose.  The *operator* stack uses the SBP first
derivative from :mod:`fredlab.sbp`, whose exact summation-by-parts
property makes the elliptic operators built from it self-adjoint to
round-off in the discrete pairings.  The *measurement* stack
(:func:`partial_derivative`) uses dedicated one-sided stencils of fixed
accuracy for each derivative order, which is what norm and trace
evaluations want.
"""

from __future__ import annotations

import numpy as np

from . import sbp
from .grid import ChannelGrid, ScalarField

__all__ = [
    "x_derivative",
    "y_derivative",
    "y_derivative_fd",
    "partial_derivative",
    "laplacian",
    "gradient_arrays",
    "divergence_arrays",
    "dealias_x",
]

MAX_TOTAL_ORDER = 6


def x_derivative(values: np.ndarray, grid: ChannelGrid, m: int = 1) -> np.ndarray:
    """m-th derivative along the periodic direction (spectral).

    Acts on the second-to-last axis, so stacked batches broadcast.
    """
    if m == 0:
        return np.array(values, copy=True)
    spec = np.fft.rfft(values, axis=-2)
    k = np.arange(spec.shape[-2], dtype=float)
    spec *= (1j * k[:, None]) ** m
    if m % 2 == 1 and grid.nx % 2 == 0:
        spec[..., -1, :] = 0.0  # drop the unpaired Nyquist mode for odd derivatives
    return np.fft.irfft(spec, n=grid.nx, axis=-2)


def y_derivative(values: np.ndarray, grid: ChannelGrid) -> np.ndarray:
    """First wall-normal derivative from the SBP operator stack."""
    D1, _ = sbp.sbp_pair(grid.ny, grid.dy)
    return values @ D1.T


def y_derivative_fd(values: np.ndarray, grid: ChannelGrid, n: int, acc: int = 4) -> np.ndarray:
    """n-th wall-normal derivative with order->=acc one-sided closures."""
    if n == 0:
        return np.array(values, copy=True)
    Dn = sbp.fd_matrix(grid.ny, grid.dy, n, acc)
    return values @ Dn.T


def partial_derivative(f: ScalarField, m: int, n: int) -> ScalarField:
    """Mixed derivative ∂_x^m ∂_y^n f on the measurement stack.

    Supported up to total order 6; the y-part keeps fourth-order accuracy
    all the way into the walls by shifting its stencil window.
    """
    if m < 0 or n < 0:
        raise ValueError("derivative orders must be non-negative")
    if m + n > MAX_TOTAL_ORDER:
        raise ValueError(f"total derivative order {m + n} exceeds the supported {MAX_TOTAL_ORDER}")
    out = f.values
    if n:
        out = y_derivative_fd(out, f.grid, n)
    if m:
        out = x_derivative(out, f.grid, m)
    return ScalarField(f.grid, out)


def laplacian(f: ScalarField) -> ScalarField:
    """Operator-stack Laplacian: spectral ∂_xx plus the iterated SBP ∂_y.

    This is the exact operator the Dirichlet solver inverts, so
    solve-then-apply round trips are exact to round-off.
    """
    D1, _ = sbp.sbp_pair(f.grid.ny, f.grid.dy)
    fyy = (f.values @ D1.T) @ D1.T
    return ScalarField(f.grid, x_derivative(f.values, f.grid, 2) + fyy)


def gradient_arrays(values: np.ndarray, grid: ChannelGrid) -> tuple[np.ndarray, np.ndarray]:
    """(∂_x, ∂_y) on the operator stack, returned as plain arrays."""
    return x_derivative(values, grid, 1), y_derivative(values, grid)


def divergence_arrays(u: np.ndarray, v: np.ndarray, grid: ChannelGrid) -> np.ndarray:
    return x_derivative(u, grid, 1) + y_derivative(v, grid)


def dealias_x(values: np.ndarray, grid: ChannelGrid) -> np.ndarray:
    """Zero x-modes above two thirds of the resolvable band."""
    spec = np.fft.rfft(values, axis=-2)
    kmax = grid.nx // 3
    spec[..., kmax + 1 :, :] = 0.0
    return np.fft.irfft(spec, n=grid.nx, axis=-2)
