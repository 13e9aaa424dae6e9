"""Differentiation stack: spectral in x, summation-by-parts / one-sided in y."""

from __future__ import annotations

import numpy as np
import pytest

from fredlab.derivatives import (
    dealias_x,
    divergence_arrays,
    gradient_arrays,
    laplacian,
    partial_derivative,
    x_derivative,
    y_derivative,
    y_derivative_fd,
)
from fredlab.grid import ChannelGrid, ScalarField


def test_x_derivative_exact_on_resolvable_modes(grid_small):
    X, Y = grid_small.meshgrid()
    f = np.cos(4 * X) * (1 + Y)
    np.testing.assert_allclose(
        x_derivative(f, grid_small, 1), -4 * np.sin(4 * X) * (1 + Y), atol=1e-11
    )
    np.testing.assert_allclose(
        x_derivative(f, grid_small, 2), -16 * np.cos(4 * X) * (1 + Y), atol=1e-10
    )


def test_x_derivative_of_constant_is_zero(grid_small):
    np.testing.assert_allclose(
        x_derivative(np.ones(grid_small.shape), grid_small, 1), 0.0, atol=1e-14
    )


def test_y_derivative_converges(grid_small):
    errs = []
    for ny in (33, 65):
        g = ChannelGrid(8, ny, height=grid_small.height)
        _, Y = g.meshgrid()
        f = np.sin(np.pi * Y / g.height)
        exact = (np.pi / g.height) * np.cos(np.pi * Y / g.height)
        errs.append(np.max(np.abs(y_derivative(f, g) - exact)))
    assert np.log2(errs[0] / errs[1]) > 3.5


def test_y_derivative_fd_orders(grid_small):
    _, Y = grid_small.meshgrid()
    f = Y**3
    np.testing.assert_allclose(y_derivative_fd(f, grid_small, 1, acc=4), 3 * Y**2, atol=1e-8)
    np.testing.assert_allclose(y_derivative_fd(f, grid_small, 2, acc=4), 6 * Y, atol=1e-7)
    np.testing.assert_allclose(y_derivative_fd(f, grid_small, 3, acc=4), 6.0, atol=1e-6)


def test_partial_derivative_mixed(grid_small):
    X, Y = grid_small.meshgrid()
    f = ScalarField(grid_small, np.sin(2 * X) * Y**2)
    out = partial_derivative(f, 1, 1)
    np.testing.assert_allclose(out.values, 2 * np.cos(2 * X) * 2 * Y, atol=1e-7)


def test_laplacian_exact_on_low_polynomial_profiles(grid_small):
    # The y-part is a first-derivative applied twice, exact on cubics
    # all the way into the closure rows.
    X, Y = grid_small.meshgrid()
    L = grid_small.height
    f = ScalarField(grid_small, np.sin(2 * X) * Y**2 * (L - Y))
    lap = laplacian(f)
    exact = -4 * np.sin(2 * X) * Y**2 * (L - Y) + np.sin(2 * X) * (2 * L - 6 * Y)
    np.testing.assert_allclose(lap.values, exact, atol=1e-8)


def test_gradient_and_divergence_are_consistent(grid_small):
    X, Y = grid_small.meshgrid()
    f = np.sin(X) * np.sin(np.pi * Y / grid_small.height)
    fx, fy = gradient_arrays(f, grid_small)
    np.testing.assert_allclose(fx, x_derivative(f, grid_small, 1), atol=1e-13)
    div = divergence_arrays(fx, fy, grid_small)
    lap = laplacian(ScalarField(grid_small, f)).values
    np.testing.assert_allclose(div, lap, atol=1e-6)


def test_perpendicular_gradient_is_divergence_free(grid_small):
    # The rotated gradient (-f_y, f_x) of any smooth field has zero
    # divergence; this realizes area preservation at the discrete level.
    X, Y = grid_small.meshgrid()
    f = np.cos(2 * X) * np.sin(np.pi * Y / grid_small.height) ** 2
    fx, fy = gradient_arrays(f, grid_small)
    div = divergence_arrays(-fy, fx, grid_small)
    scale = np.max(np.abs(fx)) + np.max(np.abs(fy))
    assert np.max(np.abs(div)) < 2e-4 * scale


def test_dealias_x_removes_upper_third(grid_small):
    X, _ = grid_small.meshgrid()
    nx = grid_small.nx
    high = nx // 2 - 1  # above the 2/3 cutoff for nx = 32
    f = np.cos(2 * X) + np.cos(high * X)
    out = dealias_x(f, grid_small)
    np.testing.assert_allclose(out, np.cos(2 * X), atol=1e-12)


def test_dealias_x_keeps_low_modes(grid_small):
    X, Y = grid_small.meshgrid()
    f = np.sin(3 * X) * (1 + Y)
    np.testing.assert_allclose(dealias_x(f, grid_small), f, atol=1e-12)
