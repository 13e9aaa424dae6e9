"""Dirichlet Poisson solver on the channel (modal in x, banded in y)."""

from __future__ import annotations

import numpy as np
import pytest

from fredlab.derivatives import laplacian
from fredlab.errors import ConfigError
from fredlab.grid import ChannelGrid, ScalarField, StreamFunction, norm_L2
from fredlab.poisson import (
    dirichlet_inverse_laplacian,
    dirichlet_poisson_solver,
    assemble_mode_matrices,
)


def _mode(grid, k, l):
    X, Y = grid.meshgrid()
    return np.sin(k * X + 0.3) * np.sin(l * np.pi * Y / grid.height)


def test_solver_inverts_separable_modes(grid_small):
    g = grid_small
    solver = dirichlet_poisson_solver(g)
    for k, l in ((0, 1), (1, 1), (3, 2)):
        psi = _mode(g, k, l)
        lam = -(k**2 + (l * np.pi / g.height) ** 2)
        got = solver.solve_values(lam * psi)
        err = np.max(np.abs(got - psi))
        assert err < 3e-4, f"mode ({k},{l}): {err}"


def test_solver_convergence_rate():
    errs = []
    for ny in (33, 65):
        g = ChannelGrid(16, ny, height=2.0)
        solver = dirichlet_poisson_solver(g)
        psi = _mode(g, 2, 3)
        lam = -(4 + (3 * np.pi / g.height) ** 2)
        got = solver.solve_values(lam * psi)
        errs.append(np.max(np.abs(got - psi)))
    assert np.log2(errs[0] / errs[1]) > 3.5


def test_solver_left_inverse_of_laplacian(grid_small):
    # solve(lap f) recovers f for fields vanishing at the walls.
    g = grid_small
    psi = _mode(g, 2, 2) * 0.7 + _mode(g, 1, 3) * 0.1
    f = StreamFunction(g, psi)
    rhs = laplacian(f)
    got = dirichlet_inverse_laplacian(rhs)
    rel = norm_L2(got - f) / norm_L2(f)
    assert rel < 2e-4


def test_solver_batch_matches_single(grid_small):
    rng = np.random.default_rng(5)
    solver = dirichlet_poisson_solver(grid_small)
    stack = rng.standard_normal((4,) + grid_small.shape)
    batch = solver.solve_values(stack)
    for i in range(4):
        np.testing.assert_allclose(batch[i], solver.solve_values(stack[i]), atol=1e-13)


def test_solutions_vanish_at_walls(grid_small):
    rng = np.random.default_rng(6)
    solver = dirichlet_poisson_solver(grid_small)
    got = solver.solve_values(rng.standard_normal(grid_small.shape))
    assert np.all(got[:, 0] == 0.0)
    assert np.all(got[:, -1] == 0.0)


def test_solver_is_symmetric_negative(grid_small):
    # The inverse pairs symmetrically and negatively in the L2 pairing,
    # as the inverse of a symmetric negative operator must.
    rng = np.random.default_rng(7)
    g = grid_small
    w = g.quad_weights()
    f = rng.standard_normal(g.shape)
    h = rng.standard_normal(g.shape)
    solver = dirichlet_poisson_solver(g)
    sf, sh = solver.solve_values(f), solver.solve_values(h)
    a = float(np.sum(w * sf * h))
    b = float(np.sum(w * f * sh))
    assert a == pytest.approx(b, rel=1e-8, abs=1e-10)
    assert float(np.sum(w * sf * f)) < 0.0


def test_mode_matrices_follow_symbol_formula(grid_small):
    rng = np.random.default_rng(9)
    ny = grid_small.ny
    M0 = rng.standard_normal((ny, ny))
    M1 = rng.standard_normal((ny, ny))
    M2 = rng.standard_normal((ny, ny))
    mats = assemble_mode_matrices(grid_small, M0, M1, M2)
    nm = grid_small.nx // 2 + 1
    assert mats.shape == (nm, ny, ny)
    k = 3
    np.testing.assert_allclose(mats[k], M0 + 1j * k * M1 - k * k * M2, atol=1e-13)
    # The Nyquist mode drops the odd (first-derivative) term.
    np.testing.assert_allclose(mats[nm - 1], M0 - (nm - 1) ** 2 * M2, atol=1e-13)


def test_solver_cache_returns_same_object(grid_small):
    a = dirichlet_poisson_solver(grid_small)
    b = dirichlet_poisson_solver(grid_small)
    assert a is b


def test_inverse_laplacian_returns_stream_function(grid_small):
    rng = np.random.default_rng(8)
    rhs = ScalarField(grid_small, rng.standard_normal(grid_small.shape))
    out = dirichlet_inverse_laplacian(rhs)
    assert isinstance(out, StreamFunction)
