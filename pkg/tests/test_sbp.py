"""Summation-by-parts stack and one-sided measurement stencils."""

from __future__ import annotations

import numpy as np
import pytest

from fredlab.sbp import fd_matrix, fornberg_weights, sbp_closure, sbp_pair


def test_sbp_pair_satisfies_summation_by_parts():
    # H D + (H D)^T must equal the boundary matrix diag(-1, 0, ..., 0, 1):
    # this is the exact discrete integration-by-parts identity that makes
    # the wall pairings of the estimates hold with constant one.
    ny, dy = 33, 0.25
    D, h = sbp_pair(ny, dy)
    H = np.diag(h)
    B = H @ D + D.T @ H
    expected = np.zeros((ny, ny))
    expected[0, 0] = -1.0
    expected[-1, -1] = 1.0
    np.testing.assert_allclose(B, expected, atol=1e-12)


@pytest.mark.parametrize("ny,deg", [(33, 4), (17, 2), (9, 1)])
def test_sbp_derivative_exact_on_low_polynomials(ny, deg):
    dy = 1.0 / (ny - 1)
    y = np.arange(ny) * dy
    D, _ = sbp_pair(ny, dy)
    for p in range(deg + 1):
        np.testing.assert_allclose(
            D @ y**p, p * y ** max(p - 1, 0) if p else np.zeros(ny), atol=1e-10
        )


def test_sbp_quadrature_positive_and_normalized():
    ny, dy = 33, 0.125
    _, h = sbp_pair(ny, dy)
    assert np.all(h > 0)
    assert h.sum() == pytest.approx(dy * (ny - 1), rel=1e-13)


def test_sbp_convergence_order():
    # Interior order 8 (closure rows are 4th order, so the global
    # max-norm rate is boundary-limited at 4).
    errs_all, errs_int = [], []
    for ny in (33, 65):
        dy = 1.0 / (ny - 1)
        y = np.arange(ny) * dy
        D, _ = sbp_pair(ny, dy)
        f = np.sin(2 * np.pi * y)
        df = 2 * np.pi * np.cos(2 * np.pi * y)
        err = np.abs(D @ f - df)
        errs_all.append(err.max())
        errs_int.append(err[12:-12].max())
    assert np.log2(errs_all[0] / errs_all[1]) > 3.5
    assert np.log2(errs_int[0] / errs_int[1]) > 6.0


def test_closure_orders_verified_internally():
    for key in ((2, 1), (4, 2), (8, 4)):
        h, dblock = sbp_closure(*key)
        assert h.ndim == 1 and dblock.ndim == 2
        assert np.all(h > 0)


def test_fornberg_weights_reproduce_classic_stencils():
    # Row m of the table holds the m-th derivative stencil.
    w = fornberg_weights(0.0, np.array([-1.0, 0.0, 1.0]), 2)
    np.testing.assert_allclose(w[2], [1.0, -2.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(w[1], [-0.5, 0.0, 0.5], atol=1e-14)
    np.testing.assert_allclose(w[0], [0.0, 1.0, 0.0], atol=1e-14)
    # One-sided first derivative: (-3/2, 2, -1/2).
    w = fornberg_weights(0.0, np.array([0.0, 1.0, 2.0]), 1)
    np.testing.assert_allclose(w[1], [-1.5, 2.0, -0.5], atol=1e-14)


def test_fd_matrix_orders_converge():
    # The measurement stack must keep its nominal interior accuracy.
    for acc in (4, 6, 8):
        errs = []
        for ny in (33, 65):
            dy = 1.0 / (ny - 1)
            y = np.arange(ny) * dy
            A = fd_matrix(ny, dy, order=2, acc=acc)
            f = np.sin(2 * np.pi * y)
            exact = -((2 * np.pi) ** 2) * f
            # Interior rows only; the closure rows are lower order.
            sl = slice(acc, ny - acc)
            errs.append(np.max(np.abs((A @ f - exact)[sl])))
        rate = np.log2(errs[0] / errs[1])
        assert rate > acc - 0.5, f"acc={acc} interior rate {rate}"


def test_fd_matrix_exact_on_polynomials():
    ny, dy = 21, 0.1
    y = np.arange(ny) * dy
    A = fd_matrix(ny, dy, order=1, acc=4)
    np.testing.assert_allclose(A @ y**3, 3 * y**2, atol=1e-9)
    A2 = fd_matrix(ny, dy, order=3, acc=4)
    np.testing.assert_allclose(A2 @ y**4, 24 * y, atol=1e-7)
