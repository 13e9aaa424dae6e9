"""One-dimensional derivative operators for the wall-normal direction.

Two families live here:

* A summation-by-parts first-derivative pair ``(D1, w)``: ``D1`` has a
  centered interior stencil and one-sided closure rows, and the diagonal
  quadrature weight vector ``w`` satisfies ``W D1 + D1^T W = B`` exactly,
  where ``B`` carries only the two endpoint entries.  Every discrete
  integration by parts built from this pair therefore produces boundary
  terms and nothing else, to round-off.  The closure coefficients are not
  hard-coded: they are derived at first use by solving the (linear)
  accuracy + summation-by-parts conditions and verified before use.

* Plain finite-difference matrices of arbitrary derivative order with
  one-sided closures (Fornberg weights), used for direct derivative
  evaluation where no structural identity is needed.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericsError

__all__ = ["sbp_pair", "fd_matrix", "fornberg_weights", "sbp_closure"]

_CENTERED = {
    2: np.array([-0.5, 0.0, 0.5]),
    4: np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]),
    6: np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60]),
    8: np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280]),
}

# (interior order, closure order) -> (closure rows, closure width)
_CLOSURE_SHAPE = {
    (2, 1): (1, 2),
    (4, 2): (4, 6),
    (6, 3): (6, 9),
    (8, 4): (8, 12),
}

_closure_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
_pair_cache: dict[tuple[int, float, int], tuple[np.ndarray, np.ndarray]] = {}
_fd_cache: dict[tuple[int, float, int, int], np.ndarray] = {}


def sbp_closure(p_int: int, p_bnd: int) -> tuple[np.ndarray, np.ndarray]:
    """Derive (and cache) the boundary closure of an SBP first derivative.

    Returns
    -------
    h : (rows,) array
        Boundary quadrature weights (unit spacing); interior weight is 1.
    dblock : (rows, width) array
        Boundary rows of the derivative (unit spacing).
    """
    key = (p_int, p_bnd)
    if key in _closure_cache:
        return _closure_cache[key]
    rows, width = _CLOSURE_SHAPE[key]
    c = _CENTERED[p_int]
    half = p_int // 2

    def q_fixed(i: int, j: int) -> float | None:
        """Entry of Q fixed by the interior stencil / diagonal, else None."""
        if i == j:
            return -0.5 if i == 0 else 0.0
        if i < rows and j < rows:
            return None
        if i < rows <= j:
            return -c[i - j + half] if abs(i - j) <= half else 0.0
        if j < rows <= i:
            return c[j - i + half] if abs(i - j) <= half else 0.0
        return c[j - i + half] if abs(j - i) <= half else 0.0

    unknown = [(i, j) for i in range(rows) for j in range(i + 1, rows)]
    nu = len(unknown)
    index = {p: k for k, p in enumerate(unknown)}
    nvar = nu + rows

    rows_a, rhs_a = [], []
    for i in range(rows):
        for p in range(p_bnd + 1):
            row = np.zeros(nvar)
            rhs = 0.0
            for j in range(width):
                xp = 1.0 if p == 0 else float(j) ** p
                if i < j < rows:
                    row[index[(i, j)]] += xp
                elif j < i:
                    row[index[(j, i)]] -= xp
                elif i != j or True:
                    fixed = q_fixed(i, j)
                    if fixed is None:
                        continue
                    rhs -= fixed * xp
            deriv = 0.0 if p == 0 else (p * float(i) ** (p - 1) if i > 0 or p == 1 else 0.0)
            row[nu + i] = -deriv
            rows_a.append(row)
            rhs_a.append(rhs)
    A = np.asarray(rows_a)
    b = np.asarray(rhs_a)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(A @ sol - b) > 1e-9:
        raise NumericsError(f"no SBP({p_int},{p_bnd}) closure found")

    h = sol[nu:]
    q = np.zeros((rows, width))
    for i in range(rows):
        for j in range(width):
            if i < j < rows:
                q[i, j] = sol[index[(i, j)]]
            elif j < i:
                q[i, j] = -sol[index[(j, i)]]
            else:
                q[i, j] = q_fixed(i, j)
    dblock = q / h[:, None]
    _verify_closure(h, dblock, p_int, p_bnd)
    _closure_cache[key] = (h, dblock)
    return h, dblock


def _verify_closure(h: np.ndarray, dblock: np.ndarray, p_int: int, p_bnd: int) -> None:
    rows, width = dblock.shape
    if np.any(h <= 0):
        raise NumericsError(f"SBP({p_int},{p_bnd}) norm not positive")
    x = np.arange(width, dtype=float)
    for p in range(p_bnd + 1):
        want = np.zeros(rows) if p == 0 else p * x[:rows] ** (p - 1)
        got = dblock @ x**p
        if np.max(np.abs(got - want)) > 1e-8 * max(1.0, width**p):
            raise NumericsError(f"SBP({p_int},{p_bnd}) closure accuracy check failed")


def sbp_pair(ny: int, dy: float) -> tuple[np.ndarray, np.ndarray]:
    """Full SBP first-derivative matrix and quadrature weights on ny nodes.

    The interior/closure orders step down automatically on very coarse
    grids so the construction stays well-posed; ny >= 25 gets the
    (8th-interior, 4th-closure) pair used everywhere in practice.
    """
    if ny < 4:
        raise ValueError(f"ny={ny} too small for a derivative operator")
    if ny >= 25:
        key = (8, 4)
    elif ny >= 13:
        key = (4, 2)
    else:
        key = (2, 1)
    cached = _pair_cache.get((ny, dy, key[0]))
    if cached is not None:
        return cached

    h, dblock = sbp_closure(*key)
    rows, width = dblock.shape
    c = _CENTERED[key[0]]
    half = key[0] // 2

    D = np.zeros((ny, ny))
    w = np.ones(ny)
    w[:rows] = h
    w[ny - rows:] = h[::-1]
    for i in range(rows):
        D[i, :width] = dblock[i]
        D[ny - 1 - i, ny - width:] = -dblock[i, ::-1]
    for i in range(rows, ny - rows):
        D[i, i - half : i + half + 1] = c

    D = D / dy
    w = w * dy
    D.setflags(write=False)
    w.setflags(write=False)
    _pair_cache[(ny, dy, key[0])] = (D, w)
    return D, w


def fornberg_weights(x0: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights of derivatives 0..m at x0 on nodes x.

    Classic recursion; returns an array of shape (m + 1, len(x)).
    """
    n = len(x)
    c = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = ((x[i] - x0) * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = (x[i] - x0) * c[0, j] / c3
        c1 = c2
    return c


def fd_matrix(ny: int, dy: float, order: int, acc: int = 4) -> np.ndarray:
    """Dense matrix of the order-th y-derivative, one-sided near the walls.

    Every row is accurate to at least ``acc``; rows near a wall shift their
    stencil window inside the domain instead of dropping order.
    """
    if order == 0:
        return np.eye(ny)
    width = order + acc
    if ny < width:
        raise ValueError(f"ny={ny} too small for derivative order {order} at accuracy {acc}")
    cached = _fd_cache.get((ny, dy, order, acc))
    if cached is not None:
        return cached
    D = np.zeros((ny, ny))
    nodes = np.arange(width, dtype=float)
    for i in range(ny):
        start = min(max(i - width // 2, 0), ny - width)
        wts = fornberg_weights(float(i - start), nodes, order)[order]
        D[i, start : start + width] = wts
    D = D / dy**order
    D.setflags(write=False)
    _fd_cache[(ny, dy, order, acc)] = D
    return D
