"""Hot numerical kernels with twin implementations.

Each kernel has a compiled (numba) and a vectorized (numpy) form.  The
active backend is chosen by the ``FREDLAB_NUMBA`` environment variable:
``auto`` (default) compiles when numba is importable, ``0`` forces the
numpy path, ``1`` requires numba.  :func:`set_backend` overrides at
runtime; ``fredlab bench`` compares the two paths on realistic shapes.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        return wrap

    prange = range

__all__ = [
    "set_backend",
    "using_numba",
    "interp_channel",
    "interp_channel_batch",
    "modal_solve",
    "modal_solve_batch",
    "HAS_NUMBA",
]

_backend = "auto"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("auto", "numpy", "numba"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


def using_numba() -> bool:
    if _backend == "numba":
        return True
    if _backend == "numpy":
        return False
    return HAS_NUMBA


_env = os.environ.get("FREDLAB_NUMBA", "auto").lower()
if _env in ("0", "false", "numpy"):
    _backend = "numpy"
elif _env in ("1", "true", "numba"):
    set_backend("numba")


@njit(cache=True)
def _interp_channel_nb(a, b, scale, xq, js, wts):  # pragma: no cover - compiled
    nm, _ = a.shape
    npts = xq.shape[0]
    order = wts.shape[1]
    out = np.zeros(npts)
    for p in range(npts):
        x = xq[p]
        j0 = js[p]
        cosx = np.cos(x)
        sinx = np.sin(x)
        cm = 1.0
        sm = 0.0
        acc = np.zeros(order)
        for m in range(nm):
            s = scale[m]
            for r in range(order):
                acc[r] += s * (a[m, j0 + r] * cm + b[m, j0 + r] * sm)
            cnext = cm * cosx - sm * sinx
            sm = sm * cosx + cm * sinx
            cm = cnext
        val = 0.0
        for r in range(order):
            val += wts[p, r] * acc[r]
        out[p] = val
    return out


def _interp_channel_np(a, b, scale, xq, js, wts):
    nm = a.shape[0]
    ms = np.arange(nm)[:, None]
    phase = ms * xq[None, :]
    cosM = np.cos(phase)
    sinM = np.sin(phase)
    sc = scale[:, None]
    out = np.zeros(xq.shape[0])
    for r in range(wts.shape[1]):
        rows = js + r
        out += wts[:, r] * np.einsum("mp,mp->p", sc * a[:, rows], cosM, optimize=True)
        out += wts[:, r] * np.einsum("mp,mp->p", sc * b[:, rows], sinM, optimize=True)
    return out


def interp_channel(
    a: np.ndarray,
    b: np.ndarray,
    scale: np.ndarray,
    xq: np.ndarray,
    js: np.ndarray,
    wts: np.ndarray,
) -> np.ndarray:
    """Evaluate a Fourier-in-x / local-polynomial-in-y interpolant.

    ``a``/``b`` are cosine/sine coefficient tables (modes x rows), ``js``
    the base row of each query's y-stencil, and ``wts`` the per-query
    stencil weights.
    """
    if using_numba():
        return _interp_channel_nb(a, b, scale, xq, js, wts)
    return _interp_channel_np(a, b, scale, xq, js, wts)


@njit(cache=True)
def _interp_channel_batch_nb(a, b, scale, xq, js, wts):  # pragma: no cover - compiled
    nb, nm, _ = a.shape
    npts = xq.shape[0]
    order = wts.shape[1]
    out = np.zeros((nb, npts))
    for p in range(npts):
        x = xq[p]
        j0 = js[p]
        cosx = np.cos(x)
        sinx = np.sin(x)
        cm = 1.0
        sm = 0.0
        acc = np.zeros((nb, order))
        for m in range(nm):
            s = scale[m]
            scm = s * cm
            ssm = s * sm
            for f in range(nb):
                for r in range(order):
                    acc[f, r] += a[f, m, j0 + r] * scm + b[f, m, j0 + r] * ssm
            cnext = cm * cosx - sm * sinx
            sm = sm * cosx + cm * sinx
            cm = cnext
        for f in range(nb):
            val = 0.0
            for r in range(order):
                val += wts[p, r] * acc[f, r]
            out[f, p] = val
    return out


def _interp_channel_batch_np(a, b, scale, xq, js, wts):
    nm = a.shape[1]
    ms = np.arange(nm)[:, None]
    phase = ms * xq[None, :]
    cosM = scale[:, None] * np.cos(phase)
    sinM = scale[:, None] * np.sin(phase)
    out = np.zeros((a.shape[0], xq.shape[0]))
    for r in range(wts.shape[1]):
        rows = js + r
        out += wts[None, :, r] * np.einsum("fmp,mp->fp", a[:, :, rows], cosM, optimize=True)
        out += wts[None, :, r] * np.einsum("fmp,mp->fp", b[:, :, rows], sinM, optimize=True)
    return out


def interp_channel_batch(
    a: np.ndarray,
    b: np.ndarray,
    scale: np.ndarray,
    xq: np.ndarray,
    js: np.ndarray,
    wts: np.ndarray,
) -> np.ndarray:
    """Batched form of :func:`interp_channel`: coefficient tables carry a
    leading field axis and all fields are evaluated at the same points."""
    if using_numba():
        return _interp_channel_batch_nb(a, b, scale, xq, js, wts)
    return _interp_channel_batch_np(a, b, scale, xq, js, wts)


@njit(cache=True)
def _modal_solve_nb(Minv, F):  # pragma: no cover - compiled
    nm, ni, _ = Minv.shape
    out = np.zeros((nm, ni), dtype=np.complex128)
    for k in range(nm):
        for i in range(ni):
            acc = 0.0 + 0.0j
            for j in range(ni):
                acc += Minv[k, i, j] * F[k, j]
            out[k, i] = acc
    return out


def modal_solve(Minv: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Apply precomputed per-mode interior inverses to transformed data."""
    if using_numba():
        return _modal_solve_nb(Minv, np.ascontiguousarray(F))
    return np.einsum("kij,kj->ki", Minv, F, optimize=True)


@njit(cache=True)
def _modal_solve_batch_nb(Minv, F):  # pragma: no cover - compiled
    nb, nm, ni = F.shape
    out = np.zeros((nb, nm, ni), dtype=np.complex128)
    for f in range(nb):
        for k in range(nm):
            for i in range(ni):
                acc = 0.0 + 0.0j
                for j in range(ni):
                    acc += Minv[k, i, j] * F[f, k, j]
                out[f, k, i] = acc
    return out


def modal_solve_batch(Minv: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Batched per-mode solves for a stack of transformed fields."""
    if using_numba():
        return _modal_solve_batch_nb(Minv, np.ascontiguousarray(F))
    return np.einsum("kij,fkj->fki", Minv, F, optimize=True)
