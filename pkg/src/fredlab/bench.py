"""Twin-kernel benchmark: compiled (numba) vs vectorized (numpy) paths.

Times the two hot kernels — batched channel interpolation and the
banded modal solves — on realistic desk-scale shapes, once per backend,
and prints a comparison table.  Compilation happens during an untimed
warmup call.
"""

from __future__ import annotations

import time

import numpy as np

from .basis import random_stream_values
from .grid import ChannelGrid
from .interp import BatchInterpolant, QueryPlan
from .kernels import HAS_NUMBA, set_backend
from .operators import OperatorContext
from .poisson import dirichlet_poisson_solver

__all__ = ["run_bench"]


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(nx: int = 64, ny: int = 65, batch: int = 204, repeats: int = 5) -> str:
    grid = ChannelGrid(nx, ny, height=8.0)
    rng = np.random.default_rng(0)
    stack = np.stack([random_stream_values(grid, rng) for _ in range(batch)])
    ctx = OperatorContext.from_shear(grid, 1.0)
    plan = QueryPlan.build(grid, ctx.eta.x, ctx.eta.y, order=4)
    rhs = np.stack([random_stream_values(grid, rng) for _ in range(batch)])
    solver = dirichlet_poisson_solver(grid)

    cases = {
        "interp-batch": lambda: BatchInterpolant(stack, grid, order=4).eval_plan(plan),
        "modal-solve-batch": lambda: solver.solve_values(rhs),
    }

    results: dict[str, dict[str, float]] = {name: {} for name in cases}
    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    try:
        for backend in backends:
            set_backend(backend)
            for name, fn in cases.items():
                fn()  # warmup: JIT compile / touch caches
                results[name][backend] = _best_time(fn, repeats)
    finally:
        set_backend("auto")

    lines = [
        f"kernel benchmark  grid {nx}x{ny}  batch {batch}  best of {repeats}",
        f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}",
    ]
    for name, times in results.items():
        np_ms = times["numpy"] * 1e3
        if "numba" in times:
            nb_ms = times["numba"] * 1e3
            lines.append(
                f"{name:<20}{np_ms:>12.3f}{nb_ms:>12.3f}{np_ms / nb_ms:>9.2f}"
            )
        else:
            lines.append(f"{name:<20}{np_ms:>12.3f}{'n/a':>12}{'':>9}")
    if not HAS_NUMBA:
        lines.append("numba is not importable; compiled path skipped")
    return "\n".join(lines) + "\n"
