"""Off-grid evaluation of channel fields.

Interpolation is Fourier-exact along the periodic direction and local
Lagrange (cubic by default, quintic where extra smoothness is needed)
across the channel, with stencils shifted one-sidedly at the walls.
Queries that land outside the strip are clamped onto it and counted, so
composition pipelines can report how often trajectories grazed a wall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import ScalarField
from .kernels import interp_channel, interp_channel_batch

__all__ = [
    "ClampCounter",
    "QueryPlan",
    "ChannelInterpolant",
    "BatchInterpolant",
    "interpolate_field",
]


@dataclass
class ClampCounter:
    """Tally of interpolation queries clamped back into the channel."""

    clamped: int = 0
    total: int = 0
    max_excursion: float = 0.0

    def record(self, excursions: np.ndarray) -> None:
        self.total += excursions.size
        mask = excursions > 0.0
        self.clamped += int(np.count_nonzero(mask))
        if mask.any():
            self.max_excursion = max(self.max_excursion, float(excursions.max()))

    def merge(self, other: "ClampCounter") -> None:
        self.clamped += other.clamped
        self.total += other.total
        self.max_excursion = max(self.max_excursion, other.max_excursion)

    def as_dict(self) -> dict:
        return {
            "clamped": self.clamped,
            "total": self.total,
            "max_excursion": self.max_excursion,
        }


def _lagrange_weights(t: np.ndarray, order: int) -> np.ndarray:
    """Weights of the degree ``order-1`` Lagrange basis on nodes 0..order-1,
    evaluated at ``t`` (one row of weights per query point)."""
    wts = np.ones((t.size, order))
    for r in range(order):
        for q in range(order):
            if q != r:
                wts[:, r] *= (t - q) / (r - q)
    return wts


@dataclass(frozen=True)
class QueryPlan:
    """Precomputed stencil data for evaluating many fields at one fixed
    set of query points."""

    shape: tuple
    xf: np.ndarray
    js: np.ndarray
    wts: np.ndarray
    order: int

    @staticmethod
    def build(
        grid,
        xq: np.ndarray,
        yq: np.ndarray,
        order: int = 4,
        counter: ClampCounter | None = None,
    ) -> "QueryPlan":
        if grid.ny < order:
            raise ConfigError(
                f"grid has {grid.ny} rows, fewer than interpolation order {order}"
            )
        xq = np.asarray(xq, dtype=np.float64)
        yq = np.asarray(yq, dtype=np.float64)
        shape = np.broadcast_shapes(xq.shape, yq.shape)
        xf = np.ascontiguousarray(np.broadcast_to(xq, shape).reshape(-1))
        yf = np.broadcast_to(yq, shape).reshape(-1)
        y_cl = np.clip(yf, 0.0, grid.height)
        if counter is not None:
            counter.record(np.abs(yf - y_cl))
        cell = y_cl / grid.dy
        js = np.clip(np.floor(cell).astype(np.int64) - (order // 2 - 1), 0, grid.ny - order)
        wts = _lagrange_weights(cell - js, order)
        return QueryPlan(shape=shape, xf=xf, js=js, wts=wts, order=order)


def _fourier_tables(values: np.ndarray, nx: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cosine/sine coefficient tables along the leading spatial axis."""
    C = np.fft.rfft(values, axis=-2) / nx
    a = np.ascontiguousarray(C.real)
    b = np.ascontiguousarray(-C.imag)
    b[..., -1, :] = 0.0  # Nyquist mode carries cosine content only
    scale = np.full(C.shape[-2], 2.0)
    scale[0] = 1.0
    scale[-1] = 1.0
    return a, b, scale


class ChannelInterpolant:
    """Callable interpolant of a single scalar field."""

    def __init__(self, f: ScalarField, order: int = 4):
        if order % 2 != 0 or order < 2:
            raise ConfigError(f"interpolation order must be even and >= 2, got {order}")
        if f.grid.ny < order:
            raise ConfigError(
                f"grid has {f.grid.ny} rows, fewer than interpolation order {order}"
            )
        self.grid = f.grid
        self.order = order
        self._a, self._b, self._scale = _fourier_tables(f.values, f.grid.nx)

    def eval_plan(self, plan: QueryPlan) -> np.ndarray:
        vals = interp_channel(self._a, self._b, self._scale, plan.xf, plan.js, plan.wts)
        return vals.reshape(plan.shape)

    def __call__(
        self,
        xq: np.ndarray,
        yq: np.ndarray,
        counter: ClampCounter | None = None,
    ) -> np.ndarray:
        plan = QueryPlan.build(self.grid, xq, yq, self.order, counter=counter)
        return self.eval_plan(plan)


class BatchInterpolant:
    """Interpolant of a stack of fields sharing one grid.

    Evaluation against a :class:`QueryPlan` returns an array with the
    stack axis leading; the trigonometric work is shared across fields.
    """

    def __init__(self, values: np.ndarray, grid, order: int = 4):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[1:] != grid.shape:
            raise ValueError(
                f"expected a (batch, {grid.nx}, {grid.ny}) stack, got {values.shape}"
            )
        if grid.ny < order:
            raise ConfigError(
                f"grid has {grid.ny} rows, fewer than interpolation order {order}"
            )
        self.grid = grid
        self.order = order
        self._a, self._b, self._scale = _fourier_tables(values, grid.nx)

    def eval_plan(self, plan: QueryPlan) -> np.ndarray:
        vals = interp_channel_batch(
            self._a, self._b, self._scale, plan.xf, plan.js, plan.wts
        )
        return vals.reshape((self._a.shape[0],) + plan.shape)


def interpolate_field(
    f: ScalarField,
    xq: np.ndarray,
    yq: np.ndarray,
    order: int = 4,
    counter: ClampCounter | None = None,
) -> np.ndarray:
    """One-shot off-grid evaluation of ``f`` at query points."""
    return ChannelInterpolant(f, order=order)(xq, yq, counter=counter)
