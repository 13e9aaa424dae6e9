"""Channel geometry, discrete fields, and quadrature.

The domain is the periodic channel S^1 x [0, L]: x in [0, 2*pi) with
periodic identification, y in [0, L] with a physical wall at y = 0 and a
truncation wall at y = L standing in for y -> infinity.  Arrays are laid
out (nx, ny): axis 0 runs along the periodic direction, axis 1 from wall
to wall.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sbp

__all__ = [
    "ChannelGrid",
    "make_grid",
    "ScalarField",
    "StreamFunction",
    "VectorField",
    "inner_product_L2",
    "norm_L2",
    "boundary_integral_x",
    "inner_product_velocity",
]


def _is_five_smooth(n: int) -> bool:
    for p in (2, 3, 5):
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class ChannelGrid:
    """Uniform tensor grid on the periodic channel.

    Parameters
    ----------
    nx : int
        Number of points along the periodic direction; must be even with
        no prime factor beyond 5 so transforms stay fast.
    ny : int
        Number of wall-to-wall points, both walls included.
    height : float
        Channel height L.
    """

    nx: int
    ny: int
    height: float
    dx: float = field(init=False, repr=False)
    dy: float = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False, compare=False)
    y: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.nx < 4 or self.nx % 2 != 0 or not _is_five_smooth(self.nx):
            raise ValueError(
                f"nx={self.nx} must be an even number >= 4 with prime factors in {{2, 3, 5}}"
            )
        if self.ny < 4:
            raise ValueError(f"ny={self.ny} must be at least 4")
        if not (self.height > 0) or not np.isfinite(self.height):
            raise ValueError(f"height={self.height} must be positive and finite")
        object.__setattr__(self, "dx", 2 * np.pi / self.nx)
        object.__setattr__(self, "dy", self.height / (self.ny - 1))
        x = np.arange(self.nx) * self.dx
        y = np.linspace(0.0, self.height, self.ny)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def key(self) -> tuple[int, int, float]:
        """Hashable identity used by operator caches."""
        return (self.nx, self.ny, self.height)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def y_weights(self) -> np.ndarray:
        """Diagonal quadrature weights paired with the y-derivative."""
        return sbp.sbp_pair(self.ny, self.dy)[1]

    def quad_weights(self) -> np.ndarray:
        """Full 2-D quadrature weights, shape (1, ny); x weight is uniform dx."""
        return (self.dx * self.y_weights())[None, :]


def make_grid(nx: int, ny: int, height: float) -> ChannelGrid:
    """Build a channel grid, validating resolution and height."""
    return ChannelGrid(nx, ny, float(height))


def _check_values(grid: ChannelGrid, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    return values


@dataclass(frozen=True)
class ScalarField:
    """Immutable real-valued grid function."""

    grid: ChannelGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _check_values(self.grid, self.values)
        if values.flags.writeable:
            values = values.copy()
            values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return type(self)(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return type(self)(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "ScalarField":
        return type(self)(self.grid, self.values * a)

    __rmul__ = __mul__


_WALL_TOL = 1e-10


class StreamFunction(ScalarField):
    """Scalar field vanishing on both walls (the tangent-space potential).

    Wall rows are pinned to exactly zero; values that are not already zero
    to round-off are rejected rather than silently projected.
    """

    def __post_init__(self) -> None:
        values = _check_values(self.grid, self.values)
        scale = max(1.0, float(np.max(np.abs(values))))
        worst = max(float(np.max(np.abs(values[:, 0]))), float(np.max(np.abs(values[:, -1]))))
        if worst > _WALL_TOL * scale:
            raise ValueError(
                f"stream function must vanish at both walls (worst residual {worst:.3e})"
            )
        values = values.copy()
        values[:, 0] = 0.0
        values[:, -1] = 0.0
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class VectorField:
    """Velocity-like field; the wall-normal component vanishes at walls."""

    grid: ChannelGrid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        u = _check_values(self.grid, self.u)
        v = _check_values(self.grid, self.v)
        scale = max(1.0, float(np.max(np.abs(v))), float(np.max(np.abs(u))))
        worst = max(float(np.max(np.abs(v[:, 0]))), float(np.max(np.abs(v[:, -1]))))
        if worst > _WALL_TOL * scale:
            raise ValueError(f"wall-normal velocity must vanish at walls (got {worst:.3e})")
        for name, arr in (("u", u), ("v", v)):
            if arr.flags.writeable:
                arr = arr.copy()
                arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.u + other.u, self.v + other.v)

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.u - other.u, self.v - other.v)

    def __mul__(self, a: float) -> "VectorField":
        return VectorField(self.grid, self.u * a, self.v * a)

    __rmul__ = __mul__


def inner_product_L2(f: ScalarField, g: ScalarField) -> float:
    """L2 inner product: exact for resolvable trigonometric content in x,
    high-order diagonal quadrature in y."""
    w = f.grid.quad_weights()
    return float(np.sum(w * f.values * g.values))


def norm_L2(f: ScalarField) -> float:
    return float(np.sqrt(max(inner_product_L2(f, f), 0.0)))


def inner_product_velocity(a: VectorField, b: VectorField) -> float:
    """L2 pairing of vector fields, component-wise."""
    w = a.grid.quad_weights()
    return float(np.sum(w * (a.u * b.u + a.v * b.v)))


def boundary_integral_x(values_at_wall: np.ndarray, grid: ChannelGrid) -> float:
    """Integral along the physical wall y = 0 of a sampled x-profile."""
    if values_at_wall.shape != (grid.nx,):
        raise ValueError("wall profile must have shape (nx,)")
    return float(np.sum(values_at_wall) * grid.dx)
