"""Ideal-fluid dynamics on the periodic channel.

State is split into a mean x-momentum profile ``U(y)`` and a
fluctuation vorticity with zero x-mean; the fluctuation stream function
vanishes on both walls.  Advection is pseudo-spectral along the channel
(with 2/3-rule dealiasing) and uses the summation-by-parts derivative
across it.  Alongside the fields, the solver transports the forward
particle map as characteristics and the inverse map as a pair of
advected displacement fields, so every checkpoint carries the
area-preserving diffeomorphism, its inverse, and the induced metric
tensor needed by downstream operator studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .derivatives import dealias_x, x_derivative, y_derivative
from .errors import BlowupDetected, CFLViolation, ConfigError
from .grid import ChannelGrid, ScalarField, StreamFunction, VectorField
from .interp import ChannelInterpolant, ClampCounter
from .poisson import dirichlet_poisson_solver
from .sbp import sbp_pair

__all__ = [
    "AreaDiffeo",
    "MetricTensorField",
    "GeodesicTrajectory",
    "identity_diffeo",
    "shear_profile",
    "shear_diffeo",
    "solve_euler",
    "flow_of_velocity",
    "right_translate",
    "area_defect",
]

_BLOWUP_FACTOR = 50.0


@dataclass(frozen=True)
class MetricTensorField:
    """Symmetric positive tensor ``G`` induced by a diffeomorphism.

    Components are grid fields; ``G = [[g11, g12], [g12, g22]]`` with
    ``g11 = |d_y eta|^2``, ``g22 = |d_x eta|^2`` and
    ``g12 = -<d_x eta, d_y eta>``.
    """

    grid: ChannelGrid
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray

    def __post_init__(self):
        for name in ("g11", "g12", "g22"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {self.grid.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def is_x_uniform(self) -> bool:
        """True when every component is constant along x (modal solvers apply)."""
        return all(
            np.allclose(g, g[:1, :], rtol=0.0, atol=1e-13 * max(1.0, np.abs(g).max()))
            for g in (self.g11, self.g12, self.g22)
        )

    def eigenvalue_range(self) -> tuple[float, float]:
        """Pointwise (min, max) eigenvalues of ``G`` over the grid."""
        tr = self.g11 + self.g22
        disc = np.sqrt((self.g11 - self.g22) ** 2 + 4.0 * self.g12**2)
        return float(((tr - disc) / 2.0).min()), float(((tr + disc) / 2.0).max())

    @staticmethod
    def identity(grid: ChannelGrid) -> "MetricTensorField":
        one = np.ones(grid.shape)
        return MetricTensorField(grid, one, np.zeros(grid.shape), one)


class AreaDiffeo:
    """Area-preserving map of the channel sampled at grid nodes.

    ``x``/``y`` hold image positions of the grid labels; the x-component
    is stored unwrapped so displacements stay smooth and periodic.
    An analytic Jacobian may be attached; otherwise it is computed by
    differentiating the displacement fields.
    """

    def __init__(
        self,
        grid: ChannelGrid,
        x: np.ndarray,
        y: np.ndarray,
        jacobian: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None,
    ):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape != grid.shape or y.shape != grid.shape:
            raise ValueError("diffeo position arrays must match the grid shape")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("diffeo positions contain non-finite entries")
        self.grid = grid
        self.x = x.copy()
        self.y = np.clip(y, 0.0, grid.height)
        self.x.setflags(write=False)
        self.y.setflags(write=False)
        self._jac = jacobian

    def displacement(self) -> tuple[np.ndarray, np.ndarray]:
        X, Y = self.grid.meshgrid()
        return self.x - X, self.y - Y

    def jacobian(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Entries ``(J11, J12, J21, J22)`` of ``D eta`` at grid nodes."""
        if self._jac is not None:
            return self._jac
        ax, by = self.displacement()
        j11 = 1.0 + x_derivative(ax, self.grid, 1)
        j12 = y_derivative(ax, self.grid)
        j21 = x_derivative(by, self.grid, 1)
        j22 = 1.0 + y_derivative(by, self.grid)
        self._jac = (j11, j12, j21, j22)
        return self._jac

    def jacobian_det(self) -> np.ndarray:
        j11, j12, j21, j22 = self.jacobian()
        return j11 * j22 - j12 * j21

    def metric(self) -> MetricTensorField:
        """Metric tensor of the induced Laplacian conjugation."""
        j11, j12, j21, j22 = self.jacobian()
        g11 = j12**2 + j22**2
        g22 = j11**2 + j21**2
        g12 = -(j11 * j12 + j21 * j22)
        return MetricTensorField(self.grid, g11, g12, g22)

    def map_norm_sup(self) -> float:
        """Sup over the grid of the operator norm of ``D eta``."""
        j11, j12, j21, j22 = self.jacobian()
        a = j11**2 + j21**2
        b = j12**2 + j22**2
        c = j11 * j12 + j21 * j22
        sig_max = np.sqrt((a + b) / 2.0 + np.sqrt(((a - b) / 2.0) ** 2 + c**2))
        return float(sig_max.max())


def identity_diffeo(grid: ChannelGrid) -> AreaDiffeo:
    X, Y = grid.meshgrid()
    one = np.ones(grid.shape)
    zero = np.zeros(grid.shape)
    return AreaDiffeo(grid, X, Y, jacobian=(one, zero, zero, one))


def area_defect(diffeo: AreaDiffeo) -> float:
    """Max deviation of the Jacobian determinant from one."""
    return float(np.abs(diffeo.jacobian_det() - 1.0).max())


def shear_profile(grid: ChannelGrid, amplitude: float = 1.0) -> np.ndarray:
    """Decaying shear profile ``U(y) = amplitude * exp(-y)``."""
    return amplitude * np.exp(-grid.y)


def shear_diffeo(grid: ChannelGrid, t: float, amplitude: float = 1.0) -> AreaDiffeo:
    """Exact time-``t`` flow of the decaying shear: ``(x, y) -> (x + t U(y), y)``."""
    X, Y = grid.meshgrid()
    U = shear_profile(grid, amplitude)
    one = np.ones(grid.shape)
    zero = np.zeros(grid.shape)
    j12 = np.broadcast_to(-t * U, grid.shape).copy()  # d/dy of t*exp(-y)
    return AreaDiffeo(grid, X + t * U[None, :], Y, jacobian=(one, j12, zero, one))


def right_translate(
    f: ScalarField,
    diffeo: AreaDiffeo,
    order: int = 4,
    counter: ClampCounter | None = None,
) -> ScalarField:
    """Composition ``f ∘ eta`` sampled on the grid."""
    vals = ChannelInterpolant(f, order=order)(diffeo.x, diffeo.y, counter=counter)
    return ScalarField(f.grid, vals)


@dataclass
class GeodesicTrajectory:
    """Checkpointing record of an ideal-fluid solve.

    Per checkpoint: mean profile, fluctuation vorticity, forward map,
    inverse map, and scalar diagnostics.  Streams, velocities and
    metric tensors are reconstructed on demand.
    """

    grid: ChannelGrid
    times: np.ndarray
    U: np.ndarray  # (n_ckpt, ny)
    zeta: np.ndarray  # (n_ckpt, nx, ny) fluctuation vorticity
    eta_x: np.ndarray
    eta_y: np.ndarray
    inv_x: np.ndarray
    inv_y: np.ndarray
    energy: np.ndarray
    enstrophy: np.ndarray
    dt: float
    steps_total: int
    clamp: ClampCounter = field(default_factory=ClampCounter)

    def __len__(self) -> int:
        return self.times.size

    def stream(self, i: int) -> StreamFunction:
        rhs = ScalarField(self.grid, self.zeta[i])
        return dirichlet_poisson_solver(self.grid).solve(rhs)

    def mean_profile(self, i: int) -> np.ndarray:
        return self.U[i]

    def velocity(self, i: int) -> VectorField:
        f = self.stream(i)
        u = self.U[i][None, :] - y_derivative(f.values, self.grid)
        v = x_derivative(f.values, self.grid, 1)
        return VectorField(self.grid, u, v)

    def diffeo(self, i: int) -> AreaDiffeo:
        return AreaDiffeo(self.grid, self.eta_x[i], self.eta_y[i])

    def inverse_diffeo(self, i: int) -> AreaDiffeo:
        X, Y = self.grid.meshgrid()
        return AreaDiffeo(self.grid, X + self.inv_x[i], Y + self.inv_y[i])

    def metric(self, i: int) -> MetricTensorField:
        return self.diffeo(i).metric()

    def composition_defect(self, i: int, order: int = 6) -> float:
        """Max node error of ``eta^{-1} o eta - id`` (a consistency gauge)."""
        inv = self.inverse_diffeo(i)
        X, Y = self.grid.meshgrid()
        dx_f = ScalarField(self.grid, inv.x - X)
        dy_f = ScalarField(self.grid, inv.y - Y)
        ex = ChannelInterpolant(dx_f, order=order)(self.eta_x[i], self.eta_y[i])
        ey = ChannelInterpolant(dy_f, order=order)(self.eta_x[i], self.eta_y[i])
        err_x = np.abs(self.eta_x[i] + ex - X)
        err_y = np.abs(self.eta_y[i] + ey - Y)
        return float(max(err_x.max(), err_y.max()))


def _stage_velocity(grid, u, v, order, clamp, qx, qy):
    """Evaluate a stage velocity field at particle positions."""
    iu = ChannelInterpolant(ScalarField(grid, u), order=order)
    iv = ChannelInterpolant(ScalarField(grid, v), order=order)
    yq = np.clip(qy, 0.0, grid.height)
    return iu(qx, yq, counter=clamp), iv(qx, yq, counter=clamp)


def _energy_enstrophy(grid: ChannelGrid, U: np.ndarray, zeta: np.ndarray) -> tuple[float, float]:
    wy = grid.y_weights()
    fvals = dirichlet_poisson_solver(grid).solve_values(zeta)
    fx = x_derivative(fvals, grid, 1)
    fy = y_derivative(fvals, grid)
    qw = grid.quad_weights()
    kinetic = 0.5 * (2.0 * np.pi * float(wy @ U**2) + float(np.sum(qw * (fx**2 + fy**2))))
    D1, _ = sbp_pair(grid.ny, grid.dy)
    zeta_full = zeta - (D1 @ U)[None, :]
    enstrophy = 0.5 * float(np.sum(qw * zeta_full**2))
    return kinetic, enstrophy


def solve_euler(
    grid: ChannelGrid,
    U0: np.ndarray | None = None,
    zeta0: np.ndarray | None = None,
    t_final: float = 1.0,
    n_checkpoints: int = 17,
    cfl: float = 0.4,
    interp_order: int = 4,
    dealias: bool = True,
    dt_max: float | None = None,
) -> GeodesicTrajectory:
    """Integrate the channel flow and its particle maps to ``t_final``.

    Time stepping is classical RK4 with a fixed step chosen from the
    initial CFL condition and re-audited every step; violations and
    blow-ups raise instead of silently degrading the data.
    """
    if t_final <= 0.0 or not np.isfinite(t_final):
        raise ConfigError(f"t_final must be positive and finite, got {t_final}")
    if n_checkpoints < 2:
        raise ConfigError("need at least two checkpoints")
    ny, nx = grid.ny, grid.nx
    U = np.zeros(ny) if U0 is None else np.asarray(U0, dtype=np.float64).copy()
    zeta = np.zeros(grid.shape) if zeta0 is None else np.asarray(zeta0, dtype=np.float64).copy()
    if U.shape != (ny,) or zeta.shape != grid.shape:
        raise ConfigError("initial data does not match the grid")
    zeta = zeta - zeta.mean(axis=0)[None, :]
    if dealias:
        zeta = dealias_x(zeta, grid)

    D1, _ = sbp_pair(ny, grid.dy)
    solver = dirichlet_poisson_solver(grid)
    X, Y = grid.meshgrid()
    clamp = ClampCounter()

    def tendencies(U_c, zeta_c):
        """Return (dU, dzeta, u, v) for the current state."""
        fvals = solver.solve_values(zeta_c)
        fx = x_derivative(fvals, grid, 1)
        fy = y_derivative(fvals, grid)
        u = U_c[None, :] - fy
        v = fx
        Upp = D1 @ (D1 @ U_c)
        adv = u * x_derivative(zeta_c, grid, 1) + v * (y_derivative(zeta_c, grid) - Upp[None, :])
        adv = adv - adv.mean(axis=0)[None, :]
        if dealias:
            adv = dealias_x(adv, grid)
        reynolds = (fx * fy).mean(axis=0)
        return D1 @ reynolds, -adv, u, v

    # Fixed step from the initial speeds, aligned with checkpoint spacing.
    _, _, u0f, v0f = tendencies(U, zeta)
    umax = max(np.abs(u0f).max(), 1e-12)
    vmax = max(np.abs(v0f).max(), 1e-12)
    dt_cfl = cfl * min(grid.dx / umax, grid.dy / vmax)
    if dt_max is not None:
        dt_cfl = min(dt_cfl, dt_max)
    interval = t_final / (n_checkpoints - 1)
    steps_per = max(1, int(np.ceil(interval / dt_cfl)))
    dt = interval / steps_per

    n_ckpt = n_checkpoints
    times = np.linspace(0.0, t_final, n_ckpt)
    out_U = np.zeros((n_ckpt, ny))
    out_zeta = np.zeros((n_ckpt, nx, ny))
    out_ex = np.zeros((n_ckpt, nx, ny))
    out_ey = np.zeros((n_ckpt, nx, ny))
    out_px = np.zeros((n_ckpt, nx, ny))
    out_py = np.zeros((n_ckpt, nx, ny))
    energy = np.zeros(n_ckpt)
    enstrophy = np.zeros(n_ckpt)

    Px, Py = X.copy(), Y.copy()  # forward particle positions
    px = np.zeros(grid.shape)  # inverse-map displacements
    py = np.zeros(grid.shape)
    zeta_cap = _BLOWUP_FACTOR * (np.abs(zeta).max() + np.abs(D1 @ U).max() + 1e-9)

    def advect_inverse(px_c, py_c, u, v):
        """Tendency of the inverse-map displacement fields."""
        dpx = -u - u * x_derivative(px_c, grid, 1) - v * y_derivative(px_c, grid)
        dpy = -v - u * x_derivative(py_c, grid, 1) - v * y_derivative(py_c, grid)
        if dealias:
            dpx = dealias_x(dpx, grid)
            dpy = dealias_x(dpy, grid)
        return dpx, dpy

    def record(idx, U_c, zeta_c):
        out_U[idx] = U_c
        out_zeta[idx] = zeta_c
        out_ex[idx] = Px
        out_ey[idx] = Py
        out_px[idx] = px
        out_py[idx] = py
        energy[idx], enstrophy[idx] = _energy_enstrophy(grid, U_c, zeta_c)

    record(0, U, zeta)
    steps_total = 0
    for ck in range(1, n_ckpt):
        for _ in range(steps_per):
            # Stage 1
            dU1, dz1, u1, v1 = tendencies(U, zeta)
            if max(np.abs(u1).max() * dt / grid.dx, np.abs(v1).max() * dt / grid.dy) > max(
                cfl * 1.25, 0.9
            ):
                raise CFLViolation(
                    f"advective CFL exceeded at t={times[ck - 1]:.4f} with dt={dt:.3e}"
                )
            k1x, k1y = _stage_velocity(grid, u1, v1, interp_order, clamp, Px, Py)
            dpx1, dpy1 = advect_inverse(px, py, u1, v1)

            # Stage 2
            U2 = U + 0.5 * dt * dU1
            z2 = zeta + 0.5 * dt * dz1
            dU2, dz2, u2, v2 = tendencies(U2, z2)
            k2x, k2y = _stage_velocity(
                grid, u2, v2, interp_order, clamp, Px + 0.5 * dt * k1x, Py + 0.5 * dt * k1y
            )
            dpx2, dpy2 = advect_inverse(px + 0.5 * dt * dpx1, py + 0.5 * dt * dpy1, u2, v2)

            # Stage 3
            U3 = U + 0.5 * dt * dU2
            z3 = zeta + 0.5 * dt * dz2
            dU3, dz3, u3, v3 = tendencies(U3, z3)
            k3x, k3y = _stage_velocity(
                grid, u3, v3, interp_order, clamp, Px + 0.5 * dt * k2x, Py + 0.5 * dt * k2y
            )
            dpx3, dpy3 = advect_inverse(px + 0.5 * dt * dpx2, py + 0.5 * dt * dpy2, u3, v3)

            # Stage 4
            U4 = U + dt * dU3
            z4 = zeta + dt * dz3
            dU4, dz4, u4, v4 = tendencies(U4, z4)
            k4x, k4y = _stage_velocity(
                grid, u4, v4, interp_order, clamp, Px + dt * k3x, Py + dt * k3y
            )
            dpx4, dpy4 = advect_inverse(px + dt * dpx3, py + dt * dpy3, u4, v4)

            U = U + (dt / 6.0) * (dU1 + 2 * dU2 + 2 * dU3 + dU4)
            zeta = zeta + (dt / 6.0) * (dz1 + 2 * dz2 + 2 * dz3 + dz4)
            Px = Px + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            Py = Py + (dt / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
            excursion = np.maximum(Py - grid.height, -Py)
            clamp.record(np.maximum(excursion, 0.0))
            Py = np.clip(Py, 0.0, grid.height)
            px = px + (dt / 6.0) * (dpx1 + 2 * dpx2 + 2 * dpx3 + dpx4)
            py = py + (dt / 6.0) * (dpy1 + 2 * dpy2 + 2 * dpy3 + dpy4)
            steps_total += 1

            zmax = np.abs(zeta).max() + np.abs(D1 @ U).max()
            if not np.isfinite(zmax) or zmax > zeta_cap:
                raise BlowupDetected(
                    f"vorticity magnitude {zmax:.3e} exceeded cap {zeta_cap:.3e} "
                    f"after {steps_total} steps"
                )
        record(ck, U, zeta)

    return GeodesicTrajectory(
        grid=grid,
        times=times,
        U=out_U,
        zeta=out_zeta,
        eta_x=out_ex,
        eta_y=out_ey,
        inv_x=out_px,
        inv_y=out_py,
        energy=energy,
        enstrophy=enstrophy,
        dt=dt,
        steps_total=steps_total,
        clamp=clamp,
    )


def flow_of_velocity(
    vel: VectorField,
    t: float,
    steps: int | None = None,
    interp_order: int = 6,
    cfl: float = 0.25,
) -> tuple[AreaDiffeo, AreaDiffeo]:
    """Forward and inverse time-``t`` particle maps of a steady velocity.

    Used to manufacture area-preserving test diffeomorphisms from
    divergence-free fields without running the full fluid solve.
    """
    grid = vel.grid
    iu = ChannelInterpolant(ScalarField(grid, vel.u), order=interp_order)
    iv = ChannelInterpolant(ScalarField(grid, vel.v), order=interp_order)
    umax = max(np.abs(vel.u).max(), np.abs(vel.v).max(), 1e-12)
    if steps is None:
        steps = max(1, int(np.ceil(abs(t) * umax / (cfl * min(grid.dx, grid.dy)))))
    clamp = ClampCounter()

    def integrate(sign: float) -> AreaDiffeo:
        Xp, Yp = grid.meshgrid()
        Xp, Yp = Xp.copy(), Yp.copy()
        dt = sign * t / steps

        def rhs(qx, qy):
            yq = np.clip(qy, 0.0, grid.height)
            return iu(qx, yq, counter=clamp), iv(qx, yq, counter=clamp)

        for _ in range(steps):
            k1x, k1y = rhs(Xp, Yp)
            k2x, k2y = rhs(Xp + 0.5 * dt * k1x, Yp + 0.5 * dt * k1y)
            k3x, k3y = rhs(Xp + 0.5 * dt * k2x, Yp + 0.5 * dt * k2y)
            k4x, k4y = rhs(Xp + dt * k3x, Yp + dt * k3y)
            Xp = Xp + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            Yp = Yp + (dt / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
            Yp = np.clip(Yp, 0.0, grid.height)
        return AreaDiffeo(grid, Xp, Yp)

    return integrate(1.0), integrate(-1.0)
