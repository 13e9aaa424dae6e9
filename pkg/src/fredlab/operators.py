"""Conjugated stability operators on stream functions.

Everything here acts on stacks of stream-function values shaped
``(batch, nx, ny)`` with both wall rows zero.  Velocity fields enter and
leave through the stream representation: the divergence-free projection
is realized as ``inverse-Laplacian of the curl``, which is exactly
orthogonal in the discrete pairing because the derivative stack
satisfies summation by parts.

The central objects:

* ``ad_apply`` / ``ad_star_apply`` — push-forward of a velocity field by
  an area-preserving map, and its projected transpose;
* ``k_apply`` — the zeroth-order-in-derivatives drift term built from a
  background velocity;
* ``twisted_laplacian`` / ``lambda_apply`` / ``LambdaInverse`` — the
  Laplacian conjugated by a diffeomorphism, expressed through the
  induced metric tensor, and its inverse;
* ``omega_apply`` / ``omega_hat_apply`` — time integrals of the
  conjugated transfer operators along a trajectory;
* ``phi_apply`` — the Jacobi-field operator, obtained by a
  predictor-corrector march of its Volterra equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivatives import x_derivative, y_derivative, y_derivative_fd
from .errors import IterationFailure, NumericsError
from .euler import (
    AreaDiffeo,
    GeodesicTrajectory,
    MetricTensorField,
    identity_diffeo,
    shear_diffeo,
    shear_profile,
)
from .grid import ChannelGrid, ScalarField, StreamFunction, VectorField
from .interp import BatchInterpolant, ClampCounter, QueryPlan
from .poisson import ModalSolver, assemble_mode_matrices, dirichlet_poisson_solver
from .sbp import sbp_pair

__all__ = [
    "OperatorContext",
    "trajectory_contexts",
    "uniform_quad_weights",
    "velocity_of_stream",
    "stream_of_velocity",
    "ad_apply",
    "ad_star_apply",
    "ad_inv_apply",
    "ad_star_inv_apply",
    "k_apply",
    "twisted_laplacian",
    "lambda_apply",
    "LambdaInverse",
    "omega_apply",
    "omega_hat_apply",
    "omega_lower_constant",
    "phi_apply",
    "phi_scan",
    "gamma_apply",
    "PhiResult",
    "composition_form_twisted",
    "dexp_fd_oracle",
]


def as_stack(f) -> np.ndarray:
    """Coerce a field or array (or stack) to a (batch, nx, ny) array."""
    vals = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=np.float64)
    return vals[None] if vals.ndim == 2 else vals


def _input_ndim(f) -> int:
    return (f.values if isinstance(f, ScalarField) else np.asarray(f)).ndim


def _pin_walls(vals: np.ndarray) -> np.ndarray:
    vals[..., :, 0] = 0.0
    vals[..., :, -1] = 0.0
    return vals


# ---------------------------------------------------------------------------
# stream <-> velocity


def velocity_values(fvals: np.ndarray, grid: ChannelGrid) -> tuple[np.ndarray, np.ndarray]:
    """Velocity components of stream stacks: ``(-f_y, f_x)``."""
    return -y_derivative(fvals, grid), x_derivative(fvals, grid, 1)


def leray_values(u: np.ndarray, v: np.ndarray, grid: ChannelGrid) -> np.ndarray:
    """Stream values of the divergence-free wall-parallel part of (u, v).

    The projection is orthogonal to round-off against every stream in
    the discrete velocity pairing.
    """
    curl = x_derivative(v, grid, 1) - y_derivative(u, grid)
    return dirichlet_poisson_solver(grid).solve_values(curl)


def velocity_of_stream(f: StreamFunction) -> VectorField:
    u, v = velocity_values(f.values, f.grid)
    return VectorField(f.grid, u, v)


def stream_of_velocity(w: VectorField) -> StreamFunction:
    return StreamFunction(w.grid, leray_values(w.u, w.v, w.grid))


# ---------------------------------------------------------------------------
# per-instant geometric context


class OperatorContext:
    """Geometry of one trajectory instant: the map, its inverse, the
    background velocity, and cached interpolation plans."""

    def __init__(
        self,
        grid: ChannelGrid,
        eta: AreaDiffeo,
        eta_inv: AreaDiffeo,
        velocity: VectorField | None = None,
        order: int = 4,
    ):
        self.grid = grid
        self.eta = eta
        self.eta_inv = eta_inv
        self.velocity = velocity
        self.order = order
        self.clamp = ClampCounter()
        self._plan_fwd: QueryPlan | None = None
        self._plan_inv: QueryPlan | None = None
        self._metric: MetricTensorField | None = None
        self._grad_v: tuple | None = None

    @classmethod
    def identity(cls, grid: ChannelGrid, velocity: VectorField | None = None, order: int = 4):
        e = identity_diffeo(grid)
        if velocity is None:
            velocity = VectorField(grid, np.zeros(grid.shape), np.zeros(grid.shape))
        return cls(grid, e, e, velocity, order)

    @classmethod
    def from_shear(cls, grid: ChannelGrid, t: float, amplitude: float = 1.0, order: int = 4):
        U = shear_profile(grid, amplitude)
        vel = VectorField(
            grid, np.broadcast_to(U, grid.shape).copy(), np.zeros(grid.shape)
        )
        return cls(grid, shear_diffeo(grid, t, amplitude), shear_diffeo(grid, -t, amplitude), vel, order)

    @classmethod
    def from_trajectory(cls, traj: GeodesicTrajectory, i: int, order: int = 4):
        return cls(traj.grid, traj.diffeo(i), traj.inverse_diffeo(i), traj.velocity(i), order)

    @property
    def plan_fwd(self) -> QueryPlan:
        """Queries at forward-map images (used to form ``f ∘ eta``)."""
        if self._plan_fwd is None:
            self._plan_fwd = QueryPlan.build(
                self.grid, self.eta.x, self.eta.y, self.order, counter=self.clamp
            )
        return self._plan_fwd

    @property
    def plan_inv(self) -> QueryPlan:
        """Queries at inverse-map images (used to form ``f ∘ eta^{-1}``)."""
        if self._plan_inv is None:
            self._plan_inv = QueryPlan.build(
                self.grid, self.eta_inv.x, self.eta_inv.y, self.order, counter=self.clamp
            )
        return self._plan_inv

    @property
    def metric(self) -> MetricTensorField:
        if self._metric is None:
            self._metric = self.eta.metric()
        return self._metric

    @property
    def grad_velocity(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if self._grad_v is None:
            if self.velocity is None:
                raise NumericsError("context carries no background velocity")
            g = self.grid
            u, v = self.velocity.u, self.velocity.v
            self._grad_v = (
                x_derivative(u, g, 1),
                y_derivative(u, g),
                x_derivative(v, g, 1),
                y_derivative(v, g),
            )
        return self._grad_v

    def map_norm_sup(self) -> float:
        return self.eta.map_norm_sup()


def trajectory_contexts(
    traj: GeodesicTrajectory, indices=None, order: int = 4
) -> list[OperatorContext]:
    if indices is None:
        indices = range(len(traj))
    return [OperatorContext.from_trajectory(traj, i, order) for i in indices]


def uniform_quad_weights(n: int, dt: float) -> np.ndarray:
    """Composite Simpson weights on a uniform time grid (trapezoid on the
    final interval when the node count is even)."""
    if n < 2:
        raise ValueError("need at least two nodes")
    w = np.zeros(n)
    m = n if n % 2 == 1 else n - 1
    if m >= 3:
        w[0] += 1.0
        w[m - 1] += 1.0
        w[1:m - 1:2] += 4.0
        w[2:m - 1:2] += 2.0
        w *= dt / 3.0
    if m != n:  # one trailing trapezoid panel
        w[-2] += 0.5 * dt
        w[-1] += 0.5 * dt
    return w


# ---------------------------------------------------------------------------
# conjugation operators


def _compose(stack: np.ndarray, grid: ChannelGrid, plan: QueryPlan, order: int) -> np.ndarray:
    out = BatchInterpolant(stack, grid, order=order).eval_plan(plan)
    return _pin_walls(out.reshape(stack.shape))


def ad_apply(ctx: OperatorContext, f) -> np.ndarray:
    """Push-forward by ``eta`` at stream level: ``f ∘ eta^{-1}``."""
    return _compose(as_stack(f), ctx.grid, ctx.plan_inv, ctx.order)


def ad_inv_apply(ctx: OperatorContext, f) -> np.ndarray:
    """Push-forward by ``eta^{-1}`` at stream level: ``f ∘ eta``."""
    return _compose(as_stack(f), ctx.grid, ctx.plan_fwd, ctx.order)


def _ad_star(stack, grid, plan, jac, order) -> np.ndarray:
    """Projected transpose of a push-forward: ``P(J^T (v ∘ map))``."""
    u, v = velocity_values(stack, grid)
    uv = np.concatenate([u, v], axis=0)
    uv_m = BatchInterpolant(uv, grid, order=order).eval_plan(plan).reshape(uv.shape)
    n = stack.shape[0]
    u_m, v_m = uv_m[:n], uv_m[n:]
    j11, j12, j21, j22 = jac
    wu = j11 * u_m + j21 * v_m
    wv = j12 * u_m + j22 * v_m
    return leray_values(wu, wv, grid)


def ad_star_apply(ctx: OperatorContext, f) -> np.ndarray:
    """Transpose of ``ad_apply`` in the velocity pairing (up to
    interpolation error), realized as ``P(Deta^T (v_f ∘ eta))``."""
    return _ad_star(as_stack(f), ctx.grid, ctx.plan_fwd, ctx.eta.jacobian(), ctx.order)


def ad_star_inv_apply(ctx: OperatorContext, f) -> np.ndarray:
    """Transpose of ``ad_inv_apply``: ``P(Deta^{-T} (v_f ∘ eta^{-1}))``."""
    return _ad_star(as_stack(f), ctx.grid, ctx.plan_inv, ctx.eta_inv.jacobian(), ctx.order)


def k_apply(ctx: OperatorContext, f) -> np.ndarray:
    """Drift operator of the background velocity:
    ``K w = P(grad_w v + (grad w)^T v)`` applied to ``w = v_f``."""
    stack = as_stack(f)
    grid = ctx.grid
    if ctx.velocity is None:
        raise NumericsError("context carries no background velocity")
    ux, uy, vx, vy = ctx.grad_velocity
    vb_u, vb_v = ctx.velocity.u, ctx.velocity.v
    w1, w2 = velocity_values(stack, grid)
    a1 = w1 * ux + w2 * uy + vb_u * x_derivative(w1, grid, 1) + vb_v * x_derivative(w2, grid, 1)
    a2 = w1 * vx + w2 * vy + vb_u * y_derivative(w1, grid) + vb_v * y_derivative(w2, grid)
    return leray_values(a1, a2, grid)


# ---------------------------------------------------------------------------
# conjugated Laplacian


def twisted_laplacian(metric: MetricTensorField, f) -> np.ndarray:
    """Divergence-form operator ``div(G grad f)`` on the operator stack.

    Exactly self-adjoint and negative in the quadrature pairing on
    fields with zero wall rows, for every symmetric ``G``.
    """
    stack = as_stack(f)
    grid = metric.grid
    fx = x_derivative(stack, grid, 1)
    fy = y_derivative(stack, grid)
    t1 = metric.g11 * fx + metric.g12 * fy
    t2 = metric.g12 * fx + metric.g22 * fy
    out = x_derivative(t1, grid, 1) + y_derivative(t2, grid)
    return out[0] if _input_ndim(f) == 2 else out


def lambda_apply(metric: MetricTensorField, f) -> np.ndarray:
    """Conjugated-over-flat operator: inverse Laplacian of the twisted
    Laplacian.  Self-adjoint and positive in the energy pairing."""
    out = dirichlet_poisson_solver(metric.grid).solve_values(
        twisted_laplacian(metric, as_stack(f))
    )
    return out[0] if _input_ndim(f) == 2 else out


def _laplacian_values(stack: np.ndarray, grid: ChannelGrid) -> np.ndarray:
    D1, _ = sbp_pair(grid.ny, grid.dy)
    return x_derivative(stack, grid, 2) + (stack @ D1.T) @ D1.T


class LambdaInverse:
    """Inverse of the conjugated operator.

    When the metric is uniform along x the twisted operator splits over
    Fourier modes and a direct modal solver is precomputed; otherwise a
    preconditioned conjugate-gradient iteration (preconditioned by the
    flat inverse Laplacian) solves the twisted system.
    """

    def __init__(self, metric: MetricTensorField, rtol: float = 1e-10, maxiter: int = 600):
        self.metric = metric
        self.grid = metric.grid
        self.rtol = rtol
        self.maxiter = maxiter
        self.last_iterations = 0
        self._modal: ModalSolver | None = None
        if metric.is_x_uniform:
            g11 = np.diag(metric.g11[0])
            g12 = np.diag(metric.g12[0])
            g22 = np.diag(metric.g22[0])
            D1, _ = sbp_pair(self.grid.ny, self.grid.dy)
            mats = assemble_mode_matrices(
                self.grid, D1 @ g22 @ D1, g12 @ D1 + D1 @ g12, g11
            )
            self._modal = ModalSolver(self.grid, mats, name="twisted-modal")

    def apply(self, f) -> np.ndarray:
        """Solve ``Lambda g = f``, i.e. ``T g = Laplacian f``."""
        stack = as_stack(f)
        rhs = _laplacian_values(stack, self.grid)
        if self._modal is not None:
            return self._modal.solve_values(rhs)
        return self._pcg(rhs)

    def _pcg(self, rhs: np.ndarray) -> np.ndarray:
        grid = self.grid
        qw = grid.quad_weights()
        poisson = dirichlet_poisson_solver(grid)
        metric = self.metric

        def A(z):
            # the twisted system holds at interior rows only; project
            return _pin_walls(-twisted_laplacian(metric, z))

        def Minv(r):
            return -poisson.solve_values(r)

        def dot(a, b):
            return float(np.sum(qw * a * b))

        out = np.zeros_like(rhs)
        self.last_iterations = 0
        for idx in range(rhs.shape[0]):
            b = _pin_walls(-rhs[idx][None].copy())
            x = np.zeros_like(b)
            r = b.copy()
            bnorm = np.sqrt(dot(b, b))
            if bnorm == 0.0:
                continue
            z = Minv(r)
            p = z.copy()
            rz = dot(r, z)
            n_it = 0
            for n_it in range(1, self.maxiter + 1):
                Ap = A(p)
                alpha = rz / dot(p, Ap)
                x += alpha * p
                r -= alpha * Ap
                if np.sqrt(dot(r, r)) <= self.rtol * bnorm:
                    break
                z = Minv(r)
                rz_new = dot(r, z)
                p = z + (rz_new / rz) * p
                rz = rz_new
            else:
                raise IterationFailure(
                    f"twisted solve stalled after {self.maxiter} iterations "
                    f"(residual {np.sqrt(dot(r, r)) / bnorm:.3e})"
                )
            self.last_iterations = max(self.last_iterations, n_it)
            out[idx] = _pin_walls(x)[0]
        return out


# ---------------------------------------------------------------------------
# trajectory integrals


def omega_apply(ctxs: list[OperatorContext], quad_w: np.ndarray, f) -> np.ndarray:
    """Velocity-pairing accumulation operator
    ``int Ad_{eta^-1} Ad*_{eta^-1} dt`` applied at stream level."""
    stack = as_stack(f)
    out = np.zeros_like(stack)
    for ctx, w in zip(ctxs, quad_w):
        out += w * ad_inv_apply(ctx, ad_star_inv_apply(ctx, stack))
    return out


def omega_lower_constant(ctxs: list[OperatorContext], quad_w: np.ndarray) -> float:
    """Guaranteed coercivity constant: the integral of the inverse
    squared sup-norm of the forward map differentials."""
    return float(sum(w / ctx.map_norm_sup() ** 2 for ctx, w in zip(ctxs, quad_w)))


def omega_hat_apply(
    inverses: list[LambdaInverse], quad_w: np.ndarray, f
) -> np.ndarray:
    """Stream-level accumulation operator: time integral of the inverses
    of the conjugated Laplacian quotients."""
    stack = as_stack(f)
    out = np.zeros_like(stack)
    for inv, w in zip(inverses, quad_w):
        out += w * inv.apply(stack)
    return out


@dataclass
class PhiResult:
    """Output of the Jacobi-field march.

    ``phi_stream`` is the square (stream-to-stream) representation,
    obtained by right-translating the label-indexed field back through
    the final map; ``jac_x``/``jac_y`` are the label-indexed Jacobi
    field components ``Deta (Omega - Gamma) w``; ``omega_stream`` and
    ``gamma_stream`` expose the two constituents.
    """

    phi_stream: np.ndarray
    jac_x: np.ndarray
    jac_y: np.ndarray
    omega_stream: np.ndarray
    gamma_stream: np.ndarray


def _gamma_march(ctxs, times, stack):
    """Trapezoidal predictor-corrector for the Volterra drift equation.

    The drift satisfies ``Gamma_t = int_0^t Ad_{eta^-1} K
    Ad_eta (Omega - Gamma) dtau`` (the inner ``Ad_eta`` realizes the
    right-translation of the label-indexed Jacobi field).  Yields
    ``(omega_i, gamma_i)`` at every node.
    """
    n = len(ctxs)
    if n < 2 or times.size != n:
        raise ValueError("need matching contexts and times, at least two nodes")
    dt = float(times[1] - times[0])

    s_nodes = [ad_inv_apply(c, ad_star_inv_apply(c, stack)) for c in ctxs]
    omega_at = [np.zeros_like(stack)]
    for i in range(1, n):
        omega_at.append(omega_at[-1] + 0.5 * dt * (s_nodes[i - 1] + s_nodes[i]))

    def drift_integrand(i: int, gamma_i: np.ndarray) -> np.ndarray:
        V = ad_apply(ctxs[i], omega_at[i] - gamma_i)
        return ad_inv_apply(ctxs[i], k_apply(ctxs[i], V))

    gamma = np.zeros_like(stack)
    yield omega_at[0], gamma
    q_prev = drift_integrand(0, gamma)
    for i in range(1, n):
        gamma_pred = gamma + dt * q_prev
        q_next = drift_integrand(i, gamma_pred)
        gamma = gamma + 0.5 * dt * (q_prev + q_next)
        q_prev = drift_integrand(i, gamma)
        yield omega_at[i], gamma


def phi_apply(
    ctxs: list[OperatorContext],
    times: np.ndarray,
    f,
) -> PhiResult:
    """March the Volterra equation for the Jacobi-field operator and
    return its final-time output in both representations."""
    stack = as_stack(f)
    grid = ctxs[0].grid
    for omega_final, gamma in _gamma_march(ctxs, times, stack):
        pass
    w_final = omega_final - gamma
    phi_stream = ad_apply(ctxs[-1], w_final)
    wu, wv = velocity_values(w_final, grid)
    j11, j12, j21, j22 = ctxs[-1].eta.jacobian()
    jac_x = j11 * wu + j12 * wv
    jac_y = j21 * wu + j22 * wv
    return PhiResult(
        phi_stream=phi_stream,
        jac_x=jac_x,
        jac_y=jac_y,
        omega_stream=omega_final,
        gamma_stream=gamma,
    )


def gamma_apply(
    ctxs: list[OperatorContext],
    times: np.ndarray,
    f,
) -> np.ndarray:
    """Final-time drift term of the Volterra march (the memory integral
    that couples the Jacobi field to the trajectory's curvature)."""
    stack = as_stack(f)
    gamma = None
    for _omega, gamma in _gamma_march(ctxs, times, stack):
        pass
    out = gamma
    return out[0] if _input_ndim(f) == 2 else out


def composition_form_twisted(ctx: OperatorContext, f, order: int = 6, acc: int = 6) -> np.ndarray:
    """Conjugated Laplacian evaluated literally as
    ``(Laplacian(f o eta^{-1})) o eta`` by interpolation.

    An independent oracle for the divergence-form operator; the two
    agree up to interpolation and closure truncation.  The intermediate
    Laplacian runs on the measurement stack (one-sided order-``acc``
    closures): the composed field carries steep wall-normal modulation
    from the map, which the operator-stack wall closure resolves poorly.
    """
    stack = as_stack(f)
    grid = ctx.grid
    plan_inv = QueryPlan.build(grid, ctx.eta_inv.x, ctx.eta_inv.y, order, counter=ctx.clamp)
    plan_fwd = QueryPlan.build(grid, ctx.eta.x, ctx.eta.y, order, counter=ctx.clamp)
    pulled = _pin_walls(
        BatchInterpolant(stack, grid, order=order).eval_plan(plan_inv).reshape(stack.shape)
    )
    lap = x_derivative(pulled, grid, 2) + y_derivative_fd(pulled, grid, 2, acc)
    return BatchInterpolant(lap, grid, order=order).eval_plan(plan_fwd).reshape(stack.shape)


def phi_scan(
    ctxs: list[OperatorContext],
    times: np.ndarray,
    f,
) -> list[np.ndarray]:
    """Stream representation of the Jacobi-field operator at every
    trajectory node (same march as :func:`phi_apply`)."""
    stack = as_stack(f)
    return [
        ad_apply(ctxs[i], omega - gamma)
        for i, (omega, gamma) in enumerate(_gamma_march(ctxs, times, stack))
    ]


# ---------------------------------------------------------------------------
# finite-difference ground truth for the Jacobi field


def dexp_fd_oracle(
    grid: ChannelGrid,
    U0: np.ndarray,
    zeta0: np.ndarray,
    w0: StreamFunction,
    t_final: float,
    eps: float = 1e-4,
    **solver_kwargs,
) -> tuple[np.ndarray, np.ndarray]:
    """Centered difference of perturbed flows: the label-indexed Jacobi
    field of the initial-velocity perturbation ``v_{w0}``."""
    from .euler import solve_euler

    D1, _ = sbp_pair(grid.ny, grid.dy)
    wbar = w0.values.mean(axis=0)
    dU = -(D1 @ wbar)
    dzeta = _laplacian_values(w0.values[None], grid)[0]
    dzeta = dzeta - dzeta.mean(axis=0)[None, :]

    def run(sign: float) -> GeodesicTrajectory:
        return solve_euler(
            grid,
            U0=U0 + sign * eps * dU,
            zeta0=zeta0 + sign * eps * dzeta,
            t_final=t_final,
            **solver_kwargs,
        )

    plus = run(1.0)
    minus = run(-1.0)
    jac_x = (plus.eta_x[-1] - minus.eta_x[-1]) / (2.0 * eps)
    jac_y = (plus.eta_y[-1] - minus.eta_y[-1]) / (2.0 * eps)
    return jac_x, jac_y
