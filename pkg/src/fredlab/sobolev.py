"""Weighted anisotropic Sobolev machinery.

The coercivity analysis of the conjugated Laplacian runs in a weighted
``H^{s+1}`` norm built from gradients of the pure ``s``-th derivatives:

    |f|_{s+1}^2 = sum_j B_j * ||grad d_x^j d_y^{s-j} f||^2,

with weights ``B_j`` produced by a recurrence that balances the
cross-term constants: ``B_0 = B_s = 1`` and ``B_k = r * sum_{j<k} B_j``
for a coupling ratio ``r``.  The closed form ``B_k = r (1+r)^{k-1}``
is kept as a cross-check.  All derivative measurements use the
fixed-accuracy one-sided stencils, not the operator stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivatives import MAX_TOTAL_ORDER, x_derivative, y_derivative_fd
from .errors import ConfigError, NumericsError
from .grid import ChannelGrid

__all__ = [
    "WeightedNormSpec",
    "SobolevConstants",
    "weights_recurrence",
    "derivative_gradients",
    "weighted_inner_product",
    "weighted_norm",
    "homogeneous_norm",
    "holder_seminorm",
    "metric_floor",
    "constants_from_contexts",
    "constants_from_trajectory",
    "positivity_gap",
    "coercivity_gap",
]


def weights_recurrence(K_eps: float, Q_eps: float, s: int) -> np.ndarray:
    """Weights ``B_0..B_s`` with unit ends and geometric interior growth.

    Interior weights satisfy ``B_k = r * sum_{j<k} B_j`` with coupling
    ratio ``r = 2 Q_eps / K_eps``; the closed form ``B_k = r (1+r)^{k-1}``
    is recomputed as a cross-check.
    """
    if s < 1:
        raise ConfigError(f"Sobolev index must be >= 1, got {s}")
    if K_eps <= 0.0 or not np.isfinite(K_eps):
        raise ConfigError(f"coercivity constant must be positive, got {K_eps}")
    if Q_eps <= 0.0 or not np.isfinite(Q_eps):
        raise ConfigError(f"cross-term constant must be positive, got {Q_eps}")
    r = 2.0 * Q_eps / K_eps
    B = np.ones(s + 1)
    for k in range(1, s):
        B[k] = r * B[:k].sum()
    closed = r * (1.0 + r) ** (np.arange(1, s) - 1.0)
    if s > 1 and not np.allclose(B[1:s], closed, rtol=1e-12, atol=0.0):
        raise NumericsError("weight recurrence disagrees with its closed form")
    return B


@dataclass(frozen=True)
class WeightedNormSpec:
    """Frozen description of one weighted norm instance."""

    s: int
    eps: float
    K_inf: float
    K_eps: float
    Q_eps: float
    r: float
    weights: np.ndarray

    @property
    def max_sqrt_weight(self) -> float:
        return float(np.sqrt(self.weights.max()))


@dataclass(frozen=True)
class SobolevConstants:
    """Trajectory-level constants feeding the coercivity inequality."""

    s: int
    K_inf: float  # floor of the metric eigenvalues over the trajectory
    c1_norm: float  # sup over time of the first-order map seminorm
    chigh_norm: float  # sup over time of the order s+1 map seminorm
    eps_max: float

    def spec(self, eps: float | None = None) -> WeightedNormSpec:
        if eps is None:
            eps = 0.5 * self.eps_max
        if eps <= 0.0 or not np.isfinite(eps):
            raise ConfigError(f"smallness parameter must be positive, got {eps}")
        K_eps = self.K_inf - 0.5 * (self.s - 1) * eps * self.chigh_norm**2
        if K_eps <= 0.0:
            raise NumericsError(
                f"inadmissible smallness parameter: eps={eps:.3e} drives the "
                f"coercivity constant to {K_eps:.3e}"
            )
        Q_eps = self.c1_norm**2 / eps
        r = 2.0 * Q_eps / K_eps
        return WeightedNormSpec(
            s=self.s,
            eps=eps,
            K_inf=self.K_inf,
            K_eps=K_eps,
            Q_eps=Q_eps,
            r=r,
            weights=weights_recurrence(K_eps, Q_eps, self.s),
        )


def derivative_gradients(values: np.ndarray, grid: ChannelGrid, s: int) -> list:
    """Gradients of all pure s-th derivatives, ordered by x-count ``j``.

    Entry ``j`` is the pair ``(d_x, d_y)`` of gradient components of
    ``d_x^j d_y^{s-j} f``; measurement-stack stencils throughout.
    """
    if s + 1 > MAX_TOTAL_ORDER:
        raise ConfigError(
            f"norm of order {s + 1} exceeds the supported derivative total "
            f"{MAX_TOTAL_ORDER}"
        )
    out = []
    for j in range(s + 1):
        d = values
        if s - j:
            d = y_derivative_fd(d, grid, s - j)
        if j:
            d = x_derivative(d, grid, j)
        out.append((x_derivative(d, grid, 1), y_derivative_fd(d, grid, 1)))
    return out


def weighted_inner_product(
    fvals: np.ndarray,
    gvals: np.ndarray,
    grid: ChannelGrid,
    spec: WeightedNormSpec,
) -> float:
    """Weighted pairing ``sum_j B_j <grad f_j, grad g_j>``."""
    qw = grid.quad_weights()
    gf = derivative_gradients(fvals, grid, spec.s)
    gg = derivative_gradients(gvals, grid, spec.s)
    total = 0.0
    for B, (fx, fy), (gx, gy) in zip(spec.weights, gf, gg):
        total += B * float(np.sum(qw * (fx * gx + fy * gy)))
    return total


def weighted_norm(fvals: np.ndarray, grid: ChannelGrid, spec: WeightedNormSpec) -> float:
    return float(np.sqrt(max(weighted_inner_product(fvals, fvals, grid, spec), 0.0)))


def homogeneous_norm(fvals: np.ndarray, grid: ChannelGrid, s: int) -> float:
    """Order-``s`` seminorm: the sum of gradient norms of every mixed
    derivative of order at most ``s - 1``."""
    if s < 1:
        raise ConfigError(f"seminorm order must be >= 1, got {s}")
    qw = grid.quad_weights()
    total = 0.0
    for order in range(s):
        for fx, fy in derivative_gradients(fvals, grid, order):
            total += float(np.sqrt(np.sum(qw * (fx**2 + fy**2))))
    return total


def holder_seminorm(diffeo, k: int) -> float:
    """Sup over the grid of every map derivative of order 1..k."""
    if k < 1:
        raise ConfigError(f"seminorm order must be >= 1, got {k}")
    grid = diffeo.grid
    ax, by = diffeo.displacement()
    sup = 0.0
    for m in range(k + 1):
        for n in range(k + 1 - m):
            if m + n == 0 or m + n > k:
                continue
            for comp, ident in ((ax, (m, n) == (1, 0)), (by, (m, n) == (0, 1))):
                d = comp
                if n:
                    d = y_derivative_fd(d, grid, n)
                if m:
                    d = x_derivative(d, grid, m)
                base = 1.0 if ident else 0.0
                sup = max(sup, float(np.abs(base + d).max()))
    return sup


def metric_floor(ctxs) -> float:
    """Infimum over trajectory nodes of the pointwise smallest metric
    eigenvalue (the squared inverse sup-norm of the differentials)."""
    return min(ctx.metric.eigenvalue_range()[0] for ctx in ctxs)


def constants_from_contexts(ctxs, s: int) -> SobolevConstants:
    """Measure the trajectory constants entering the weighted estimate."""
    if s + 1 > MAX_TOTAL_ORDER:
        raise ConfigError(
            f"Sobolev index {s} needs derivatives of order {s + 1} beyond the "
            f"supported total {MAX_TOTAL_ORDER}"
        )
    K_inf = metric_floor(ctxs)
    c1 = max(holder_seminorm(ctx.eta, 1) for ctx in ctxs)
    chigh = max(holder_seminorm(ctx.eta, min(s + 1, MAX_TOTAL_ORDER)) for ctx in ctxs)
    if s == 1:
        eps_max = np.inf
    else:
        eps_max = K_inf / ((s - 1) * c1**2)
    return SobolevConstants(s=s, K_inf=K_inf, c1_norm=c1, chigh_norm=chigh, eps_max=eps_max)


def positivity_gap(
    fvals: np.ndarray,
    lambdaf: np.ndarray,
    grid: ChannelGrid,
    spec: WeightedNormSpec,
    cross_constant: float,
) -> dict:
    """Evaluate the weighted coercivity estimate for one field.

    Returns the three quantities of the estimate

        ``<<f, Lambda f>>  >=  K_eps/2 |f|^2  -  C_B |f| |f|_hom``

    with ``C_B = cross_constant * sqrt(s+1) * max_j sqrt(B_j)``, together
    with the slack ``lhs - rhs_main + rhs_lower`` (nonnegative slack means
    the estimate held) and the per-sample constant that would have been
    needed to close the gap.
    """
    lhs = weighted_inner_product(fvals, lambdaf, grid, spec)
    wn = weighted_norm(fvals, grid, spec)
    hn = homogeneous_norm(fvals, grid, spec.s)
    scale = np.sqrt(spec.s + 1.0) * spec.max_sqrt_weight * wn * hn
    rhs_main = 0.5 * spec.K_eps * wn**2
    rhs_lower = cross_constant * scale
    slack = lhs - rhs_main + rhs_lower
    needed = 0.0 if scale == 0.0 else max(0.0, (rhs_main - lhs) / scale)
    return {
        "lhs": float(lhs),
        "rhs_main": float(rhs_main),
        "rhs_lower": float(rhs_lower),
        "weighted_norm": float(wn),
        "homogeneous_norm": float(hn),
        "slack": float(slack),
        "needed_constant": float(needed),
        "held": bool(slack >= 0.0),
    }


def coercivity_gap(
    fvals: np.ndarray,
    lambdaf: np.ndarray,
    grid: ChannelGrid,
    spec: WeightedNormSpec,
    cross_constant: float,
) -> float:
    """Slack of the weighted coercivity estimate (see ``positivity_gap``)."""
    return positivity_gap(fvals, lambdaf, grid, spec, cross_constant)["slack"]


def constants_from_trajectory(traj, t: float, s: int, eps: float | None = None) -> dict:
    """Trajectory constants up to time ``t``: the metric floor and its
    time integral, the map seminorms, and the derived weighted-norm data.
    """
    from .operators import trajectory_contexts, uniform_quad_weights

    times = np.asarray(traj.times)
    idx = int(np.argmin(np.abs(times - t)))
    if abs(times[idx] - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigError(f"time {t} is not a stored trajectory node")
    if idx == 0:
        raise ConfigError("constants need a positive time horizon")
    ctxs = trajectory_contexts(traj, range(idx + 1))
    consts = constants_from_contexts(ctxs, s)
    spec = consts.spec(eps)
    dt = times[1] - times[0]
    qw = uniform_quad_weights(idx + 1, dt)
    floors = np.array([ctx.metric.eigenvalue_range()[0] for ctx in ctxs])
    return {
        "K_eps": spec.K_eps,
        "Q_eps": spec.Q_eps,
        "C_eta": consts.chigh_norm**2,
        "K_eta_inf": consts.K_inf,
        "C_t": float(qw @ floors),
        "eps": spec.eps,
        "eps_max": consts.eps_max,
        "constants": consts,
        "spec": spec,
    }
