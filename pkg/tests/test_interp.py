"""Off-grid evaluation: trigonometric in x, Lagrange stencils in y."""

from __future__ import annotations

import numpy as np
import pytest

from fredlab.errors import ConfigError
from fredlab.grid import ChannelGrid, ScalarField
from fredlab.interp import (
    BatchInterpolant,
    ChannelInterpolant,
    ClampCounter,
    QueryPlan,
    interpolate_field,
)


def _smooth(grid):
    X, Y = grid.meshgrid()
    return np.sin(2 * X) * np.cos(np.pi * Y / grid.height) + 0.3 * np.cos(X)


def test_on_grid_queries_reproduce_values(grid_small):
    f = ScalarField(grid_small, _smooth(grid_small))
    X, Y = grid_small.meshgrid()
    got = interpolate_field(f, X, Y, order=4)
    np.testing.assert_allclose(got, f.values, atol=1e-12)


def test_off_grid_accuracy_and_order():
    # Periodic-direction evaluation is spectral; the y error must drop
    # with the Lagrange stencil order.
    errs = {}
    g = ChannelGrid(32, 33, height=2.0)
    f = ScalarField(g, _smooth(g))
    rng = np.random.default_rng(0)
    xq = rng.uniform(0, 2 * np.pi, 500)
    yq = rng.uniform(0, g.height, 500)
    exact = np.sin(2 * xq) * np.cos(np.pi * yq / g.height) + 0.3 * np.cos(xq)
    for order in (2, 4, 6):
        got = interpolate_field(f, xq, yq, order=order)
        errs[order] = np.max(np.abs(got - exact))
    assert errs[4] < errs[2] / 30
    assert errs[6] < errs[4] / 5
    assert errs[6] < 1e-7


def test_x_periodicity_of_queries(grid_small):
    f = ScalarField(grid_small, _smooth(grid_small))
    y = np.full(7, 1.0)
    x = np.linspace(0, 2 * np.pi, 7, endpoint=False)
    a = interpolate_field(f, x, y)
    b = interpolate_field(f, x + 2 * np.pi, y)
    c = interpolate_field(f, x - 4 * np.pi, y)
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, c, atol=1e-12)


def test_clamp_counter_records_excursions(grid_small):
    f = ScalarField(grid_small, _smooth(grid_small))
    counter = ClampCounter()
    xq = np.zeros(4)
    yq = np.array([-0.25, 0.5, grid_small.height + 0.1, 1.0])
    interpolate_field(f, xq, yq, counter=counter)
    assert counter.total == 4
    assert counter.clamped == 2
    assert counter.max_excursion == pytest.approx(0.25)
    d = counter.as_dict()
    assert d["clamped"] == 2 and d["total"] == 4


def test_clamped_queries_evaluate_at_wall(grid_small):
    f = ScalarField(grid_small, _smooth(grid_small))
    below = interpolate_field(f, np.array([1.0]), np.array([-0.5]))
    at = interpolate_field(f, np.array([1.0]), np.array([0.0]))
    np.testing.assert_allclose(below, at, atol=1e-13)


def test_counter_merge_accumulates():
    a = ClampCounter(clamped=1, total=10, max_excursion=0.1)
    b = ClampCounter(clamped=2, total=5, max_excursion=0.3)
    a.merge(b)
    assert (a.clamped, a.total, a.max_excursion) == (3, 15, 0.3)


def test_batch_matches_single(grid_small):
    rng = np.random.default_rng(1)
    stack = rng.standard_normal((3,) + grid_small.shape)
    xq = rng.uniform(0, 2 * np.pi, 40)
    yq = rng.uniform(0, grid_small.height, 40)
    plan = QueryPlan.build(grid_small, xq, yq, order=4)
    batch = BatchInterpolant(stack, grid_small, order=4).eval_plan(plan)
    for i in range(3):
        single = ChannelInterpolant(
            ScalarField(grid_small, stack[i]), order=4
        ).eval_plan(plan)
        np.testing.assert_allclose(batch[i], single, atol=1e-12)


def test_plan_reuse_across_fields(grid_small):
    # One plan serves many fields; results agree with one-shot calls.
    rng = np.random.default_rng(2)
    xq = rng.uniform(0, 2 * np.pi, grid_small.shape)
    yq = rng.uniform(0, grid_small.height, grid_small.shape)
    plan = QueryPlan.build(grid_small, xq, yq, order=6)
    f = ScalarField(grid_small, _smooth(grid_small))
    via_plan = ChannelInterpolant(f, order=6).eval_plan(plan)
    direct = interpolate_field(f, xq, yq, order=6)
    np.testing.assert_allclose(via_plan, direct, atol=1e-13)
    assert via_plan.shape == grid_small.shape


def test_invalid_orders_rejected(grid_small):
    f = ScalarField(grid_small, np.zeros(grid_small.shape))
    with pytest.raises(ConfigError):
        ChannelInterpolant(f, order=3)
    with pytest.raises(ConfigError):
        ChannelInterpolant(f, order=0)


def test_order_exceeding_rows_rejected():
    g = ChannelGrid(8, 4, height=1.0)
    with pytest.raises(ConfigError):
        QueryPlan.build(g, np.zeros(1), np.zeros(1), order=6)
