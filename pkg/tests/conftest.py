"""Shared fixtures: small grids for unit tests, desk-scale objects for
the acceptance suite (built once per session)."""

from __future__ import annotations

import numpy as np
import pytest

from fredlab.basis import StreamBasis
from fredlab.grid import ChannelGrid
from fredlab.operators import OperatorContext


def rel_l2(a: np.ndarray, b: np.ndarray) -> float:
    """Relative L² (Frobenius) distance between two arrays."""
    denom = np.linalg.norm(b)
    if denom == 0.0:
        return float(np.linalg.norm(a - b))
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture(scope="session")
def grid_small() -> ChannelGrid:
    return ChannelGrid(32, 33, height=8.0)


@pytest.fixture(scope="session")
def grid_desk() -> ChannelGrid:
    return ChannelGrid(64, 65, height=8.0)


@pytest.fixture(scope="session")
def basis_small(grid_small) -> StreamBasis:
    return StreamBasis(grid_small, max_k=4, max_l=6)


@pytest.fixture(scope="session")
def basis_desk(grid_desk) -> StreamBasis:
    return StreamBasis(grid_desk, max_k=8, max_l=12)


@pytest.fixture(scope="session")
def shear_ctx_small(grid_small) -> OperatorContext:
    return OperatorContext.from_shear(grid_small, 1.0)


@pytest.fixture(scope="session")
def shear_ctx_desk(grid_desk) -> OperatorContext:
    return OperatorContext.from_shear(grid_desk, 1.0)
