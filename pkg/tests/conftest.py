"""Shared helpers for the test suite."""

import numpy as np
import pytest

from trajflow.autodiff import make_rng
from trajflow.spline import LatentTrajectory


def random_trajectory(rng: np.random.Generator, m=None, dim=None) -> LatentTrajectory:
    """Random trajectory with interior knot times drawn uniformly."""
    m = int(m if m is not None else rng.integers(2, 9))
    dim = int(dim if dim is not None else rng.integers(1, 65))
    if m > 2:
        # keep knots well separated so trajectory velocities stay moderate
        interior = np.sort(rng.uniform(0.04, 0.96, size=m - 2))
        while np.any(np.diff(np.concatenate([[0.0], interior, [1.0]])) < 0.04):
            interior = np.sort(rng.uniform(0.04, 0.96, size=m - 2))
        times = np.concatenate([[0.0], interior, [1.0]])
    else:
        times = np.array([0.0, 1.0])
    knots = rng.normal(0.0, 1.0, size=(m, dim))
    return LatentTrajectory(times=times, knots=knots)


@pytest.fixture
def rng():
    return make_rng(1234)
