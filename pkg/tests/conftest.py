"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from pdflow.problems import catalog


@pytest.fixture
def example1():
    return catalog("example1")


@pytest.fixture
def start_state():
    """The documented start for the 2-d problem: x0, z0 = A x0, y0."""
    return (np.array([-10.0, 10.0]), np.array([-20.0, 0.0]),
            np.array([-10.0, 10.0]))
