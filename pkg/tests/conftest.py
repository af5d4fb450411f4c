"""Shared helpers for the test suite."""

import numpy as np
import pytest

from chronolab import Field1D, Grid1D


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def gaussian_field(grid: Grid1D, center: float, width: float) -> Field1D:
    """Unit-norm real Gaussian on a grid (normalized by quadrature)."""
    v = np.exp(-((grid.points - center) ** 2) / (2.0 * width**2))
    v = v / np.sqrt(np.sum(grid.weights * v * v))
    return Field1D(grid, v)


def ho_ground(grid: Grid1D, m: float, k: float, hbar: float = 1.0) -> np.ndarray:
    """Analytic harmonic ground state (mw/pi hbar)^(1/4) exp(-m w x^2 / 2 hbar)."""
    w = np.sqrt(k / m)
    x = grid.points
    return (m * w / (np.pi * hbar)) ** 0.25 * np.exp(-m * w * x**2 / (2.0 * hbar))
