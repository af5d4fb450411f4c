"""Quantum clock readings: plane waves, Gaussians and WKB branches."""

import numpy as np
import pytest

from chronolab import (
    ClockModel,
    ComplexTimeMap,
    DegenerateInputError,
    Field1D,
    Grid1D,
    Harmonic,
    clock_time_map,
    norm,
    perfect_clock,
    polar_time,
    quantum_time,
    wkb_breakdown_ratio,
    wkb_environment,
)
from chronolab.errors import StationaryPointError


# ---------------------------------------------------------------------------
# the perfect clock


def test_perfect_clock_reads_linear_time():
    grid = Grid1D(0.0, 4.0, 1001)
    pc = perfect_clock(50.0, 2.0, grid)
    tmap = pc.time_map()
    np.testing.assert_allclose(tmap.times, 50.0 * grid.points / 2.0, rtol=1e-14)
    assert pc.velocity == pytest.approx(0.04)


def test_perfect_clock_chi_is_flat_plane_wave():
    grid = Grid1D(0.0, 4.0, 1001)
    chi = perfect_clock(50.0, 2.0, grid).chi()
    np.testing.assert_allclose(np.abs(chi.values), (2 * np.pi) ** -0.5, rtol=1e-14)
    # one full phase turn every 2 pi / P
    assert chi.values[0] == pytest.approx(chi.values[-1] * np.exp(-1j * 2.0 * 4.0), rel=1e-10)


def test_perfect_clock_input_validation():
    grid = Grid1D(0.0, 1.0, 11)
    with pytest.raises(DegenerateInputError):
        perfect_clock(-1.0, 2.0, grid)
    with pytest.raises(DegenerateInputError):
        perfect_clock(1.0, 0.0, grid)


def test_quantum_time_of_plane_wave():
    grid = Grid1D(0.0, 4.0, 40001)
    pc = perfect_clock(50.0, 2.0, grid)
    tau = quantum_time(pc.chi(), 50.0)
    exact = 50.0 * grid.points / 2.0
    err = np.max(np.abs(tau.values.real - exact)) / exact[-1]
    assert err < 1e-8
    assert tau.max_imag_fraction < 1e-10


# ---------------------------------------------------------------------------
# imaginary readings of a clock at rest


def test_quantum_time_of_real_gaussian_is_imaginary():
    # chi = exp(-R^2 / 2 s^2) on a window right of the peak:
    # tau(R) = -i (M s^2 / hbar) ln(R / R0), exactly
    grid = Grid1D(1.0, 3.0, 20001)
    s, M = 1.3, 7.0
    chi = Field1D(grid, np.exp(-grid.points**2 / (2 * s * s)))
    tau = quantum_time(chi, M)
    exact = -1j * M * s * s * np.log(grid.points / grid.points[0])
    assert np.max(np.abs(tau.values - exact)) < 1e-6
    assert np.all(tau.values.real == 0.0)


def test_quantum_time_rejects_stationary_chi():
    grid = Grid1D(-2.0, 2.0, 201)
    with pytest.raises(StationaryPointError):
        quantum_time(Field1D(grid, np.ones(201)), 1.0)
    # peak inside the window: dchi/dR crosses zero there
    with pytest.raises(StationaryPointError) as exc:
        quantum_time(Field1D(grid, np.exp(-grid.points**2)), 1.0)
    assert len(exc.value.locations) > 0


# ---------------------------------------------------------------------------
# polar route


def test_polar_time_with_flat_amplitude_is_classical():
    grid = Grid1D(0.0, 4.0, 2001)
    P, M = 2.0, 50.0
    tau = polar_time(grid, np.ones(grid.n), P * grid.points, M)
    np.testing.assert_allclose(tau.values.real, M * grid.points / P, rtol=1e-9)
    assert tau.max_imag_fraction < 1e-12


def test_polar_time_rejects_vanishing_denominator():
    grid = Grid1D(0.0, 1.0, 101)
    with pytest.raises(StationaryPointError):
        polar_time(grid, np.ones(grid.n), np.zeros(grid.n), 1.0)


def test_both_routes_agree_on_a_wkb_clock():
    grid = Grid1D(0.0, 1.0, 8001)
    clock = ClockModel(Harmonic(1.0), 500.0, 4.0, grid)
    wkb = wkb_environment(clock)
    classical = clock_time_map(clock).times

    via_chi = quantum_time(wkb.chi(), clock.M)
    via_polar = polar_time(grid, wkb.amplitude, wkb.action, clock.M)
    scale = classical[-1]
    assert np.max(np.abs(via_chi.values.real - classical)) / scale < 1e-2
    assert np.max(np.abs(via_polar.values.real - classical)) / scale < 1e-2
    # the two quantum routes agree with each other more tightly
    assert np.max(np.abs(via_chi.values - via_polar.values)) / scale < 1e-3


# ---------------------------------------------------------------------------
# WKB tables


def test_wkb_state_checks_its_own_consistency():
    grid = Grid1D(0.0, 1.0, 2001)
    clock = ClockModel(Harmonic(1.0), 500.0, 4.0, grid)
    wkb = wkb_environment(clock)
    assert wkb.momentum_defect < 1e-4
    np.testing.assert_allclose(wkb.amplitude, wkb.momentum ** -0.5, rtol=1e-14)
    from chronolab import WKBState
    with pytest.raises(DegenerateInputError):
        # action table inconsistent with the momentum table
        WKBState(grid, np.zeros(grid.n), wkb.amplitude, wkb.momentum, 4.0, 500.0)


def test_breakdown_ratio_shrinks_with_clock_mass():
    grid = Grid1D(0.0, 1.0, 2001)
    tops = []
    for M in (500.0, 2000.0):
        ratio = wkb_breakdown_ratio(wkb_environment(ClockModel(Harmonic(1.0), M, 4.0, grid)))
        tops.append(np.max(ratio))
    # hbar p' / p^2 scales as M^(-1/2)
    assert tops[0] / tops[1] == pytest.approx(2.0, rel=0.05)
    assert tops[0] < 1e-2


# ---------------------------------------------------------------------------
# complex map plumbing


def test_complex_map_collapse_and_guards():
    grid = Grid1D(0.0, 1.0, 101)
    real_map = ComplexTimeMap(grid, np.linspace(0.0, 2.0, 101) + 0j)
    tm = real_map.as_real()
    assert tm.span == (0.0, 2.0)
    skew = ComplexTimeMap(grid, np.linspace(0.0, 2.0, 101) + 0.1j)
    assert skew.max_imag_fraction == pytest.approx(0.05)
    with pytest.raises(DegenerateInputError):
        skew.as_real()
    with pytest.raises(DegenerateInputError):
        ComplexTimeMap(grid, np.full(101, np.nan + 0j))
