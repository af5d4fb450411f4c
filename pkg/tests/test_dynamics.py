"""Time propagation: grid TDSE, amplitude ODEs, conditional states, scans."""

import numpy as np
import pytest

from chronolab import (
    Bilinear,
    CompositeSpec,
    Constant,
    CouplingDrive,
    DegenerateInputError,
    ZeroCoupling,
    EmergenceScanConfig,
    Field1D,
    Grid1D,
    Harmonic,
    SystemSpec,
    TimeMap,
    WKBState,
    compare_amplitudes_to_grid,
    conditional_from_composite,
    emergence_scan,
    norm,
    normalize,
    propagate_amplitudes,
    propagate_complex_time,
    propagate_tdse,
    solve_directed_state,
    solve_system_basis,
    tdse_residual,
)
from chronolab.errors import BlowUpError, StabilityError
from conftest import ho_ground


def _packet(grid, center=0.0, width=1.0, k0=0.0):
    x = grid.points
    v = np.exp(-((x - center) ** 2) / (2 * width**2) + 1j * k0 * x)
    return normalize(Field1D(grid, v))


# ---------------------------------------------------------------------------
# grid propagation


def test_cn_norm_conservation():
    grid = Grid1D(-10.0, 10.0, 801)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    traj = propagate_tdse(system, None, _packet(grid, 0.7), np.linspace(0.0, 2.0, 2001))
    assert traj.norm_drift < 1e-10


def test_free_packet_dispersion_law():
    grid = Grid1D(-20.0, 20.0, 4001)
    system = SystemSpec(1.0, 1.0, Constant())
    t = np.linspace(0.0, 1.0, 1001)
    traj = propagate_tdse(system, None, _packet(grid, 0.0, 1.0), t)
    x = grid.points
    w = grid.weights
    # variance of |psi|^2 at the final slice vs the analytic spreading law
    # sigma^2(t) = sigma0^2 + (hbar t / 2 m sigma0)^2 with sigma0^2 = 1/2
    prob = np.abs(traj.values[-1]) ** 2
    var = np.sum(w * x**2 * prob) / np.sum(w * prob)
    assert var == pytest.approx(0.5 + 0.5, rel=1e-4)


def test_cn_step_halving_is_second_order():
    grid = Grid1D(-10.0, 10.0, 801)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    psi0 = _packet(grid, 0.7)

    def run(steps):
        return propagate_tdse(system, None, psi0, np.linspace(0.0, 1.0, steps + 1)).values[-1]

    ref = run(4000)
    errs = [np.max(np.abs(run(s) - ref)) for s in (500, 1000)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


def test_eigenstate_acquires_only_a_phase():
    grid = Grid1D(-9.0, 9.0, 901)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    basis = solve_system_basis(system, grid, 1, order=2)
    psi0 = basis.states[0]
    eps0 = float(basis.energies[0])
    t = np.linspace(0.0, 3.0, 3001)
    traj = propagate_tdse(system, None, psi0, t)
    exact = psi0.values[None, :] * np.exp(-1j * eps0 * t)[:, None]
    assert np.max(np.abs(traj.values - exact)) < 1e-7


def test_trajectory_slicing():
    grid = Grid1D(-10.0, 10.0, 401)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    traj = propagate_tdse(system, None, _packet(grid), np.linspace(0.0, 0.5, 101))
    mid = traj.slice(50)
    assert isinstance(mid, Field1D)
    assert norm(mid) == pytest.approx(1.0, abs=1e-10)


# ---------------------------------------------------------------------------
# amplitude ODEs


def test_rabi_oscillation_in_degenerate_limit():
    grid = Grid1D(-8.0, 8.0, 321)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    basis = solve_system_basis(system, grid, 2, order=2)
    from chronolab import ChannelBasis
    degenerate = ChannelBasis(grid, basis.states, np.zeros(2), basis.stencil_order)

    lam = 0.3
    x = grid.points
    w = grid.weights
    c = float(np.sum(w * basis.states[0].values.real * x * basis.states[1].values.real))
    t = np.linspace(0.0, 6.0, 3001)
    amps = propagate_amplitudes(degenerate, lambda xx, tt: lam * xx, [1.0, 0.0], t)
    pops = amps.populations()
    np.testing.assert_allclose(pops[:, 1], np.sin(lam * c * t) ** 2, atol=1e-6)
    assert amps.population_drift < 1e-9


def test_amplitudes_without_drive_are_constant():
    grid = Grid1D(-8.0, 8.0, 161)
    basis = solve_system_basis(SystemSpec(1.0, 1.0, Harmonic(4.0)), grid, 3, order=2)
    t = np.linspace(0.0, 5.0, 11)
    amps = propagate_amplitudes(basis, None, [0.6, 0.8j, 0.0], t)
    assert np.array_equal(amps.amplitudes[0], amps.amplitudes[-1])


def test_amplitude_stepper_flags_instability():
    grid = Grid1D(-8.0, 8.0, 161)
    basis = solve_system_basis(SystemSpec(1.0, 1.0, Harmonic(4.0)), grid, 2, order=2)
    coarse = np.linspace(0.0, 20.0, 21)
    with pytest.raises(StabilityError) as exc:
        propagate_amplitudes(basis, lambda x, t: 40.0 * x, [1.0, 0.0], coarse)
    assert exc.value.suggested_step < 1.0


def test_two_route_comparison_close_on_two_level_drive():
    grid = Grid1D(-8.0, 8.0, 321)
    system = SystemSpec(1.0, 1.0, Harmonic(4.0))
    basis = solve_system_basis(system, grid, 2, order=2)
    rmap = Grid1D(-3.5, 3.5, 2001)
    from chronolab import ClockModel, WindowedPulse, Linear, clock_time_map
    clock = ClockModel(Harmonic(1.0), 80.0, 10.0, rmap)
    tmap = clock_time_map(clock)
    drive = CouplingDrive(WindowedPulse(0.2, 0.0, 0.8, Linear(1.0)), tmap)
    t = np.linspace(0.0, 0.9 * tmap.span[1], 2001)
    rep = compare_amplitudes_to_grid(system, basis, drive, basis.states[0], t)
    assert rep.basis_defect < 1e-6
    assert rep.max_deviation < 5e-3


def test_two_route_comparison_rejects_out_of_span_state():
    grid = Grid1D(-8.0, 8.0, 321)
    system = SystemSpec(1.0, 1.0, Harmonic(4.0))
    basis = solve_system_basis(system, grid, 2, order=2)
    sharp = _packet(grid, 0.0, 0.2)  # far outside a two-state span
    with pytest.raises(DegenerateInputError):
        compare_amplitudes_to_grid(system, basis, None, sharp, np.linspace(0.0, 1.0, 11))


# ---------------------------------------------------------------------------
# conditional states from directed composites


def test_free_beam_conditional_carries_emergent_phase():
    # The clock carries the full energy, so the conditional state is not
    # frozen: it picks up the phase exp(-i eps0 t) of the channel it rides.
    from chronolab.stationary import _discrete_wavenumber

    M, hbar = 200.0, 1.0
    x_grid = Grid1D(-8.0, 8.0, 161)
    system = SystemSpec(1.0, hbar, Harmonic(4.0))
    basis = solve_system_basis(system, x_grid, 4, order=2)
    eps0 = float(basis.energies[0])
    e_total = 50.0 + eps0
    r_grid = Grid1D(0.0, 1.4, 8001)
    spec = CompositeSpec(M, 1.0, hbar, Constant(), Harmonic(4.0),
                         ZeroCoupling(),
                         energy=e_total, clock_energy=e_total)
    pair = solve_directed_state(spec, basis, r_grid, e_total, 0, 1e-6, stride=4)

    r_sub = pair.state.grid.r
    p_lat = hbar * _discrete_wavenumber(e_total, r_grid.spacing, M, hbar)
    rel = r_sub.points - r_sub.points[0]
    wkb = WKBState(r_sub, p_lat * rel, np.full(r_sub.n, p_lat**-0.5),
                   np.full(r_sub.n, p_lat), e_total, M, hbar)
    tmap = TimeMap(r_sub, (M / p_lat) * rel)
    traj = conditional_from_composite(pair, wkb, tmap, spec, x_stencil_order=2)

    assert np.ptp([norm(Field1D(x_grid, row)) for row in traj.values]) < 1e-10
    assert traj.u_s is not None
    np.testing.assert_allclose(traj.u_s.real, eps0, rtol=1e-8)

    # phase-locked comparison against the entry slice
    t_rel = traj.times - traj.times[0]
    locked = traj.values[0][None, :] * np.exp(-1j * eps0 * t_rel / hbar)[:, None]
    dev = np.max(np.abs(traj.values - locked)) / np.max(np.abs(traj.values[0]))
    mv2 = 2.0 * (e_total - eps0)
    # residual phase drift accumulates at the correction rate: eps0^2 T / (2 M v^2)
    assert dev == pytest.approx(eps0**2 * t_rel[-1] / (2.0 * mv2), rel=0.05)

    # the conditional-equation defect IS the leading correction eps0/(2 M v^2)
    rep = tdse_residual(traj, system, mv2=mv2)
    assert rep.rho == pytest.approx(eps0 / (2.0 * mv2), rel=0.02)
    assert rep.residual == pytest.approx(rep.rho, rel=0.02)


def test_residual_report_term_norms():
    grid = Grid1D(-9.0, 9.0, 901)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    basis = solve_system_basis(system, grid, 1, order=2)
    t = np.linspace(0.0, 2.0, 2001)
    traj = propagate_tdse(system, None, basis.states[0], t)
    rep = tdse_residual(traj, system, mv2=100.0)
    assert rep.residual < 1e-5
    for key in ("system", "time_derivative", "correction"):
        assert key in rep.term_norms
    assert not rep.resampled


def test_emergence_scan_config_validation():
    with pytest.raises(DegenerateInputError):
        emergence_scan(EmergenceScanConfig(kinetic_energies=(10.0, 40.0)))
    with pytest.raises(DegenerateInputError):
        emergence_scan(EmergenceScanConfig(kinetic_energies=(10.0, 40.0, 160.0)))


# ---------------------------------------------------------------------------
# complex tau paths


def test_real_tau_path_reproduces_plain_propagation():
    grid = Grid1D(-10.0, 10.0, 401)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    psi0 = _packet(grid, 0.5)
    t = np.linspace(0.0, 2.0, 801)
    a = propagate_tdse(system, None, psi0, t)
    b = propagate_complex_time(system, psi0, t.astype(complex))
    assert np.array_equal(a.values, b.values)


def test_imaginary_tau_relaxes_to_ground_state():
    grid = Grid1D(-10.0, 10.0, 401)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    tau = -1j * np.linspace(0.0, 8.0, 3201)
    traj = propagate_complex_time(system, _packet(grid, 0.5), tau)
    fin = traj.values[-1]
    fin = fin / np.sqrt(np.sum(grid.weights * np.abs(fin) ** 2))
    overlap = abs(np.sum(grid.weights * ho_ground(grid, 1.0, 1.0) * fin))
    assert overlap > 0.999999
    norms = traj.slice_norms()
    assert np.all(np.diff(norms) <= 1e-12)


def test_growing_tau_path_is_stopped():
    grid = Grid1D(-10.0, 10.0, 401)
    system = SystemSpec(1.0, 1.0, Harmonic(1.0))
    tau = 1j * np.linspace(0.0, 40.0, 2001)
    with pytest.raises(BlowUpError):
        propagate_complex_time(system, _packet(grid, 0.5), tau, blowup_factor=1e6)
