"""Composite eigenproblems, factorization, channels and directed states."""

import numpy as np
import pytest

from chronolab import (
    Bilinear,
    ChannelBasis,
    CompositeSpec,
    Constant,
    DegenerateInputError,
    Field1D,
    Field2D,
    Grid1D,
    Grid2D,
    GridMismatchError,
    Harmonic,
    Linear,
    SystemSpec,
    WindowedPulse,
    ZeroCoupling,
    assemble_tise,
    bo_surface,
    close_coupled_residuals,
    compute_back_reaction,
    conditional_equation_residual,
    factorize_prescribed,
    factorize_selfconsistent,
    project_channels,
    schmidt_spectrum,
    solve_bo_states,
    solve_directed_state,
    solve_eigenpairs,
    solve_system_basis,
)


@pytest.fixture(scope="module")
def weak_pair():
    """Lowest eigenpair of a weakly coupled two-oscillator composite."""
    grid = Grid1D(-7.0, 7.0, 128)
    spec = CompositeSpec(2.0, 1.0, 1.0, Harmonic(2.0), Harmonic(4.0), Bilinear(0.15),
                         energy=5.0, clock_energy=2.0)
    h = assemble_tise(spec, Grid2D(grid, grid))
    pair = solve_eigenpairs(h, e_target=1.6, k=1)[0]
    return spec, grid, pair


# ---------------------------------------------------------------------------
# spectra


def test_separable_spectrum_matches_oscillator_sums():
    grid = Grid1D(-7.0, 7.0, 64)
    grid2 = Grid2D(grid, grid)
    spec = CompositeSpec(2.0, 1.0, 1.0, Harmonic(2.0), Harmonic(4.0), ZeroCoupling())
    h = assemble_tise(spec, grid2)
    pairs = solve_eigenpairs(h, e_target=1.4, k=4)
    got = np.array([p.energy for p in pairs])
    # w_R = 1, w_x = 2: sums (nR + 1/2) + 2 (nx + 1/2)
    expect = np.array([1.5, 2.5, 3.5, 3.5])
    np.testing.assert_allclose(got, expect, rtol=1e-3)
    for p in pairs:
        assert p.residual < 1e-8 * abs(p.energy)


def test_eigensolve_is_deterministic():
    grid = Grid1D(-6.0, 6.0, 48)
    grid2 = Grid2D(grid, grid)
    spec = CompositeSpec(1.5, 1.0, 1.0, Harmonic(1.0), Harmonic(1.0), Bilinear(0.1))
    h = assemble_tise(spec, grid2)
    a = solve_eigenpairs(h, e_target=1.0, k=2)
    b = solve_eigenpairs(h, e_target=1.0, k=2)
    assert [p.energy for p in a] == [p.energy for p in b]
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.state.values, pb.state.values)


def test_system_basis_energies_and_orthonormality():
    grid = Grid1D(-8.0, 8.0, 801)
    basis = solve_system_basis(SystemSpec(1.0, 1.0, Harmonic(4.0)), grid, 4, order=4)
    np.testing.assert_allclose(basis.energies, 2.0 * (np.arange(4) + 0.5), rtol=1e-6)
    np.testing.assert_allclose(basis.gram(), np.eye(4), atol=1e-10)
    assert basis.stencil_order == 4


# ---------------------------------------------------------------------------
# factorization


def test_prescribed_factorization_reconstructs_state(weak_pair):
    spec, grid, pair = weak_pair
    wx = grid.weights
    marginal = np.sqrt(np.sum(wx * np.abs(pair.state.values) ** 2, axis=1))
    fs = factorize_prescribed(pair.state, Field1D(grid, marginal))
    i0, i1 = fs.window
    recon = fs.chi.values[:, None] * fs.psi.values
    assert np.max(np.abs(recon - pair.state.values[i0:i1 + 1])) < 1e-12
    # the window drops only the negligible tails
    dropped = np.abs(marginal[[0, -1]]).max() / np.abs(marginal).max()
    assert dropped < 1e-8


def test_prescribed_factorization_rejects_wrong_grid(weak_pair):
    spec, grid, pair = weak_pair
    other = Grid1D(-7.0, 7.0, 130)
    with pytest.raises(GridMismatchError):
        factorize_prescribed(pair.state, Field1D(other, np.ones(130)))


def test_selfconsistent_factorization_recovers_total_energy(weak_pair):
    spec, grid, pair = weak_pair
    fs, trace = factorize_selfconsistent(pair, spec)
    assert fs.mode == "selfconsistent"
    # the clock eigenvalue of the effective 1D problem is the composite energy
    assert trace.energies[-1] == pytest.approx(pair.energy, abs=1e-6)
    assert fs.u_s is not None
    res = conditional_equation_residual(fs, spec, u_s=fs.u_s)
    assert res < 1e-4


def test_back_reaction_of_uncoupled_state_is_flat():
    grid = Grid1D(-7.0, 7.0, 96)
    grid2 = Grid2D(grid, grid)
    spec = CompositeSpec(2.0, 1.0, 1.0, Harmonic(2.0), Harmonic(4.0), ZeroCoupling())
    h = assemble_tise(spec, grid2)
    pair = solve_eigenpairs(h, e_target=1.4, k=1)[0]
    wx = grid.weights
    marginal = np.sqrt(np.sum(wx * np.abs(pair.state.values) ** 2, axis=1))
    fs = factorize_prescribed(pair.state, Field1D(grid, marginal))
    u = compute_back_reaction(fs, spec).values
    # product state: psi is the bare system level, so U_S == eps_0 everywhere
    assert np.ptp(u.real) < 1e-8
    assert np.mean(u.real) == pytest.approx(1.0, rel=1e-4)
    assert np.max(np.abs(u.imag)) < 1e-10


# ---------------------------------------------------------------------------
# schmidt spectrum


def test_schmidt_spectrum_orders_and_normalizes(weak_pair):
    spec, grid, pair = weak_pair
    sch = schmidt_spectrum(pair.state)
    assert np.all(np.diff(sch.values) <= 1e-12)
    assert sch.norm_sq == pytest.approx(1.0, rel=1e-10)
    # weak coupling: almost a product state, but not exactly
    assert 0.999 < sch.purity < 1.0


def test_schmidt_product_state_is_pure():
    g = Grid1D(-6.0, 6.0, 101)
    gg = Grid2D(g, g)
    a = np.exp(-g.points**2)
    psi = Field2D(gg, np.outer(a, a))
    sch = schmidt_spectrum(psi)
    assert 1.0 - sch.purity < 1e-12


# ---------------------------------------------------------------------------
# channel projections


def test_close_coupled_residual_drops_with_channels(weak_pair):
    spec, grid, pair = weak_pair
    worst = {}
    for k in (2, 4):
        basis = solve_system_basis(spec.system, grid, k, order=4)
        dec = project_channels(pair.state, basis)
        rep = close_coupled_residuals(dec, spec, pair.energy, order_r=4)
        worst[k] = float(rep.residuals.max())
        assert rep.hermiticity_defect < 1e-10
    assert worst[2] / worst[4] > 10.0


def test_projection_defect_shrinks_with_basis(weak_pair):
    spec, grid, pair = weak_pair
    defects = []
    for k in (2, 6):
        basis = solve_system_basis(spec.system, grid, k, order=4)
        defects.append(project_channels(pair.state, basis).defect)
    assert defects[0] > defects[1]
    assert defects[1] < 1e-10


def test_projection_rejects_foreign_basis(weak_pair):
    spec, grid, pair = weak_pair
    other = Grid1D(-7.0, 7.0, 256)
    basis = solve_system_basis(spec.system, other, 2, order=4)
    with pytest.raises(GridMismatchError):
        project_channels(pair.state, basis)


# ---------------------------------------------------------------------------
# fixed-environment system states


def test_bo_curve_matches_displaced_oscillator():
    # bilinear coupling shifts the oscillator and lowers it by (lam R)^2 / 2k
    grid = Grid1D(-7.0, 7.0, 128)
    lam, k_sys = 0.15, 4.0
    spec = CompositeSpec(2.0, 1.0, 1.0, Harmonic(2.0), Harmonic(k_sys), Bilinear(lam))
    r = np.linspace(-3.0, 3.0, 41)
    surf = bo_surface(spec, grid, r, k=2)
    exact = np.sqrt(k_sys) / 2.0 - (lam * r) ** 2 / (2.0 * k_sys)
    np.testing.assert_allclose(surf.energies[0], exact, atol=1e-4)


def test_bo_states_sign_convention():
    grid = Grid1D(-7.0, 7.0, 128)
    spec = CompositeSpec(2.0, 1.0, 1.0, Harmonic(2.0), Harmonic(4.0), Bilinear(0.15))
    states, vals = solve_bo_states(spec, grid, 0.5, 2)
    for s in states:
        peak = np.argmax(np.abs(s.values))
        assert s.values[peak].real > 0.0


# ---------------------------------------------------------------------------
# directed states


def _directed_setup(coupling, slices=801, e_kin=50.0):
    M, hbar = 200.0, 1.0
    x_grid = Grid1D(-8.0, 8.0, 161)
    system = SystemSpec(1.0, hbar, Harmonic(4.0))
    # enough headroom channels that truncation leakage stays tiny
    basis = solve_system_basis(system, x_grid, 6, order=2)
    e_total = e_kin + float(basis.energies[0])
    v = np.sqrt(2.0 * e_kin / M)
    span = v * 2.0
    k_max = np.sqrt(2.0 * M * e_total) / hbar
    n_min = int(np.ceil(span * k_max / 0.02))
    stride = max(1, -(-n_min // (slices - 1)))
    r_grid = Grid1D(0.0, span, stride * (slices - 1) + 1)
    spec = CompositeSpec(M, 1.0, hbar, Constant(), Harmonic(4.0), coupling,
                         energy=e_total, clock_energy=e_total)
    pair = solve_directed_state(spec, basis, r_grid, e_total, 0, 1e-6, stride=stride)
    return basis, pair


def test_directed_free_beam_keeps_its_channel():
    basis, pair = _directed_setup(ZeroCoupling())
    assert pair.residual < 1e-6
    wx = basis.x_grid.weights
    mat = basis.state_matrix()
    amps = (np.conj(mat) * wx) @ pair.state.values.T
    pops = np.abs(amps) ** 2
    # no coupling: the incoming channel rides through untouched
    assert np.ptp(pops[0]) / np.max(pops[0]) < 1e-8
    assert np.max(pops[1:]) < 1e-12 * np.max(pops[0])


def test_directed_pulse_transfers_population():
    # keep the envelope negligible at both open ends of the beam
    pulse = WindowedPulse(0.3, 0.7, 0.08, Linear(1.0))
    basis, pair = _directed_setup(pulse)
    assert pair.residual < 1e-6
    wx = basis.x_grid.weights
    mat = basis.state_matrix()
    amps = (np.conj(mat) * wx) @ pair.state.values.T
    pops = np.abs(amps) ** 2
    pops /= pops[:, 0].sum()
    # the pulse moves some population up, mostly to the adjacent channel
    assert pops[1, -1] > 1e-6
    assert pops[1, -1] > 10.0 * pops[2, -1]
