"""Stationary quantum mechanics of the closed composite.

The composite obeys a single time-independent Schroedinger equation on a
2D box.  This module builds the grid Hamiltonian, solves for interior
eigenpairs and for directed channel states, splits eigenstates into a
clock factor chi(R) times a conditional factor psi(x, R), evaluates the
back-reaction potential U_S(R) and the residuals of the projected
equations, and provides fixed-R channel bases with the close-coupled
residual and the Schmidt spectrum.

Kinetic stencils are the 5-point (fourth-order) form per axis by
default; operators can be built with per-axis order 2 where a downstream
construction needs the 3-point form.  Residual evaluators take their
stencil orders from the objects they test so operator and diagnostic
stay consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import eig_banded
from scipy.sparse.linalg import eigsh

from .core import (
    ChannelBasis,
    Field1D,
    Field2D,
    Grid1D,
    Grid2D,
    norm,
)
from .errors import (
    ConvergenceError,
    DegenerateInputError,
    GridMismatchError,
    NodeError,
    TurningPointError,
    WindowError,
)

__all__ = [
    "Hamiltonian2D",
    "assemble_tise",
    "EigenPair",
    "solve_eigenpairs",
    "solve_directed_state",
    "FactorizedState",
    "factorize_prescribed",
    "factorize_selfconsistent",
    "compute_back_reaction",
    "conditional_equation_residual",
    "solve_system_basis",
    "solve_bo_states",
    "bo_surface",
    "project_channels",
    "ChannelDecomposition",
    "close_coupled_residuals",
    "CloseCoupledReport",
    "schmidt_spectrum",
    "SchmidtSpectrum",
]

# relative amplitude below which chi is treated as absent
WINDOW_THRESHOLD = 1e-8


# ---------------------------------------------------------------------------
# stencils


def _kinetic_coeffs(order: int, h: float, mass: float, hbar: float):
    """Coefficients of -hbar^2/(2 mass) d^2/dq^2 as (diag, off1, off2)."""
    pref = hbar * hbar / (2.0 * mass * h * h)
    if order == 2:
        return 2.0 * pref, -1.0 * pref, 0.0
    if order == 4:
        return 30.0 / 12.0 * pref, -16.0 / 12.0 * pref, 1.0 / 12.0 * pref
    raise DegenerateInputError(f"kinetic stencil order must be 2 or 4, got {order}")


def _apply_kinetic(values: np.ndarray, axis: int, order: int, h: float, mass: float,
                   hbar: float, project: bool = True) -> np.ndarray:
    """Apply the kinetic operator along one axis.

    With `project` the wall points are forced to zero and the stencil
    sees zero ghosts beyond them, which keeps the operator exactly
    symmetric (the Dirichlet box).  Without it the wall values enter the
    stencil as they stand; only the interior output is then meaningful.
    """
    v = np.moveaxis(values, axis, 0)
    c0, c1, c2 = _kinetic_coeffs(order, h, mass, hbar)
    pad = 2
    z = np.zeros((v.shape[0] + 2 * pad,) + v.shape[1:], dtype=v.dtype)
    if project:
        z[pad + 1:-pad - 1] = v[1:-1]  # walls forced to zero
    else:
        z[pad:-pad] = v
    out = c0 * z[pad:-pad] + c1 * (z[pad - 1:-pad - 1] + z[pad + 1:-pad + 1])
    if c2 != 0.0:
        out += c2 * (z[pad - 2:-pad - 2] + z[pad + 2:])
    if project:
        out[0] = 0.0
        out[-1] = 0.0
    return np.moveaxis(out, 0, axis)


def _kinetic_banded(n_interior: int, order: int, h: float, mass: float, hbar: float) -> np.ndarray:
    """Upper banded form (for eig_banded) of the interior kinetic matrix."""
    c0, c1, c2 = _kinetic_coeffs(order, h, mass, hbar)
    bands = np.zeros((3 if order == 4 else 2, n_interior))
    bands[-1] = c0
    bands[-2, 1:] = c1
    if order == 4:
        bands[-3, 2:] = c2
    return bands


def _kinetic_sparse(n_interior: int, order: int, h: float, mass: float, hbar: float):
    c0, c1, c2 = _kinetic_coeffs(order, h, mass, hbar)
    diagonals = [np.full(n_interior, c0)]
    offsets = [0]
    diagonals += [np.full(n_interior - 1, c1)] * 2
    offsets += [1, -1]
    if order == 4 and n_interior > 2:
        diagonals += [np.full(n_interior - 2, c2)] * 2
        offsets += [2, -2]
    return sparse.diags(diagonals, offsets, format="csr")


# ---------------------------------------------------------------------------
# the composite Hamiltonian


@dataclass(eq=False)
class Hamiltonian2D:
    """Matrix-free composite Hamiltonian on a Dirichlet box.

    Acts on Field2D values stored as values[iR, ix].  The domain is the
    open box: wall values are projected to zero on application, and
    residual norms run over interior rows only.
    """

    grid: Grid2D
    M: float
    m: float
    hbar: float
    v_table: np.ndarray  # (nR, nx)
    order_r: int = 4
    order_x: int = 4
    # open in R: wall rows kept as-is, for states that travel through the
    # domain instead of standing in a box
    project_r: bool = True

    def __post_init__(self):
        self.v_table = np.asarray(self.v_table, dtype=float)
        if self.v_table.shape != (self.grid.r.n, self.grid.x.n):
            raise GridMismatchError("potential table does not match grid")

    def apply(self, f: Field2D) -> Field2D:
        if f.grid != self.grid:
            raise GridMismatchError("field grid does not match Hamiltonian grid")
        v = f.values
        out = _apply_kinetic(v, 0, self.order_r, self.grid.r.spacing, self.M, self.hbar,
                             project=self.project_r)
        out += _apply_kinetic(v, 1, self.order_x, self.grid.x.spacing, self.m, self.hbar)
        pot = self.v_table * v
        if self.project_r:
            pot[0, :] = 0.0
            pot[-1, :] = 0.0
        pot[:, 0] = 0.0
        pot[:, -1] = 0.0
        out += pot
        return Field2D(self.grid, out)

    def norm_estimate(self) -> float:
        """Gershgorin-style bound on the operator norm."""
        cr = _kinetic_coeffs(self.order_r, self.grid.r.spacing, self.M, self.hbar)
        cx = _kinetic_coeffs(self.order_x, self.grid.x.spacing, self.m, self.hbar)
        return float(sum(abs(c) for c in cr) * 2 + sum(abs(c) for c in cx) * 2
                     + np.max(np.abs(self.v_table)))

    def residual(self, f: Field2D, energy: float) -> float:
        """||(H - E) f|| / ||f|| with the norm over interior rows."""
        hf = self.apply(f).values - energy * f.values
        w = self.grid.weights
        inner = (slice(1, -1), slice(1, -1))
        num = np.sqrt(float(np.sum(w[inner] * np.abs(hf[inner]) ** 2)))
        den = np.sqrt(float(np.sum(w[inner] * np.abs(f.values[inner]) ** 2)))
        if den == 0.0:
            raise DegenerateInputError("zero field in residual")
        return num / den

    def boundary_amplitude(self, f: Field2D) -> float:
        """max wall amplitude relative to the field maximum."""
        v = np.abs(f.values)
        peak = float(v.max())
        if peak == 0.0:
            return 0.0
        edge = max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max())
        return float(edge) / peak

    def to_sparse(self):
        """Interior-point sparse matrix (row-major, x fastest)."""
        if not self.project_r:
            raise DegenerateInputError("sparse form exists only for the Dirichlet box")
        nr, nx = self.grid.r.n - 2, self.grid.x.n - 2
        kr = _kinetic_sparse(nr, self.order_r, self.grid.r.spacing, self.M, self.hbar)
        kx = _kinetic_sparse(nx, self.order_x, self.grid.x.spacing, self.m, self.hbar)
        h = sparse.kron(kr, sparse.identity(nx)) + sparse.kron(sparse.identity(nr), kx)
        h = h + sparse.diags(self.v_table[1:-1, 1:-1].ravel())
        return h.tocsc()


def assemble_tise(spec, grid: Grid2D, order_r: int = 4, order_x: int = 4) -> Hamiltonian2D:
    """Build the composite Hamiltonian for a CompositeSpec on a box grid."""
    r = grid.r.points[:, None]
    x = grid.x.points[None, :]
    v = np.asarray(spec.v_env(r) + spec.v_sys(x) + spec.v_int(x, r), dtype=float)
    v = np.broadcast_to(v, (grid.r.n, grid.x.n)).copy()
    if not np.all(np.isfinite(v)):
        raise DegenerateInputError("potential table contains non-finite values")
    return Hamiltonian2D(grid, spec.M, spec.m, spec.hbar, v, order_r, order_x)


# ---------------------------------------------------------------------------
# eigenpairs


@dataclass(eq=False)
class EigenPair:
    """Converged eigenpair: energy, unit-norm field, interior residual."""

    energy: float
    state: Field2D
    residual: float


def solve_eigenpairs(
    h: Hamiltonian2D,
    e_target: float,
    k: int,
    seed: int = 0,
    residual_tol: float = 1e-8,
) -> list[EigenPair]:
    """The k eigenpairs nearest e_target via shift-invert Lanczos.

    Deterministic for a fixed seed (the Krylov start vector is seeded).
    Raises ConvergenceError if any returned pair misses the residual
    bound residual_tol * |E|.
    """
    if k < 1:
        raise DegenerateInputError("need k >= 1")
    a = h.to_sparse()
    n = a.shape[0]
    if k >= n:
        raise DegenerateInputError(f"k={k} too large for {n} interior points")
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    vals, vecs = eigsh(a, k=k, sigma=e_target, which="LM", v0=v0)
    order = np.argsort(vals)
    pairs = []
    for idx in order:
        full = np.zeros((h.grid.r.n, h.grid.x.n), dtype=complex)
        full[1:-1, 1:-1] = vecs[:, idx].reshape(h.grid.r.n - 2, h.grid.x.n - 2)
        f = Field2D(h.grid, full)
        f = Field2D(h.grid, full / norm(f))
        res = h.residual(f, float(vals[idx]))
        pairs.append(EigenPair(float(vals[idx]), f, res))
    bad = [p for p in pairs if p.residual > residual_tol * max(abs(p.energy), 1e-300)]
    if bad:
        raise ConvergenceError(
            f"{len(bad)} eigenpairs exceed the residual bound",
            trace=[(p.energy, p.residual) for p in pairs],
        )
    return pairs


# ---------------------------------------------------------------------------
# 1D banded eigensolves (system direction)


def _solve_banded_eigen(v_diag: np.ndarray, grid: Grid1D, mass: float, hbar: float,
                        k: int, order: int):
    """Lowest k interior eigenpairs of -hbar^2/2m d^2 + diag(v)."""
    n_int = grid.n - 2
    if k > n_int:
        raise DegenerateInputError(f"k={k} exceeds interior size {n_int}")
    bands = _kinetic_banded(n_int, order, grid.spacing, mass, hbar).copy()
    bands[-1] += v_diag[1:-1]
    vals, vecs = eig_banded(bands, lower=False, select="i", select_range=(0, k - 1))
    return vals, vecs


def _embed_states(grid: Grid1D, vecs: np.ndarray) -> list[Field1D]:
    states = []
    for j in range(vecs.shape[1]):
        full = np.zeros(grid.n, dtype=complex)
        full[1:-1] = vecs[:, j]
        f = Field1D(grid, full)
        f = Field1D(grid, full / norm(f))
        # sign fixed: real positive at the amplitude maximum
        i = int(np.argmax(np.abs(f.values)))
        if f.values[i].real < 0:
            f = Field1D(grid, -f.values)
        states.append(f)
    return states


def solve_system_basis(system, x_grid: Grid1D, k: int, order: int = 2) -> ChannelBasis:
    """Channel basis from the lowest k system eigenstates.

    `order` selects the kinetic stencil and is recorded on the basis so
    propagators and residual evaluators can match it.
    """
    v = np.asarray(system.v_sys(x_grid.points), dtype=float)
    vals, vecs = _solve_banded_eigen(v, x_grid, system.m, system.hbar, k, order)
    states = _embed_states(x_grid, vecs)
    return ChannelBasis(x_grid, states, vals, stencil_order=order)


def solve_bo_states(spec, x_grid: Grid1D, r_value: float, k: int, order: int = 4):
    """Fixed-R system eigenpairs of H_S + V_I(. , R).

    Returns (states, energies); signs follow the real-positive-at-peak
    convention.  Use `bo_surface` for sweeps with smooth continuation.
    """
    v = np.asarray(spec.v_sys(x_grid.points) + spec.v_int(x_grid.points, r_value), dtype=float)
    vals, vecs = _solve_banded_eigen(v, x_grid, spec.m, spec.hbar, k, order)
    return _embed_states(x_grid, vecs), vals


@dataclass(eq=False)
class BOSurface:
    r_values: np.ndarray
    energies: np.ndarray  # (k, nR)
    states: list | None = None


def bo_surface(spec, x_grid: Grid1D, r_values, k: int, order: int = 4,
               keep_states: bool = False) -> BOSurface:
    """Sweep solve_bo_states over R, aligning state signs by overlap."""
    r_values = np.asarray(r_values, dtype=float)
    energies = np.empty((k, r_values.size))
    kept = [] if keep_states else None
    prev = None
    w = x_grid.weights
    for j, r in enumerate(r_values):
        states, vals = solve_bo_states(spec, x_grid, float(r), k, order)
        if prev is not None:
            aligned = []
            for s, p in zip(states, prev):
                ov = np.sum(w * np.conj(p.values) * s.values).real
                aligned.append(Field1D(x_grid, -s.values) if ov < 0 else s)
            states = aligned
        energies[:, j] = vals
        prev = states
        if keep_states:
            kept.append(states)
    return BOSurface(r_values, energies, kept)


# ---------------------------------------------------------------------------
# factorization


@dataclass(eq=False)
class FactorizedState:
    """Composite state written as chi(R) * psi(x, R) on a retained window.

    `window` is the (i0, i1) index range of the full R grid where
    |chi| clears the relative threshold; chi and psi live on that
    window's subgrid.  `u_s` is filled by compute_back_reaction.
    """

    chi: Field1D
    psi: Field2D
    window: tuple
    mode: str
    stencil_orders: tuple = (4, 4)
    u_s: Field1D | None = None


def _window_of(chi_values: np.ndarray, r_points: np.ndarray, threshold: float):
    amp = np.abs(chi_values)
    mask = amp > threshold * float(amp.max())
    if not np.any(mask):
        raise DegenerateInputError("chi is zero everywhere")
    idx = np.flatnonzero(mask)
    i0, i1 = int(idx[0]), int(idx[-1])
    inside = mask[i0:i1 + 1]
    if not np.all(inside):
        bad = r_points[i0:i1 + 1][~inside]
        raise NodeError(
            f"chi falls below threshold at {bad.size} interior points, e.g. R={bad[0]:.6g}",
            locations=bad[:8],
        )
    return i0, i1


def factorize_prescribed(state: Field2D, chi: Field1D,
                         threshold: float = WINDOW_THRESHOLD,
                         stencil_orders: tuple = (4, 4)) -> FactorizedState:
    """Split a composite field as chi * psi with a caller-supplied chi.

    psi = state / chi on the window where |chi| clears the threshold;
    interior dips below the threshold raise NodeError since psi would
    need division by a vanishing chi.
    """
    if chi.grid != state.grid.r:
        raise GridMismatchError("chi grid does not match the R axis of the state")
    i0, i1 = _window_of(chi.values, chi.grid.points, threshold)
    sub = chi.grid.subgrid(i0, i1)
    chi_w = Field1D(sub, chi.values[i0:i1 + 1])
    grid_w = Grid2D(sub, state.grid.x)
    psi = Field2D(grid_w, state.values[i0:i1 + 1, :] / chi_w.values[:, None])
    out = FactorizedState(chi_w, psi, (i0, i1), mode="prescribed", stencil_orders=stencil_orders)
    _check_product(out, state)
    return out


def _check_product(fs: FactorizedState, state: Field2D, tol: float = 1e-12):
    i0, i1 = fs.window
    recon = fs.chi.values[:, None] * fs.psi.values
    target = state.values[i0:i1 + 1, :]
    scale = float(np.max(np.abs(target))) or 1.0
    defect = float(np.max(np.abs(recon - target))) / scale
    if defect > tol:
        raise DegenerateInputError(f"factorization does not reproduce the state: {defect:.3e}")


def compute_back_reaction(fs: FactorizedState, spec) -> Field1D:
    """Back-reaction potential U_S(R) felt by the clock.

    Per R slice the expectation value over x of

        H_S + V_I(., R)
        - (hbar^2/M) (1/chi)(dchi/dR) d/dR
        - (hbar^2/2M) d^2/dR^2

    in psi, normalized by the slice weight (psi|psi).  The derivative
    stencils match the orders recorded on the factorized state; the
    outermost margin slices are clipped accordingly.
    """
    order_r, order_x = fs.stencil_orders
    margin = 2 if order_r == 4 else 1
    nr = fs.psi.grid.r.n
    if nr < 2 * margin + 3:
        raise WindowError(f"window of {nr} slices too narrow for the R stencil")
    h_r = fs.psi.grid.r.spacing
    x = fs.psi.grid.x.points
    r = fs.psi.grid.r.points
    wx = fs.psi.grid.x.weights

    psi = fs.psi.values
    hbar, m, bigm = spec.hbar, spec.m, spec.M

    hs_psi = _apply_kinetic(psi, 1, order_x, fs.psi.grid.x.spacing, m, hbar)
    hs_psi += _potential_slices(spec, x, r) * psi

    dpsi = _interior_derivative(psi, h_r, order_r, 1)
    d2psi = _interior_derivative(psi, h_r, order_r, 2)
    dchi = _interior_derivative(fs.chi.values, h_r, order_r, 1)

    sl = slice(margin, nr - margin)
    log_dchi = dchi[sl] / fs.chi.values[sl]
    bra = np.conj(psi[sl])
    weight = np.sum(wx * np.abs(psi[sl]) ** 2, axis=1)
    if np.any(weight <= 0.0):
        raise DegenerateInputError("psi slice with zero weight inside the window")

    term = (
        np.sum(wx * bra * hs_psi[sl], axis=1)
        - (hbar**2 / bigm) * log_dchi * np.sum(wx * bra * dpsi[sl], axis=1)
        - (hbar**2 / (2.0 * bigm)) * np.sum(wx * bra * d2psi[sl], axis=1)
    )
    sub = fs.psi.grid.r.subgrid(margin, nr - margin - 1)
    return Field1D(sub, term / weight)


def _potential_slices(spec, x: np.ndarray, r: np.ndarray) -> np.ndarray:
    """V_sys(x) + V_I(x, R) sampled as (nR, nx)."""
    v = np.asarray(spec.v_sys(x)[None, :] + spec.v_int(x[None, :], r[:, None]), dtype=float)
    return np.broadcast_to(v, (r.size, x.size))


def _interior_derivative(values: np.ndarray, h: float, order: int, deriv: int) -> np.ndarray:
    """Central derivative along axis 0, valid away from the margin.

    Margin entries are filled with the nearest valid value; callers are
    expected to clip them.
    """
    v = values
    out = np.zeros_like(v)
    if order == 2 or deriv == 0:
        if deriv == 1:
            out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
        else:
            out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
        out[0] = out[1]
        out[-1] = out[-2]
        return out
    if deriv == 1:
        out[2:-2] = (-v[4:] + 8.0 * v[3:-1] - 8.0 * v[1:-3] + v[:-4]) / (12.0 * h)
    else:
        out[2:-2] = (-v[4:] + 16.0 * v[3:-1] - 30.0 * v[2:-2] + 16.0 * v[1:-3] - v[:-4]) / (12.0 * h * h)
    out[0] = out[1] = out[2]
    out[-1] = out[-2] = out[-3]
    return out


def conditional_equation_residual(fs: FactorizedState, spec, u_s: Field1D | None = None) -> float:
    """Residual of the conditional-factor equation over the window.

    || (H_S + V_I - U_S - (hbar^2/2M) d^2/dR^2
        - (hbar^2/M)(1/chi)(dchi/dR) d/dR) psi || / ||psi||

    evaluated with the state's stencil orders, margin slices excluded.
    """
    if u_s is None:
        u_s = compute_back_reaction(fs, spec)
    order_r, order_x = fs.stencil_orders
    margin = 2 if order_r == 4 else 1
    nr = fs.psi.grid.r.n
    if u_s.grid.n != nr - 2 * margin:
        raise GridMismatchError("U_S table does not match the window margin")
    h_r = fs.psi.grid.r.spacing
    x = fs.psi.grid.x.points
    r = fs.psi.grid.r.points
    psi = fs.psi.values
    hbar, m, bigm = spec.hbar, spec.m, spec.M

    hs_psi = _apply_kinetic(psi, 1, order_x, fs.psi.grid.x.spacing, m, hbar)
    hs_psi += _potential_slices(spec, x, r) * psi
    dpsi = _interior_derivative(psi, h_r, order_r, 1)
    d2psi = _interior_derivative(psi, h_r, order_r, 2)
    dchi = _interior_derivative(fs.chi.values, h_r, order_r, 1)

    sl = slice(margin, nr - margin)
    log_dchi = (dchi[sl] / fs.chi.values[sl])[:, None]
    lhs = (
        hs_psi[sl]
        - u_s.values[:, None] * psi[sl]
        - (hbar**2 / (2.0 * bigm)) * d2psi[sl]
        - (hbar**2 / bigm) * log_dchi * dpsi[sl]
    )
    # drop wall columns: psi inherits the Dirichlet walls of the state
    wx = fs.psi.grid.x.weights[1:-1]
    wr = fs.psi.grid.r.weights[sl]
    w = np.outer(wr, wx)
    num = np.sqrt(float(np.sum(w * np.abs(lhs[:, 1:-1]) ** 2)))
    den = np.sqrt(float(np.sum(w * np.abs(psi[sl][:, 1:-1]) ** 2)))
    return num / den


@dataclass(frozen=True)
class IterationTrace:
    """Per-iteration chi change and clock eigenvalue of the fixed point."""

    steps: tuple
    energies: tuple


def factorize_selfconsistent(
    pair: EigenPair,
    spec,
    max_iter: int = 60,
    tol: float = 1e-7,
    threshold: float = WINDOW_THRESHOLD,
    stencil_orders: tuple = (4, 4),
) -> tuple[FactorizedState, IterationTrace]:
    """Gauge-fixed factorization found by fixed-point iteration.

    Seeds chi with the marginal amplitude sqrt(int |Psi|^2 dx), then
    alternates psi = Psi/chi, U_S from compute_back_reaction, and a 1D
    clock eigensolve of -hbar^2/2M d^2/dR^2 + V_env + U_S, keeping the
    eigenvector with maximal overlap with the previous chi.  The gauge
    is chi real and positive at its maximum with unit norm.
    """
    state = pair.state
    wx = state.grid.x.weights
    marginal = np.sqrt(np.sum(wx * np.abs(state.values) ** 2, axis=1))
    r_grid = state.grid.r
    chi = Field1D(r_grid, marginal)
    chi = Field1D(r_grid, chi.values / norm(chi))

    order_r, _ = stencil_orders
    margin = 2 if order_r == 4 else 1
    v_env = np.asarray(spec.v_env(r_grid.points), dtype=float)

    steps = []
    energies = []
    for _ in range(max_iter):
        fs = factorize_prescribed(state, chi, threshold, stencil_orders)
        u_s = compute_back_reaction(fs, spec)
        if float(np.max(np.abs(u_s.values.imag))) > 1e-6 * max(1.0, float(np.max(np.abs(u_s.values.real)))):
            raise ConvergenceError("back-reaction picked up a large imaginary part",
                                   trace=IterationTrace(tuple(steps), tuple(energies)))
        # pad U_S onto the full grid: edge values continue outside the window
        i0, i1 = fs.window
        u_full = np.empty(r_grid.n)
        u_full[i0 + margin:i1 + 1 - margin] = u_s.values.real
        u_full[: i0 + margin] = u_s.values.real[0]
        u_full[i1 + 1 - margin:] = u_s.values.real[-1]

        k_cand = min(10, r_grid.n - 2)
        vals, vecs = _solve_banded_eigen(v_env + u_full, r_grid, spec.M, spec.hbar,
                                         k_cand, order_r)
        cands = _embed_states(r_grid, vecs)
        w_r = r_grid.weights
        overlaps = [abs(np.sum(w_r * np.conj(c.values) * chi.values)) for c in cands]
        best = int(np.argmax(overlaps))
        new_chi = cands[best]
        # gauge: real positive at the peak, unit norm (already normalized)
        peak = int(np.argmax(np.abs(new_chi.values)))
        phase = new_chi.values[peak] / abs(new_chi.values[peak])
        new_chi = Field1D(r_grid, new_chi.values / phase)

        step = float(np.sqrt(np.sum(w_r * np.abs(new_chi.values - chi.values) ** 2)))
        steps.append(step)
        energies.append(float(vals[best]))
        chi = new_chi
        if step < tol:
            fs = factorize_prescribed(state, chi, threshold, stencil_orders)
            fs = replace(fs, mode="selfconsistent", u_s=compute_back_reaction(fs, spec))
            return fs, IterationTrace(tuple(steps), tuple(energies))

    raise ConvergenceError(
        f"factorization did not converge in {max_iter} iterations (last step {steps[-1]:.3e})",
        trace=IterationTrace(tuple(steps), tuple(energies)),
    )


# ---------------------------------------------------------------------------
# channels


@dataclass(eq=False)
class ChannelDecomposition:
    """R-dependent channel amplitudes kappa_n(R) of a composite state."""

    basis: ChannelBasis
    r_grid: Grid1D
    kappas: np.ndarray  # (k, nR)
    defect: float


def project_channels(state: Field2D, basis: ChannelBasis) -> ChannelDecomposition:
    """kappa_n(R) = <phi_n | Psi(., R)> with the completeness defect.

    The defect 1 - sum ||kappa_n||^2 / ||Psi||^2 is nonnegative up to
    rounding (Parseval on an orthonormal, possibly incomplete basis).
    """
    if basis.x_grid != state.grid.x:
        raise GridMismatchError("basis grid does not match the state's x axis")
    wx = basis.x_grid.weights
    mat = basis.state_matrix()  # (k, nx)
    kappas = (np.conj(mat) * wx) @ state.values.T  # (k, nR)
    wr = state.grid.r.weights
    total = float(np.sum(state.grid.weights * np.abs(state.values) ** 2))
    if total == 0.0:
        raise DegenerateInputError("zero state")
    captured = float(np.sum(wr * np.sum(np.abs(kappas) ** 2, axis=0)))
    return ChannelDecomposition(basis, state.grid.r, kappas, 1.0 - captured / total)


def _coupling_matrices(spec, basis: ChannelBasis, r_points: np.ndarray) -> np.ndarray:
    """<phi_m | V_I(., R) | phi_n> as (nR, k, k)."""
    wx = basis.x_grid.weights
    mat = basis.state_matrix()
    x = basis.x_grid.points
    fac = spec.v_int.factorized()
    if fac is not None:
        g, hx = fac
        hmat = (np.conj(mat) * (wx * hx(x))) @ mat.T  # (k, k)
        return np.asarray(g(r_points), dtype=float)[:, None, None] * hmat[None, :, :]
    out = np.empty((r_points.size, len(basis), len(basis)), dtype=complex)
    for j, r in enumerate(r_points):
        vx = np.asarray(spec.v_int(x, float(r)), dtype=float)
        out[j] = (np.conj(mat) * (wx * vx)) @ mat.T
    return out


@dataclass(frozen=True)
class CloseCoupledReport:
    residuals: np.ndarray  # per channel
    hermiticity_defect: float
    energy: float


def close_coupled_residuals(decomp: ChannelDecomposition, spec, energy: float,
                            order_r: int = 4) -> CloseCoupledReport:
    """Residual of the coupled radial equations for each channel.

    || [-hbar^2/2M d^2/dR^2 + V_env - E] kappa_m
       + sum_n V_eff_mn(R) kappa_n ||  per channel m,

    with V_eff_mn(R) = <phi_m| H_S + V_I(., R) |phi_n> built from the
    basis' own stencil order, and the R stencil matching `order_r`.
    The report carries the worst-case Hermiticity defect of V_eff.
    """
    basis = decomp.basis
    r = decomp.r_grid.points
    k = len(basis)
    couplings = _coupling_matrices(spec, basis, r)

    # system part of V_eff: <phi_m | H_S phi_n> with the basis stencil
    wx = basis.x_grid.weights
    mat = basis.state_matrix()
    hs = np.empty_like(mat)
    for i, s in enumerate(basis.states):
        t = _apply_kinetic(s.values, 0, basis.stencil_order, basis.x_grid.spacing,
                           spec.m, spec.hbar)
        hs[i] = t + np.asarray(spec.v_sys(basis.x_grid.points), dtype=float) * s.values
    hmat = (np.conj(mat) * wx) @ hs.T  # (k, k)
    veff = couplings + hmat[None, :, :]

    herm = float(np.max(np.abs(veff - np.conj(np.swapaxes(veff, 1, 2)))))
    scale = float(np.max(np.abs(veff))) or 1.0

    margin = 2 if order_r == 4 else 1
    h_r = decomp.r_grid.spacing
    v_env = np.asarray(spec.v_env(r), dtype=float)
    wr = decomp.r_grid.weights
    sl = slice(margin, decomp.r_grid.n - margin)
    residuals = np.empty(k)
    coupled = np.einsum("rmn,nr->mr", veff, decomp.kappas)
    for m_idx in range(k):
        kap = decomp.kappas[m_idx]
        kin = _apply_kinetic(kap, 0, order_r, h_r, spec.M, spec.hbar)
        lhs = kin + (v_env - energy) * kap + coupled[m_idx]
        residuals[m_idx] = np.sqrt(float(np.sum(wr[sl] * np.abs(lhs[sl]) ** 2)))
    return CloseCoupledReport(residuals, herm / scale, energy)


# ---------------------------------------------------------------------------
# entanglement


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Nonincreasing Schmidt coefficients with purity sum sigma^4."""

    values: np.ndarray
    purity: float
    norm_sq: float


def schmidt_spectrum(state: Field2D) -> SchmidtSpectrum:
    """Schmidt coefficients of Psi(x, R) under the quadrature weighting."""
    wr = np.sqrt(state.grid.r.weights)
    wx = np.sqrt(state.grid.x.weights)
    mat = wr[:, None] * state.values * wx[None, :]
    sig = np.linalg.svd(mat, compute_uv=False)
    total = float(np.sum(sig**2))
    if total == 0.0:
        raise DegenerateInputError("zero state")
    return SchmidtSpectrum(sig, float(np.sum(sig**4) / total**2), total)


# ---------------------------------------------------------------------------
# directed channel states


def _discrete_wavenumber(energy_kin: float, h: float, mass: float, hbar: float) -> float:
    """Wavenumber of the order-2 lattice plane wave at kinetic energy e."""
    c = 1.0 - mass * h * h * energy_kin / (hbar * hbar)
    if not -1.0 < c < 1.0:
        raise TurningPointError(
            f"no open lattice mode at kinetic energy {energy_kin:.6g} with spacing {h:.3g}"
        )
    return float(np.arccos(c) / h)


def solve_directed_state(
    spec,
    basis: ChannelBasis,
    r_grid: Grid1D,
    energy: float,
    incoming: int = 0,
    residual_tol: float = 1e-6,
    stride: int = 1,
) -> EigenPair:
    """Directed solution of the composite TISE at fixed total energy.

    Box eigenstates are standing waves in R; a clock that actually runs
    forward needs a directed state.  This integrates the discrete
    close-coupled recurrence in R from the low edge, seeded with the
    exact lattice plane wave of the incoming channel, so the result
    satisfies the interior stencil equations of the order-(2 in R,
    basis order in x) Hamiltonian to rounding plus channel truncation.

    The residual is evaluated in row blocks on the full grid (the 2D
    field is never materialized whole), then the returned field keeps
    every stride-th R row; (n - 1) must be divisible by stride.

    Preconditions: V_env and the channel coupling must be flat near the
    entry edge (the seed assumes a free incoming wave), and every basis
    channel must be open at this energy.
    """
    r = r_grid.points
    h = r_grid.spacing
    k = len(basis)
    if not 0 <= incoming < k:
        raise DegenerateInputError(f"incoming channel {incoming} outside basis of {k}")
    if stride < 1 or (r_grid.n - 1) % stride:
        raise DegenerateInputError(f"stride {stride} does not divide the grid ({r_grid.n} points)")
    v_env = np.asarray(spec.v_env(r), dtype=float)
    eps = basis.energies
    for n, e_n in enumerate(eps):
        if energy - e_n - v_env[0] <= 0:
            raise TurningPointError(f"channel {n} closed at the entry edge (E - eps - V <= 0)")

    kin0 = energy - eps[incoming] - v_env[0]
    k_in = _discrete_wavenumber(kin0, h, spec.M, spec.hbar)

    # coupling matrices: product-form couplings avoid an (nR, k, k) table
    fac = spec.v_int.factorized()
    if fac is None:
        couplings = _coupling_matrices(spec, basis, r)
        g_of_r = hmat = None
    else:
        g, hx = fac
        wx = basis.x_grid.weights
        mat = basis.state_matrix()
        hmat = (np.conj(mat) * (wx * hx(basis.x_grid.points))) @ mat.T
        g_of_r = np.asarray(g(r), dtype=float)
        couplings = None

    kappas = np.zeros((r_grid.n, k), dtype=complex)
    kappas[0, incoming] = np.exp(1j * k_in * r[0])
    kappas[1, incoming] = np.exp(1j * k_in * r[1])
    pref = 2.0 * spec.M * h * h / (spec.hbar * spec.hbar)
    eps_diag = np.diag(eps)
    for j in range(1, r_grid.n - 1):
        w = eps_diag + (couplings[j] if couplings is not None else g_of_r[j] * hmat)
        rhs = (v_env[j] - energy) * kappas[j] + w @ kappas[j]
        kappas[j + 1] = 2.0 * kappas[j] - kappas[j - 1] + pref * rhs

    res = _directed_residual(spec, basis, r_grid, energy, kappas)
    if res > residual_tol * max(abs(energy), 1e-300):
        raise ConvergenceError(
            f"directed state residual {res:.3e} exceeds {residual_tol:.1e} * |E|",
            trace={"residual": res, "energy": energy},
        )

    # quadrature norm from the channel amplitudes (basis is orthonormal)
    total = float(np.sqrt(np.sum(r_grid.weights * np.sum(np.abs(kappas) ** 2, axis=1))))
    if total == 0.0:
        raise DegenerateInputError("directed state vanished")
    sub = r_grid if stride == 1 else Grid1D(r_grid.lo, r_grid.hi, (r_grid.n - 1) // stride + 1)
    values = (kappas[::stride] @ basis.state_matrix()) / total
    return EigenPair(energy, Field2D(Grid2D(sub, basis.x_grid), values), res)


def _directed_residual(spec, basis: ChannelBasis, r_grid: Grid1D, energy: float,
                       kappas: np.ndarray, block: int = 2048) -> float:
    """Interior residual of the channel-sum field, evaluated in row blocks.

    Matches Hamiltonian2D(order_r=2, order_x=basis order, project_r=False)
    applied to the assembled field, restricted to interior rows and
    columns, without ever holding the full field in memory.
    """
    mat = basis.state_matrix()
    x = basis.x_grid.points
    v_sys_x = np.asarray(spec.v_sys(x), dtype=float)
    c0, c1, _ = _kinetic_coeffs(2, r_grid.spacing, spec.M, spec.hbar)
    wr = r_grid.weights
    wx = basis.x_grid.weights
    num2 = 0.0
    den2 = 0.0
    n = r_grid.n
    for a in range(1, n - 1, block):
        b = min(a + block, n - 1)
        psi = kappas[a - 1:b + 1] @ mat  # one halo row each side
        mid = psi[1:-1]
        lhs = c0 * mid + c1 * (psi[:-2] + psi[2:])
        lhs += _apply_kinetic(mid, 1, basis.stencil_order, basis.x_grid.spacing,
                              spec.m, spec.hbar)
        rows = r_grid.points[a:b]
        v = v_sys_x[None, :] + np.asarray(spec.v_env(rows), dtype=float)[:, None] \
            + np.asarray(spec.v_int(x[None, :], rows[:, None]), dtype=float)
        lhs += (v - energy) * mid
        w = np.outer(wr[a:b], wx[1:-1])
        num2 += float(np.sum(w * np.abs(lhs[:, 1:-1]) ** 2))
        den2 += float(np.sum(w * np.abs(mid[:, 1:-1]) ** 2))
    if den2 == 0.0:
        raise DegenerateInputError("directed state has no interior weight")
    return float(np.sqrt(num2 / den2))
