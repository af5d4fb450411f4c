"""Builtin experiment scenarios.

Each scenario is a named, schema-validated pipeline that turns a
parameter dictionary into plot-ready tables (column names + rows).
Complex quantities are split into re_/im_ columns at table-building
time so every cell is a plain number or string.  The registry is fixed;
new pipelines are composed in configs, not plugged in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .classical import (
    ClockModel,
    CouplingDrive,
    PathProblem,
    clock_time_map,
    compare_composite_reduced,
    constraint_residuals,
    endpoint_momentum_check,
    minimize_action_path,
    path_action,
    path_momenta,
)
from .core import (
    Bilinear,
    CompositeSpec,
    Constant,
    Field1D,
    Grid1D,
    Harmonic,
    Linear,
    SystemSpec,
    WindowedPulse,
)
from .errors import ConfigError
from .semiclassical import perfect_clock, quantum_time
from .stationary import solve_directed_state, solve_system_basis

__all__ = ["Table", "Scenario", "SCENARIOS", "get_scenario", "config_schema"]


@dataclass(frozen=True)
class Table:
    """One output table: a header and rows of plain cells."""

    columns: tuple
    rows: tuple


def _table(columns, rows) -> Table:
    return Table(tuple(columns), tuple(tuple(r) for r in rows))


# ---------------------------------------------------------------------------
# runners


def _run_perfect_clock(p: dict, seed: int, jobs: int) -> dict:
    r_grid = Grid1D(p["r_min"], p["r_max"], p["points"])
    clock = perfect_clock(p["clock_mass"], p["momentum"], r_grid, p["hbar"])
    tau = quantum_time(clock.chi(), clock.M, p["hbar"])
    exact = clock.time_map().times
    err = np.abs(tau.values - exact)
    rows = [
        (r, t.real, t.imag, e, d)
        for r, t, e, d in zip(r_grid.points, tau.values, exact, err)
    ]
    rel = err[1:] / np.abs(exact[1:]) if r_grid.n > 1 else np.zeros(1)
    summary = [(float(np.max(err)), float(np.max(rel)), float(tau.max_imag_fraction))]
    return {
        "perfect_clock": _table(("r", "re_tau", "im_tau", "exact_t", "abs_error"), rows),
        "summary": _table(("max_abs_error", "max_rel_error", "max_imag_fraction"), summary),
    }


def _run_two_level(p: dict, seed: int, jobs: int) -> dict:
    x_grid = Grid1D(-p["x_half"], p["x_half"], p["x_points"])
    system = SystemSpec(p["system_mass"], p["hbar"], Harmonic(p["system_stiffness"]))
    basis = solve_system_basis(system, x_grid, 2, order=2)

    r_grid = Grid1D(-p["clock_half_range"], p["clock_half_range"], p["clock_points"])
    clock = ClockModel(Harmonic(p["env_stiffness"]), p["clock_mass"],
                       p["clock_energy"], r_grid)
    tmap = clock_time_map(clock)
    t_end = tmap.span[0] + p["duration_fraction"] * (tmap.span[1] - tmap.span[0])
    t = np.linspace(tmap.span[0], t_end, p["time_steps"] + 1)
    # smooth pulse in R: a sudden drive would leak population into the
    # third level and spoil the two-channel truncation
    pulse = WindowedPulse(p["pulse_amplitude"], p["pulse_center"],
                          p["pulse_width"], Linear(1.0))
    drive = CouplingDrive(pulse, tmap)

    psi0 = Field1D(x_grid, basis.states[0].values)
    rep = dynamics.compare_amplitudes_to_grid(system, basis, drive, psi0, t)

    stride = max(1, p["output_stride"])
    rows = []
    for i in range(0, t.size, stride):
        a = rep.ode.amplitudes[i]
        g = rep.projected[i]
        rows.append((
            t[i],
            a[0].real, a[0].imag, a[1].real, a[1].imag,
            float(np.abs(a[0]) ** 2), float(np.abs(a[1]) ** 2),
            float(np.abs(g[0]) ** 2), float(np.abs(g[1]) ** 2),
            float(np.max(np.abs(a - g))),
        ))
    summary = [(rep.max_deviation, rep.basis_defect, rep.ode.population_drift)]
    return {
        "two_level": _table(
            ("t", "re_a0", "im_a0", "re_a1", "im_a1",
             "pop0_ode", "pop1_ode", "pop0_grid", "pop1_grid", "deviation"),
            rows),
        "summary": _table(("max_deviation", "basis_defect", "population_drift"), summary),
    }


def _run_beam_on_atom(p: dict, seed: int, jobs: int) -> dict:
    M, hbar = p["clock_mass"], p["hbar"]
    x_grid = Grid1D(-p["x_half"], p["x_half"], p["x_points"])
    system = SystemSpec(p["system_mass"], hbar, Harmonic(p["system_stiffness"]))
    basis = solve_system_basis(system, x_grid, p["channels"], order=2)
    eps0 = float(basis.energies[p["incoming"]])

    e_kin = p["kinetic_energy"]
    v = float(np.sqrt(2.0 * e_kin / M))
    span = v * p["duration"]
    e_total = e_kin + eps0
    k_max = float(np.sqrt(2.0 * M * e_total)) / hbar
    n_min = int(np.ceil(span * k_max / p["max_phase_per_step"]))
    stride = max(1, -(-n_min // (p["slices"] - 1)))
    r_grid = Grid1D(0.0, span, stride * (p["slices"] - 1) + 1)

    coupling = WindowedPulse(
        p["pulse_amplitude"],
        p["pulse_center_fraction"] * span,
        p["pulse_width_fraction"] * p["duration"] * v,
        Linear(1.0),
    )
    spec = CompositeSpec(M, p["system_mass"], hbar, Constant(0.0),
                         Harmonic(p["system_stiffness"]), coupling,
                         energy=e_total, clock_energy=e_total)
    pair = solve_directed_state(spec, basis, r_grid, e_total, p["incoming"],
                                p["residual_tol"], stride=stride)

    r_sub = pair.state.grid.r
    clock = ClockModel(Constant(0.0), M, e_total, r_sub)
    tmap = clock_time_map(clock)

    # per-slice channel amplitudes of the retained state
    mat = basis.state_matrix()
    wx = x_grid.weights
    amps = (np.conj(mat) * wx) @ pair.state.values.T  # (k, n_slices)
    pops = np.abs(amps.T) ** 2
    pops /= pops[0].sum()  # entry slice defines the unit of population

    out_stride = max(1, p["output_stride"])
    idx = range(0, r_sub.n, out_stride)
    pop_cols = [f"pop_{n}" for n in range(len(basis))]
    rows = [
        (r_sub.points[i], tmap.times[i], *pops[i]) for i in idx
    ]
    summary = [(pair.residual, float(e_total), p["incoming"],
                *pops[0], *pops[-1])]
    sum_cols = (["residual", "energy", "incoming"]
                + [f"entry_{c}" for c in pop_cols] + [f"exit_{c}" for c in pop_cols])
    return {
        "channel_populations": _table(["r", "t"] + pop_cols, rows),
        "summary": _table(sum_cols, summary),
    }


def _run_classical_emergence(p: dict, seed: int, jobs: int) -> dict:
    spec = CompositeSpec(
        p["clock_mass"], p["system_mass"], 1.0,
        Constant(0.0), Harmonic(p["system_stiffness"]),
        Bilinear(p["coupling"]),
        energy=max(p["energies"]), clock_energy=max(p["energies"]),
    )
    report = compare_composite_reduced(
        spec, p["energies"], p["x0"], p["px0"], p["t_span"],
        steps=p["steps"], clock_energy_offset=p["clock_energy_offset"],
    )
    rows = [
        (r.scan_value, r.mv2, r.deviation, r.neglected_mean,
         r.retained_mean, r.ratio_measured, r.ratio_estimate)
        for r in report.rows
    ]
    return {
        "classical_emergence": _table(
            ("scan_value", "mv2", "deviation", "neglected_mean",
             "retained_mean", "ratio_measured", "ratio_estimate"),
            rows),
        "summary": _table(("slope", "points"), [(report.slope, len(report.rows))]),
    }


def _run_jacobi_paths(p: dict, seed: int, jobs: int) -> dict:
    masses = np.asarray(p["masses"], dtype=float)
    q_start = np.asarray(p["q_start"], dtype=float)
    q_end = np.asarray(p["q_end"], dtype=float)
    if p["well"] == "none":
        potential = lambda q: np.zeros(np.asarray(q).shape[:-1])
        gradient = lambda q: np.zeros_like(np.asarray(q, dtype=float))
    else:
        k = p["stiffness"]
        center = np.asarray(p["center"], dtype=float)
        potential = lambda q: 0.5 * k * np.sum((np.asarray(q) - center) ** 2, axis=-1)
        gradient = lambda q: k * (np.asarray(q, dtype=float) - center)
    problem = PathProblem(potential, gradient, masses, p["energy"])

    path = minimize_action_path(problem, q_start, q_end, p["segments"])
    action = path_action(path)
    momenta = path_momenta(path)
    residuals = constraint_residuals(path)
    endpoint = endpoint_momentum_check(problem, q_start, q_end, p["segments"])

    seg = np.linalg.norm(np.diff(path.nodes, axis=0), axis=1)
    s = np.concatenate(([0.0], np.cumsum(seg)))
    rows = [(i, s[i], *path.nodes[i]) for i in range(path.nodes.shape[0])]
    coord_cols = [f"q{j + 1}" for j in range(path.nodes.shape[1])]

    summary = [(
        action,
        path.segments,
        float(np.max(np.abs(residuals))),
        endpoint.probe_error_end,
        endpoint.probe_error_start,
        endpoint.max_diff_end,
        endpoint.max_diff_start,
        *momenta[-1],
    )]
    sum_cols = (["action", "segments", "max_constraint_residual",
                 "probe_error_end", "probe_error_start",
                 "momentum_gap_end", "momentum_gap_start"]
                + [f"p_end_{c}" for c in coord_cols])
    return {
        "path": _table(["node", "s"] + coord_cols, rows),
        "summary": _table(sum_cols, summary),
    }


def _run_emergence_scan(p: dict, seed: int, jobs: int) -> dict:
    cfg = dynamics.EmergenceScanConfig(
        clock_mass=p["clock_mass"],
        system_mass=p["system_mass"],
        hbar=p["hbar"],
        system_stiffness=p["system_stiffness"],
        pulse_amplitude=p["pulse_amplitude"],
        duration=p["duration"],
        pulse_center_fraction=p["pulse_center_fraction"],
        pulse_width_fraction=p["pulse_width_fraction"],
        kinetic_energies=tuple(p["kinetic_energies"]),
        channels=p["channels"],
        x_halfwidth=p["x_half"],
        x_points=p["x_points"],
        max_phase_per_step=p["max_phase_per_step"],
        slices=p["slices"],
        incoming=p["incoming"],
        residual_tol=p["residual_tol"],
    )
    report = dynamics.emergence_scan(cfg, jobs=jobs)
    rows = [
        (r.scan_value, r.mv2, r.residual, r.rho, report.slope)
        for r in report.rows
    ]
    details = [
        (r.scan_value, r.v_mean, r.norm_spread, r.error if r.error else "")
        for r in report.rows
    ]
    return {
        "emergence_scan": _table(
            ("scan_value", "mv2", "residual", "rho", "slope_fit"), rows),
        "scan_details": _table(
            ("scan_value", "v_mean", "norm_spread", "error"), details),
    }


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    defaults: dict
    properties: dict  # jsonschema for the parameter block
    runner: object

    def run(self, params: dict, seed: int = 0, jobs: int = 1) -> dict:
        return self.runner(params, seed, jobs)


_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_NUM = {"type": "number"}
_INT2 = {"type": "integer", "minimum": 2}
_FRACTION = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}

SCENARIOS: dict = {}


def _register(name, description, defaults, properties, runner):
    SCENARIOS[name] = Scenario(name, description, defaults, properties, runner)


_register(
    "perfect-clock",
    "Free plane-wave clock: complex quantum time against the exact linear map.",
    {
        "clock_mass": 50.0, "momentum": 2.0, "hbar": 1.0,
        "r_min": 0.0, "r_max": 4.0, "points": 4001,
    },
    {
        "clock_mass": _POS, "momentum": _POS, "hbar": _POS,
        "r_min": _NUM, "r_max": _NUM, "points": _INT2,
    },
    _run_perfect_clock,
)

_register(
    "harmonic-clock-two-level",
    "Two harmonic channels driven through a harmonic clock: amplitude ODEs vs grid propagation.",
    {
        "clock_mass": 80.0, "env_stiffness": 1.0, "clock_energy": 10.0,
        "clock_half_range": 3.5, "clock_points": 2001,
        "system_mass": 1.0, "system_stiffness": 4.0, "hbar": 1.0,
        "pulse_amplitude": 0.2, "pulse_center": 0.0, "pulse_width": 0.8,
        "x_half": 8.0, "x_points": 321,
        "time_steps": 8000, "duration_fraction": 0.9, "output_stride": 10,
    },
    {
        "clock_mass": _POS, "env_stiffness": _POS, "clock_energy": _POS,
        "clock_half_range": _POS, "clock_points": _INT2,
        "system_mass": _POS, "system_stiffness": _POS, "hbar": _POS,
        "pulse_amplitude": _NUM, "pulse_center": _NUM, "pulse_width": _POS,
        "x_half": _POS, "x_points": _INT2,
        "time_steps": _INT2, "duration_fraction": _FRACTION,
        "output_stride": {"type": "integer", "minimum": 1},
    },
    _run_two_level,
)

_register(
    "beam-on-atom",
    "Directed beam crossing a coupling pulse on a harmonic system: channel populations along the beam.",
    {
        "clock_mass": 200.0, "kinetic_energy": 50.0, "hbar": 1.0,
        "system_mass": 1.0, "system_stiffness": 4.0,
        "pulse_amplitude": 0.3, "duration": 2.0,
        "pulse_center_fraction": 0.4, "pulse_width_fraction": 1.0 / 12.0,
        "channels": 6, "x_half": 8.0, "x_points": 161,
        "max_phase_per_step": 0.02, "slices": 4001, "incoming": 0,
        "residual_tol": 1e-6, "output_stride": 10,
    },
    {
        "clock_mass": _POS, "kinetic_energy": _POS, "hbar": _POS,
        "system_mass": _POS, "system_stiffness": _POS,
        "pulse_amplitude": _NUM, "duration": _POS,
        "pulse_center_fraction": _FRACTION, "pulse_width_fraction": _FRACTION,
        "channels": _INT2, "x_half": _POS, "x_points": _INT2,
        "max_phase_per_step": _POS, "slices": _INT2,
        "incoming": {"type": "integer", "minimum": 0},
        "residual_tol": _POS,
        "output_stride": {"type": "integer", "minimum": 1},
    },
    _run_beam_on_atom,
)

_register(
    "classical-emergence",
    "Composite vs clock-driven reduced trajectories across a clock-energy scan.",
    {
        "clock_mass": 100.0, "system_mass": 1.0, "system_stiffness": 4.0,
        "coupling": 0.02, "x0": 0.5, "px0": 0.0,
        "energies": [20.0, 60.0, 200.0, 600.0, 2000.0],
        "t_span": 4.0, "steps": 12000, "clock_energy_offset": "none",
    },
    {
        "clock_mass": _POS, "system_mass": _POS, "system_stiffness": _POS,
        "coupling": _NUM, "x0": _NUM, "px0": _NUM,
        "energies": {"type": "array", "items": _POS, "minItems": 1},
        "t_span": _POS, "steps": _INT2,
        "clock_energy_offset": {
            "anyOf": [{"enum": ["system", "none"]}, {"type": "number"}]
        },
    },
    _run_classical_emergence,
)

_register(
    "jacobi-paths",
    "Fixed-energy variational paths: geodesics, momenta, endpoint gradients.",
    {
        "masses": [1.0, 1.0], "energy": 2.0,
        "q_start": [0.0, 0.0], "q_end": [1.0, 0.6],
        "segments": 48, "well": "harmonic", "stiffness": 1.0,
        "center": [0.6, 0.2],
    },
    {
        "masses": {"type": "array", "items": _POS, "minItems": 1},
        "energy": _POS,
        "q_start": {"type": "array", "items": _NUM, "minItems": 1},
        "q_end": {"type": "array", "items": _NUM, "minItems": 1},
        "segments": _INT2,
        "well": {"enum": ["none", "harmonic"]},
        "stiffness": _POS,
        "center": {"type": "array", "items": _NUM, "minItems": 1},
    },
    _run_jacobi_paths,
)

_register(
    "emergence-scan",
    "Clock-energy scan of the conditional TDSE residual and correction ratio.",
    {
        "clock_mass": 200.0, "system_mass": 1.0, "hbar": 1.0,
        "system_stiffness": 4.0, "pulse_amplitude": 0.3, "duration": 2.0,
        "pulse_center_fraction": 0.4, "pulse_width_fraction": 1.0 / 12.0,
        "kinetic_energies": [15.0, 50.0, 150.0, 500.0],
        "channels": 6, "x_half": 8.0, "x_points": 161,
        "max_phase_per_step": 0.01, "slices": 4001, "incoming": 0,
        "residual_tol": 1e-6,
    },
    {
        "clock_mass": _POS, "system_mass": _POS, "hbar": _POS,
        "system_stiffness": _POS, "pulse_amplitude": _NUM, "duration": _POS,
        "pulse_center_fraction": _FRACTION, "pulse_width_fraction": _FRACTION,
        "kinetic_energies": {"type": "array", "items": _POS, "minItems": 3},
        "channels": _INT2, "x_half": _POS, "x_points": _INT2,
        "max_phase_per_step": _POS, "slices": _INT2,
        "incoming": {"type": "integer", "minimum": 0},
        "residual_tol": _POS,
    },
    _run_emergence_scan,
)


def get_scenario(name: str) -> Scenario:
    if name not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        raise ConfigError(f"unknown scenario {name!r} (known: {known})", path="/scenario")
    return SCENARIOS[name]


def config_schema(name: str) -> dict:
    """Full jsonschema for one scenario's run config."""
    sc = get_scenario(name)
    return {
        "type": "object",
        "properties": {
            "scenario": {"const": name},
            "seed": {"type": "integer", "minimum": 0},
            "out": {"type": "string"},
            "parameters": {
                "type": "object",
                "properties": sc.properties,
                "additionalProperties": False,
            },
        },
        "required": ["scenario"],
        "additionalProperties": False,
    }


def default_config(name: str) -> dict:
    sc = get_scenario(name)
    return {"scenario": name, "seed": 0, "parameters": dict(sc.defaults)}
