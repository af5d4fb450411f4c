"""Grids, fields, potentials and the shared numerical primitives.

Everything downstream works on uniform 1D grids and on 2D fields stored
row-major with the system coordinate x varying fastest: ``values[iR, ix]``.
Integrals are trapezoid sums; sampled-data derivatives use second-order
stencils (central in the interior, one-sided at the edges).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    DegenerateInputError,
    DomainError,
    GridMismatchError,
)

__all__ = [
    "Grid1D",
    "Grid2D",
    "Field1D",
    "Field2D",
    "Potential",
    "Harmonic",
    "Linear",
    "Constant",
    "GaussianWell",
    "Tabulated",
    "Coupling",
    "Bilinear",
    "SeparableCoupling",
    "WindowedPulse",
    "ZeroCoupling",
    "SystemSpec",
    "CompositeSpec",
    "ChannelBasis",
    "eval_potential",
    "inner_product",
    "norm",
    "normalize",
    "first_derivative",
    "second_derivative",
]


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid with `n` points on [lo, hi]."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.hi > self.lo:
            raise DegenerateInputError(f"grid needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.n < 3:
            raise DegenerateInputError(f"grid needs at least 3 points, got {self.n}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @cached_property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights."""
        w = np.full(self.n, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def subgrid(self, i0: int, i1: int) -> "Grid1D":
        """Grid restricted to index range [i0, i1] inclusive."""
        if not (0 <= i0 < i1 <= self.n - 1):
            raise DegenerateInputError(f"bad subgrid range [{i0}, {i1}] for n={self.n}")
        p = self.points
        return Grid1D(float(p[i0]), float(p[i1]), i1 - i0 + 1)


@dataclass(frozen=True)
class Grid2D:
    """Product grid; fields on it are stored as values[iR, ix]."""

    r: Grid1D
    x: Grid1D

    @cached_property
    def weights(self) -> np.ndarray:
        return np.outer(self.r.weights, self.x.weights)


# ---------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class Field1D:
    """Complex samples over a Grid1D."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n,):
            raise GridMismatchError(f"field shape {v.shape} does not match grid n={self.grid.n}")
        self.values = v


@dataclass(eq=False)
class Field2D:
    """Complex samples over a Grid2D, x fastest: values[iR, ix]."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.r.n, self.grid.x.n):
            raise GridMismatchError(
                f"field shape {v.shape} does not match grid ({self.grid.r.n}, {self.grid.x.n})"
            )
        self.values = v


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def inner_product(a, b) -> complex:
    """Trapezoid inner product <a|b> = integral of conj(a) * b.

    Works for Field1D and Field2D; both arguments must share a grid.
    """
    _same_grid(a, b)
    if isinstance(a, Field1D):
        w = a.grid.weights
    else:
        w = a.grid.weights
    return complex(np.sum(w * np.conj(a.values) * b.values))


def norm(a) -> float:
    return float(np.sqrt(inner_product(a, a).real))


def normalize(a):
    """Return a unit-norm copy; raises on (numerically) zero input."""
    nrm = norm(a)
    scale = float(np.max(np.abs(a.values))) if a.values.size else 0.0
    if nrm == 0.0 or (scale > 0.0 and nrm < 1e-300 * scale) or scale == 0.0:
        raise DegenerateInputError("cannot normalize a zero field")
    cls = type(a)
    return cls(a.grid, a.values / nrm)


# ---------------------------------------------------------------------------
# sampled-data derivatives (second order)


def _d1(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """First derivative: central interior, one-sided second order at edges."""
    v = np.moveaxis(np.asarray(values), axis, 0)
    if v.shape[0] < 3:
        raise DegenerateInputError("need at least 3 points for a derivative")
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _d2(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second derivative: 3-point central interior, one-sided at edges."""
    v = np.moveaxis(np.asarray(values), axis, 0)
    m = v.shape[0]
    if m < 3:
        raise DegenerateInputError("need at least 3 points for a second derivative")
    out = np.empty_like(v)
    h2 = h * h
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h2
    if m >= 4:
        out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
        out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h2
    else:
        # with 3 points the central stencil is all we have
        out[0] = out[1]
        out[-1] = out[1]
    return np.moveaxis(out, 0, axis)


def first_derivative(f: Field1D) -> Field1D:
    return Field1D(f.grid, _d1(f.values, f.grid.spacing))


def second_derivative(f: Field1D) -> Field1D:
    return Field1D(f.grid, _d2(f.values, f.grid.spacing))


# ---------------------------------------------------------------------------
# 1D potentials


class Potential:
    """Scalar potential of one coordinate.

    Subclasses implement __call__ and derivative; both accept scalars or
    arrays and broadcast.
    """

    def __call__(self, q):
        raise NotImplementedError

    def derivative(self, q):
        raise NotImplementedError


@dataclass(frozen=True)
class Harmonic(Potential):
    k: float
    center: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise DegenerateInputError(f"harmonic stiffness must be >= 0, got {self.k}")

    def __call__(self, q):
        d = np.asarray(q) - self.center
        return 0.5 * self.k * d * d

    def derivative(self, q):
        return self.k * (np.asarray(q) - self.center)


@dataclass(frozen=True)
class Linear(Potential):
    slope: float

    def __call__(self, q):
        return self.slope * np.asarray(q)

    def derivative(self, q):
        return np.full_like(np.asarray(q, dtype=float), self.slope)


@dataclass(frozen=True)
class Constant(Potential):
    value: float = 0.0

    def __call__(self, q):
        return np.full_like(np.asarray(q, dtype=float), self.value)

    def derivative(self, q):
        return np.zeros_like(np.asarray(q, dtype=float))


@dataclass(frozen=True)
class GaussianWell(Potential):
    """V(q) = -depth * exp(-(q - center)^2 / (2 width^2))."""

    depth: float
    width: float
    center: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise DegenerateInputError(f"gaussian well width must be > 0, got {self.width}")

    def __call__(self, q):
        d = np.asarray(q) - self.center
        return -self.depth * np.exp(-d * d / (2.0 * self.width**2))

    def derivative(self, q):
        d = np.asarray(q) - self.center
        return self.depth * d / self.width**2 * np.exp(-d * d / (2.0 * self.width**2))


class Tabulated(Potential):
    """Cubic interpolation through sampled values; out-of-span lookups fail."""

    def __init__(self, grid: Grid1D, values):
        v = np.asarray(values, dtype=float)
        if v.shape != (grid.n,):
            raise GridMismatchError("tabulated values do not match grid")
        if grid.n < 4:
            raise DegenerateInputError("tabulated potential needs at least 4 samples")
        self.grid = grid
        self.samples = v
        self._spline = CubicSpline(grid.points, v)
        self._dspline = self._spline.derivative()

    def _check(self, q):
        q = np.asarray(q, dtype=float)
        if np.any(q < self.grid.lo) or np.any(q > self.grid.hi):
            raise DomainError(
                f"coordinate outside tabulated span [{self.grid.lo}, {self.grid.hi}]"
            )
        return q

    def __call__(self, q):
        return self._spline(self._check(q))

    def derivative(self, q):
        return self._dspline(self._check(q))


# ---------------------------------------------------------------------------
# couplings V_I(x, R)


class Coupling:
    """Interaction of the system coordinate x with the environment coordinate R."""

    def __call__(self, x, r):
        raise NotImplementedError

    def d_dx(self, x, r):
        raise NotImplementedError

    def d_dr(self, x, r):
        raise NotImplementedError

    def factorized(self):
        """Return (g, h) with V_I(x,R) = g(R) * h(x) when that structure exists.

        g maps an R array to an array, h maps an x array to an array.
        Returns None for couplings without a product form.
        """
        return None


@dataclass(frozen=True)
class Bilinear(Coupling):
    """V_I(x, R) = strength * x * R."""

    strength: float

    def __call__(self, x, r):
        return self.strength * np.asarray(x) * np.asarray(r)

    def d_dx(self, x, r):
        return self.strength * np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(r, dtype=float))[1]

    def d_dr(self, x, r):
        return self.strength * np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(r, dtype=float))[0]

    def factorized(self):
        return (lambda r: self.strength * np.asarray(r, dtype=float),
                lambda x: np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SeparableCoupling(Coupling):
    """V_I(x, R) = env(R) * sys(x) for two 1D potentials."""

    env: Potential
    sys: Potential

    def __call__(self, x, r):
        return self.env(r) * self.sys(x)

    def d_dx(self, x, r):
        return self.env(r) * self.sys.derivative(x)

    def d_dr(self, x, r):
        return self.env.derivative(r) * self.sys(x)

    def factorized(self):
        return (lambda r: np.asarray(self.env(r), dtype=float),
                lambda x: np.asarray(self.sys(x), dtype=float))


@dataclass(frozen=True)
class WindowedPulse(Coupling):
    """V_I(x, R) = amplitude * profile(x) * exp(-(R - center)^2 / (2 width^2))."""

    amplitude: float
    center: float
    width: float
    profile: Potential

    def __post_init__(self):
        if self.width <= 0:
            raise DegenerateInputError(f"pulse width must be > 0, got {self.width}")

    def _envelope(self, r):
        d = np.asarray(r) - self.center
        return np.exp(-d * d / (2.0 * self.width**2))

    def __call__(self, x, r):
        return self.amplitude * self.profile(x) * self._envelope(r)

    def d_dx(self, x, r):
        return self.amplitude * self.profile.derivative(x) * self._envelope(r)

    def d_dr(self, x, r):
        d = np.asarray(r) - self.center
        return self.amplitude * self.profile(x) * self._envelope(r) * (-d / self.width**2)

    def factorized(self):
        return (lambda r: self.amplitude * self._envelope(r),
                lambda x: np.asarray(self.profile(x), dtype=float))


@dataclass(frozen=True)
class ZeroCoupling(Coupling):
    def __call__(self, x, r):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(r)))

    def d_dx(self, x, r):
        return self(x, r)

    def d_dr(self, x, r):
        return self(x, r)

    def factorized(self):
        return (lambda r: np.zeros_like(np.asarray(r, dtype=float)),
                lambda x: np.zeros_like(np.asarray(x, dtype=float)))


def eval_potential(spec, coords):
    """Evaluate a Potential at q, or a Coupling at (x, r).

    Raises DomainError outside a tabulated span and rejects non-finite
    results, so downstream code can rely on finite energies.
    """
    if isinstance(spec, Coupling):
        x, r = coords
        val = spec(x, r)
    else:
        val = spec(coords)
    arr = np.asarray(val)
    if not np.all(np.isfinite(arr)):
        raise DomainError("potential evaluated to a non-finite value")
    return val


# ---------------------------------------------------------------------------
# model specs


@dataclass(frozen=True)
class SystemSpec:
    """System half of a composite: mass, hbar and the static potential."""

    m: float
    hbar: float
    v_sys: Potential

    def __post_init__(self):
        if self.m <= 0:
            raise DegenerateInputError(f"system mass must be > 0, got {self.m}")
        if self.hbar <= 0:
            raise DegenerateInputError(f"hbar must be > 0, got {self.hbar}")


@dataclass(frozen=True)
class CompositeSpec:
    """Closed composite: heavy environment (mass M, coordinate R) plus system
    (mass m, coordinate x), with V(x,R) = v_env(R) + v_sys(x) + v_int(x,R).

    `energy` is the composite eigenvalue E; `clock_energy` is the share
    assigned to the environment when it is used as a clock.  Either may be
    left unset until a solve determines it.
    """

    M: float
    m: float
    hbar: float
    v_env: Potential
    v_sys: Potential
    v_int: Coupling
    energy: float | None = None
    clock_energy: float | None = None

    def __post_init__(self):
        if self.M <= 0 or self.m <= 0:
            raise DegenerateInputError(f"masses must be > 0, got M={self.M}, m={self.m}")
        if self.hbar <= 0:
            raise DegenerateInputError(f"hbar must be > 0, got {self.hbar}")
        if self.energy is not None and self.clock_energy is not None:
            if self.clock_energy > self.energy + 1e-12 * max(1.0, abs(self.energy)):
                raise DegenerateInputError(
                    f"clock energy {self.clock_energy} exceeds total energy {self.energy}"
                )

    @property
    def system(self) -> SystemSpec:
        return SystemSpec(self.m, self.hbar, self.v_sys)

    def total_potential(self, x, r):
        return self.v_env(r) + self.v_sys(x) + self.v_int(x, r)


@dataclass(eq=False)
class ChannelBasis:
    """Orthonormal system states with their energies.

    `stencil_order` records which kinetic stencil produced the states so
    residual evaluators can stay consistent with them.
    """

    x_grid: Grid1D
    states: tuple
    energies: np.ndarray
    stencil_order: int = 2
    orthonormality_tol: float = 1e-8

    def __post_init__(self):
        self.states = tuple(self.states)
        self.energies = np.asarray(self.energies, dtype=float)
        if len(self.states) != self.energies.shape[0]:
            raise GridMismatchError("state count does not match energy count")
        for s in self.states:
            if s.grid != self.x_grid:
                raise GridMismatchError("basis state grid differs from basis grid")
        g = self.gram()
        defect = float(np.max(np.abs(g - np.eye(len(self.states)))))
        if defect > self.orthonormality_tol:
            raise DegenerateInputError(
                f"basis not orthonormal: max defect {defect:.3e} > {self.orthonormality_tol:.1e}"
            )

    def __len__(self):
        return len(self.states)

    def gram(self) -> np.ndarray:
        w = self.x_grid.weights
        mat = np.array([s.values for s in self.states])
        return (mat * w) @ np.conj(mat).T

    def state_matrix(self) -> np.ndarray:
        """(k, nx) array of state values."""
        return np.array([s.values for s in self.states])
