import math
from pathlib import Path
from typing import Callable, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import optimize

from nlslab.errors import GridMismatch, IOFailure, QOutOfRange


def sphere_area(d: int) -> float:
    """Surface area c_d = 2 pi^(d/2) / Gamma(d/2) of the unit sphere in R^d"""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


class RadialGrid(BaseModel):
    """Radial nodes on [0, r_max] with finite-volume shell weights.

    Node i owns the shell between the neighbouring midpoints, so the weights
    are c_d (b_{i+1}^d - b_i^d) / d with b_0 = 0 and b_n = r_max. ``faces``
    holds the flux coefficients c_d b_{i+1}^(d-1) / (r_{i+1} - r_i) of the
    conservative Laplacian.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d: int
    r: np.ndarray
    w: np.ndarray
    faces: np.ndarray
    kind: str = "uniform"

    @classmethod
    def from_radii(cls, d: int, r: np.ndarray, kind: str = "custom") -> "RadialGrid":
        r = np.asarray(r, dtype=float)
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("Radii must start at 0 and be strictly increasing")
        c_d = sphere_area(d)
        bounds = np.concatenate(([0.0], 0.5 * (r[1:] + r[:-1]), [r[-1]]))
        w = c_d * np.diff(bounds**d) / d
        faces = c_d * bounds[1:-1] ** (d - 1) / np.diff(r)
        return cls(d=d, r=r, w=w, faces=faces, kind=kind)

    @classmethod
    def uniform(cls, d: int, n: int, r_max: float) -> "RadialGrid":
        return cls.from_radii(d, np.linspace(0.0, r_max, n), kind="uniform")

    @classmethod
    def graded(
        cls,
        d: int,
        n: int,
        r_max: float,
        r_core: float = 10.0,
        core_fraction: float = 0.5,
    ) -> "RadialGrid":
        """Uniform core on [0, r_core], geometric stretching out to r_max"""
        n_core = int(core_fraction * n)
        n_outer = n - n_core
        if n_core < 2 or n_outer < 1 or r_core >= r_max:
            return cls.uniform(d, n, r_max)

        h0 = r_core / (n_core - 1)
        span = r_max - r_core
        if h0 * n_outer >= span:
            # Not enough room to stretch
            return cls.uniform(d, n, r_max)

        # Spacings h0 q^k, k = 1..n_outer, must sum to span; solve for x = q - 1
        def overshoot(x: float) -> float:
            log_sum = math.log1p(x) + math.log(math.expm1(n_outer * math.log1p(x))) - math.log(x)
            return math.log(h0) + log_sum - math.log(span)

        x_max = math.expm1(700.0 / n_outer)
        ratio = 1.0 + optimize.brentq(overshoot, 1e-12, x_max, xtol=1e-15, maxiter=500)
        core = np.linspace(0.0, r_core, n_core)
        outer = r_core + h0 * np.cumsum(ratio ** np.arange(1, n_outer + 1))
        outer[-1] = r_max
        return cls.from_radii(d, np.concatenate((core, outer)), kind="graded")

    @property
    def n(self) -> int:
        return int(self.r.size)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.d == other.d
            and self.r.shape == other.r.shape
            and bool(np.array_equal(self.r, other.r))
        )


class RadialField(BaseModel):
    """Complex samples of a radial function on a RadialGrid"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: RadialGrid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _complex_finite(cls, values):
        values = np.asarray(values, dtype=complex)
        if not np.all(np.isfinite(values)):
            raise ValueError("Field values must be finite")
        return values

    def with_values(self, values: np.ndarray) -> "RadialField":
        return RadialField(grid=self.grid, values=values)

    def __add__(self, other: "RadialField") -> "RadialField":
        return axpy(1.0, self, 1.0, other)

    def __sub__(self, other: "RadialField") -> "RadialField":
        return axpy(1.0, self, -1.0, other)


def _check_grid(u: RadialField, v: RadialField) -> None:
    if not u.grid.same_as(v.grid):
        raise GridMismatch("Fields live on different grids")


def sample(grid: RadialGrid, closure: Callable[[np.ndarray], np.ndarray]) -> RadialField:
    """Evaluate closure(r) at every node"""
    return RadialField(grid=grid, values=np.asarray(closure(grid.r), dtype=complex) * np.ones(grid.n))


def zeros(grid: RadialGrid) -> RadialField:
    return RadialField(grid=grid, values=np.zeros(grid.n, dtype=complex))


def gaussian(grid: RadialGrid, amplitude: complex = 1.0, width: float = 1.0) -> RadialField:
    return sample(grid, lambda r: amplitude * np.exp(-(r**2) / (2.0 * width**2)))


def axpy(a: complex, u: RadialField, b: complex, v: RadialField) -> RadialField:
    """a u + b v"""
    _check_grid(u, v)
    return u.with_values(a * u.values + b * v.values)


def scale(u: RadialField, c: complex) -> RadialField:
    return u.with_values(c * u.values)


def inner(u: RadialField, v: RadialField) -> complex:
    """<u, v> = int conj(u) v dx"""
    _check_grid(u, v)
    return complex(np.sum(u.grid.w * np.conj(u.values) * v.values))


def lp_norm_pow(u: RadialField, q: float) -> float:
    """||u||_{L^q}^q"""
    if not q >= 1:
        raise QOutOfRange(f"Exponent q={q} must be at least 1")
    return float(np.sum(u.grid.w * np.abs(u.values) ** q))


def radial_derivative(u: RadialField) -> np.ndarray:
    """u'(r) by second-order differences, u'(0) = 0 by symmetry"""
    derivative = np.gradient(u.values, u.grid.r, edge_order=2)
    derivative[0] = 0.0
    return derivative


def grad_norm_sq(u: RadialField) -> float:
    """||grad u||_{L^2}^2 from nodal derivatives"""
    return float(np.sum(u.grid.w * np.abs(radial_derivative(u)) ** 2))


def dirichlet_form(u: RadialField) -> float:
    """Face-based ||grad u||^2, the quadratic form of the conservative Laplacian"""
    jumps = np.diff(u.values)
    return float(np.sum(u.grid.faces * np.abs(jumps) ** 2))


def apply_flux_laplacian(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """A u: the symmetric flux-difference operator (without the 1/w factor)"""
    flux = grid.faces * np.diff(values)
    result = np.zeros_like(values)
    result[:-1] += flux
    result[1:] -= flux
    return result


def laplacian(u: RadialField) -> np.ndarray:
    """Conservative radial Laplacian W^-1 A u; the r_max entry is set to 0"""
    result = apply_flux_laplacian(u.grid, u.values) / u.grid.w
    result[-1] = 0.0
    return result


def interpolate(u: RadialField, radii: np.ndarray) -> np.ndarray:
    """Piecewise-linear values at arbitrary radii, zero beyond r_max"""
    radii = np.asarray(radii, dtype=float)
    real = np.interp(radii, u.grid.r, u.values.real, right=0.0)
    imag = np.interp(radii, u.grid.r, u.values.imag, right=0.0)
    return real + 1j * imag


def mass_radius(u: RadialField, fraction: float = 0.999) -> float:
    """Smallest node radius enclosing the given fraction of the mass"""
    cumulative = np.cumsum(u.grid.w * np.abs(u.values) ** 2)
    if cumulative[-1] == 0:
        return 0.0
    index = int(np.searchsorted(cumulative, fraction * cumulative[-1]))
    return float(u.grid.r[min(index, u.grid.n - 1)])


def save_csv(u: RadialField, filepath: Union[str, Path]) -> None:
    """Write columns r, re, im"""
    data = np.column_stack((u.grid.r, u.values.real, u.values.imag))
    try:
        np.savetxt(filepath, data, delimiter=",", header="r,re,im", comments="", fmt="%.17g")
    except OSError as e:
        raise IOFailure(f"Could not write field to {filepath}: {e}") from e


def load_csv(filepath: Union[str, Path], d: int) -> RadialField:
    """Read a field written by save_csv; the grid is rebuilt from the r column"""
    try:
        data = np.loadtxt(filepath, delimiter=",", skiprows=1, ndmin=2)
    except OSError as e:
        raise IOFailure(f"Could not read field from {filepath}: {e}") from e
    grid = RadialGrid.from_radii(d, data[:, 0], kind="loaded")
    return RadialField(grid=grid, values=data[:, 1] + 1j * data[:, 2])
