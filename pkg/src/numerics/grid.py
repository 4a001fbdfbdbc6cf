"""Rectangular grid, piecewise-constant densities and internal energies.

Cell values are stored as ``(ny, nx)`` arrays: row ``j`` holds the cells with
y-index ``j`` and x increases along the row. All integrals are midpoint sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

FloatArray = NDArray[np.float64]


class Domain(BaseModel):
    """Axis-aligned rectangle [x_min, x_max] x [y_min, y_max]."""

    model_config = ConfigDict(frozen=True)

    x_min: float = 0.0
    x_max: float = 1.0
    y_min: float = 0.0
    y_max: float = 1.0

    @model_validator(mode="after")
    def _check_bounds(self) -> Domain:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("domain requires x_min < x_max and y_min < y_max")
        return self

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    @property
    def centroid(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def clamp(self, points: FloatArray) -> FloatArray:
        """Project points onto the closed rectangle."""
        out = np.empty_like(points)
        out[:, 0] = np.clip(points[:, 0], self.x_min, self.x_max)
        out[:, 1] = np.clip(points[:, 1], self.y_min, self.y_max)
        return out


class Grid(BaseModel):
    """Uniform nx x ny tiling of a domain."""

    model_config = ConfigDict(frozen=True)

    domain: Domain = Field(default_factory=Domain)
    nx: PositiveInt
    ny: PositiveInt

    @property
    def hx(self) -> float:
        return self.domain.width / self.nx

    @property
    def hy(self) -> float:
        return self.domain.height / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def x_centers(self) -> FloatArray:
        """Cell-center x coordinates, length nx."""
        return self.domain.x_min + (np.arange(self.nx) + 0.5) * self.hx

    def y_centers(self) -> FloatArray:
        """Cell-center y coordinates, length ny."""
        return self.domain.y_min + (np.arange(self.ny) + 0.5) * self.hy

    def cell_centers(self) -> FloatArray:
        """All cell centers as an ``(ny * nx, 2)`` array in row-major order."""
        xx, yy = np.meshgrid(self.x_centers(), self.y_centers())
        return np.column_stack([xx.ravel(), yy.ravel()])

    def vertical_face_midpoints(self) -> FloatArray:
        """Midpoints of the ``ny x (nx + 1)`` faces normal to x."""
        xs = self.domain.x_min + np.arange(self.nx + 1) * self.hx
        xx, yy = np.meshgrid(xs, self.y_centers())
        return np.column_stack([xx.ravel(), yy.ravel()])

    def horizontal_face_midpoints(self) -> FloatArray:
        """Midpoints of the ``(ny + 1) x nx`` faces normal to y."""
        ys = self.domain.y_min + np.arange(self.ny + 1) * self.hy
        xx, yy = np.meshgrid(self.x_centers(), ys)
        return np.column_stack([xx.ravel(), yy.ravel()])


class DiffusionLaw(BaseModel):
    """Internal energy density F and its pressure P(rho) = rho F'(rho) - F(rho).

    ``linear``: F = rho log rho, P = rho. ``pme``: F = rho^m / (m - 1), P = rho^m.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["linear", "pme"] = "linear"
    m: float = Field(default=2.0, gt=1.0)

    def energy_density(self, rho: FloatArray) -> FloatArray:
        """F(rho), with 0 log 0 = 0."""
        if self.kind == "linear":
            safe = np.where(rho > 0.0, rho, 1.0)
            return np.where(rho > 0.0, rho * np.log(safe), 0.0)
        return np.power(rho, self.m) / (self.m - 1.0)

    def first_variation(self, rho: FloatArray) -> FloatArray:
        """F'(rho). Callers keep rho positive for the linear law."""
        if self.kind == "linear":
            return np.log(rho) + 1.0
        return self.m / (self.m - 1.0) * np.power(rho, self.m - 1.0)

    def pressure(self, rho: FloatArray) -> FloatArray:
        if self.kind == "linear":
            return rho.copy()
        return np.power(rho, self.m)

    def pressure_derivative(self, rho: float) -> float:
        """P'(rho) at a scalar density (the CFL uses the current maximum)."""
        if self.kind == "linear":
            return 1.0
        return self.m * rho ** (self.m - 1.0)


@dataclass(frozen=True, eq=False)
class Density:
    """Piecewise-constant probability density on a grid."""

    grid: Grid
    values: FloatArray

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"density shape {self.values.shape} does not match grid "
                f"{self.grid.shape}"
            )

    @classmethod
    def from_values(
        cls, grid: Grid, values: FloatArray, normalize: bool = True
    ) -> Density:
        """Build a density, optionally rescaling it to unit mass."""
        array = np.array(values, dtype=np.float64).reshape(grid.shape)
        if normalize:
            mass = float(np.sum(array)) * grid.cell_area
            if mass <= 0.0:
                raise ValueError("density must have positive mass")
            array = array / mass
        return cls(grid=grid, values=array)

    @cached_property
    def mass(self) -> float:
        return total_mass(self)

    def validate(self, tol: float = 1e-12) -> None:
        """Check nonnegativity and unit mass."""
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density has nonfinite values")
        if float(self.values.min()) < 0.0:
            raise ValueError("density has negative values")
        if abs(self.mass - 1.0) > tol:
            raise ValueError(f"density mass {self.mass!r} is not 1")


def uniform_density(grid: Grid) -> Density:
    """Constant density 1/|domain|."""
    return Density(grid, np.full(grid.shape, 1.0 / grid.domain.area))


def gaussian_density(grid: Grid, cx: float, cy: float, sigma: float) -> Density:
    """Gaussian bump truncated to the domain and renormalized."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    xx, yy = np.meshgrid(grid.x_centers(), grid.y_centers())
    values = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma**2))
    return Density.from_values(grid, values)


def floored(density: Density, floor: float = 1e-12) -> Density:
    """Raise every cell to ``floor / cell_area`` and renormalize.

    Guarantees every atom with positive weight can acquire mass.
    """
    grid = density.grid
    values = np.maximum(density.values, floor / grid.cell_area)
    return Density.from_values(grid, values)


def total_mass(density: Density) -> float:
    """Sum of values times cell area (numpy's pairwise summation)."""
    return float(np.sum(density.values)) * density.grid.cell_area


def internal_energy(density: Density, law: DiffusionLaw) -> float:
    """Midpoint-rule integral of F(rho) over the domain."""
    return float(np.sum(law.energy_density(density.values))) * density.grid.cell_area


def lp_norm(density: Density, p: float) -> float:
    """L^p norm of the density; ``p = math.inf`` gives the maximum."""
    if math.isinf(p):
        return float(np.max(np.abs(density.values)))
    if p < 1.0:
        raise ValueError("p must be >= 1")
    integral = float(np.sum(np.abs(density.values) ** p)) * density.grid.cell_area
    return integral ** (1.0 / p)
