"""Explicit finite-volume solver for d_t rho = Laplace P(rho) + div(rho grad Phi).

The drift u = -grad Phi = x_label - x points toward the owning atom and is
frozen over a macro step. Face fluxes are

    F = -(P(rho_R) - P(rho_L)) / h + rho_upwind * u_face,

with rho_upwind taken on the side the drift comes from. Boundary faces carry
zero flux, so the update telescopes and conserves mass exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from src.errors import NegativeDensityError, NonFiniteStateError, NumericalError
from src.numerics.grid import Density, DiffusionLaw, FloatArray, Grid
from src.numerics.sdot import AtomSet, Tessellation, laguerre_argmin

logger = logging.getLogger(__name__)

NEGATIVE_TOLERANCE = 1e-12
MASS_ROUNDOFF = 1e-9


@dataclass(frozen=True, eq=False)
class FaceVelocity:
    """Drift on cell faces.

    ``u`` has shape ``(ny, nx + 1)`` (faces normal to x), ``v`` has shape
    ``(ny + 1, nx)`` (faces normal to y). Boundary faces are zero.
    """

    u: FloatArray
    v: FloatArray

    @classmethod
    def zeros(cls, grid: Grid) -> FaceVelocity:
        return cls(
            u=np.zeros((grid.ny, grid.nx + 1)), v=np.zeros((grid.ny + 1, grid.nx))
        )

    @property
    def max_speed(self) -> float:
        return max(float(np.max(np.abs(self.u))), float(np.max(np.abs(self.v))))


def face_velocities(grid: Grid, atoms: AtomSet, tess: Tessellation) -> FaceVelocity:
    """Drift x_label(p) - p at every interior face midpoint p.

    The label of a face is its own Laguerre owner (lowest index on ties), not
    an average of the adjacent cells.
    """
    alive = atoms.alive_indices
    sites = atoms.positions[alive]
    psi = tess.potentials[alive]

    def drift(points: FloatArray, component: int) -> FloatArray:
        owner = laguerre_argmin(points, sites, psi)
        return sites[owner, component] - points[:, component]

    u = drift(grid.vertical_face_midpoints(), 0).reshape(grid.ny, grid.nx + 1)
    v = drift(grid.horizontal_face_midpoints(), 1).reshape(grid.ny + 1, grid.nx)
    u[:, 0] = 0.0
    u[:, -1] = 0.0
    v[0, :] = 0.0
    v[-1, :] = 0.0
    return FaceVelocity(u=u, v=v)


def cfl_timestep(
    grid: Grid,
    density: Density,
    law: DiffusionLaw,
    velocity: FaceVelocity,
    safety: float = 0.4,
) -> float:
    """Stable explicit step: safety * min(h^2 / (4 max P'), h / max|u|).

    Returns ``inf`` when neither diffusion nor drift constrains the step.
    """
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety must lie in (0, 1]")
    h = min(grid.hx, grid.hy)
    slope = law.pressure_derivative(float(np.max(density.values)))
    diffusive = h * h / (4.0 * slope) if slope > 0.0 else math.inf
    speed = velocity.max_speed
    advective = h / speed if speed > 0.0 else math.inf
    return safety * min(diffusive, advective)


def _divergence(
    grid: Grid, rho: FloatArray, law: DiffusionLaw, velocity: FaceVelocity
) -> FloatArray:
    """Net outflow rate per unit area of every cell."""
    pressure = law.pressure(rho)

    flux_x = np.zeros((grid.ny, grid.nx + 1))
    u = velocity.u[:, 1:-1]
    upwind_x = np.where(u >= 0.0, rho[:, :-1], rho[:, 1:])
    flux_x[:, 1:-1] = -(pressure[:, 1:] - pressure[:, :-1]) / grid.hx + upwind_x * u

    flux_y = np.zeros((grid.ny + 1, grid.nx))
    v = velocity.v[1:-1, :]
    upwind_y = np.where(v >= 0.0, rho[:-1, :], rho[1:, :])
    flux_y[1:-1, :] = -(pressure[1:, :] - pressure[:-1, :]) / grid.hy + upwind_y * v

    return (flux_x[:, 1:] - flux_x[:, :-1]) / grid.hx + (
        flux_y[1:, :] - flux_y[:-1, :]
    ) / grid.hy


def step_density(
    density: Density,
    law: DiffusionLaw,
    velocity: FaceVelocity,
    horizon: float,
    safety: float = 0.4,
) -> Density:
    """Advance the density over ``horizon`` with CFL-limited explicit sub-steps.

    Raises:
        NegativeDensityError: If a cell drops below -1e-12.
        NonFiniteStateError: If NaN or Inf appears.
        NumericalError: If the total mass drifts beyond round-off.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    grid = density.grid
    rho = density.values.copy()
    mass_in = float(np.sum(rho))
    elapsed = 0.0
    substeps = 0
    while horizon - elapsed > 1e-14 * horizon:
        dt = cfl_timestep(grid, Density(grid, rho), law, velocity, safety)
        dt = min(dt, horizon - elapsed)
        rho = rho - dt * _divergence(grid, rho, law, velocity)
        if not np.all(np.isfinite(rho)):
            raise NonFiniteStateError("density")
        lowest = float(np.min(rho))
        if lowest < -NEGATIVE_TOLERANCE:
            raise NegativeDensityError(lowest)
        if lowest < 0.0:
            rho = np.maximum(rho, 0.0)
        elapsed += dt
        substeps += 1

    # Fluxes telescope exactly; only summation round-off is left to remove.
    mass_out = float(np.sum(rho))
    if abs(mass_out - mass_in) > MASS_ROUNDOFF * max(mass_in, 1.0):
        raise NumericalError(
            f"mass drift {(mass_out - mass_in) * grid.cell_area:.3e} in density update"
        )
    if mass_out > 0.0:
        rho *= mass_in / mass_out

    logger.debug("Advanced density over %.3e in %d sub-steps", horizon, substeps)
    return Density(grid, rho)
