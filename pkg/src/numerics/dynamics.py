"""Splitting integrator for the coupled density / atom system.

One step of length tau:

1. reuse the tessellation of the current state,
2. move atoms toward their barycenters (explicit Euler) and clamp them,
3. evolve weights on the simplex (``full`` mode) and absorb atoms at zero,
4. freeze the drift of the new tessellation and advance the density,
5. solve the tessellation of the new state.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import pdist

from src.errors import AllAtomsDeadError, ConfigError, NumericalError
from src.numerics.grid import (
    Density,
    DiffusionLaw,
    FloatArray,
    Grid,
    internal_energy,
    total_mass,
)
from src.numerics.pde import face_velocities, step_density
from src.numerics.sdot import (
    AtomSet,
    BoolArray,
    Tessellation,
    potential_field,
    solve_potentials,
    transport_cost,
)

if TYPE_CHECKING:
    from src.models.config import SimulationConfig

logger = logging.getLogger(__name__)

_MAX_WEIGHT_SUBSTEPS = 100_000
# Axes with fewer cells than this are exempt from the boundary margin.
_MIN_CELLS_FOR_MARGIN = 4


class MassCostLaw(BaseModel):
    """Cusp cost g(a) = kappa * a^beta of holding mass a at one atom."""

    model_config = ConfigDict(frozen=True)

    kappa: float = Field(default=1.0, gt=0.0)
    beta: float = Field(default=0.5, gt=0.0, lt=1.0)

    def value(self, a: FloatArray) -> FloatArray:
        return self.kappa * np.power(np.maximum(a, 0.0), self.beta)

    def derivative(self, a: FloatArray) -> FloatArray:
        return self.kappa * self.beta * np.power(a, self.beta - 1.0)

    def second_derivative(self, a: FloatArray) -> FloatArray:
        return (
            self.kappa * self.beta * (self.beta - 1.0) * np.power(a, self.beta - 2.0)
        )


@dataclass(frozen=True, eq=False)
class SimState:
    """Density, atoms and the tessellation solved for exactly that pair."""

    time: float
    step: int
    density: Density
    atoms: AtomSet
    tess: Tessellation
    clamp_events: int = 0


class EnergyBreakdown(BaseModel):
    """Energy terms of a state plus the geometric diagnostics reported with it.

    Pairwise distances are ``None`` with fewer than two alive atoms.
    """

    internal: float
    mass_cost: float
    transport: float
    total: float
    max_dist_to_barycenter: float
    min_pairwise_atom_dist: float | None = None
    min_pairwise_barycenter_dist: float | None = None
    mass_error: float
    linf_density: float


def sample_atoms(grid: Grid, n_atoms: int, rng: np.random.Generator) -> FloatArray:
    """Uniform interior atoms with pairwise distance at least 0.5 / sqrt(N).

    The sampling box is the domain shrunk by max(0.05 * diam, 2 * max(hx, hy)).

    Raises:
        ConfigError: If the atoms do not fit.
    """
    domain = grid.domain
    margin = max(0.05 * domain.diameter, 2.0 * max(grid.hx, grid.hy))
    low = np.array([domain.x_min + margin, domain.y_min + margin])
    high = np.array([domain.x_max - margin, domain.y_max - margin])
    if np.any(high <= low):
        raise ConfigError("domain too small for the atom margin")
    min_dist = 0.5 / math.sqrt(n_atoms)

    accepted = np.empty((n_atoms, 2))
    count = 0
    attempts = 0
    max_attempts = 1000 * n_atoms
    while count < n_atoms:
        if attempts >= max_attempts:
            raise ConfigError(
                f"could not place {n_atoms} atoms at distance >= {min_dist:.4g}"
            )
        attempts += 1
        candidate = rng.uniform(low, high)
        if count:
            gaps = np.hypot(*(accepted[:count] - candidate).T)
            if float(gaps.min()) < min_dist:
                continue
        accepted[count] = candidate
        count += 1
    logger.debug("Placed %d atoms in %d draws", n_atoms, attempts)
    return accepted


def _solve(
    density: Density,
    atoms: AtomSet,
    config: SimulationConfig,
    warm: FloatArray | None,
) -> Tessellation:
    return solve_potentials(
        density,
        atoms,
        tol=config.ot_tol,
        max_iter=config.ot_max_iter,
        initial=warm,
    )


def initial_state(
    config: SimulationConfig, density: Density, atoms: AtomSet
) -> SimState:
    """Validate the starting pair and solve its tessellation.

    Outside ``full`` mode the alive weights are reset to 1/N_alive.

    Raises:
        ConfigError: If the density or atoms break their invariants, or an
            atom sits closer than two cells to the boundary.
    """
    grid = density.grid
    if config.mode != "full" and atoms.n_alive:
        uniform = np.where(atoms.alive, 1.0 / atoms.n_alive, 0.0)
        if not np.allclose(atoms.weights, uniform, rtol=0.0, atol=1e-12):
            logger.info(
                "Resetting %d atom weights to 1/%d in %s mode",
                atoms.n_alive,
                atoms.n_alive,
                config.mode,
            )
        atoms = atoms.replace(weights=uniform)
    try:
        density = Density.from_values(grid, density.values)
        density.validate()
        total = float(np.sum(atoms.weights[atoms.alive]))
        if total <= 0.0:
            raise ValueError("alive atoms carry no mass")
        atoms = atoms.replace(weights=atoms.weights / total)
        atoms.validate()
    except ValueError as err:
        raise ConfigError(str(err)) from err

    points = atoms.positions[atoms.alive]
    domain = grid.domain
    if not np.array_equal(domain.clamp(points), points):
        raise ConfigError("initial atoms must lie inside the domain")
    # One-row or one-column strips have no interior along their thin axis.
    axes = [
        (points[:, 0], domain.x_min, domain.x_max, grid.hx, grid.nx),
        (points[:, 1], domain.y_min, domain.y_max, grid.hy, grid.ny),
    ]
    axes = [axis for axis in axes if axis[4] >= _MIN_CELLS_FOR_MARGIN]
    if points.size and axes:
        margin = 2.0 * max(axis[3] for axis in axes)
        clearance = np.min(
            [np.minimum(coord - lo, hi - coord) for coord, lo, hi, _, _ in axes],
            axis=0,
        )
        if float(clearance.min()) < margin:
            worst = int(np.argmin(clearance))
            raise ConfigError(
                f"initial atom at ({points[worst, 0]:.4g}, {points[worst, 1]:.4g}) "
                f"is closer than {margin:.4g} (two cells) to the boundary"
            )
    tess = _solve(density, atoms, config, None)
    return SimState(time=0.0, step=0, density=density, atoms=atoms, tess=tess)


def _atom_rates(state: SimState, config: SimulationConfig) -> FloatArray:
    rule = config.atom_rate
    if rule == "auto":
        rule = "gradient" if config.mode == "full" else "barycentric"
    if rule == "gradient":
        return state.tess.masses
    return np.ones(state.atoms.n_atoms)


def _move_atoms(state: SimState, config: SimulationConfig) -> tuple[FloatArray, int]:
    atoms = state.atoms
    alive = atoms.alive
    rates = _atom_rates(state, config)
    positions = atoms.positions.copy()
    offset = atoms.positions[alive] - state.tess.barycenters[alive]
    moved = positions[alive] - config.alpha * config.tau * rates[alive, None] * offset
    clamped = state.density.grid.domain.clamp(moved)
    clamps = int(np.count_nonzero(np.any(clamped != moved, axis=1)))
    if clamps:
        logger.warning(
            "Clamped %d atoms to the domain at step %d", clamps, state.step + 1
        )
    positions[alive] = clamped
    return positions, clamps


def _evolve_weights(
    atoms: AtomSet, potentials: FloatArray, config: SimulationConfig
) -> tuple[FloatArray, BoolArray]:
    """Sub-stepped explicit Euler on the simplex with absorption at a_min.

    Potentials are held fixed over the step; each sub-step changes every
    weight by at most half its value.
    """
    law = config.mass_cost_law()
    sign = -1.0 if config.psi_sign == "el" else 1.0
    weights = atoms.weights.copy()
    alive = atoms.alive.copy()

    remaining = config.tau
    substeps = 0
    while remaining > 1e-14 * config.tau:
        idx = np.flatnonzero(alive)
        a = weights[idx]
        drive = -law.derivative(a) + sign * potentials[idx]
        rate = drive - drive.mean()
        stiffness = float(np.max(np.abs(rate) / a))
        dt = remaining if stiffness == 0.0 else min(remaining, 0.5 / stiffness)
        a = a + dt * rate
        remaining -= dt
        substeps += 1

        dying = a <= config.a_min
        if np.any(dying):
            for i in idx[dying]:
                logger.info("Atom %d absorbed at zero mass", i)
            a[dying] = 0.0
            alive[idx[dying]] = False
            if not np.any(alive):
                raise AllAtomsDeadError()
        weights[idx] = a
        weights[alive] /= float(np.sum(weights[alive]))
        if substeps >= _MAX_WEIGHT_SUBSTEPS:
            raise NumericalError("weight update did not finish its step")

    weights[~alive] = 0.0
    weights[alive] /= float(np.sum(weights[alive]))
    return weights, alive


def splitting_step(state: SimState, config: SimulationConfig) -> SimState:
    """Advance ``state`` by one macro step of length ``config.tau``.

    Raises:
        AllAtomsDeadError: If every atom is absorbed.
        NumericalError: If a solve or the density update fails, or mass drifts.
    """
    tau = config.tau
    atoms = state.atoms
    positions, clamps = _move_atoms(state, config)

    weights, alive = atoms.weights, atoms.alive
    if config.mode == "full":
        weights, alive = _evolve_weights(atoms, state.tess.potentials, config)
    moved = atoms.replace(positions=positions, weights=weights, alive=alive)

    unchanged = (
        np.array_equal(moved.positions, atoms.positions)
        and np.array_equal(moved.weights, atoms.weights)
        and np.array_equal(moved.alive, atoms.alive)
    )
    tess = state.tess
    if not unchanged:
        tess = _solve(state.density, moved, config, state.tess.potentials)

    density = state.density
    if config.mode != "lloyd":
        velocity = face_velocities(density.grid, moved, tess)
        density = step_density(
            density, config.diffusion_law(), velocity, tau, config.cfl_safety
        )
        tess = _solve(density, moved, config, tess.potentials)

    return SimState(
        time=state.time + tau,
        step=state.step + 1,
        density=density,
        atoms=moved,
        tess=tess,
        clamp_events=state.clamp_events + clamps,
    )


def energy(
    state: SimState,
    diffusion: DiffusionLaw | None,
    mass_law: MassCostLaw | None,
) -> EnergyBreakdown:
    """Energy F(rho) + G(mu) + 1/2 W_2^2(rho, mu) and the state diagnostics.

    A ``None`` law drops its term (frozen density or frozen weights).
    """
    density, atoms, tess = state.density, state.atoms, state.tess
    alive = atoms.alive

    internal = internal_energy(density, diffusion) if diffusion is not None else 0.0
    mass_cost = (
        float(np.sum(mass_law.value(atoms.weights[alive])))
        if mass_law is not None
        else 0.0
    )
    transport = transport_cost(density, atoms, tess)

    filled = alive & ~tess.empty
    gaps = atoms.positions[filled] - tess.barycenters[filled]
    max_gap = float(np.max(np.hypot(gaps[:, 0], gaps[:, 1]))) if gaps.size else 0.0

    atom_pairs = pdist(atoms.positions[alive]) if atoms.n_alive > 1 else None
    bary_pairs = pdist(tess.barycenters[filled]) if np.sum(filled) > 1 else None

    return EnergyBreakdown(
        internal=internal,
        mass_cost=mass_cost,
        transport=transport,
        total=internal + mass_cost + transport,
        max_dist_to_barycenter=max_gap,
        min_pairwise_atom_dist=(
            float(atom_pairs.min()) if atom_pairs is not None else None
        ),
        min_pairwise_barycenter_dist=(
            float(bary_pairs.min()) if bary_pairs is not None else None
        ),
        mass_error=abs(total_mass(density) - 1.0),
        linf_density=float(np.max(density.values)),
    )


def gibbs_profile(grid: Grid, atoms: AtomSet, tess: Tessellation) -> Density:
    """Normalized exp(-Phi) with Phi the Kantorovich potential of ``tess``."""
    phi, _ = potential_field(grid, atoms, tess)
    values = np.exp(-(phi - float(np.min(phi))))
    return Density.from_values(grid, values)


def l1_distance(first: Density, second: Density) -> float:
    """L^1 distance between two densities on the same grid."""
    if first.grid != second.grid:
        raise ValueError("densities live on different grids")
    return float(np.sum(np.abs(first.values - second.values))) * first.grid.cell_area


def run_simulation(
    config: SimulationConfig,
    state: SimState,
    callback: Callable[[SimState], None] | None = None,
) -> SimState:
    """Apply ``config.steps`` splitting steps, calling ``callback`` after each."""
    for _ in range(config.steps):
        state = splitting_step(state, config)
        logger.debug(
            "step %d t=%.4f alive=%d residual=%.2e",
            state.step,
            state.time,
            state.atoms.n_alive,
            state.tess.residual,
        )
        if callback is not None:
            callback(state)
    return state
