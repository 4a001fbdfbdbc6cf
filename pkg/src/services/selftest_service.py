"""Built-in oracle checks run by ``dynquant selftest``."""

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from src.errors import ConfigError
from src.numerics.grid import Density, DiffusionLaw, Grid, total_mass, uniform_density
from src.numerics.jko1d import Atoms1D, Density1D, semidiscrete_1d, w2_1d
from src.numerics.pde import FaceVelocity, step_density
from src.numerics.sdot import AtomSet, atom_gradient, solve_potentials, transport_cost
from src.services.config_service import ConfigService

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _two_atom_bisector() -> tuple[bool, str]:
    grid = Grid(nx=64, ny=64)
    atoms = AtomSet(
        positions=np.array([[0.25, 0.5], [0.75, 0.5]]),
        weights=np.array([0.62, 0.38]),
        alive=np.ones(2, dtype=bool),
    )
    tess = solve_potentials(uniform_density(grid), atoms)
    psi = tess.potentials
    ok = abs(psi[0] - 0.03) <= 1.0 / 64 and abs(psi[1] + 0.03) <= 1.0 / 64
    return ok, f"psi = ({psi[0]:.4f}, {psi[1]:.4f})"


def _centered_cost() -> tuple[bool, str]:
    grid = Grid(nx=64, ny=64)
    density = uniform_density(grid)
    atoms = AtomSet.uniform(np.array([[0.5, 0.5]]))
    cost = transport_cost(density, atoms, solve_potentials(density, atoms))
    return abs(cost - 1.0 / 12.0) <= 1e-3, f"cost = {cost:.6f}"


def _gradient_check() -> tuple[bool, str]:
    grid = Grid(nx=64, ny=64)
    density = uniform_density(grid)
    atoms = AtomSet.uniform(np.array([[0.3, 0.4], [0.7, 0.6]]))
    tess = solve_potentials(density, atoms)
    grad = atom_gradient(atoms, tess)[0]
    step = 1e-3 * grid.domain.diameter
    slopes = []
    for axis in range(2):
        shift = np.zeros_like(atoms.positions)
        shift[0, axis] = step
        forward = atoms.replace(positions=atoms.positions + shift)
        backward = atoms.replace(positions=atoms.positions - shift)
        plus = transport_cost(density, forward, tess)
        minus = transport_cost(density, backward, tess)
        slopes.append((plus - minus) / (2.0 * step))
    error = float(np.linalg.norm(np.array(slopes) - grad) / np.linalg.norm(grad))
    return error <= 1e-2, f"relative error {error:.2e}"


def _heat_eigenmode() -> tuple[bool, str]:
    grid = Grid(nx=32, ny=32)
    x = grid.x_centers()
    mode = np.cos(np.pi * x)
    values = np.tile(1.0 + 0.1 * mode, (grid.ny, 1))
    horizon = 0.02
    out = step_density(
        Density(grid, values), DiffusionLaw(), FaceVelocity.zeros(grid), horizon
    )
    amplitude = float(np.dot(out.values[0] - 1.0, mode) / np.dot(mode, mode))
    ratio = amplitude / 0.1 / math.exp(-math.pi**2 * horizon)
    return abs(ratio - 1.0) <= 0.02, f"decay ratio / exact = {ratio:.4f}"


def _mass_conservation() -> tuple[bool, str]:
    grid = Grid(nx=24, ny=24)
    rng = np.random.default_rng(7)
    density = Density.from_values(grid, rng.uniform(0.1, 2.0, grid.shape))
    velocity = FaceVelocity(
        u=rng.uniform(-1.0, 1.0, (grid.ny, grid.nx + 1)),
        v=rng.uniform(-1.0, 1.0, (grid.ny + 1, grid.nx)),
    )
    velocity.u[:, [0, -1]] = 0.0
    velocity.v[[0, -1], :] = 0.0
    out = step_density(density, DiffusionLaw(kind="pme", m=2.0), velocity, 0.01)
    drift = abs(total_mass(out) - total_mass(density))
    ok = drift <= 1e-12 and float(out.values.min()) >= 0.0
    return ok, f"mass drift {drift:.1e}"


def _quantile_shift() -> tuple[bool, str]:
    n = 64
    left = Density1D.from_values(np.r_[np.ones(n // 2), np.zeros(n // 2)])
    right = Density1D.from_values(np.r_[np.zeros(n // 2), np.ones(n // 2)])
    value = w2_1d(left, right)
    return abs(value - 0.25) <= 1e-12, f"W2^2 = {value:.15f}"


def _interval_potentials() -> tuple[bool, str]:
    atoms = Atoms1D(np.array([0.25, 0.75]), np.array([0.62, 0.38]))
    cells = semidiscrete_1d(Density1D.uniform(100), atoms)
    psi = cells.potentials
    ok = abs(cells.breakpoints[1] - 0.62) <= 1e-12 and abs(psi[0] - 0.03) <= 1e-12
    return ok, f"breakpoint {cells.breakpoints[1]:.6f}, psi = {psi[0]:.6f}"


def _config_ranges() -> tuple[bool, str]:
    try:
        ConfigService().parse("g_beta = 1.5\n")
    except ConfigError as err:
        return "g_beta must lie in (0,1)" in str(err), str(err)
    return False, "g_beta = 1.5 accepted"


CHECKS: tuple[tuple[str, Callable[[], tuple[bool, str]]], ...] = (
    ("two-atom bisector", _two_atom_bisector),
    ("centered transport cost", _centered_cost),
    ("atom gradient vs finite differences", _gradient_check),
    ("heat eigenmode decay", _heat_eigenmode),
    ("mass conservation", _mass_conservation),
    ("1D quantile shift", _quantile_shift),
    ("1D interval potentials", _interval_potentials),
    ("config range messages", _config_ranges),
)


class SelftestService:
    """Runs the quick oracle suite."""

    def run(self) -> list[CheckResult]:
        results = []
        for name, check in CHECKS:
            start = time.perf_counter()
            try:
                passed, detail = check()
            except Exception as err:
                logger.exception("Check %r raised", name)
                passed, detail = False, f"{type(err).__name__}: {err}"
            results.append(
                CheckResult(name, passed, detail, time.perf_counter() - start)
            )
        return results
