"""Service that runs the 1D minimizing-movement oracle."""

import logging

import numpy as np

from src.errors import ConfigError
from src.models.config import SimulationConfig
from src.models.diagnostics import RunSummary
from src.numerics.jko1d import (
    Atoms1D,
    Density1D,
    JkoRecord,
    JkoTrajectory,
    jko_run,
)
from src.services.config_service import ConfigService
from src.services.snapshot_service import (
    SeriesWriter,
    SnapshotService,
    read_atoms_1d_csv,
    read_density_csv,
)

logger = logging.getLogger(__name__)

# Atoms are kept this far from the ends of [0, 1].
ATOM_MARGIN = 0.05


def sample_atoms_1d(n_atoms: int, rng: np.random.Generator) -> Atoms1D:
    """Sorted uniform atoms in [margin, 1 - margin], spaced at least 0.5 / N."""
    if n_atoms == 0:
        return Atoms1D.uniform(np.zeros(0))
    min_gap = 0.5 / n_atoms
    span = 1.0 - 2.0 * ATOM_MARGIN
    if min_gap * (n_atoms - 1) > span:
        raise ConfigError(f"cannot place {n_atoms} atoms on the unit interval")
    for _ in range(1000):
        points = np.sort(rng.uniform(ATOM_MARGIN, 1.0 - ATOM_MARGIN, n_atoms))
        if n_atoms == 1 or float(np.min(np.diff(points))) >= min_gap:
            return Atoms1D.uniform(points)
    # Dense requests: evenly spaced with a random shift.
    offset = rng.uniform(0.0, span - min_gap * (n_atoms - 1))
    return Atoms1D.uniform(ATOM_MARGIN + offset + min_gap * np.arange(n_atoms))


class JkoService:
    """Builds the 1D problem from a config and writes the staircase trajectory."""

    def __init__(self, config: SimulationConfig) -> None:
        """Initialize the JKO service.

        Args:
            config: A validated configuration; ``jko_nx``, ``tau``, ``alpha``
                and the diffusion law are used, ``cy`` of a gaussian is ignored.
        """
        self.config = config
        self.snapshots = SnapshotService(config.out_dir)

    def initial_density(self) -> Density1D:
        source = self.config.init_density
        n = self.config.jko_nx
        if source.kind == "gaussian":
            x = (np.arange(n) + 0.5) / n
            return Density1D.from_values(
                np.exp(-((x - source.cx) ** 2) / (2.0 * source.sigma**2))
            )
        if source.kind == "file":
            assert source.path is not None
            try:
                return Density1D.from_values(read_density_csv(source.path).ravel())
            except (OSError, ValueError) as err:
                raise ConfigError(f"init_density: {err}") from err
        return Density1D.uniform(n)

    def initial_atoms(self) -> Atoms1D:
        source = self.config.init_atoms
        if source.kind == "file":
            assert source.path is not None
            try:
                return read_atoms_1d_csv(source.path)
            except (OSError, ValueError) as err:
                raise ConfigError(f"init_atoms: {err}") from err
        rng = np.random.default_rng(self.config.seed)
        return sample_atoms_1d(self.config.n_atoms, rng)

    def run(self) -> tuple[RunSummary, JkoTrajectory]:
        """Run the oracle and write ``jko_series.csv`` plus one file per step."""
        config = self.config
        self.snapshots.prepare()
        ConfigService().write_json(config, config.out_dir)
        series = SeriesWriter.jko_series(config.out_dir)

        def emit(
            step: int, density: Density1D, atoms: Atoms1D, record: JkoRecord
        ) -> None:
            series.append_jko(record)
            self.snapshots.write_snapshot_1d(step, density, atoms)

        p0, x0 = self.initial_density(), self.initial_atoms()
        trajectory = jko_run(
            p0,
            x0,
            tau=config.tau,
            steps=config.steps,
            law=config.diffusion_law(),
            alpha=config.alpha,
            inner_tol=config.jko_inner_tol,
            inner_max_iter=config.jko_inner_max_iter,
            callback=emit,
        )
        last = trajectory.records[-1]
        if last.cumulative_distance_sq > trajectory.distance_budget:
            logger.warning(
                "Summed step lengths %.3e exceed 2 E_0 tau = %.3e",
                last.cumulative_distance_sq,
                trajectory.distance_budget,
            )
        summary = RunSummary(
            steps=last.step,
            frames=len(trajectory.records),
            out_dir=str(config.out_dir),
            final_energy=last.energy,
            alive_count=x0.n_atoms,
            distance_sq_total=last.cumulative_distance_sq,
            distance_budget=trajectory.distance_budget,
        )
        return summary, trajectory
