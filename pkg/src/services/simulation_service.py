"""Service that runs a 2D simulation and writes its outputs."""

import logging
import math

import numpy as np

from src.errors import ConfigError, NumericalError
from src.models.config import SimulationConfig
from src.models.diagnostics import DiagnosticsRow, RunSummary
from src.numerics.crystallization import crystallization_metrics
from src.numerics.dynamics import (
    MassCostLaw,
    SimState,
    energy,
    gibbs_profile,
    initial_state,
    l1_distance,
    run_simulation,
    sample_atoms,
)
from src.numerics.grid import Density, DiffusionLaw, gaussian_density, uniform_density
from src.numerics.sdot import AtomSet
from src.services.config_service import ConfigService
from src.services.snapshot_service import (
    SeriesWriter,
    SnapshotService,
    load_density,
    read_atoms_csv,
)

logger = logging.getLogger(__name__)


class SimulationService:
    """Builds the initial state from a config, runs it and emits every file."""

    def __init__(self, config: SimulationConfig) -> None:
        """Initialize the simulation service.

        Args:
            config: A validated configuration in ``full``, ``quantization`` or
                ``lloyd`` mode.
        """
        if config.mode == "jko1d":
            raise ConfigError("jko1d mode runs through the jko1d command")
        self.config = config
        self.grid = config.grid()
        self.snapshots = SnapshotService(config.out_dir)

    @property
    def diffusion(self) -> DiffusionLaw | None:
        """Internal-energy law, absent when the density is frozen."""
        return None if self.config.mode == "lloyd" else self.config.diffusion_law()

    @property
    def mass_law(self) -> MassCostLaw | None:
        """Mass-cost law, present only when weights evolve."""
        return self.config.mass_cost_law() if self.config.mode == "full" else None

    def initial_density(self) -> Density:
        source = self.config.init_density
        if source.kind == "gaussian":
            return gaussian_density(self.grid, source.cx, source.cy, source.sigma)
        if source.kind == "file":
            assert source.path is not None
            try:
                return load_density(source.path, self.grid)
            except (OSError, ValueError) as err:
                raise ConfigError(f"init_density: {err}") from err
        return uniform_density(self.grid)

    def initial_atoms(self) -> AtomSet:
        source = self.config.init_atoms
        if source.kind == "file":
            assert source.path is not None
            try:
                return read_atoms_csv(source.path).atoms
            except (OSError, ValueError) as err:
                raise ConfigError(f"init_atoms: {err}") from err
        rng = np.random.default_rng(self.config.seed)
        return AtomSet.uniform(sample_atoms(self.grid, self.config.n_atoms, rng))

    def initial_state(self) -> SimState:
        return initial_state(self.config, self.initial_density(), self.initial_atoms())

    def diagnostics(self, state: SimState) -> DiagnosticsRow:
        parts = energy(state, self.diffusion, self.mass_law)
        gibbs = gibbs_profile(self.grid, state.atoms, state.tess)
        return DiagnosticsRow(
            step=state.step,
            time=state.time,
            energy_total=parts.total,
            energy_internal=parts.internal,
            energy_mass=parts.mass_cost,
            energy_transport=parts.transport,
            max_dist_to_barycenter=parts.max_dist_to_barycenter,
            min_pairwise_atom_dist=parts.min_pairwise_atom_dist,
            min_pairwise_barycenter_dist=parts.min_pairwise_barycenter_dist,
            mass_error=parts.mass_error,
            linf_density=parts.linf_density,
            alive_count=state.atoms.n_alive,
            clamp_events=state.clamp_events,
            gibbs_l1_distance=l1_distance(state.density, gibbs),
        )

    def run(self, state: SimState | None = None) -> RunSummary:
        """Run ``config.steps`` steps, writing snapshots and diagnostics.

        Returns:
            Summary of the finished run.

        Raises:
            ConfigError: If the initial state cannot be built.
            NumericalError: If a step fails.
        """
        config = self.config
        self.snapshots.prepare()
        ConfigService().write_json(config, config.out_dir)
        series = SeriesWriter.series(config.out_dir)
        metrics = SeriesWriter.metrics(config.out_dir)
        slack = config.energy_slack_factor * config.tau**2

        if state is None:
            state = self.initial_state()
        previous = self.diagnostics(state)
        series.append_row(previous)
        frame = 0
        self.snapshots.write_snapshot(frame, state.density, state.atoms, state.tess)
        metrics.append_metrics(frame, 0, crystallization_metrics(state.atoms))
        alive_before = state.atoms.alive.copy()
        violations = 0
        growth_factor = math.exp(2 * config.tau)

        def emit(current: SimState) -> None:
            nonlocal previous, frame, alive_before, violations
            if np.any(current.atoms.alive & ~alive_before):
                raise NumericalError("a dead atom came back to life")
            alive_before = current.atoms.alive.copy()

            row = self.diagnostics(current)
            series.append_row(row)
            if row.energy_total > previous.energy_total + slack:
                violations += 1
                logger.warning(
                    "Energy rose by %.3e at step %d (slack %.3e)",
                    row.energy_total - previous.energy_total,
                    row.step,
                    slack,
                )
            if row.linf_density > growth_factor * previous.linf_density:
                logger.debug(
                    "max density grew by %.4f at step %d",
                    row.linf_density / previous.linf_density,
                    row.step,
                )
            previous = row

            due = current.step % config.snapshot_every == 0
            if due or current.step == config.steps:
                frame += 1
                self.snapshots.write_snapshot(
                    frame, current.density, current.atoms, current.tess
                )
                metrics.append_metrics(
                    frame, current.step, crystallization_metrics(current.atoms)
                )

        final = run_simulation(config, state, emit)
        logger.info(
            "Finished %d steps: energy %.6e, %d atoms alive",
            final.step,
            previous.energy_total,
            final.atoms.n_alive,
        )
        return RunSummary(
            steps=final.step,
            frames=frame + 1,
            out_dir=str(config.out_dir),
            final_energy=previous.energy_total,
            alive_count=final.atoms.n_alive,
            clamp_events=final.clamp_events,
            energy_violations=violations,
            crystallization=crystallization_metrics(final.atoms),
        )
