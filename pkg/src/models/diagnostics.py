"""Pydantic records for emitted diagnostics."""

from pydantic import BaseModel, Field

SERIES_COLUMNS: tuple[str, ...] = (
    "step",
    "time",
    "energy_total",
    "energy_internal",
    "energy_mass",
    "energy_transport",
    "max_dist_to_barycenter",
    "min_pairwise_atom_dist",
    "min_pairwise_barycenter_dist",
    "mass_error",
    "linf_density",
    "alive_count",
    "clamp_events",
    "gibbs_l1_distance",
)

JKO_SERIES_COLUMNS: tuple[str, ...] = (
    "step",
    "time",
    "energy_total",
    "energy_internal",
    "energy_transport",
    "distance_sq",
    "cumulative_distance_sq",
    "lp2",
    "lp2_bound",
    "lp4",
    "lp4_bound",
    "inner_iterations",
)

METRICS_COLUMNS: tuple[str, ...] = ("frame", "step", "nn_mean", "nn_cv", "hex_order")


class DiagnosticsRow(BaseModel):
    """One line of ``series.csv``; optional fields are written empty."""

    step: int = Field(..., ge=0)
    time: float
    energy_total: float
    energy_internal: float
    energy_mass: float
    energy_transport: float
    max_dist_to_barycenter: float
    min_pairwise_atom_dist: float | None = None
    min_pairwise_barycenter_dist: float | None = None
    mass_error: float
    linf_density: float
    alive_count: int = Field(..., ge=0)
    clamp_events: int = Field(..., ge=0)
    gibbs_l1_distance: float


class CrystallizationMetrics(BaseModel):
    """Nearest-neighbour statistics and hexatic order of an atom pattern."""

    nn_mean: float | None = None
    nn_cv: float | None = None
    hex_order: float | None = None

    @property
    def defined(self) -> bool:
        return self.hex_order is not None


class RunSummary(BaseModel):
    """What a finished run reports back to the CLI."""

    steps: int
    frames: int
    out_dir: str
    final_energy: float
    alive_count: int
    clamp_events: int = 0
    energy_violations: int = Field(
        default=0, description="Steps whose energy rose by more than the slack"
    )
    crystallization: CrystallizationMetrics = Field(
        default_factory=CrystallizationMetrics
    )
    distance_sq_total: float | None = Field(
        default=None, description="Summed squared JKO step lengths"
    )
    distance_budget: float | None = Field(
        default=None, description="Bound 2 E_0 tau on the summed step lengths"
    )
