"""Data models for dynquant."""

from src.models.config import InitAtoms, InitDensity, Mode, SimulationConfig
from src.models.diagnostics import (
    JKO_SERIES_COLUMNS,
    METRICS_COLUMNS,
    SERIES_COLUMNS,
    CrystallizationMetrics,
    DiagnosticsRow,
    RunSummary,
)

__all__ = [
    "JKO_SERIES_COLUMNS",
    "METRICS_COLUMNS",
    "SERIES_COLUMNS",
    "CrystallizationMetrics",
    "DiagnosticsRow",
    "InitAtoms",
    "InitDensity",
    "Mode",
    "RunSummary",
    "SimulationConfig",
]
