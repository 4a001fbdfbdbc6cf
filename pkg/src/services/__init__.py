"""Services that drive runs and read or write their files."""

from src.services.config_service import ConfigService
from src.services.jko_service import JkoService
from src.services.render_service import RenderService
from src.services.selftest_service import SelftestService
from src.services.simulation_service import SimulationService
from src.services.snapshot_service import SnapshotService

__all__ = [
    "ConfigService",
    "JkoService",
    "RenderService",
    "SelftestService",
    "SimulationService",
    "SnapshotService",
]
