"""Tests for the render service."""

from pathlib import Path

import pytest
from PIL import Image

from src.errors import ConfigError
from src.services.config_service import ConfigService
from src.services.render_service import FRAME_DIR, RenderService
from src.services.simulation_service import SimulationService


@pytest.fixture
def run_dir(temp_dir: Path) -> Path:
    """Write a two-frame run on a 12 x 9 grid."""
    out = temp_dir / "run"
    config = ConfigService().parse(
        "mode = quantization\nnx = 12\nny = 9\nn_atoms = 2\n"
        f"steps = 1\nsnapshot_every = 1\nout_dir = {out}\n"
    )
    SimulationService(config).run()
    return out


class TestRenderService:
    """Tests for PNG rendering."""

    def test_frame_size(self, run_dir: Path) -> None:
        """Test that each grid cell becomes scale x scale pixels."""
        path = RenderService(run_dir).render_frame(0, scale=3)
        assert path == run_dir / FRAME_DIR / "frame_000000.png"
        with Image.open(path) as image:
            assert image.size == (36, 27)
            assert image.mode == "RGB"

    def test_render_all_fixed_colormap(self, run_dir: Path) -> None:
        """Test rendering every frame on one color scale."""
        service = RenderService(run_dir)
        low, high = service.value_range()
        assert low <= high
        paths = service.render_all(scale=2, fixed_colormap=True)
        assert [path.name for path in paths] == [
            "frame_000000.png",
            "frame_000001.png",
        ]

    def test_custom_output(self, run_dir: Path, temp_dir: Path) -> None:
        """Test writing to an explicit file."""
        target = temp_dir / "out/picture.png"
        assert RenderService(run_dir).render_frame(1, output=target) == target
        assert target.exists()

    def test_missing_frame(self, run_dir: Path) -> None:
        """Test that an absent frame raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            RenderService(run_dir).render_frame(9)

    def test_invalid_scale(self, run_dir: Path) -> None:
        """Test that the scale must be positive."""
        with pytest.raises(ValueError, match="scale"):
            RenderService(run_dir).render_frame(0, scale=0)

    def test_missing_config(self, temp_dir: Path) -> None:
        """Test that a directory without config.json is rejected."""
        with pytest.raises(ConfigError, match="config.json"):
            RenderService(temp_dir)
