"""Service for rendering snapshot frames to PNG."""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageOps

from src.models.config import SimulationConfig
from src.numerics.grid import FloatArray, Grid
from src.numerics.sdot import assign_cells
from src.services.config_service import ConfigService
from src.services.snapshot_service import SnapshotService
from src.utils import get_pool_size

logger = logging.getLogger(__name__)

FRAME_DIR = "frames"
# Dark-to-light ramp with monotone luminance.
COLOR_LOW = "#000004"
COLOR_MID = "#b73779"
COLOR_HIGH = "#fcfdbf"
BOUNDARY_COLOR = (255, 255, 255)
ATOM_COLOR = (40, 170, 255)


class RenderService:
    """Renders density, Laguerre boundaries and atoms of stored frames."""

    def __init__(self, run_dir: Path, config: SimulationConfig | None = None) -> None:
        """Initialize the render service.

        Args:
            run_dir: Directory written by a simulation run.
            config: Run configuration; read from ``config.json`` when omitted.
        """
        self.run_dir = run_dir
        self.config = config or ConfigService().read_json(run_dir)
        self.grid: Grid = self.config.grid()
        self.snapshots = SnapshotService(run_dir)

    def value_range(self, frames: list[int] | None = None) -> tuple[float, float]:
        """Minimum and maximum density over the given (default: all) frames."""
        frames = self.snapshots.list_frames() if frames is None else frames
        low, high = np.inf, -np.inf
        for frame in frames:
            values = self.snapshots.read_density(frame, self.grid).values
            low = min(low, float(values.min()))
            high = max(high, float(values.max()))
        return low, high

    def _colorize(self, values: FloatArray, low: float, high: float) -> Image.Image:
        span = high - low
        scaled = (values - low) / span if span > 0.0 else np.zeros_like(values)
        gray = np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)
        # Row 0 is the bottom of the domain.
        image = Image.fromarray(np.flipud(gray))
        return ImageOps.colorize(
            image, black=COLOR_LOW, white=COLOR_HIGH, mid=COLOR_MID
        )

    def render_frame(
        self,
        frame: int,
        scale: int = 4,
        fixed_colormap: bool = False,
        value_range: tuple[float, float] | None = None,
        output: Path | None = None,
    ) -> Path:
        """Render one frame to ``frames/frame_XXXXXX.png``.

        Args:
            frame: Frame number.
            scale: Integer pixels per grid cell.
            fixed_colormap: Scale colors by the min/max over all frames instead
                of this frame alone.
            value_range: Precomputed range for fixed scaling.
            output: Target file (defaults to the frames directory).

        Returns:
            Path of the written PNG.

        Raises:
            FileNotFoundError: If the frame does not exist.
        """
        if scale < 1:
            raise ValueError("scale must be a positive integer")
        density = self.snapshots.read_density(frame, self.grid)
        table = self.snapshots.read_atoms(frame)
        atoms = table.atoms

        if fixed_colormap:
            low, high = value_range or self.value_range()
        else:
            low, high = float(density.values.min()), float(density.values.max())
        image = self._colorize(density.values, low, high)
        width, height = self.grid.nx * scale, self.grid.ny * scale
        image = image.resize((width, height), Image.Resampling.NEAREST)

        if atoms.n_alive:
            potentials = np.nan_to_num(table.potentials, nan=0.0)
            labels = np.flipud(assign_cells(self.grid, atoms, potentials))
            pixels = np.repeat(np.repeat(labels, scale, axis=0), scale, axis=1)
            edge = np.zeros(pixels.shape, dtype=bool)
            edge[:, 1:] |= pixels[:, 1:] != pixels[:, :-1]
            edge[1:, :] |= pixels[1:, :] != pixels[:-1, :]
            canvas = np.asarray(image).copy()
            canvas[edge] = BOUNDARY_COLOR
            image = Image.fromarray(canvas)

            draw = ImageDraw.Draw(image)
            domain = self.grid.domain
            radius = max(1.0, 0.75 * scale)
            for x, y in atoms.positions[atoms.alive]:
                px = (x - domain.x_min) / self.grid.hx * scale
                py = (domain.y_max - y) / self.grid.hy * scale
                draw.ellipse(
                    (px - radius, py - radius, px + radius, py + radius),
                    fill=ATOM_COLOR,
                )

        target = output or self.run_dir / FRAME_DIR / f"frame_{frame:06d}.png"
        target.parent.mkdir(parents=True, exist_ok=True)
        image.save(target, format="PNG")
        logger.debug("Rendered frame %d to %s", frame, target)
        return target

    def render_all(self, scale: int = 4, fixed_colormap: bool = False) -> list[Path]:
        """Render every stored frame on a thread pool."""
        frames = self.snapshots.list_frames()
        value_range = self.value_range(frames) if fixed_colormap else None
        with ThreadPoolExecutor(max_workers=get_pool_size()) as pool:
            return list(
                pool.map(
                    lambda frame: self.render_frame(
                        frame, scale, fixed_colormap, value_range
                    ),
                    frames,
                )
            )
