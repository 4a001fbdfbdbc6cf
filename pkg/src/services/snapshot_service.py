"""Service for the CSV files a run writes and reads back."""

import csv
import logging
import re
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.models.diagnostics import (
    JKO_SERIES_COLUMNS,
    METRICS_COLUMNS,
    SERIES_COLUMNS,
    CrystallizationMetrics,
    DiagnosticsRow,
)
from src.numerics.grid import Density, FloatArray, Grid
from src.numerics.jko1d import Atoms1D, Density1D, JkoRecord
from src.numerics.sdot import AtomSet, Tessellation
from src.utils import format_float, parse_float, validate_path_in_directory

logger = logging.getLogger(__name__)

ATOM_COLUMNS = ("id", "x", "y", "a", "alive", "psi", "bx", "by")
ATOM_1D_COLUMNS = ("id", "x", "a")
SNAPSHOT_DIR = "snapshots"
SERIES_FILE = "series.csv"
JKO_SERIES_FILE = "jko_series.csv"
METRICS_FILE = "metrics.csv"

_FRAME = re.compile(r"^density_(\d{6})\.csv$")


@dataclass(frozen=True, eq=False)
class AtomTable:
    """Contents of an atoms CSV."""

    atoms: AtomSet
    potentials: FloatArray
    barycenters: FloatArray


def _cell(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool | int | np.integer):
        return str(int(value))
    return format_float(float(value))


def write_density_csv(path: Path, values: FloatArray) -> None:
    """Write a 2D array as comma-separated lines (one line per row)."""
    rows = np.atleast_2d(values)
    lines = [",".join(format_float(float(v)) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_density_csv(path: Path) -> FloatArray:
    """Read a density CSV into a 2D array (a single line gives one row).

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: On ragged rows or non-numeric fields.
    """
    if not path.exists():
        raise FileNotFoundError(f"density file not found: {path}")
    rows = [
        [parse_float(field) for field in line.split(",")]
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not rows:
        raise ValueError(f"empty density file: {path}")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ValueError(f"ragged density file: {path}")
    return np.array(rows, dtype=np.float64)


def load_density(path: Path, grid: Grid) -> Density:
    """Read a density CSV on ``grid`` and rescale it to unit mass."""
    values = read_density_csv(path)
    if values.shape != grid.shape:
        raise ValueError(
            f"density file {path} has shape {values.shape}, grid is {grid.shape}"
        )
    return Density.from_values(grid, values)


def write_atoms_csv(path: Path, atoms: AtomSet, tess: Tessellation | None) -> None:
    """Write the atoms CSV; dead atoms keep position with empty psi and b."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ATOM_COLUMNS)
        for i in range(atoms.n_atoms):
            alive = bool(atoms.alive[i])
            psi = float(tess.potentials[i]) if tess is not None and alive else None
            bx = by = None
            if tess is not None and alive:
                bx, by = (float(v) for v in tess.barycenters[i])
            writer.writerow(
                [
                    i,
                    _cell(float(atoms.positions[i, 0])),
                    _cell(float(atoms.positions[i, 1])),
                    _cell(float(atoms.weights[i]) if alive else 0.0),
                    int(alive),
                    _cell(psi),
                    _cell(bx),
                    _cell(by),
                ]
            )


def read_atoms_csv(path: Path) -> AtomTable:
    """Read an atoms CSV; missing ``a``/``alive`` columns default to uniform.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If ``x`` or ``y`` is missing.
    """
    if not path.exists():
        raise FileNotFoundError(f"atoms file not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        records = list(csv.DictReader(handle))
    if not records or "x" not in records[0] or "y" not in records[0]:
        raise ValueError(f"atoms file {path} needs x and y columns")

    positions = np.array(
        [[parse_float(r["x"]), parse_float(r["y"])] for r in records]
    )
    n = positions.shape[0]
    alive = np.array([r.get("alive", "1").strip() != "0" for r in records])
    if "a" in records[0]:
        weights = np.array([parse_float(r["a"]) for r in records])
    else:
        weights = np.where(alive, 1.0 / max(int(alive.sum()), 1), 0.0)
    weights = np.where(alive, np.nan_to_num(weights), 0.0)

    def column(name: str) -> FloatArray:
        if name not in records[0]:
            return np.full(n, np.nan)
        return np.array([parse_float(r[name]) for r in records])

    return AtomTable(
        atoms=AtomSet(positions=positions, weights=weights, alive=alive),
        potentials=column("psi"),
        barycenters=np.column_stack([column("bx"), column("by")]),
    )


def read_atoms_1d_csv(path: Path) -> Atoms1D:
    """Read sorted 1D atoms from any CSV with ``x`` (and optionally ``a``)."""
    if not path.exists():
        raise FileNotFoundError(f"atoms file not found: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        records = list(csv.DictReader(handle))
    if records and "x" not in records[0]:
        raise ValueError(f"atoms file {path} needs an x column")
    positions = np.array([parse_float(r["x"]) for r in records])
    if records and "a" in records[0]:
        weights = np.array([parse_float(r["a"]) for r in records])
        return Atoms1D(positions, weights / float(np.sum(weights)))
    return Atoms1D.uniform(positions)


class SnapshotService:
    """Owns the on-disk layout of one run directory."""

    def __init__(self, out_dir: Path) -> None:
        """Initialize the snapshot service.

        Args:
            out_dir: Run directory; snapshots go to ``out_dir/snapshots``.
        """
        self.out_dir = out_dir
        self.snapshot_dir = out_dir / SNAPSHOT_DIR

    def prepare(self) -> None:
        self.snapshot_dir.mkdir(parents=True, exist_ok=True)

    def _safe(self, path: Path) -> Path:
        if not validate_path_in_directory(path, self.out_dir):
            raise ValueError(f"path escapes run directory: {path}")
        return path

    def density_path(self, frame: int) -> Path:
        return self._safe(self.snapshot_dir / f"density_{frame:06d}.csv")

    def atoms_path(self, frame: int) -> Path:
        return self._safe(self.snapshot_dir / f"atoms_{frame:06d}.csv")

    def density_1d_path(self, step: int) -> Path:
        return self._safe(self.snapshot_dir / f"density1d_{step:06d}.csv")

    def atoms_1d_path(self, step: int) -> Path:
        return self._safe(self.snapshot_dir / f"atoms1d_{step:06d}.csv")

    def write_snapshot(
        self, frame: int, density: Density, atoms: AtomSet, tess: Tessellation
    ) -> None:
        write_density_csv(self.density_path(frame), density.values)
        write_atoms_csv(self.atoms_path(frame), atoms, tess)

    def read_density(self, frame: int, grid: Grid) -> Density:
        """Read a stored frame without renormalizing it."""
        values = read_density_csv(self.density_path(frame))
        return Density(grid, values.reshape(grid.shape))

    def read_atoms(self, frame: int) -> AtomTable:
        return read_atoms_csv(self.atoms_path(frame))

    def list_frames(self) -> list[int]:
        """Frame numbers present in the snapshot directory, ascending."""
        if not self.snapshot_dir.exists():
            return []
        frames = []
        for entry in self.snapshot_dir.iterdir():
            match = _FRAME.match(entry.name)
            if match is not None:
                frames.append(int(match.group(1)))
        return sorted(frames)

    def write_snapshot_1d(self, step: int, density: Density1D, atoms: Atoms1D) -> None:
        write_density_csv(self.density_1d_path(step), density.values[None, :])
        with self.atoms_1d_path(step).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ATOM_1D_COLUMNS)
            for i in range(atoms.n_atoms):
                x, a = float(atoms.positions[i]), float(atoms.weights[i])
                writer.writerow([i, _cell(x), _cell(a)])

    def read_density_1d(self, step: int) -> Density1D:
        values = read_density_csv(self.density_1d_path(step))
        return Density1D(values.ravel())


class SeriesWriter:
    """Appends rows with a fixed header to a CSV file."""

    def __init__(self, path: Path, columns: Iterable[str]) -> None:
        self.path = path
        self.columns = tuple(columns)
        with path.open("w", newline="", encoding="utf-8") as handle:
            csv.writer(handle, lineterminator="\n").writerow(self.columns)

    def append(self, values: dict[str, float | int | None]) -> None:
        with self.path.open("a", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow([_cell(values.get(name)) for name in self.columns])

    def append_row(self, row: DiagnosticsRow) -> None:
        self.append(row.model_dump())

    def append_metrics(
        self, frame: int, step: int, metrics: CrystallizationMetrics
    ) -> None:
        self.append({"frame": frame, "step": step, **metrics.model_dump()})

    def append_jko(self, record: JkoRecord) -> None:
        self.append(
            {
                "step": record.step,
                "time": record.time,
                "energy_total": record.energy,
                "energy_internal": record.internal,
                "energy_transport": record.transport,
                "distance_sq": record.distance_sq,
                "cumulative_distance_sq": record.cumulative_distance_sq,
                "lp2": record.lp2,
                "lp2_bound": record.lp2_bound,
                "lp4": record.lp4,
                "lp4_bound": record.lp4_bound,
                "inner_iterations": record.inner_iterations,
            }
        )

    @classmethod
    def series(cls, out_dir: Path) -> "SeriesWriter":
        return cls(out_dir / SERIES_FILE, SERIES_COLUMNS)

    @classmethod
    def jko_series(cls, out_dir: Path) -> "SeriesWriter":
        return cls(out_dir / JKO_SERIES_FILE, JKO_SERIES_COLUMNS)

    @classmethod
    def metrics(cls, out_dir: Path) -> "SeriesWriter":
        return cls(out_dir / METRICS_FILE, METRICS_COLUMNS)


def read_series(path: Path) -> list[dict[str, float]]:
    """Read a series CSV back as dictionaries of floats (empty fields are NaN)."""
    with path.open(newline="", encoding="utf-8") as handle:
        return [
            {key: parse_float(value) for key, value in record.items()}
            for record in csv.DictReader(handle)
        ]
