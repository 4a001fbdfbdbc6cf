"""Shared test configuration and fixtures."""

import os
import tempfile
from collections.abc import Callable, Iterator
from pathlib import Path

import numpy as np
import pytest

from src.numerics.grid import Grid
from src.numerics.sdot import AtomSet

# Single-threaded k-d tree queries.
os.environ.setdefault("DYNQUANT_THREADS", "1")


@pytest.fixture
def temp_dir() -> Iterator[Path]:
    """Create a temporary directory for testing."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def grid32() -> Grid:
    """A 32 x 32 grid on the unit square."""
    return Grid(nx=32, ny=32)


@pytest.fixture
def two_atoms() -> AtomSet:
    """Two atoms on the horizontal midline with weights 0.62 and 0.38."""
    return AtomSet(
        positions=np.array([[0.25, 0.5], [0.75, 0.5]]),
        weights=np.array([0.62, 0.38]),
        alive=np.ones(2, dtype=bool),
    )


@pytest.fixture
def write_config(temp_dir: Path) -> Callable[[str], Path]:
    """Return a helper writing configuration text to a file in temp_dir."""

    def write(text: str) -> Path:
        path = temp_dir / "run.cfg"
        path.write_text(text, encoding="utf-8")
        return path

    return write
