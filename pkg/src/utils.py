"""Shared utility functions for dynquant."""

import os
from pathlib import Path

THREADS_ENV_VAR = "DYNQUANT_THREADS"


def format_float(value: float) -> str:
    """Format a float so that it parses back to the identical value.

    Seventeen significant digits always round-trip an IEEE double, and the
    fixed format keeps repeated runs byte-identical.

    Args:
        value: The number to format.

    Returns:
        The decimal text, or an empty string for NaN.

    Example:
        >>> format_float(0.1)
        '0.10000000000000001'
        >>> format_float(float("nan"))
        ''
    """
    if value != value:
        return ""
    return f"{value:.17g}"


def parse_float(text: str) -> float:
    """Parse a decimal field written by :func:`format_float`.

    Empty fields are read back as NaN.
    """
    stripped = text.strip()
    if not stripped:
        return float("nan")
    return float(stripped)


def get_worker_count() -> int:
    """Read the parallelism cap from the environment.

    ``DYNQUANT_THREADS=0`` (or an unset/invalid value) means automatic, which
    is reported as ``-1`` - the convention ``scipy.spatial.cKDTree.query``
    uses for "all cores".

    Returns:
        A positive worker count, or -1 for automatic.
    """
    raw = os.getenv(THREADS_ENV_VAR)
    if raw is None:
        return -1
    try:
        value = int(raw)
    except ValueError:
        return -1
    if value <= 0:
        return -1
    return value


def get_pool_size() -> int:
    """Worker count for thread pools (resolves automatic to the CPU count)."""
    workers = get_worker_count()
    if workers > 0:
        return workers
    return os.cpu_count() or 1


def validate_path_in_directory(path: Path, directory: Path) -> bool:
    """Validate that a path is contained within the expected directory.

    Args:
        path: The path to validate.
        directory: The directory that should contain the path.

    Returns:
        True if the path is safely within the directory, False otherwise.

    Example:
        >>> base = Path("/data/run")
        >>> validate_path_in_directory(base / "snapshots" / "density.csv", base)
        True
        >>> validate_path_in_directory(base / "../etc/passwd", base)
        False
    """
    try:
        resolved_path = path.resolve()
        resolved_dir = directory.resolve()
        return resolved_path.is_relative_to(resolved_dir)
    except (ValueError, OSError):
        return False
