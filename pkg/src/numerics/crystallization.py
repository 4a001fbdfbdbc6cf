"""Lattice-order metrics for atom configurations."""

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from src.models.diagnostics import CrystallizationMetrics
from src.numerics.grid import FloatArray
from src.numerics.sdot import AtomSet
from src.utils import get_worker_count

NEIGHBOURS = 6


def _interior_mask(points: FloatArray) -> np.ndarray:
    """Points that are not vertices of the convex hull (all, if degenerate)."""
    try:
        hull = ConvexHull(points)
    except QhullError:
        return np.ones(points.shape[0], dtype=bool)
    mask = np.ones(points.shape[0], dtype=bool)
    mask[hull.vertices] = False
    if not np.any(mask):
        mask[:] = True
    return mask


def hexatic_order(points: FloatArray) -> FloatArray:
    """|mean_k exp(6 i theta_k)| over the six nearest neighbours of each point."""
    k = min(NEIGHBOURS, points.shape[0] - 1)
    tree = cKDTree(points)
    _, found = tree.query(points, k=k + 1, workers=get_worker_count())
    neighbours = points[found[:, 1:]]
    offset = neighbours - points[:, None, :]
    bearing = np.arctan2(offset[..., 1], offset[..., 0])
    return np.abs(np.mean(np.exp(6j * bearing), axis=1))


def crystallization_metrics(atoms: AtomSet) -> CrystallizationMetrics:
    """Nearest-neighbour spread and hexatic order of the alive atoms.

    Hexatic order is averaged over atoms off the convex hull, whose neighbour
    shells are complete. Fewer than three alive atoms leave every metric unset.
    """
    points = atoms.positions[atoms.alive]
    if points.shape[0] < 3:
        return CrystallizationMetrics()

    tree = cKDTree(points)
    distances, _ = tree.query(points, k=2, workers=get_worker_count())
    nearest = distances[:, 1]
    nn_mean = float(np.mean(nearest))
    nn_cv = float(np.std(nearest) / nn_mean) if nn_mean > 0.0 else 0.0

    order = hexatic_order(points)
    hex_order = float(np.mean(order[_interior_mask(points)]))
    return CrystallizationMetrics(nn_mean=nn_mean, nn_cv=nn_cv, hex_order=hex_order)
