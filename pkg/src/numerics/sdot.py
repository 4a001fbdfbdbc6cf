"""Semi-discrete optimal transport between a grid density and atoms.

The Laguerre cell of atom i collects the grid cells whose center x_c minimizes
1/2 |x_c - x_i|^2 - psi_i over the alive atoms. Potentials are found by
damped Newton ascent on the concave Kantorovich dual

    D(psi) = sum_i a_i psi_i + sum_c rho_c |c| min_i (1/2 |x_c - x_i|^2 - psi_i),

whose gradient in psi_i is a_i - rho(Lag_i).

All per-atom arrays are indexed by global atom index. Dead atoms carry a NaN
potential and barycenter, zero mass, and never own cells.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.spatial import cKDTree

from src.errors import EmptyMeasureError, NumericalError, SolverStalledError
from src.numerics.grid import Density, FloatArray, Grid, floored
from src.utils import get_worker_count

logger = logging.getLogger(__name__)

IntArray = NDArray[np.int64]
BoolArray = NDArray[np.bool_]

# Below this many sites the argmin is evaluated densely.
_DENSE_SITE_LIMIT = 16
# Lifted-space neighbours re-scored exactly to settle near-ties.
_CANDIDATES = 8
_ARMIJO_C = 1e-4
# Smallest Newton step fraction tried before falling back to gradient ascent.
_NEWTON_FLOOR = 2.0**-12
# Accepted steps without a new best residual before checking for stagnation.
_STALL_WINDOW = 25


@dataclass(frozen=True, eq=False)
class AtomSet:
    """Atomic measure sum_i a_i delta_{x_i} with absorbing alive flags."""

    positions: FloatArray
    weights: FloatArray
    alive: BoolArray

    def __post_init__(self) -> None:
        n = self.positions.shape[0]
        if self.positions.shape != (n, 2):
            raise ValueError("positions must have shape (N, 2)")
        if self.weights.shape != (n,) or self.alive.shape != (n,):
            raise ValueError("weights and alive must have shape (N,)")

    @classmethod
    def uniform(cls, positions: FloatArray) -> AtomSet:
        """Alive atoms with equal weights 1/N."""
        points = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
        n = points.shape[0]
        return cls(
            positions=points,
            weights=np.full(n, 1.0 / n) if n else np.zeros(0),
            alive=np.ones(n, dtype=bool),
        )

    @property
    def n_atoms(self) -> int:
        return int(self.positions.shape[0])

    @property
    def alive_indices(self) -> IntArray:
        return np.flatnonzero(self.alive).astype(np.int64)

    @property
    def n_alive(self) -> int:
        return int(np.count_nonzero(self.alive))

    def replace(self, **changes: object) -> AtomSet:
        return dataclasses.replace(self, **changes)  # type: ignore[arg-type]

    def validate(self, tol: float = 1e-12) -> None:
        """Check the simplex, dead-atom and distinctness invariants."""
        if np.any(self.weights < 0.0):
            raise ValueError("atom weights must be nonnegative")
        if np.any(self.weights[~self.alive] != 0.0):
            raise ValueError("dead atoms must have zero weight")
        total = float(np.sum(self.weights[self.alive]))
        if abs(total - 1.0) > tol:
            raise ValueError(f"alive weights sum to {total!r}, expected 1")
        points = self.positions[self.alive]
        if points.shape[0] > 1:
            unique = np.unique(points, axis=0)
            if unique.shape[0] != points.shape[0]:
                raise ValueError("alive atoms must be pairwise distinct")


@dataclass(frozen=True, eq=False)
class Tessellation:
    """Laguerre diagram of a density for given atoms and potentials."""

    labels: IntArray
    potentials: FloatArray
    masses: FloatArray
    barycenters: FloatArray
    empty: BoolArray
    converged: bool
    residual: float
    iterations: int = 0
    dual_value: float = float("nan")


def laguerre_argmin(
    points: FloatArray, sites: FloatArray, psi: FloatArray
) -> IntArray:
    """Index of the site minimizing 1/2 |p - s|^2 - psi for every point.

    Ties go to the lowest site index. Large site sets are searched with a
    k-d tree in lifted coordinates (s, sqrt(2 (max psi - psi))), where the
    Euclidean nearest neighbour of (p, 0) is the Laguerre owner; the few
    nearest candidates are then re-scored exactly.
    """
    n_sites = sites.shape[0]
    if n_sites == 0:
        raise EmptyMeasureError()
    n_points = points.shape[0]
    if n_sites == 1:
        return np.zeros(n_points, dtype=np.int64)

    if n_sites <= _DENSE_SITE_LIMIT:
        candidates = np.broadcast_to(np.arange(n_sites), (n_points, n_sites))
    else:
        lift = np.sqrt(2.0 * (np.max(psi) - psi))
        tree = cKDTree(np.column_stack([sites, lift]))
        query = np.column_stack([points, np.zeros(n_points)])
        k = min(_CANDIDATES, n_sites)
        _, found = tree.query(query, k=k, workers=get_worker_count())
        candidates = np.sort(found, axis=1)

    diff = points[:, None, :] - sites[candidates]
    cost = 0.5 * np.einsum("mkd,mkd->mk", diff, diff) - psi[candidates]
    pick = np.argmin(cost, axis=1)
    return candidates[np.arange(n_points), pick].astype(np.int64)


def assign_cells(grid: Grid, atoms: AtomSet, potentials: FloatArray) -> IntArray:
    """Global index of the alive atom owning each cell, shape ``(ny, nx)``.

    Raises:
        EmptyMeasureError: If no atom is alive.
    """
    alive = atoms.alive_indices
    if alive.size == 0:
        raise EmptyMeasureError()
    local = laguerre_argmin(
        grid.cell_centers(), atoms.positions[alive], potentials[alive]
    )
    return alive[local].reshape(grid.shape)


def cell_masses(density: Density, labels: IntArray, n_atoms: int) -> FloatArray:
    """Density mass of each Laguerre cell (zero for atoms owning nothing)."""
    weights = density.values.ravel() * density.grid.cell_area
    return np.bincount(labels.ravel(), weights=weights, minlength=n_atoms)


def barycenters(
    density: Density, labels: IntArray, atoms: AtomSet
) -> tuple[FloatArray, BoolArray]:
    """Density-weighted centroid of each cell.

    Returns:
        ``(b, empty)``. Empty cells of alive atoms get the sentinel
        ``b_i = x_i`` and are flagged; dead atoms get NaN.
    """
    n = atoms.n_atoms
    grid = density.grid
    flat = labels.ravel()
    values = density.values.ravel()
    centers = grid.cell_centers()
    mass = np.bincount(flat, weights=values, minlength=n)
    sx = np.bincount(flat, weights=values * centers[:, 0], minlength=n)
    sy = np.bincount(flat, weights=values * centers[:, 1], minlength=n)

    empty = atoms.alive & (mass <= 0.0)
    filled = atoms.alive & ~empty
    bary = np.full((n, 2), np.nan)
    bary[filled, 0] = sx[filled] / mass[filled]
    bary[filled, 1] = sy[filled] / mass[filled]
    bary[empty] = atoms.positions[empty]
    return bary, empty


def default_tolerance(density: Density) -> float:
    """Smallest resolvable mass residual: the content of the fullest cell.

    Cell masses are attained in whole pixels, so a residual below one cell
    cannot be guaranteed for every atom at once.
    """
    return max(1e-7, density.grid.cell_area * float(np.max(density.values)))


@dataclass(frozen=True, eq=False)
class _Point:
    """One evaluation of the dual."""

    psi: FloatArray
    local: IntArray
    cost: FloatArray
    masses: FloatArray
    value: float
    grad: FloatArray

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(self.grad)))


class _Dual:
    """Evaluates the Kantorovich dual for fixed density and alive atoms."""

    def __init__(self, density: Density, sites: FloatArray, targets: FloatArray):
        self.grid = density.grid
        self.values = density.values
        self.centers = density.grid.cell_centers()
        self.cell_weights = density.values.ravel() * density.grid.cell_area
        self.sites = sites
        self.targets = targets

    def __call__(self, psi: FloatArray) -> _Point:
        local = laguerre_argmin(self.centers, self.sites, psi)
        diff = self.centers - self.sites[local]
        cost = 0.5 * np.einsum("md,md->m", diff, diff) - psi[local]
        masses = np.bincount(
            local, weights=self.cell_weights, minlength=self.sites.shape[0]
        )
        value = float(np.dot(self.targets, psi) + np.dot(self.cell_weights, cost))
        return _Point(psi, local, cost, masses, value, self.targets - masses)

    def _faces(
        self, labels: IntArray
    ) -> list[tuple[IntArray, IntArray, FloatArray]]:
        """Label pairs and mean densities across every face between two cells."""
        values = self.values
        horizontal = (
            labels[:, :-1],
            labels[:, 1:],
            0.5 * (values[:, :-1] + values[:, 1:]),
        )
        vertical = (
            labels[:-1, :],
            labels[1:, :],
            0.5 * (values[:-1, :] + values[1:, :]),
        )
        return [horizontal, vertical]

    def hessian(self, point: _Point) -> sparse.csr_matrix:
        """Finite-difference Laplacian of the masses in psi over shared faces.

        Each face between cells of atoms i != j contributes
        rho_face |face| |n_axis| / |x_i - x_j|, the staircase estimate of the
        interface integral of rho / |x_i - x_j|.
        """
        n = self.sites.shape[0]
        labels = point.local.reshape(self.grid.shape)
        face_lengths = (self.grid.hy, self.grid.hx)
        rows: list[IntArray] = []
        cols: list[IntArray] = []
        weights: list[FloatArray] = []
        for axis, (left, right, rho_face) in enumerate(self._faces(labels)):
            differ = left != right
            i = left[differ]
            j = right[differ]
            delta = self.sites[j] - self.sites[i]
            dist_sq = np.einsum("kd,kd->k", delta, delta)
            w = rho_face[differ] * face_lengths[axis] * np.abs(delta[:, axis])
            w = w / np.maximum(dist_sq, 1e-300)
            rows.extend([i, j])
            cols.extend([j, i])
            weights.extend([w, w])
        return sparse.coo_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()

    def resolution_layer(self, point: _Point, tol: float) -> FloatArray:
        """Mass each atom can gain or lose when its boundary moves one cell.

        Atoms with cells count the cells on either side of their boundary.
        An empty atom and the owners around it count the cells it would
        capture first, which may be a whole row or column of ties.
        """
        n = self.sites.shape[0]
        labels = point.local.reshape(self.grid.shape)
        cell = self.cell_weights.reshape(self.grid.shape)
        layer = np.zeros(n)
        pairs = (
            (labels[:, :-1], labels[:, 1:], cell[:, :-1], cell[:, 1:]),
            (labels[:-1, :], labels[1:, :], cell[:-1, :], cell[1:, :]),
        )
        for left, right, w_left, w_right in pairs:
            differ = left != right
            both = w_left[differ] + w_right[differ]
            layer += np.bincount(left[differ], weights=both, minlength=n)
            layer += np.bincount(right[differ], weights=both, minlength=n)

        for k in np.flatnonzero(point.masses <= 0.0):
            diff = self.centers - self.sites[k]
            reach = 0.5 * np.einsum("md,md->m", diff, diff) - point.psi[k]
            gap = reach - point.cost
            lowest = float(np.min(gap))
            ties = gap <= lowest + 1e-9 * max(1.0, abs(lowest))
            captured = self.cell_weights[ties]
            layer[k] = max(layer[k], float(np.sum(captured)))
            given = np.bincount(point.local[ties], weights=captured, minlength=n)
            layer = np.maximum(layer, given)
        return np.maximum(layer, max(tol, float(np.max(self.cell_weights))))


def _newton_direction(dual: _Dual, point: _Point) -> FloatArray | None:
    """Ascent direction solving (L + shift) d = grad, or None if L is void."""
    off = dual.hessian(point)
    degree = np.asarray(off.sum(axis=1)).ravel()
    linked = degree > 0.0
    if not np.any(linked):
        return None
    mean_degree = float(np.mean(degree[linked]))
    diagonal = np.where(linked, degree + 1e-6 * mean_degree, mean_degree)
    laplacian = (sparse.diags(diagonal) - off).tocsc()
    grad = point.grad - point.grad.mean()
    direction = np.asarray(spsolve(laplacian, grad), dtype=np.float64)
    if not np.all(np.isfinite(direction)):
        return None
    return direction - direction.mean()


def _line_search(
    dual: _Dual,
    point: _Point,
    direction: FloatArray,
    start: float,
    floor: float,
) -> tuple[_Point, float] | None:
    """Backtrack from ``start`` until the Armijo condition holds."""
    slope = float(np.dot(point.grad, direction))
    if slope <= 0.0:
        return None
    trial = start
    while trial >= floor:
        candidate = point.psi + trial * direction
        nxt = dual(candidate - candidate.mean())
        if nxt.value >= point.value + _ARMIJO_C * trial * slope:
            return nxt, trial
        trial *= 0.5
    return None


def solve_potentials(
    density: Density,
    atoms: AtomSet,
    tol: float | None = None,
    max_iter: int = 2000,
    initial: FloatArray | None = None,
) -> Tessellation:
    """Solve the semi-discrete dual by damped Newton ascent.

    Newton steps use the face-adjacency Laplacian of the Laguerre cells and
    fall back to Barzilai-Borwein gradient steps when that fails. At grid
    resolution the dual is piecewise linear, so the solver stops once the
    best residual has stalled inside every atom's resolution layer.

    Args:
        density: Source density (floored at 1e-12 / cell area before solving).
        atoms: Target atoms; only alive atoms take part.
        tol: Stop once max_i |rho(Lag_i) - a_i| <= tol. ``None`` uses
            :func:`default_tolerance`.
        max_iter: Maximum number of accepted ascent steps.
        initial: Warm-start potentials indexed by global atom index.

    Returns:
        The tessellation of the best iterate, potentials in mean-zero gauge.

    Raises:
        EmptyMeasureError: If no atom is alive.
        SolverStalledError: If the line search fails while some residual
            exceeds that atom's resolution layer.
        NumericalError: If an accepted step lowers the dual.
    """
    alive = atoms.alive_indices
    if alive.size == 0:
        raise EmptyMeasureError()

    rho = floored(density)
    grid = rho.grid
    if tol is None:
        tol = default_tolerance(rho)
    targets = atoms.weights[alive]
    dual = _Dual(rho, atoms.positions[alive], targets)

    psi = np.zeros(alive.size)
    if initial is not None:
        psi = np.nan_to_num(np.asarray(initial, dtype=np.float64)[alive], nan=0.0)
    point = dual(psi - psi.mean())
    best = point
    step = 0.5 / max(float(np.max(rho.values)) * grid.domain.area, 1.0)

    converged = point.residual <= tol
    iterations = 0
    newton_steps = 0
    since_best = 0
    while not converged and iterations < max_iter:
        accepted = None
        direction = _newton_direction(dual, point)
        if direction is not None:
            accepted = _line_search(dual, point, direction, 1.0, _NEWTON_FLOOR)
            if accepted is not None:
                newton_steps += 1
        if accepted is None:
            scale = max(1.0, float(np.max(np.abs(point.psi))))
            floor = 1e-13 * scale / max(point.residual, 1e-300)
            accepted = _line_search(dual, point, point.grad, step, floor)

        if accepted is None:
            excess = np.abs(best.grad) - dual.resolution_layer(best, tol)
            if np.any(excess > 0.0):
                raise SolverStalledError(best.residual)
            logger.debug(
                "Dual ascent reached grid resolution after %d steps "
                "(residual %.3e)",
                iterations,
                best.residual,
            )
            break

        nxt, trial = accepted
        if not nxt.value >= point.value:
            raise NumericalError(
                f"dual ascent step lowered the objective "
                f"({point.value:.6e} -> {nxt.value:.6e})"
            )
        s = nxt.psi - point.psi
        sy = float(np.dot(s, nxt.grad - point.grad))
        step = float(np.dot(s, s)) / -sy if sy < 0.0 else 2.0 * max(trial, step)

        point = nxt
        iterations += 1
        if point.residual < best.residual:
            best = point
            since_best = 0
        else:
            since_best += 1
        converged = best.residual <= tol
        if since_best >= _STALL_WINDOW:
            layer = dual.resolution_layer(best, tol)
            if np.all(np.abs(best.grad) <= layer):
                logger.debug(
                    "Dual ascent stalled at grid resolution after %d steps "
                    "(residual %.3e)",
                    iterations,
                    best.residual,
                )
                break
            since_best = 0

    if not converged and iterations >= max_iter:
        logger.warning(
            "Dual ascent hit max_iter=%d (residual %.3e > tol %.3e)",
            max_iter,
            best.residual,
            tol,
        )
    logger.debug(
        "Dual solve: %d steps (%d Newton), residual %.3e",
        iterations,
        newton_steps,
        best.residual,
    )

    n = atoms.n_atoms
    potentials = np.full(n, np.nan)
    potentials[alive] = best.psi - best.psi.mean()
    labels = alive[best.local].reshape(grid.shape)
    full_masses = np.zeros(n)
    full_masses[alive] = best.masses
    bary, empty = barycenters(rho, labels, atoms)
    return Tessellation(
        labels=labels,
        potentials=potentials,
        masses=full_masses,
        barycenters=bary,
        empty=empty,
        converged=best.residual <= tol,
        residual=best.residual,
        iterations=iterations,
        dual_value=best.value,
    )


def transport_cost(density: Density, atoms: AtomSet, tess: Tessellation) -> float:
    """Kantorovich dual value at ``tess.potentials`` for the given atoms.

    For a converged tessellation this is 1/2 W_2^2(rho, mu). Labels are
    recomputed from ``atoms``, so perturbing positions with the potentials held
    fixed evaluates the envelope whose gradient is :func:`atom_gradient`.
    """
    alive = atoms.alive_indices
    if alive.size == 0:
        raise EmptyMeasureError()
    psi = tess.potentials[alive]
    dual = _Dual(density, atoms.positions[alive], atoms.weights[alive])
    return dual(psi).value


def atom_gradient(atoms: AtomSet, tess: Tessellation) -> FloatArray:
    """Gradient of 1/2 W_2^2 in each position: m_i (x_i - b_i), zero when dead."""
    grad = np.zeros_like(atoms.positions)
    alive = atoms.alive
    grad[alive] = tess.masses[alive, None] * (
        atoms.positions[alive] - tess.barycenters[alive]
    )
    return grad


def potential_field(
    grid: Grid, atoms: AtomSet, tess: Tessellation
) -> tuple[FloatArray, FloatArray]:
    """Kantorovich potential Phi and its gradient x - x_label on cell centers.

    Returns:
        ``(phi, grad_phi)`` with shapes ``(ny, nx)`` and ``(ny, nx, 2)``.
    """
    centers = grid.cell_centers()
    flat = tess.labels.ravel()
    offset = centers - atoms.positions[flat]
    phi = 0.5 * np.einsum("md,md->m", offset, offset) - tess.potentials[flat]
    return phi.reshape(grid.shape), offset.reshape(grid.ny, grid.nx, 2)
