"""One-dimensional minimizing-movement oracle on [0, 1].

Densities are piecewise constant on a uniform grid, so their CDFs are piecewise
linear and every transport quantity has a closed form: W_2 between densities
integrates the quantile difference segment by segment, and the semi-discrete
cells of sorted atoms are quantile intervals.

A JKO step minimizes

    J(p, x) = F(p) + 1/2 W_2^2(p, mu_x) + W_2^2(p_k, p) / (2 tau)
              + |x - x_k|^2 / (2 alpha tau)

by alternating an exact x update with entropic mirror descent in p.
``alpha = 0`` freezes the atoms.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from src.errors import InnerStallError, UnsortedAtomsError
from src.numerics.grid import DiffusionLaw, FloatArray

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-12
# Largest |eta * g| fed to exp in a mirror step.
_EXPONENT_CAP = 50.0
_MIN_STEP = 1e-16
_STALL_STATIONARITY = 1e-3


@dataclass(frozen=True, eq=False)
class Density1D:
    """Piecewise-constant density on n equal cells of [0, 1]."""

    values: FloatArray

    def __post_init__(self) -> None:
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("1D density needs a nonempty vector of cell values")

    @classmethod
    def from_values(cls, values: FloatArray, normalize: bool = True) -> Density1D:
        array = np.array(values, dtype=np.float64).ravel()
        if normalize:
            mass = float(np.sum(array)) / array.size
            if mass <= 0.0:
                raise ValueError("density must have positive mass")
            array = array / mass
        return cls(array)

    @classmethod
    def uniform(cls, n: int) -> Density1D:
        return cls(np.ones(n))

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def edges(self) -> FloatArray:
        return np.arange(self.n + 1) * self.h

    def centers(self) -> FloatArray:
        return (np.arange(self.n) + 0.5) * self.h

    @cached_property
    def cell_masses(self) -> FloatArray:
        return self.values * self.h

    @cached_property
    def cdf(self) -> FloatArray:
        """CDF at the n + 1 cell edges."""
        return np.concatenate([[0.0], np.cumsum(self.cell_masses)])

    @cached_property
    def mass(self) -> float:
        return float(np.sum(self.values)) * self.h

    def cdf_at(self, x: FloatArray) -> FloatArray:
        """F_p at arbitrary points of [0, 1]."""
        cell = np.clip(np.floor(x / self.h).astype(np.int64), 0, self.n - 1)
        return self.cdf[cell] + self.values[cell] * (x - cell * self.h)

    def quantile(self, s: FloatArray) -> FloatArray:
        """F_p^{-1}(s) for s in (0, 1], taking the left end of flat stretches."""
        cell = np.searchsorted(self.cdf, s, side="left") - 1
        cell = np.clip(cell, 0, self.n - 1)
        mass = self.cell_masses[cell]
        safe = np.where(mass > 0.0, mass, 1.0)
        fraction = np.where(mass > 0.0, (s - self.cdf[cell]) / safe, 0.0)
        return (cell + fraction) * self.h


@dataclass(frozen=True, eq=False)
class Atoms1D:
    """Strictly increasing atoms in (0, 1) with simplex weights."""

    positions: FloatArray
    weights: FloatArray

    def __post_init__(self) -> None:
        if self.positions.shape != self.weights.shape or self.positions.ndim != 1:
            raise ValueError("positions and weights must be matching vectors")
        if np.any(np.diff(self.positions) <= 0.0):
            raise UnsortedAtomsError()

    @classmethod
    def uniform(cls, positions: FloatArray) -> Atoms1D:
        points = np.asarray(positions, dtype=np.float64).ravel()
        n = points.size
        return cls(points, np.full(n, 1.0 / n) if n else np.zeros(0))

    @property
    def n_atoms(self) -> int:
        return int(self.positions.size)


@dataclass(frozen=True, eq=False)
class SemiDiscrete1D:
    """Monotone transport from a density to sorted atoms.

    ``breakpoints`` has N + 1 entries: 0, the N - 1 interfaces, and 1.
    """

    cost: float
    breakpoints: FloatArray
    barycenters: FloatArray
    potentials: FloatArray
    masses: FloatArray


def w2_1d(p: Density1D, q: Density1D) -> float:
    """Squared Wasserstein distance from the exact quantile functions.

    On every segment between merged CDF levels both quantiles are affine, so
    the integral of their squared difference is L (d_a^2 + d_a d_b + d_b^2) / 3.
    """
    levels = np.unique(np.concatenate([p.cdf, q.cdf]).clip(0.0, 1.0))
    lo, hi = levels[:-1], levels[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return 0.0

    def endpoints(d: Density1D) -> tuple[FloatArray, FloatArray]:
        mid = 0.5 * (lo + hi)
        cell = np.clip(np.searchsorted(d.cdf, mid, side="right") - 1, 0, d.n - 1)
        mass = d.cell_masses[cell]
        inverse = np.where(mass > 0.0, 1.0 / np.where(mass > 0.0, mass, 1.0), 0.0)
        left = (cell + (lo - d.cdf[cell]) * inverse) * d.h
        return left, left + (hi - lo) * inverse * d.h

    p_lo, p_hi = endpoints(p)
    q_lo, q_hi = endpoints(q)
    da = p_lo - q_lo
    db = p_hi - q_hi
    return float(np.sum((hi - lo) * (da * da + da * db + db * db) / 3.0))


class _Moments:
    """Antiderivatives of p, x p and x^2 p at arbitrary points."""

    def __init__(self, p: Density1D):
        self.p = p
        edges = p.edges()
        self.c0 = p.cdf
        self.c1 = np.concatenate(
            [[0.0], np.cumsum(p.values * (edges[1:] ** 2 - edges[:-1] ** 2) / 2.0)]
        )
        self.c2 = np.concatenate(
            [[0.0], np.cumsum(p.values * (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0)]
        )

    def __call__(self, z: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        p = self.p
        cell = np.clip(np.floor(z / p.h).astype(np.int64), 0, p.n - 1)
        e = cell * p.h
        rho = p.values[cell]
        m0 = self.c0[cell] + rho * (z - e)
        m1 = self.c1[cell] + rho * (z**2 - e**2) / 2.0
        m2 = self.c2[cell] + rho * (z**3 - e**3) / 3.0
        return m0, m1, m2


def semidiscrete_1d(p: Density1D, atoms: Atoms1D) -> SemiDiscrete1D:
    """Quantile cells, exact cost, chained potentials and barycenters.

    Raises:
        UnsortedAtomsError: If positions are not strictly increasing.
    """
    x = atoms.positions
    if np.any(np.diff(x) <= 0.0):
        raise UnsortedAtomsError()
    n = atoms.n_atoms
    if n == 0:
        return SemiDiscrete1D(
            0.0, np.array([0.0, 1.0]), np.zeros(0), np.zeros(0), np.zeros(0)
        )

    levels = np.cumsum(atoms.weights)[:-1]
    interfaces = p.quantile(levels) if levels.size else np.zeros(0)
    breakpoints = np.concatenate([[0.0], interfaces, [1.0]])

    m0, m1, m2 = _Moments(p)(breakpoints)
    mass = np.diff(m0)
    first = np.diff(m1)
    second = np.diff(m2)
    cost = float(np.sum(0.5 * (second - 2.0 * x * first + x * x * mass)))

    filled = mass > 0.0
    bary = x.copy()
    bary[filled] = first[filled] / mass[filled]

    jumps = 0.5 * (interfaces - x[1:]) ** 2 - 0.5 * (interfaces - x[:-1]) ** 2
    psi = np.concatenate([[0.0], np.cumsum(jumps)])
    psi -= psi.mean()
    return SemiDiscrete1D(
        cost=cost,
        breakpoints=breakpoints,
        barycenters=bary,
        potentials=psi,
        masses=mass,
    )


def internal_energy_1d(p: Density1D, law: DiffusionLaw) -> float:
    return float(np.sum(law.energy_density(p.values))) * p.h


def lp_norm_1d(p: Density1D, order: float) -> float:
    if math.isinf(order):
        return float(np.max(np.abs(p.values)))
    return (float(np.sum(np.abs(p.values) ** order)) * p.h) ** (1.0 / order)


@dataclass(frozen=True)
class JkoObjective:
    """Parts of J at one (p, x) pair; ``energy`` excludes the proximal terms."""

    internal: float
    transport: float
    proximal_density: float
    proximal_atoms: float

    @property
    def energy(self) -> float:
        return self.internal + self.transport

    @property
    def total(self) -> float:
        return self.energy + self.proximal_density + self.proximal_atoms


@dataclass(frozen=True, eq=False)
class JkoStepResult:
    density: Density1D
    atoms: Atoms1D
    objective: JkoObjective
    distance_sq: float
    inner_iterations: int


class _JkoProblem:
    """The proximal objective of one step and its first variation in p."""

    def __init__(
        self,
        p_prev: Density1D,
        x_prev: Atoms1D,
        tau: float,
        law: DiffusionLaw,
        alpha: float,
    ):
        self.p_prev = p_prev
        self.x_prev = x_prev
        self.tau = tau
        self.law = law
        self.alpha = alpha

    def atom_distance_sq(self, atoms: Atoms1D) -> float:
        if self.alpha == 0.0:
            return 0.0
        shift = atoms.positions - self.x_prev.positions
        return float(np.dot(shift, shift)) / self.alpha

    def evaluate(self, p: Density1D, atoms: Atoms1D) -> JkoObjective:
        transport = semidiscrete_1d(p, atoms).cost if atoms.n_atoms else 0.0
        return JkoObjective(
            internal=internal_energy_1d(p, self.law),
            transport=transport,
            proximal_density=w2_1d(self.p_prev, p) / (2.0 * self.tau),
            proximal_atoms=self.atom_distance_sq(atoms) / (2.0 * self.tau),
        )

    def first_variation(self, p: Density1D, atoms: Atoms1D) -> FloatArray:
        """F'(p) + phi_semi + phi_prev / tau on cell centers, mean removed."""
        centers = p.centers()
        grad = self.law.first_variation(np.maximum(p.values, DENSITY_FLOOR))

        if atoms.n_atoms:
            cells = semidiscrete_1d(p, atoms)
            owner = np.searchsorted(cells.breakpoints[1:-1], centers, side="right")
            offset = centers - atoms.positions[owner]
            grad = grad + 0.5 * offset * offset - cells.potentials[owner]

        # Kantorovich potential toward p_prev: phi' = x - T(x).
        mapped = self.p_prev.quantile(np.clip(p.cdf_at(centers), 1e-300, 1.0))
        slope = centers - mapped
        phi = np.concatenate(
            [[0.0], np.cumsum(0.5 * (slope[1:] + slope[:-1]) * p.h)]
        )
        grad = grad + phi / self.tau
        return grad - float(np.dot(p.cell_masses, grad))

    def update_atoms(self, p: Density1D, atoms: Atoms1D) -> Atoms1D | None:
        """Exact minimizer in x for fixed p, or None if it would unsort atoms."""
        if self.alpha == 0.0 or atoms.n_atoms == 0:
            return None
        bary = semidiscrete_1d(p, atoms).barycenters
        rate = self.alpha * self.tau * atoms.weights
        target = (self.x_prev.positions + rate * bary) / (1.0 + rate)
        if np.any(np.diff(target) <= 0.0) or target[0] <= 0.0 or target[-1] >= 1.0:
            return None
        return Atoms1D(target, atoms.weights)


def jko_step(
    p_prev: Density1D,
    x_prev: Atoms1D,
    tau: float,
    law: DiffusionLaw,
    inner_tol: float = 1e-10,
    alpha: float = 1.0,
    max_iter: int = 5000,
) -> JkoStepResult:
    """One minimizing-movement step with weights frozen.

    Accepted inner updates never increase J, and J at the starting pair equals
    its energy, so the comparison inequality
    E(z_{k+1}) + d^2(z_{k+1}, z_k) / (2 tau) <= E(z_k) holds by construction.

    Raises:
        InnerStallError: If the first iteration finds no descent while the
            first variation is far from constant.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    problem = _JkoProblem(p_prev, x_prev, tau, law, alpha)
    floor = DENSITY_FLOOR / p_prev.h
    p = Density1D.from_values(np.maximum(p_prev.values, floor))
    atoms = x_prev
    current = problem.evaluate(p, atoms)
    start = problem.evaluate(p_prev, x_prev)
    if current.total > start.total:
        p, current = p_prev, start

    eta = min(1.0, tau)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        before = current.total

        moved = problem.update_atoms(p, atoms)
        if moved is not None:
            candidate = problem.evaluate(p, moved)
            if candidate.total <= current.total:
                atoms, current = moved, candidate

        grad = problem.first_variation(p, atoms)
        stationarity = math.sqrt(float(np.dot(p.cell_masses, grad * grad)))
        accepted = False
        while eta > _MIN_STEP:
            exponent = np.clip(-eta * grad, -_EXPONENT_CAP, _EXPONENT_CAP)
            trial = Density1D.from_values(p.values * np.exp(exponent))
            candidate = problem.evaluate(trial, atoms)
            if candidate.total <= current.total:
                p, current = trial, candidate
                eta *= 2.0
                accepted = True
                break
            eta *= 0.5

        if not accepted:
            scale = 1.0 + float(np.max(np.abs(grad)))
            if (
                iterations == 1
                and atoms is x_prev
                and stationarity > _STALL_STATIONARITY * scale
            ):
                raise InnerStallError(stationarity)
            logger.debug(
                "Mirror descent stopped at iteration %d (stationarity %.2e)",
                iterations,
                stationarity,
            )
            break
        if before - current.total < inner_tol:
            break
    else:
        logger.warning("JKO inner loop hit max_iter=%d", max_iter)

    distance_sq = w2_1d(p_prev, p) + problem.atom_distance_sq(atoms)
    return JkoStepResult(
        density=p,
        atoms=atoms,
        objective=current,
        distance_sq=distance_sq,
        inner_iterations=iterations,
    )


@dataclass
class JkoRecord:
    """One row of the staircase trajectory."""

    step: int
    time: float
    energy: float
    internal: float
    transport: float
    distance_sq: float
    cumulative_distance_sq: float
    lp2: float
    lp4: float
    lp2_bound: float
    lp4_bound: float
    inner_iterations: int


@dataclass
class JkoTrajectory:
    tau: float
    densities: list[Density1D] = field(default_factory=list)
    atoms: list[Atoms1D] = field(default_factory=list)
    records: list[JkoRecord] = field(default_factory=list)

    @property
    def distance_budget(self) -> float:
        """2 E_0 tau, the bound on the summed squared step lengths."""
        return 2.0 * self.records[0].energy * self.tau


def _lp_bound(previous: float, tau: float, order: float) -> float:
    """Discrete L^p growth bound (1 - tau (p - 1))^(-1/p) ||p_k||_p in 1D."""
    base = 1.0 - tau * (order - 1.0)
    if base <= 0.0:
        return math.inf
    return base ** (-1.0 / order) * previous


def jko_run(
    p0: Density1D,
    x0: Atoms1D,
    tau: float,
    steps: int,
    law: DiffusionLaw,
    alpha: float = 1.0,
    inner_tol: float = 1e-10,
    inner_max_iter: int = 5000,
    callback: Callable[[int, Density1D, Atoms1D, JkoRecord], None] | None = None,
) -> JkoTrajectory:
    """Iterate :func:`jko_step` and record the staircase trajectory."""
    start = _JkoProblem(p0, x0, tau, law, alpha).evaluate(p0, x0)
    record = JkoRecord(
        step=0,
        time=0.0,
        energy=start.energy,
        internal=start.internal,
        transport=start.transport,
        distance_sq=0.0,
        cumulative_distance_sq=0.0,
        lp2=lp_norm_1d(p0, 2.0),
        lp4=lp_norm_1d(p0, 4.0),
        lp2_bound=math.nan,
        lp4_bound=math.nan,
        inner_iterations=0,
    )
    trajectory = JkoTrajectory(tau, [p0], [x0], [record])
    if callback is not None:
        callback(0, p0, x0, record)

    p, x = p0, x0
    cumulative = 0.0
    for k in range(1, steps + 1):
        result = jko_step(p, x, tau, law, inner_tol, alpha, inner_max_iter)
        cumulative += result.distance_sq
        record = JkoRecord(
            step=k,
            time=k * tau,
            energy=result.objective.energy,
            internal=result.objective.internal,
            transport=result.objective.transport,
            distance_sq=result.distance_sq,
            cumulative_distance_sq=cumulative,
            lp2=lp_norm_1d(result.density, 2.0),
            lp4=lp_norm_1d(result.density, 4.0),
            lp2_bound=_lp_bound(trajectory.records[-1].lp2, tau, 2.0),
            lp4_bound=_lp_bound(trajectory.records[-1].lp4, tau, 4.0),
            inner_iterations=result.inner_iterations,
        )
        if record.energy > trajectory.records[-1].energy:
            logger.warning("JKO energy increased at step %d", k)
        p, x = result.density, result.atoms
        trajectory.densities.append(p)
        trajectory.atoms.append(x)
        trajectory.records.append(record)
        if callback is not None:
            callback(k, p, x, record)
        logger.debug(
            "jko step %d energy=%.6e d2=%.3e inner=%d",
            k,
            record.energy,
            record.distance_sq,
            record.inner_iterations,
        )
    return trajectory
