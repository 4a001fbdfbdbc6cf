"""Tests for the 1D minimizing-movement oracle."""

import math

import numpy as np
import pytest

from src.errors import UnsortedAtomsError
from src.models.config import SimulationConfig
from src.numerics.dynamics import initial_state, run_simulation
from src.numerics.grid import DiffusionLaw, Grid, uniform_density
from src.numerics.jko1d import (
    Atoms1D,
    Density1D,
    internal_energy_1d,
    jko_run,
    jko_step,
    lp_norm_1d,
    semidiscrete_1d,
    w2_1d,
)
from src.numerics.sdot import AtomSet, solve_potentials, transport_cost


def _bump(n: int, center: float = 0.5, width: float = 0.15) -> Density1D:
    x = (np.arange(n) + 0.5) / n
    return Density1D.from_values(np.exp(-((x - center) ** 2) / (2.0 * width**2)))


def _brute_w2(p: Density1D, q: Density1D, samples: int = 200_000) -> float:
    s = (np.arange(samples) + 0.5) / samples
    qp = np.interp(s, p.cdf, p.edges())
    qq = np.interp(s, q.cdf, q.edges())
    return float(np.mean((qp - qq) ** 2))


def _north_west_w2(p: Density1D, q: Density1D) -> float:
    # North-west corner coupling of the cells; within each transferred chunk
    # both positions move linearly in the transported mass.
    i = j = 0
    left_p, left_q = p.cell_masses[0], q.cell_masses[0]
    xp = xq = 0.0
    total = 0.0
    while i < p.n and j < q.n:
        m = min(left_p, left_q)
        d0 = xp - xq
        k = 1.0 / p.values[i] - 1.0 / q.values[j]
        total += m * d0**2 + d0 * k * m**2 + k**2 * m**3 / 3.0
        xp += m / p.values[i]
        xq += m / q.values[j]
        left_p -= m
        left_q -= m
        if left_p <= 1e-15:
            i += 1
            if i < p.n:
                left_p, xp = p.cell_masses[i], i * p.h
        if left_q <= 1e-15:
            j += 1
            if j < q.n:
                left_q, xq = q.cell_masses[j], j * q.h
    return total


class TestDensity1D:
    """Tests for piecewise-constant densities on the unit interval."""

    def test_normalization_and_cdf(self) -> None:
        """Test unit mass and the CDF at the edges."""
        p = Density1D.from_values(np.array([1.0, 3.0]))
        assert p.mass == pytest.approx(1.0)
        np.testing.assert_allclose(p.cdf, [0.0, 0.25, 1.0])
        np.testing.assert_allclose(p.cdf_at(np.array([0.25, 0.75])), [0.125, 0.625])

    def test_quantile_inverts_cdf(self) -> None:
        """Test that the quantile function inverts the CDF."""
        p = _bump(64)
        x = np.linspace(0.01, 0.99, 50)
        np.testing.assert_allclose(p.quantile(p.cdf_at(x)), x, atol=1e-12)

    def test_rejects_empty(self) -> None:
        """Test that an empty vector is refused."""
        with pytest.raises(ValueError):
            Density1D(np.zeros(0))


class TestAtoms1D:
    """Tests for sorted 1D atoms."""

    def test_unsorted(self) -> None:
        """Test that decreasing positions raise."""
        with pytest.raises(UnsortedAtomsError, match="unsorted atoms"):
            Atoms1D.uniform(np.array([0.6, 0.4]))

    def test_uniform_weights(self) -> None:
        """Test equal weights."""
        atoms = Atoms1D.uniform(np.array([0.2, 0.5, 0.8]))
        np.testing.assert_allclose(atoms.weights, 1.0 / 3.0)


class TestW2:
    """Tests for the exact 1D Wasserstein distance."""

    def test_identity(self) -> None:
        """Test that W2(p, p) = 0."""
        p = _bump(100)
        assert w2_1d(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_half_shift(self) -> None:
        """Test U[0, 1/2] against U[1/2, 1]."""
        n = 64
        left = Density1D.from_values(np.r_[np.ones(n // 2), np.zeros(n // 2)])
        right = Density1D.from_values(np.r_[np.zeros(n // 2), np.ones(n // 2)])
        assert w2_1d(left, right) == pytest.approx(0.25, abs=1e-12)

    def test_uniform_against_concentrated(self) -> None:
        """Test U[0, 1] against all mass in the middle cell."""
        n = 1001
        values = np.zeros(n)
        values[n // 2] = 1.0
        value = w2_1d(Density1D.uniform(n), Density1D.from_values(values))
        assert value == pytest.approx(1.0 / 12.0, abs=1.0 / n)

    def test_metric_properties(self) -> None:
        """Test symmetry and the triangle inequality on random triples."""
        rng = np.random.default_rng(9)
        for _ in range(10):
            p, q, r = (
                Density1D.from_values(rng.uniform(0.0, 1.0, rng.integers(4, 40)))
                for _ in range(3)
            )
            assert w2_1d(p, q) == pytest.approx(w2_1d(q, p), abs=1e-12)
            d_pq = math.sqrt(w2_1d(p, q))
            d_qr = math.sqrt(w2_1d(q, r))
            d_pr = math.sqrt(w2_1d(p, r))
            assert d_pr <= d_pq + d_qr + 1e-10

    def test_matches_quantile_integration(self) -> None:
        """Test against dense integration of the quantile difference."""
        rng = np.random.default_rng(4)
        for _ in range(3):
            p = Density1D.from_values(rng.uniform(0.1, 1.0, 32))
            q = Density1D.from_values(rng.uniform(0.1, 1.0, 17))
            assert w2_1d(p, q) == pytest.approx(_brute_w2(p, q), abs=1e-8)

    def test_matches_north_west_corner(self) -> None:
        """Test against the north-west corner coupling of the cells."""
        rng = np.random.default_rng(12)
        for _ in range(5):
            p = Density1D.from_values(rng.uniform(0.1, 2.0, rng.integers(3, 50)))
            q = Density1D.from_values(rng.uniform(0.1, 2.0, rng.integers(3, 50)))
            assert w2_1d(p, q) == pytest.approx(_north_west_w2(p, q), abs=1e-10)


class TestSemidiscrete1D:
    """Tests for quantile cells of sorted atoms."""

    def test_symmetric_pair(self) -> None:
        """Test breakpoint 1/2, barycenters (1/4, 3/4) and zero potentials."""
        cells = semidiscrete_1d(
            Density1D.uniform(100), Atoms1D.uniform(np.array([0.25, 0.75]))
        )
        np.testing.assert_allclose(cells.breakpoints, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(cells.barycenters, [0.25, 0.75])
        np.testing.assert_allclose(cells.potentials, [0.0, 0.0], atol=1e-15)

    def test_asymmetric_pair(self) -> None:
        """Test breakpoint 0.62 and the chained potential difference."""
        atoms = Atoms1D(np.array([0.25, 0.75]), np.array([0.62, 0.38]))
        cells = semidiscrete_1d(Density1D.uniform(100), atoms)
        assert cells.breakpoints[1] == pytest.approx(0.62, abs=1e-12)
        jump = 0.5 * (0.62 - 0.75) ** 2 - 0.5 * (0.62 - 0.25) ** 2
        diff = cells.potentials[1] - cells.potentials[0]
        assert diff == pytest.approx(jump, abs=1e-12)
        assert cells.potentials[0] == pytest.approx(0.03, abs=1e-12)

    def test_single_atom_cost(self) -> None:
        """Test the closed-form cost of one atom on the uniform density."""
        x1 = 0.3
        cells = semidiscrete_1d(Density1D.uniform(50), Atoms1D.uniform(np.array([x1])))
        expected = 0.5 * ((1.0 - x1) ** 3 + x1**3) / 3.0
        assert cells.cost == pytest.approx(expected, abs=1e-14)

    def test_agrees_with_strip_solver(self) -> None:
        """Test the cost against the 2D solver on a one-row strip."""
        n = 256
        grid = Grid(nx=n, ny=1)
        atoms_2d = AtomSet.uniform(np.array([[0.3, 0.5], [0.7, 0.5]]))
        density = uniform_density(grid)
        cost_2d = transport_cost(
            density, atoms_2d, solve_potentials(density, atoms_2d)
        )
        cells = semidiscrete_1d(
            Density1D.uniform(n), Atoms1D.uniform(np.array([0.3, 0.7]))
        )
        assert cells.cost == pytest.approx(cost_2d, abs=1e-5)

    def test_unsorted(self) -> None:
        """Test that unsorted atoms raise."""
        atoms = Atoms1D.uniform(np.array([0.2, 0.6]))
        swapped = Atoms1D.__new__(Atoms1D)
        object.__setattr__(swapped, "positions", atoms.positions[::-1].copy())
        object.__setattr__(swapped, "weights", atoms.weights)
        with pytest.raises(UnsortedAtomsError):
            semidiscrete_1d(Density1D.uniform(10), swapped)


class TestJkoStep:
    """Tests for one minimizing-movement step."""

    def test_tiny_step_barely_moves(self) -> None:
        """Test that tau = 1e-6 returns nearly the input."""
        p = _bump(128)
        atoms = Atoms1D.uniform(np.array([0.3, 0.7]))
        result = jko_step(p, atoms, 1e-6, DiffusionLaw())
        assert w2_1d(p, result.density) <= 1e-6
        np.testing.assert_allclose(result.atoms.positions, [0.3, 0.7], atol=1e-3)

    def test_pure_entropy_flattens(self) -> None:
        """Test that without atoms the entropy decreases."""
        p = _bump(128, width=0.1)
        law = DiffusionLaw()
        result = jko_step(p, Atoms1D.uniform(np.zeros(0)), 0.01, law)
        assert internal_energy_1d(result.density, law) < internal_energy_1d(p, law)
        assert result.density.mass == pytest.approx(1.0)

    @pytest.mark.parametrize("kind", ["linear", "pme"])
    def test_comparison_inequality(self, kind: str) -> None:
        """Test E(z1) + d^2 / (2 tau) <= E(z0)."""
        p = _bump(128, center=0.4)
        atoms = Atoms1D.uniform(np.array([0.2, 0.55, 0.8]))
        law = DiffusionLaw(kind=kind, m=2.0)
        tau = 0.01
        result = jko_step(p, atoms, tau, law)
        start = internal_energy_1d(p, law) + semidiscrete_1d(p, atoms).cost
        assert result.objective.energy + result.distance_sq / (2.0 * tau) <= (
            start + 1e-12
        )
        assert np.all(np.diff(result.atoms.positions) > 0.0)

    def test_atoms_move_toward_barycenters(self) -> None:
        """Test that atoms drift toward their cell barycenters."""
        p = Density1D.uniform(128)
        atoms = Atoms1D.uniform(np.array([0.1, 0.9]))
        result = jko_step(p, atoms, 0.05, DiffusionLaw())
        assert result.atoms.positions[0] > 0.1
        assert result.atoms.positions[1] < 0.9

    def test_zero_alpha_freezes_atoms(self) -> None:
        """Test that alpha = 0 keeps the atoms in place."""
        p = _bump(64)
        atoms = Atoms1D.uniform(np.array([0.1, 0.9]))
        result = jko_step(p, atoms, 0.05, DiffusionLaw(), alpha=0.0)
        np.testing.assert_array_equal(result.atoms.positions, atoms.positions)

    def test_rejects_nonpositive_tau(self) -> None:
        """Test that tau must be positive."""
        with pytest.raises(ValueError):
            jko_step(
                Density1D.uniform(8),
                Atoms1D.uniform(np.array([0.5])),
                0.0,
                DiffusionLaw(),
            )


class TestJkoRun:
    """Tests for the staircase trajectory."""

    def test_zero_steps(self) -> None:
        """Test that zero steps echo the initial pair."""
        p = _bump(32)
        atoms = Atoms1D.uniform(np.array([0.5]))
        trajectory = jko_run(p, atoms, 0.01, 0, DiffusionLaw())
        assert len(trajectory.records) == 1
        assert trajectory.densities[0] is p
        assert trajectory.records[0].distance_sq == 0.0

    def test_a_priori_bounds(self) -> None:
        """Test monotone energies and the summed step length bound."""
        p = _bump(128, center=0.35, width=0.1)
        atoms = Atoms1D.uniform(np.array([0.3, 0.7]))
        calls: list[int] = []
        trajectory = jko_run(
            p,
            atoms,
            tau=0.01,
            steps=8,
            law=DiffusionLaw(),
            callback=lambda step, *_: calls.append(step),
        )
        energies = [record.energy for record in trajectory.records]
        assert all(b <= a for a, b in zip(energies, energies[1:], strict=False))
        last = trajectory.records[-1]
        assert last.cumulative_distance_sq <= trajectory.distance_budget
        assert calls == list(range(9))

    def test_lp_growth_bound(self) -> None:
        """Test the discrete L^2 and L^4 growth bounds with slack."""
        trajectory = jko_run(
            Density1D.uniform(128),
            Atoms1D.uniform(np.array([0.3, 0.7])),
            tau=0.01,
            steps=5,
            law=DiffusionLaw(),
        )
        for record in trajectory.records[1:]:
            assert record.lp2 <= 1.05 * record.lp2_bound
            assert record.lp4 <= 1.05 * record.lp4_bound
        first = trajectory.records[0]
        assert first.lp2 == pytest.approx(lp_norm_1d(Density1D.uniform(128), 2.0))

    @pytest.mark.slow
    def test_matches_splitting_scheme(self) -> None:
        """Test the oracle against the splitting scheme on a one-row strip."""
        n = 128
        config = SimulationConfig(
            mode="quantization", nx=n, ny=1, n_atoms=2, tau=0.01, alpha=0.0, steps=10
        )
        state = initial_state(
            config,
            uniform_density(config.grid()),
            AtomSet.uniform(np.array([[0.3, 0.5], [0.7, 0.5]])),
        )
        split = run_simulation(config, state).density.values.ravel()

        trajectory = jko_run(
            Density1D.uniform(n),
            Atoms1D.uniform(np.array([0.3, 0.7])),
            tau=1e-3,
            steps=100,
            law=DiffusionLaw(),
            alpha=0.0,
            inner_tol=1e-9,
            inner_max_iter=2000,
        )
        oracle = trajectory.densities[-1]
        assert w2_1d(oracle, Density1D.from_values(split)) <= 2e-2
