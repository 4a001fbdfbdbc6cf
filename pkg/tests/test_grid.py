"""Tests for grids, densities and internal energies."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.numerics.grid import (
    Density,
    DiffusionLaw,
    Domain,
    Grid,
    floored,
    gaussian_density,
    internal_energy,
    lp_norm,
    total_mass,
    uniform_density,
)


class TestDomain:
    """Tests for the rectangular domain."""

    def test_rejects_inverted_bounds(self) -> None:
        """Test that x_min >= x_max is refused."""
        with pytest.raises(ValidationError):
            Domain(x_min=1.0, x_max=0.0)

    def test_geometry(self) -> None:
        """Test width, height, area and diameter."""
        domain = Domain(x_min=0.0, x_max=2.0, y_min=-1.0, y_max=0.0)
        assert domain.area == 2.0
        assert domain.diameter == pytest.approx(math.sqrt(5.0))
        assert domain.centroid == (1.0, -0.5)

    def test_clamp(self) -> None:
        """Test that clamping projects onto the closed rectangle."""
        points = np.array([[-0.5, 0.5], [0.3, 1.7], [0.2, 0.4]])
        clamped = Domain().clamp(points)
        np.testing.assert_array_equal(clamped, [[0.0, 0.5], [0.3, 1.0], [0.2, 0.4]])


class TestGrid:
    """Tests for grid geometry."""

    def test_spacing_and_centers(self) -> None:
        """Test cell size and center coordinates."""
        grid = Grid(domain=Domain(x_max=2.0), nx=4, ny=2)
        assert grid.hx == 0.5
        assert grid.hy == 0.5
        np.testing.assert_allclose(grid.x_centers(), [0.25, 0.75, 1.25, 1.75])
        assert grid.cell_centers().shape == (8, 2)

    def test_face_midpoints(self) -> None:
        """Test that faces include both boundaries."""
        grid = Grid(nx=3, ny=2)
        vertical = grid.vertical_face_midpoints()
        horizontal = grid.horizontal_face_midpoints()
        assert vertical.shape == (2 * 4, 2)
        assert horizontal.shape == (3 * 3, 2)
        assert vertical[:, 0].min() == 0.0 and vertical[:, 0].max() == 1.0

    def test_rejects_zero_cells(self) -> None:
        """Test that nx must be positive."""
        with pytest.raises(ValidationError):
            Grid(nx=0, ny=4)


class TestDensity:
    """Tests for piecewise-constant densities."""

    def test_from_values_normalizes(self, grid32: Grid) -> None:
        """Test that from_values rescales to unit mass."""
        density = Density.from_values(grid32, np.full(grid32.shape, 7.0))
        assert total_mass(density) == pytest.approx(1.0, abs=1e-14)

    def test_shape_mismatch(self, grid32: Grid) -> None:
        """Test that a wrongly shaped array is refused."""
        with pytest.raises(ValueError):
            Density(grid32, np.ones((4, 4)))

    def test_zero_mass_rejected(self, grid32: Grid) -> None:
        """Test that a zero array cannot be normalized."""
        with pytest.raises(ValueError, match="positive mass"):
            Density.from_values(grid32, np.zeros(grid32.shape))

    def test_validate_negative(self, grid32: Grid) -> None:
        """Test that validate flags negative cells."""
        values = np.full(grid32.shape, 1.0)
        values[3, 3] = -1e-3
        with pytest.raises(ValueError, match="negative"):
            Density(grid32, values).validate()

    def test_uniform_and_gaussian(self, grid32: Grid) -> None:
        """Test the built-in initial densities."""
        uniform_density(grid32).validate()
        bump = gaussian_density(grid32, 0.5, 0.5, 0.1)
        bump.validate()
        center = np.unravel_index(np.argmax(bump.values), grid32.shape)
        assert center in {(15, 15), (15, 16), (16, 15), (16, 16)}

    def test_floored_keeps_every_cell_positive(self, grid32: Grid) -> None:
        """Test that flooring lifts empty cells and keeps unit mass."""
        values = np.zeros(grid32.shape)
        values[0, 0] = 1.0
        lifted = floored(Density.from_values(grid32, values))
        assert float(lifted.values.min()) > 0.0
        assert total_mass(lifted) == pytest.approx(1.0, abs=1e-12)


class TestDiffusionLaw:
    """Tests for internal energy laws and pressures."""

    def test_entropy_of_uniform_is_zero(self, grid32: Grid) -> None:
        """Test that the uniform density on the unit square has zero entropy."""
        value = internal_energy(uniform_density(grid32), DiffusionLaw())
        assert value == pytest.approx(0.0, abs=1e-14)

    def test_zero_log_zero(self) -> None:
        """Test that 0 log 0 = 0."""
        assert DiffusionLaw().energy_density(np.array([0.0]))[0] == 0.0

    def test_pme_pressure_identity(self) -> None:
        """Test P = rho F' - F for the porous-medium law."""
        law = DiffusionLaw(kind="pme", m=3.0)
        rho = np.array([0.1, 1.0, 2.5])
        expected = rho * law.first_variation(rho) - law.energy_density(rho)
        np.testing.assert_allclose(law.pressure(rho), expected)
        assert law.pressure_derivative(2.0) == pytest.approx(3.0 * 4.0)

    def test_linear_pressure_identity(self) -> None:
        """Test P = rho F' - F for the entropy."""
        law = DiffusionLaw()
        rho = np.array([0.2, 1.0, 4.0])
        expected = rho * law.first_variation(rho) - law.energy_density(rho)
        np.testing.assert_allclose(law.pressure(rho), expected)

    def test_exponent_must_exceed_one(self) -> None:
        """Test that m <= 1 is refused."""
        with pytest.raises(ValidationError):
            DiffusionLaw(kind="pme", m=1.0)

    def test_half_square_entropy(self, grid32: Grid) -> None:
        """Test that density 2 on the left half has entropy log 2."""
        values = np.zeros(grid32.shape)
        values[:, :16] = 2.0
        density = Density.from_values(grid32, values, normalize=False)
        value = internal_energy(density, DiffusionLaw())
        assert value == pytest.approx(math.log(2.0), abs=1e-12)

    def test_pme_of_uniform(self, grid32: Grid) -> None:
        """Test that the m = 2 energy of the uniform density is 1."""
        law = DiffusionLaw(kind="pme", m=2.0)
        assert internal_energy(uniform_density(grid32), law) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_entropy_jensen_bound(self, grid32: Grid, seed: int) -> None:
        """Test that the entropy is at least -log |domain| on random densities."""
        rng = np.random.default_rng(seed)
        grid = Grid(domain=Domain(x_max=2.0, y_max=1.5), nx=24, ny=18)
        for current in (grid32, grid):
            values = rng.exponential(1.0, current.shape) ** 3
            density = Density.from_values(current, values)
            bound = -math.log(current.domain.area)
            assert internal_energy(density, DiffusionLaw()) >= bound - 1e-12


class TestLpNorm:
    """Tests for lp_norm."""

    def test_uniform(self, grid32: Grid) -> None:
        """Test that every L^p norm of the uniform unit-square density is 1."""
        density = uniform_density(grid32)
        for p in (1.0, 2.0, 4.0, math.inf):
            assert lp_norm(density, p) == pytest.approx(1.0)

    def test_rejects_small_exponent(self, grid32: Grid) -> None:
        """Test that p < 1 is refused."""
        with pytest.raises(ValueError):
            lp_norm(uniform_density(grid32), 0.5)

    def test_half_square(self, grid32: Grid) -> None:
        """Test the maximum and L^2 norm of density 2 on half the square."""
        values = np.zeros(grid32.shape)
        values[:, 16:] = 2.0
        density = Density.from_values(grid32, values, normalize=False)
        assert lp_norm(density, math.inf) == 2.0
        assert lp_norm(density, 2.0) == pytest.approx(math.sqrt(2.0))

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_in_p(self, grid32: Grid, seed: int) -> None:
        """Test that norms of a unit-square probability density grow with p."""
        rng = np.random.default_rng(seed)
        density = Density.from_values(grid32, rng.uniform(0.0, 3.0, grid32.shape))
        norms = [lp_norm(density, p) for p in (1.0, 1.5, 2.0, 3.0, 8.0, math.inf)]
        assert norms[0] == pytest.approx(1.0)
        assert all(a <= b + 1e-12 for a, b in zip(norms, norms[1:], strict=False))


class TestTotalMass:
    """Tests for total_mass."""

    def test_single_cell(self, grid32: Grid) -> None:
        """Test that one full cell of height 1 / cell area carries unit mass."""
        values = np.zeros(grid32.shape)
        values[5, 7] = 1.0 / grid32.cell_area
        density = Density.from_values(grid32, values, normalize=False)
        assert total_mass(density) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_invariance(self, grid32: Grid, seed: int) -> None:
        """Test that shuffling cell values keeps the mass."""
        rng = np.random.default_rng(seed)
        density = Density.from_values(grid32, rng.uniform(0.0, 2.0, grid32.shape))
        shuffled = rng.permutation(density.values.ravel()).reshape(grid32.shape)
        moved = Density.from_values(grid32, shuffled, normalize=False)
        assert total_mass(moved) == pytest.approx(total_mass(density), abs=1e-12)
