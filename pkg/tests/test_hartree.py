"""Free-space Hartree solver against analytic and direct-sum oracles."""

import numpy as np
import pytest
from scipy.special import erf

from sicdft.grid import MODE_1D, grid_for_box
from sicdft.hartree import PoissonSolver, hartree_potential, poisson_solver


def normalized_gaussian(grid, width):
    r = grid.radius_from()
    return np.exp(-r ** 2 / (2 * width ** 2)) / (width ** 3 * (2 * np.pi) ** 1.5)


class TestGaussianOracle:
    """V_H of a unit Gaussian is erf(r/(s*sqrt(2)))/r analytically."""

    @pytest.mark.parametrize("spacing,width", [(0.5, 1.0), (0.7, 1.2), (0.4, 0.8)])
    def test_relative_error(self, spacing, width):
        grid = grid_for_box((16.0,) * 3, spacing)
        rho = normalized_gaussian(grid, width)
        v = PoissonSolver(grid).solve(rho)
        r = grid.radius_from()
        mask = r > 2 * spacing
        exact = np.where(mask, erf(r / (width * np.sqrt(2))) / np.where(mask, r, 1.0), 0.0)
        rel = np.abs(v - exact)[mask] / exact[mask]
        assert rel.max() < 1e-4

    def test_value_at_origin(self):
        # limit r->0: sqrt(2/pi)/s
        width = 1.0
        grid = grid_for_box((16.0,) * 3, 0.5)
        rho = normalized_gaussian(grid, width)
        v = PoissonSolver(grid).solve(rho)
        center = tuple(n // 2 for n in grid.dims)
        assert v[center] == pytest.approx(np.sqrt(2 / np.pi) / width, rel=1e-5)

    def test_potential_positive(self):
        grid = grid_for_box((12.0,) * 3, 0.6)
        v = PoissonSolver(grid).solve(normalized_gaussian(grid, 1.0))
        assert v.min() > 0.0


class TestDirectSum:
    def test_energy_matches_direct_summation(self):
        grid = grid_for_box((7.5,) * 3, 0.5)  # 16^3 points
        assert grid.dims == (16, 16, 16)
        rng = np.random.default_rng(5)
        rho = normalized_gaussian(grid, 1.0) * (1.0 + 0.1 * rng.standard_normal(grid.dims))
        solver = PoissonSolver(grid)
        e_fft = solver.energy(rho)
        # direct O(N^2) sum with the solver's own kernel table
        kern = solver.kernel_values()
        n = grid.dims
        v_direct = np.zeros(n)
        idx = np.indices(n)
        for i in range(n[0]):
            for j in range(n[1]):
                for k in range(n[2]):
                    di = (idx[0] - i) % solver._padded[0]
                    dj = (idx[1] - j) % solver._padded[1]
                    dk = (idx[2] - k) % solver._padded[2]
                    v_direct[i, j, k] = (rho * kern[di, dj, dk]).sum()
        v_direct *= grid.cell_volume ** 2  # kernel table is volume-free
        e_direct = 0.5 * float((rho * v_direct).sum())
        assert abs(e_fft - e_direct) / abs(e_direct) < 1e-8


class TestOneDimensional:
    def test_soft_kernel_convolution(self):
        grid = grid_for_box((0, 0, 30.0), 0.25, mode=MODE_1D, soft_core=1.0)
        z = grid.axis_coords(2).reshape(1, 1, -1)
        rho = np.exp(-z ** 2) / np.sqrt(np.pi) + np.zeros(grid.dims)
        v = PoissonSolver(grid).solve(rho)
        # direct quadrature oracle
        zf = z.ravel()
        vd = np.array([np.trapezoid(rho.ravel() / np.sqrt((zi - zf) ** 2 + 1.0), zf)
                       for zi in zf])
        assert np.max(np.abs(v.ravel() - vd)) < 1e-6

    def test_symmetric_input_symmetric_output(self):
        grid = grid_for_box((0, 0, 20.0), 0.25, mode=MODE_1D)
        z = grid.axis_coords(2).reshape(1, 1, -1)
        v = PoissonSolver(grid).solve(np.exp(-z ** 2) + np.zeros(grid.dims))
        assert np.allclose(v, v[:, :, ::-1], atol=1e-12)


class TestPlumbing:
    def test_solver_memoized_per_grid(self):
        grid = grid_for_box((8.0,) * 3, 0.5)
        assert poisson_solver(grid) is poisson_solver(grid)

    def test_hartree_potential_helper(self):
        grid = grid_for_box((8.0,) * 3, 0.5)
        rho = normalized_gaussian(grid, 1.0)
        assert np.allclose(hartree_potential(rho, grid),
                           PoissonSolver(grid).solve(rho))

    def test_energy_reuses_given_potential(self):
        grid = grid_for_box((8.0,) * 3, 0.5)
        rho = normalized_gaussian(grid, 1.0)
        solver = PoissonSolver(grid)
        v = solver.solve(rho)
        assert solver.energy(rho, v) == pytest.approx(solver.energy(rho))
