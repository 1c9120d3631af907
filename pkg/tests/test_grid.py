"""Grid geometry, quadrature and finite-difference operators."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sicdft.grid import (GridError, GridSpec, KineticPreconditioner, MODE_1D,
                         MODE_3D, grid_for_box)


@pytest.fixture(scope="module")
def grid():
    return grid_for_box((8.0, 8.0, 8.0), 0.5)


def gaussian(grid, width=1.0):
    r = grid.radius_from()
    return np.exp(-(r / width) ** 2 / 2.0)


class TestGridSpec:
    def test_rejects_tiny_3d_axis(self):
        with pytest.raises(GridError):
            GridSpec((4, 16, 16), (0.5, 0.5, 0.5))

    def test_rejects_unknown_mode(self):
        with pytest.raises(GridError):
            GridSpec((16, 16, 16), (0.5,) * 3, mode="periodic")

    def test_1d_needs_two_inert_axes(self):
        with pytest.raises(GridError):
            GridSpec((1, 16, 16), (1.0, 0.5, 0.5), mode=MODE_1D)
        GridSpec((1, 1, 16), (1.0, 1.0, 0.5), mode=MODE_1D)  # valid

    def test_axis_coords_centered(self, grid):
        for ax in range(3):
            x = grid.axis_coords(ax)
            assert x[0] == pytest.approx(-x[-1])
            assert np.allclose(np.diff(x), grid.spacing[ax])

    def test_grid_for_box_never_smaller(self):
        g = grid_for_box((10.0, 12.0, 14.3), 0.7)
        for side, n, h in zip((10.0, 12.0, 14.3), g.dims, g.spacing):
            assert (n - 1) * h >= side - 1e-12

    def test_field_shape_checked(self, grid):
        with pytest.raises(GridError):
            grid.integrate(np.zeros((3, 3, 3)))


class TestQuadrature:
    def test_gaussian_norm(self, grid):
        # int exp(-r^2) over R^3 = pi^(3/2); the box holds it to ~1e-10
        f = gaussian(grid, width=np.sqrt(0.5))
        assert grid.integrate(f) == pytest.approx(np.pi ** 1.5, rel=1e-8)

    def test_inner_conjugates_bra(self, grid):
        f = gaussian(grid)
        assert grid.inner(1j * f, f) == pytest.approx(-1j * grid.integrate(f * f))

    @given(a=st.floats(-5, 5), b=st.floats(-5, 5))
    @settings(max_examples=20, deadline=None)
    def test_integrate_linear(self, a, b):
        g = grid_for_box((4.0, 4.0, 4.0), 0.5)
        f1, f2 = gaussian(g), gaussian(g, width=0.7)
        lhs = g.integrate(a * f1 + b * f2)
        rhs = a * g.integrate(f1) + b * g.integrate(f2)
        assert lhs == pytest.approx(rhs, abs=1e-9)


class TestLaplacian:
    def test_gaussian_laplacian(self, grid):
        # lap exp(-r^2/(2w^2)) = (r^2/w^4 - 3/w^2) * f; w small enough that
        # the tail is negligible at the box edge, so the h^4 stencil error
        # dominates
        w = 0.8
        r = grid.radius_from()
        f = gaussian(grid, w)
        exact = (r ** 2 / w ** 4 - 3.0 / w ** 2) * f
        err = np.max(np.abs(grid.laplacian(f) - exact))
        assert err < 0.1

    def test_fourth_order_convergence(self):
        w = 0.8
        errs = []
        for h in (0.5, 0.25):
            g = grid_for_box((8.0, 8.0, 8.0), h)
            r = g.radius_from()
            f = np.exp(-r ** 2 / (2 * w ** 2))
            exact = (r ** 2 / w ** 4 - 3.0 / w ** 2) * f
            errs.append(np.max(np.abs(g.laplacian(f) - exact)))
        order = np.log2(errs[0] / errs[1])
        assert order > 3.5

    def test_symmetric_operator(self, grid):
        rng = np.random.default_rng(3)
        f = gaussian(grid) * rng.standard_normal(grid.dims)
        g = gaussian(grid, 1.3) * rng.standard_normal(grid.dims)
        lhs = grid.inner(f, grid.laplacian(g))
        rhs = grid.inner(grid.laplacian(f), g)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_kinetic_energy_positive(self, grid):
        rng = np.random.default_rng(7)
        f = gaussian(grid) * rng.standard_normal(grid.dims)
        assert grid.kinetic_energy(f) > 0.0

    def test_1d_mode_only_active_axis(self):
        g = grid_for_box((0, 0, 20.0), 0.25, mode=MODE_1D)
        z = g.axis_coords(2).reshape(1, 1, -1)
        f = np.exp(-z ** 2 / 2.0)
        exact = (z ** 2 - 1.0) * f
        assert np.max(np.abs(g.laplacian(f) - exact)) < 2e-3  # h^4 f'''''' / 90


class TestPreconditioner:
    def test_inverts_sine_mode(self):
        # on an exact sine mode, apply() must equal 1/(k^2/2 + e0)
        g = grid_for_box((8.0, 8.0, 8.0), 0.5)
        n, h = g.dims[2], g.spacing[2]
        k = 3 * np.pi / ((n + 1) * h)
        j = np.arange(1, n + 1)
        mode = np.zeros(g.dims)
        mode[:, :, :] = np.sin(3 * np.pi * j / (n + 1)).reshape(1, 1, -1)
        # transverse axes need sine modes too; use the fundamental
        for ax in (0, 1):
            jj = np.arange(1, g.dims[ax] + 1)
            s = np.sin(np.pi * jj / (g.dims[ax] + 1))
            mode *= s.reshape([-1 if a == ax else 1 for a in range(3)])
        e0 = 1.0
        ksq = k ** 2
        for ax in (0, 1):
            ksq += (np.pi / ((g.dims[ax] + 1) * g.spacing[ax])) ** 2
        out = KineticPreconditioner(g, e0).apply(mode)
        assert np.allclose(out, mode / (0.5 * ksq + e0), atol=1e-12)

    def test_block_application_matches_loop(self):
        g = grid_for_box((6.0, 6.0, 6.0), 0.5)
        rng = np.random.default_rng(11)
        block = rng.standard_normal((3,) + g.dims)
        pre = KineticPreconditioner(g, 0.7)
        out = pre.apply(block)
        for i in range(3):
            assert np.allclose(out[i], pre.apply(block[i]))

    def test_rejects_nonpositive_shift(self):
        g = grid_for_box((6.0, 6.0, 6.0), 0.5)
        with pytest.raises(ValueError):
            KineticPreconditioner(g, 0.0)
