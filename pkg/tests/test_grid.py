import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ksns import fields as F
from ksns import grid as g


class TestTorusGrid:
    def test_volume_identity(self):
        grid = g.TorusGrid(3, 16, 1.5)
        assert grid.cell_volume * grid.ncells == pytest.approx(grid.volume, rel=1e-15)
        assert grid.ncells == 16**3

    @pytest.mark.parametrize("n", [4, 12, 0])
    def test_rejects_bad_n(self, n):
        with pytest.raises(ValueError):
            g.TorusGrid(2, n, 1.0)

    def test_rejects_bad_dim_and_length(self):
        with pytest.raises(ValueError):
            g.TorusGrid(4, 8, 1.0)
        with pytest.raises(ValueError):
            g.TorusGrid(2, 8, 0.0)

    def test_center_is_node(self):
        grid = g.TorusGrid(2, 16, 2.0)
        assert grid.coords[8] == grid.center


class TestIntegrate:
    def test_constant(self):
        grid = g.TorusGrid(2, 8, 2.0)
        assert g.integrate(grid, np.ones(grid.shape)) == pytest.approx(4.0, rel=1e-15)

    def test_zero(self, grid2):
        assert g.integrate(grid2, np.zeros(grid2.shape)) == 0.0

    def test_single_cell(self):
        grid = g.TorusGrid(2, 8, 2.0)
        f = np.zeros(grid.shape)
        f[3, 5] = 1.0
        assert g.integrate(grid, f) == pytest.approx(0.0625, rel=1e-15)


class TestLpNorm:
    def test_constant_l2(self):
        grid = g.TorusGrid(2, 8, 2.0)
        assert g.lp_norm(grid, np.ones(grid.shape), 2) == pytest.approx(2.0, rel=1e-15)

    def test_constant_inf(self, grid2):
        assert g.lp_norm(grid2, np.ones(grid2.shape), np.inf) == 1.0

    def test_single_cell_l1(self):
        grid = g.TorusGrid(2, 8, 2.0)
        f = np.zeros(grid.shape)
        f[0, 0] = 16.0
        assert g.lp_norm(grid, f, 1) == pytest.approx(1.0, rel=1e-15)

    def test_rejects_p_below_one(self, grid2):
        with pytest.raises(ValueError):
            g.lp_norm(grid2, np.ones(grid2.shape), 0.5)

    @given(st.integers(0, 2**32 - 1), st.floats(1.0, 8.0))
    def test_holder_against_volume(self, seed, p):
        grid = g.TorusGrid(2, 16, 3.0)
        f = np.random.default_rng(seed).standard_normal(grid.shape)
        lhs = g.lp_norm(grid, f, 1)
        rhs = grid.volume ** (1 - 1 / p) * g.lp_norm(grid, f, p)
        assert lhs <= rhs * (1 + 1e-12)


class TestSobolevNorm:
    def test_constant_field(self, grid2):
        f = np.full(grid2.shape, 3.0)
        for p in (1.5, 2.0, 4.0):
            assert g.sobolev_norm(grid2, f, 2, p) == pytest.approx(g.lp_norm(grid2, f, p), rel=1e-14)

    def test_zero(self, grid2):
        assert g.sobolev_norm(grid2, np.zeros(grid2.shape), 1, 2) == 0.0

    def test_sine_first_order(self):
        L = 2.0
        grid = g.TorusGrid(1, 256, L)
        x = grid.coords
        f = np.sin(2 * np.pi * x / L)
        k = 2 * np.pi / L
        # continuum: ||sin||_2 = sqrt(L/2), ||k cos||_2 = k sqrt(L/2)
        exact = math.sqrt(L / 2) * (1 + k)
        assert g.sobolev_norm(grid, f, 1, 2) == pytest.approx(exact, rel=0.01)

    def test_rejects_order(self, grid2):
        with pytest.raises(ValueError):
            g.sobolev_norm(grid2, np.zeros(grid2.shape), 3, 2)


class TestMoments:
    def test_point_mass_at_center(self):
        grid = g.TorusGrid(2, 16, 2.0)
        rho = np.zeros(grid.shape)
        rho[8, 8] = 1 / grid.cell_volume
        assert g.second_moment(grid, rho) == 0.0

    def test_symmetric_pair(self):
        grid = g.TorusGrid(2, 16, 2.0)
        rho = np.zeros(grid.shape)
        rho[8 - 3, 8] = rho[8 + 3, 8] = 0.5 / grid.cell_volume
        r = 3 * grid.h
        assert g.second_moment(grid, rho) == pytest.approx(r**2, rel=1e-14)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_gaussian(self, dim):
        grid = g.TorusGrid(dim, 64 if dim < 3 else 32, 8.0)
        sigma = 0.6
        rho = F.gaussian(grid, sigma)
        assert g.second_moment(grid, rho) == pytest.approx(dim * sigma**2, rel=0.01)


class TestEntropyFisher:
    def test_uniform(self):
        grid = g.TorusGrid(2, 16, 2.0)
        rho = np.full(grid.shape, 0.25)
        assert g.entropy(grid, rho) == pytest.approx(-math.log(4), rel=1e-14)
        assert g.fisher_information(grid, rho) == pytest.approx(0.0, abs=1e-20)

    def test_gaussian_entropy(self):
        grid = g.TorusGrid(2, 128, 10.0)
        sigma = 0.5
        rho = F.gaussian(grid, sigma)
        exact = -(grid.dim / 2) * math.log(2 * math.pi * math.e * sigma**2)
        assert g.entropy(grid, rho) == pytest.approx(exact, rel=0.02)

    def test_zero_log_zero(self, grid2):
        rho = np.zeros(grid2.shape)
        rho[0, 0] = 1 / grid2.cell_volume
        assert math.isfinite(g.entropy(grid2, rho))

    @given(st.integers(0, 2**32 - 1))
    def test_jensen_and_fisher_sign(self, seed):
        grid = g.TorusGrid(2, 16, 2.0)
        raw = np.random.default_rng(seed).random(grid.shape) ** 3
        rho = g.as_density(grid, raw, normalize=True)
        assert g.entropy(grid, rho) >= -math.log(grid.volume) - 1e-12
        assert g.fisher_information(grid, rho) >= 0


class TestSpectralOperators:
    def test_gradient_of_constant(self, grid2):
        assert np.abs(g.gradient(grid2, np.full(grid2.shape, 2.5))).max() < 1e-14

    def test_laplacian_of_sine(self):
        L = 3.0
        grid = g.TorusGrid(2, 32, L)
        k = 2 * np.pi / L
        f = np.sin(k * grid.mesh[0])
        assert np.abs(g.laplacian(grid, f) + k**2 * f).max() < 1e-12

    def test_mode_derivative(self):
        grid = g.TorusGrid(2, 32, 2 * np.pi)
        f = np.cos(3 * grid.mesh[0] + 2 * grid.mesh[1])
        grad = g.gradient(grid, f)
        s = np.sin(3 * grid.mesh[0] + 2 * grid.mesh[1])
        assert np.abs(grad[0] + 3 * s).max() < 1e-12
        assert np.abs(grad[1] + 2 * s).max() < 1e-12

    @given(st.integers(0, 2**32 - 1))
    def test_div_grad_is_laplacian(self, seed):
        grid = g.TorusGrid(2, 32, 2.0)
        f = F.smooth_random(grid, np.random.default_rng(seed))
        diff = g.divergence(grid, g.gradient(grid, f)) - g.laplacian(grid, f)
        assert np.abs(diff).max() <= 1e-12 * max(1.0, np.abs(g.laplacian(grid, f)).max())

    def test_heat_propagator_mode(self):
        grid = g.TorusGrid(1, 32, 2 * np.pi)
        f = np.sin(2 * grid.coords)
        out = g.heat_propagator(grid, f, 0.3)
        assert np.abs(out - np.exp(-4 * 0.3) * f).max() < 1e-14


class TestDensities:
    def test_as_density_rejects_negative(self, grid2):
        f = np.full(grid2.shape, 0.25)
        f[0, 0] = -1e-3
        with pytest.raises(ValueError):
            g.as_density(grid2, f)

    def test_as_density_rejects_unnormalized(self, grid2):
        with pytest.raises(ValueError):
            g.as_density(grid2, np.ones(grid2.shape))

    def test_localization_check(self):
        grid = g.TorusGrid(2, 64, 8.0)
        g.check_localized(grid, F.gaussian(grid, 0.4))
        with pytest.raises(ValueError, match="enlarge L"):
            g.check_localized(grid, F.gaussian(grid, 1.0))


class TestFieldFiles:
    def test_round_trip(self, tmp_path, rng):
        grid = g.TorusGrid(2, 16, 1.7)
        u = rng.standard_normal((2,) + grid.shape)
        path = tmp_path / "u.field"
        g.write_field(path, grid, u, time=0.25, tag="abc")
        grid2, back, t = g.read_field(path)
        assert grid2 == grid and t == 0.25
        np.testing.assert_array_equal(back, u)
        assert path.read_text().splitlines()[0] == f"KSNS1 2 16 1.7 2 0.25 abc"

    def test_rejects_wrong_count(self, tmp_path):
        path = tmp_path / "bad.field"
        path.write_text("KSNS1 1 8 1.0 1 0.0\n1\n2\n")
        with pytest.raises(ValueError):
            g.read_field(path)

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.field"
        path.write_text("XX 1 8 1.0 1 0.0\n")
        with pytest.raises(ValueError):
            g.read_field(path)
