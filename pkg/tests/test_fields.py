import numpy as np
import pytest

from ksns import fields as F
from ksns import grid as g


class TestFields:
    def test_gaussian_unit_mass(self, grid2):
        rho = F.gaussian(grid2, 0.2)
        assert g.integrate(grid2, rho) == pytest.approx(1.0, abs=1e-13)

    def test_two_bump_symmetric(self):
        grid = g.TorusGrid(2, 64, 8.0)
        rho = F.two_bump(grid, 0.4, 2.0)
        assert g.center_of_mass(grid, rho) == pytest.approx([grid.center] * 2, abs=1e-12)

    def test_bump_support(self, grid2):
        b = F.bump(grid2, 0.5)
        r = np.sqrt(np.sum(grid2.centered_mesh**2, axis=0))
        assert b.max() == pytest.approx(1.0)
        assert np.all(b[r >= 0.5] == 0)

    def test_band_limit_kills_nyquist(self, grid2, rng):
        f = F.band_limit(grid2, rng.standard_normal(grid2.shape))
        fh = np.abs(grid2.fft(f))
        assert fh[grid2.n // 2, :].max() < 1e-15 * fh.max()

    def test_solenoidal_drift(self, grid2, rng):
        v = F.solenoidal_drift(grid2, rng, 2.0)
        assert np.abs(g.divergence(grid2, v)).max() < 1e-12
        assert g.magnitude(grid2, v).max() == pytest.approx(2.0)

    def test_shear_and_taylor_green_divergence_free(self, grid2):
        for v in (F.shear_drift(grid2, 1.0, 2), F.taylor_green(grid2, 1.0)):
            assert np.abs(g.divergence(grid2, v)).max() < 1e-12

    def test_compressive_points_inward(self):
        grid = g.TorusGrid(2, 64, 8.0)
        v = F.compressive_drift(grid, 2.0, 1.5)
        x = grid.centered_mesh
        assert g.integrate(grid, np.sum(v * x, axis=0)) < 0

    def test_one_dimensional_fields_rejected(self, grid1):
        with pytest.raises(ValueError):
            F.shear_drift(grid1, 1.0)
        with pytest.raises(ValueError):
            F.taylor_green(grid1)
