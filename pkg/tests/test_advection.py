import numpy as np
import pytest
from hypothesis import given, strategies as st

from ksns import fields as F
from ksns import grid as g
from ksns.advection import donor_cell, face_divergence, face_velocity, outflow_courant, rusanov_courant


class TestFaceVelocity:
    def test_constant_velocity(self, grid2):
        v = np.stack([np.full(grid2.shape, 0.3), np.full(grid2.shape, -0.2)])
        faces = face_velocity(grid2, v)
        np.testing.assert_allclose(faces, v, atol=1e-14)

    def test_solenoidal_faces_have_zero_discrete_divergence(self, grid2, rng):
        v = F.solenoidal_drift(grid2, rng, 1.0)
        faces = face_velocity(grid2, v, solenoidal=True)
        assert np.abs(face_divergence(grid2, faces)).max() < 1e-12

    def test_rejects_shape(self, grid2):
        with pytest.raises(ValueError):
            face_velocity(grid2, np.zeros(grid2.shape))


class TestDonorCell:
    @pytest.mark.parametrize("scheme", ["upwind", "rusanov"])
    def test_conservative(self, grid2, rng, scheme):
        q = rng.random(grid2.shape)
        faces = face_velocity(grid2, F.localized_drift(grid2, rng, 2.0, 0.8))
        out, _ = donor_cell(grid2, q, faces, 0.01, scheme)
        assert g.integrate(grid2, out) == pytest.approx(g.integrate(grid2, q), rel=1e-14)

    @pytest.mark.parametrize("scheme", ["upwind", "rusanov"])
    def test_positive(self, grid2, rng, scheme):
        q = rng.random(grid2.shape) ** 4
        faces = face_velocity(grid2, F.localized_drift(grid2, rng, 3.0, 0.8))
        out, nsub = donor_cell(grid2, q, faces, 0.02, scheme)
        assert out.min() >= 0
        assert nsub >= 1

    def test_schemes_agree_for_constant_velocity(self, grid2, rng):
        q = rng.random(grid2.shape)
        faces = np.stack([np.full(grid2.shape, 0.4), np.full(grid2.shape, 0.1)])
        a, _ = donor_cell(grid2, q, faces, 0.01, "upwind")
        b, _ = donor_cell(grid2, q, faces, 0.01, "rusanov")
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_one_cell_shift(self):
        grid = g.TorusGrid(1, 16, 1.0)
        q = np.zeros(grid.shape)
        q[3] = 1.0
        faces = np.full((1,) + grid.shape, 1.0)
        out, _ = donor_cell(grid, q, faces, grid.h, "upwind")
        assert out[4] == pytest.approx(1.0) and out[3] == pytest.approx(0.0, abs=1e-15)

    @given(st.integers(0, 2**32 - 1))
    def test_rusanov_maximum_principle_on_solenoidal_faces(self, seed):
        grid = g.TorusGrid(2, 16, 1.0)
        r = np.random.default_rng(seed)
        q = r.random(grid.shape)
        faces = face_velocity(grid, F.solenoidal_drift(grid, r, 1.0), solenoidal=True)
        out, _ = donor_cell(grid, q, faces, 0.02)
        assert out.max() <= q.max() + 1e-14
        assert out.min() >= q.min() - 1e-14

    def test_courant_counts(self, grid2):
        faces = np.stack([np.full(grid2.shape, 1.0), np.zeros(grid2.shape)])
        assert outflow_courant(grid2, faces, grid2.h) == pytest.approx(1.0)
        assert rusanov_courant(grid2, faces, grid2.h) == pytest.approx(2.0)

    def test_rejects_scheme(self, grid2):
        with pytest.raises(ValueError):
            donor_cell(grid2, np.zeros(grid2.shape), np.zeros((2,) + grid2.shape), 0.1, "lax")
