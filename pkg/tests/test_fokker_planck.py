import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ksns import fields as F
from ksns import grid as g
from ksns.errors import AdmissibilityError, CFLError, NumericalAbort
from ksns.fokker_planck import (
    DriftSpec, TestFunction, cfl_limit, check_admissible, drift_norm, lp_growth_exponent, mollify_drift,
    solve_fp, step_fp, time_nodes, weak_form_residual,
)


def heat_gaussian(grid, s0, t):
    """Exact periodic-free heat solution from a centered Gaussian."""
    return F.gaussian(grid, math.sqrt(s0**2 + 2 * t))


class TestAdmissibility:
    @pytest.mark.parametrize("dim,p,alpha,beta", [(2, 2, 4, 4), (2, 4, 4, 4), (3, 2, 6, 4), (1, 2, 2, 4), (3, 4, 4, 8)])
    def test_accepts(self, dim, p, alpha, beta):
        assert check_admissible(dim, p, alpha, beta)

    @pytest.mark.parametrize("dim,p,alpha,beta,msg", [
        (2, 2, 2, 4, "alpha > d"),
        (2, 2, 4, 1.5, "beta >= 2"),
        (2, 2, 4, 3, "d/alpha"),
        (2, 1.2, 4, 4, "2p'"),
        (2, 1.0, 4, 4, "p must exceed 1"),
    ])
    def test_rejects(self, dim, p, alpha, beta, msg):
        with pytest.raises(AdmissibilityError, match=msg):
            check_admissible(dim, p, alpha, beta)

    def test_three_dimensional_branch(self):
        # p >= d/(d-2) = 3 needs only alpha > d
        assert check_admissible(3, 3.5, 3.5, 16)
        with pytest.raises(AdmissibilityError):
            check_admissible(3, 2.0, 3.5, 16)

    def test_growth_exponent(self):
        assert lp_growth_exponent(2, 4) == 4.0


class TestStep:
    def test_uniform_fixed_point(self, grid2):
        rho = np.full(grid2.shape, 1 / grid2.volume)
        out = step_fp(grid2, rho, np.zeros((2,) + grid2.shape), 5e-4)
        assert np.abs(out - rho).max() < 1e-13

    def test_heat_gaussian(self, grid1):
        s0, dt = 0.5, 1e-3
        rho = F.gaussian(grid1, s0)
        out = step_fp(grid1, rho, np.zeros((1,) + grid1.shape), dt)
        assert g.lp_norm(grid1, out - heat_gaussian(grid1, s0, dt), 2) <= 1e-6

    def test_constant_drift_moves_mean(self):
        grid = g.TorusGrid(2, 64, 8.0)
        rho = F.gaussian(grid, 0.5)
        s = 1.5
        v = np.stack([np.full(grid.shape, s), np.zeros(grid.shape)])
        dt = 0.9 * cfl_limit(grid, s)
        out = step_fp(grid, rho, v, dt)
        shift = g.center_of_mass(grid, out) - g.center_of_mass(grid, rho)
        assert shift[0] == pytest.approx(s * dt, abs=grid.h * dt)
        assert abs(shift[1]) < 1e-12

    def test_cfl_error_names_dt(self, grid2):
        v = np.ones((2,) + grid2.shape)
        with pytest.raises(CFLError, match="admissible dt"):
            step_fp(grid2, np.full(grid2.shape, 0.25), v, 1.0)

    def test_mass_and_positivity_log(self, grid2, rng):
        rho = F.gaussian(grid2, 0.25)
        v = F.localized_drift(grid2, rng, 2.0, 0.7)
        dt = 0.9 * cfl_limit(grid2, float(g.magnitude(grid2, v).max()))
        out, info = step_fp(grid2, rho, v, dt, log_step=True)
        assert info["pre_min"] >= -1e-14
        assert info["mass_repair"] <= 1e-12
        assert g.integrate(grid2, out) == pytest.approx(1.0, abs=1e-12)

    def test_undershoot_budget_aborts(self):
        # a single-cell spike is far below resolution; the spectral heat kernel rings negative
        grid = g.TorusGrid(1, 32, 1.0)
        rho = np.zeros(grid.shape)
        rho[16] = 1 / grid.h
        with pytest.raises(NumericalAbort, match="undershoot"):
            step_fp(grid, rho, np.zeros((1,) + grid.shape), grid.h**2 / 8)

    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
    def test_mass_conserved_and_nonnegative(self, seed, amp):
        grid = g.TorusGrid(2, 32, 4.0)
        r = np.random.default_rng(seed)
        rho = F.gaussian(grid, 0.3)
        v = F.localized_drift(grid, r, amp, 1.2)
        dt = 0.9 * cfl_limit(grid, float(g.magnitude(grid, v).max()))
        out = step_fp(grid, rho, v, dt)
        assert out.min() >= 0
        assert abs(g.integrate(grid, out) - 1.0) <= 1e-12


class TestSolve:
    def test_time_nodes(self):
        t = time_nodes(0.1, 0.03)
        assert t[-1] == 0.1 and len(t) == 5
        with pytest.raises(ValueError):
            time_nodes(0.0, 0.1)

    def test_heat_trajectory(self, grid1):
        s0, T = 0.5, 0.05
        rho0 = F.gaussian(grid1, s0)
        traj = solve_fp(grid1, rho0, DriftSpec.zero(grid1, 2, 4), T, 1e-3, sample_every=10)
        for t, rho in zip(traj.times, traj.densities):
            assert g.lp_norm(grid1, rho - heat_gaussian(grid1, s0, t), 2) <= 1e-6
        assert np.allclose(traj.records["mass"], 1.0, atol=1e-11)

    def test_shear_lp_nonincreasing(self):
        grid = g.TorusGrid(2, 64, 8.0)
        rho0 = F.two_bump(grid, 0.35, 1.2)
        v = F.shear_drift(grid, 3.0)
        drift = DriftSpec.constant(v, 4, 4, solenoidal=True)
        dt = 0.9 * cfl_limit(grid, 3.0)
        traj = solve_fp(grid, rho0, drift, 0.05, dt, p=4)
        for q in ("l1", "l2", "lp"):
            s = traj.records[q]
            assert np.all(np.diff(s) <= 1e-13 * s[:-1])

    def test_records_every_node(self):
        grid = g.TorusGrid(2, 64, 8.0)
        traj = solve_fp(grid, F.gaussian(grid, 0.4), DriftSpec.zero(grid, 4, 4), 0.01, 1e-3, sample_every=4)
        assert all(len(v) == len(traj.step_times) for v in traj.records.values())
        assert traj.times[-1] == pytest.approx(0.01)
        assert len(traj.densities) == len(traj.times)

    def test_rejects_inadmissible(self, grid2):
        with pytest.raises(AdmissibilityError):
            solve_fp(grid2, F.gaussian(grid2, 0.2), DriftSpec.zero(grid2, 2, 4), 0.01, 1e-4)

    def test_rejects_unlocalized(self):
        grid = g.TorusGrid(2, 32, 2.0)
        with pytest.raises(ValueError, match="localized"):
            solve_fp(grid, F.gaussian(grid, 0.4), DriftSpec.zero(grid, 4, 4), 0.01, 1e-3)


class TestDriftNorm:
    def test_constant_drift(self, grid2):
        v = np.stack([np.full(grid2.shape, 2.0), np.zeros(grid2.shape)])
        times = np.linspace(0, 0.5, 6)
        # ||v||_{L^alpha} = 2 |Omega|^{1/alpha}; time norm (T)^{1/beta}
        exact = 2.0 * grid2.volume ** (1 / 4) * 0.5 ** (1 / 4)
        assert drift_norm(grid2, DriftSpec.constant(v, 4, 4), times, 4, 4) == pytest.approx(exact, rel=1e-12)

    def test_tabulated_lookup(self, grid2):
        vals = np.stack([np.full((2,) + grid2.shape, float(k)) for k in range(3)])
        d = DriftSpec.tabulated([0.0, 0.1, 0.2], vals, 4, 4)
        assert d.sample(0.05)[0, 0, 0] == 0.0
        assert d.sample(0.1)[0, 0, 0] == 1.0
        assert d.sample(0.25)[0, 0, 0] == 2.0


class TestMollify:
    def test_distance_decreases(self):
        grid = g.TorusGrid(2, 64, 8.0)
        v = F.localized_drift(grid, np.random.default_rng(1), 3.0, 2.5, radius=grid.h)
        drift = DriftSpec.constant(v, 4, 4)
        times = np.linspace(0, 0.1, 3)
        R = 2 * float(g.magnitude(grid, v).max())
        dists = [mollify_drift(grid, drift, r * grid.h, R, times)[1] for r in (4, 2, 1)]
        assert dists[0] > dists[1] > dists[2] > 0

    def test_zero_drift(self, grid2):
        out, dist = mollify_drift(grid2, DriftSpec.zero(grid2, 4, 4), 0.1, 1.0, [0.0, 0.1])
        assert np.abs(out.sample(0.0)).max() == 0 and dist == 0

    def test_constant_below_truncation(self, grid2):
        v = np.stack([np.full(grid2.shape, 0.5), np.full(grid2.shape, -0.25)])
        out, _ = mollify_drift(grid2, DriftSpec.constant(v, 4, 4), 0.2, 1.0, [0.0, 0.1])
        assert np.abs(out.sample(0.0) - v).max() < 1e-12

    def test_truncation_caps_magnitude(self, grid2):
        v = np.stack([np.full(grid2.shape, 3.0), np.zeros(grid2.shape)])
        out, _ = mollify_drift(grid2, DriftSpec.constant(v, 4, 4), 0.1, 1.0, [0.0, 0.1])
        assert g.magnitude(grid2, out.sample(0.0)).max() == pytest.approx(1.0, rel=1e-12)

    def test_rejects_radius(self, grid2):
        with pytest.raises(ValueError):
            mollify_drift(grid2, DriftSpec.zero(grid2, 4, 4), 0.0, 1.0, [0.0])


class TestWeakForm:
    @pytest.fixture
    def heat_run(self):
        def run(n, dt):
            grid = g.TorusGrid(1, n, 8.0)
            drift = DriftSpec.zero(grid, 2, 4)
            return solve_fp(grid, F.gaussian(grid, 0.4), drift, 0.1, dt), drift
        return run

    def test_zero_test_function(self, heat_run):
        traj, drift = heat_run(64, 1e-3)
        phi = TestFunction(((np.array([1]), 0.0, 0.0),), lambda t: 0.0, lambda t: 0.0)
        assert weak_form_residual(traj, drift, phi) == 0.0

    def test_spatially_constant(self, heat_run):
        traj, drift = heat_run(64, 1e-3)
        phi = TestFunction.cosine_envelope(((np.array([0]), 1.0, 0.0),), 0.1)
        assert weak_form_residual(traj, drift, phi) <= 1e-10

    def test_refinement(self, heat_run):
        phi = TestFunction.cosine_envelope(((np.array([1]), 1.0, 0.5), (np.array([2]), 0.3, 0.0)), 0.1)
        coarse = weak_form_residual(*heat_run(64, 3.2e-3), phi)
        fine = weak_form_residual(*heat_run(128, 1.6e-3), phi)
        assert fine <= 0.5 * coarse
