"""Drift-diffusion of a probability density: ``d_t rho = div(grad rho - v rho)``.

One step is a Strang splitting (half heat step, donor-cell advection of the
flux ``v rho``, half heat step).  Drifts are piecewise constant in time,
sampled at the left end of each step.
"""

from dataclasses import dataclass, field
import logging
import math
from typing import Callable

import numpy as np

from . import grid as g
from .advection import donor_cell, face_velocity
from .errors import AdmissibilityError, CFLError, NumericalAbort

log = logging.getLogger(__name__)

NEG_BUDGET = 1e-14
MASS_BUDGET = 1e-12


def conjugate(p):
    return p / (p - 1.0)


def check_admissible(dim, p, alpha, beta):
    """Validate ``(alpha, beta)`` against the integrability conditions for ``p``.

    Requires ``alpha > dim``, ``beta >= 2``, ``dim/alpha + 2/beta <= 1`` and
    ``alpha >= 2 p'`` when ``p < dim/(dim-2)``.  In two dimensions that
    threshold is read as infinity, so every finite ``p`` takes the
    ``alpha >= 2 p'`` branch.
    """
    if not p > 1:
        raise AdmissibilityError(f"p must exceed 1, got {p}")
    if not alpha > dim:
        raise AdmissibilityError(f"need alpha > d (alpha={alpha}, d={dim})")
    if beta < 2:
        raise AdmissibilityError(f"need beta >= 2, got {beta}")
    if dim / alpha + 2.0 / beta > 1 + 1e-12:
        raise AdmissibilityError(f"need d/alpha + 2/beta <= 1, got {dim / alpha + 2.0 / beta:.6g}")
    threshold = math.inf if dim == 2 else dim / (dim - 2.0)
    if dim >= 2 and p < threshold and alpha < 2 * conjugate(p) - 1e-12:
        raise AdmissibilityError(f"need alpha >= 2p' = {2 * conjugate(p):.6g} for p={p}")
    return True


def lp_growth_exponent(dim, alpha):
    """Exponent ``2 alpha / (alpha - d)`` of the drift norm in the L^p bound."""
    return 2.0 * alpha / (alpha - dim)


@dataclass(frozen=True)
class DriftSpec:
    """Time-dependent drift ``v(t, .)`` with its declared integrability ``(alpha, beta)``."""

    field: Callable[[float], np.ndarray]
    alpha: float
    beta: float
    solenoidal: bool = False

    def sample(self, t):
        return np.asarray(self.field(t), dtype=float)

    @classmethod
    def constant(cls, v, alpha, beta, solenoidal=False):
        v = np.asarray(v, dtype=float)
        return cls(lambda t: v, alpha, beta, solenoidal)

    @classmethod
    def zero(cls, grid, alpha, beta):
        return cls.constant(np.zeros((grid.dim,) + grid.shape), alpha, beta, True)

    @classmethod
    def tabulated(cls, times, values, alpha, beta, solenoidal=False):
        """Piecewise-constant drift: ``values[i]`` on ``[times[i], times[i+1])``."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)

        def lookup(t):
            i = int(np.searchsorted(times, t + 1e-12 * max(1.0, abs(t)), side="right")) - 1
            return values[min(max(i, 0), len(values) - 1)]

        return cls(lookup, alpha, beta, solenoidal)

    def norm(self, grid, times):
        """``||v||_{L^beta_t L^alpha_x}`` with the drift constant on each step."""
        return drift_norm(grid, self, times, self.alpha, self.beta)


def drift_norm(grid, drift, times, alpha, beta):
    times = np.asarray(times, dtype=float)
    dts = np.diff(times)
    vals = np.array([g.lp_norm(grid, drift.sample(t), alpha) for t in times[:-1]])
    return float(np.sum(dts * vals**beta) ** (1.0 / beta))


def cfl_limit(grid, vmax):
    diff = grid.h**2 / (2 * grid.dim)
    if vmax <= 0:
        return diff
    return min(grid.h / (2 * vmax), diff)


def step_fp(grid, rho, v, dt, faces=None, solenoidal=False, log_step=False):
    """Advance the density by one Strang step of length ``dt``.

    ``faces`` overrides the face velocities derived from ``v``.  Raises
    ``CFLError`` when ``dt`` exceeds the explicit bound and
    ``NumericalAbort`` when the undershoot or mass-repair budgets are
    exceeded.  With ``log_step`` returns ``(rho, info)``.
    """
    v = np.asarray(v, dtype=float)
    vmax = float(g.magnitude(grid, v).max())
    if faces is None:
        faces = face_velocity(grid, v, solenoidal=solenoidal)
    vmax = max(vmax, float(np.abs(faces).max()))
    dt_max = cfl_limit(grid, vmax)
    if dt > dt_max * (1 + 1e-12):
        raise CFLError(dt, dt_max, "step_fp")

    mass_in = g.integrate(grid, rho)
    out = g.heat_propagator(grid, rho, 0.5 * dt)
    out, nsub = donor_cell(grid, out, faces, dt)
    out = g.heat_propagator(grid, out, 0.5 * dt)

    pre_min = float(out.min())
    if pre_min < -NEG_BUDGET:
        raise NumericalAbort(f"step_fp: undershoot {pre_min:.3e} below budget -{NEG_BUDGET:g}")
    if pre_min < 0:
        log.debug("step_fp: clipping undershoot %.3e", pre_min)
        out = np.maximum(out, 0.0)
    mass_out = g.integrate(grid, out)
    repair = abs(mass_out - mass_in)
    if repair > MASS_BUDGET:
        raise NumericalAbort(f"step_fp: mass repair {repair:.3e} exceeds {MASS_BUDGET:g}")
    out *= mass_in / mass_out
    if log_step:
        return out, {"pre_min": pre_min, "mass_repair": repair, "substeps": nsub}
    return out


def time_nodes(T, dt):
    """Uniform nodes on ``[0, T]`` with step no larger than ``dt``."""
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    return np.linspace(0.0, T, nsteps + 1)


@dataclass
class FPTrajectory:
    """Sampled solution plus per-step scalar records.

    ``records`` holds one entry per solver node (``step_times``); densities
    are stored at ``times`` only.
    """

    grid: g.TorusGrid
    times: np.ndarray
    densities: np.ndarray
    step_times: np.ndarray
    records: dict = field(default_factory=dict)
    drift_norm: float = 0.0
    p: float = 2.0

    @property
    def rho0(self):
        return self.densities[0]


RECORD_KEYS = (
    "mass", "min", "l1", "l2", "lp", "moment2", "entropy", "fisher",
    "v_alpha", "v_2pp", "v_sq_rho", "w_rho",
)


def step_record(grid, rho, v, p, alpha):
    """Scalar diagnostics of one state ``(rho, v)``."""
    grad = g.gradient(grid, rho)
    floor = np.maximum(rho, g.FISHER_FLOOR)
    w_flux = v * rho - grad
    return {
        "mass": float(g.integrate(grid, rho)),
        "min": float(rho.min()),
        "l1": g.lp_norm(grid, rho, 1),
        "l2": g.lp_norm(grid, rho, 2),
        "lp": g.lp_norm(grid, rho, p),
        "moment2": g.second_moment(grid, rho),
        "entropy": g.entropy(grid, rho),
        "fisher": float(g.integrate(grid, np.sum(grad * grad, axis=0) / floor)),
        "v_alpha": g.lp_norm(grid, v, alpha),
        "v_2pp": g.lp_norm(grid, v, 2 * conjugate(p)),
        "v_sq_rho": float(g.integrate(grid, np.sum(v * v, axis=0) * rho)),
        "w_rho": float(np.sqrt(g.integrate(grid, np.sum(w_flux * w_flux, axis=0) / floor))),
    }


def solve_fp(grid, rho0, drift, T, dt, sample_every=1, p=2.0, localized=True):
    """Integrate over ``[0, T]``; returns an :class:`FPTrajectory`."""
    check_admissible(grid.dim, p, drift.alpha, drift.beta)
    rho = g.as_density(grid, rho0)
    if localized:
        g.check_localized(grid, rho)
    nodes = time_nodes(T, dt)
    dt = nodes[1] - nodes[0]
    records = {k: [] for k in RECORD_KEYS}
    times, snaps = [], []
    pre_min = np.inf
    for n, t in enumerate(nodes):
        v = drift.sample(t)
        rec = step_record(grid, rho, v, p, drift.alpha)
        rec["min"] = min(rec["min"], pre_min)
        for key, val in rec.items():
            records[key].append(val)
        if n % sample_every == 0 or n == len(nodes) - 1:
            times.append(t)
            snaps.append(rho.copy())
        if n < len(nodes) - 1:
            rho, info = step_fp(grid, rho, v, dt, solenoidal=drift.solenoidal, log_step=True)
            pre_min = info["pre_min"]
    return FPTrajectory(
        grid=grid,
        times=np.array(times),
        densities=np.array(snaps),
        step_times=nodes,
        records={k: np.array(v) for k, v in records.items()},
        drift_norm=drift_norm(grid, drift, nodes, drift.alpha, drift.beta),
        p=p,
    )


def mollify_drift(grid, drift, radius, truncation, times):
    """Truncate ``|v|`` at ``truncation`` and smooth with a Gaussian of width ``radius``.

    Returns ``(mollified_drift, distance)`` where ``distance`` is the
    ``L^beta_t L^alpha_x`` distance to the original drift on ``times``.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")

    def smoothed(t):
        v = drift.sample(t)
        mag = g.magnitude(grid, v)
        scale = np.where(mag > truncation, truncation / np.where(mag > 0, mag, 1.0), 1.0)
        return g.gaussian_filter(grid, v * scale, radius)

    out = DriftSpec(smoothed, drift.alpha, drift.beta, drift.solenoidal)
    diff = DriftSpec(lambda t: out.sample(t) - drift.sample(t), drift.alpha, drift.beta)
    return out, drift_norm(grid, diff, times, drift.alpha, drift.beta)


@dataclass(frozen=True)
class TestFunction:
    """``phi(t, x) = envelope(t) * sum_m (a_m cos(k_m.x) + b_m sin(k_m.x))``.

    ``modes`` holds ``(integer_wavevector, a, b)`` triples; the envelope
    must vanish at ``T`` together with its derivative.
    """

    modes: tuple
    envelope: Callable[[float], float]
    envelope_dt: Callable[[float], float]

    __test__ = False

    @classmethod
    def cosine_envelope(cls, modes, T):
        """Envelope ``cos^2(pi t / 2T)``: equals 1 at t=0, flat zero at t=T."""
        w = np.pi / (2 * T)
        return cls(
            tuple(modes),
            lambda t: np.cos(w * t) ** 2,
            lambda t: -2 * w * np.cos(w * t) * np.sin(w * t),
        )

    def spatial(self, grid):
        """Values, gradient and Laplacian of the spatial factor on ``grid``."""
        val = np.zeros(grid.shape)
        grad = np.zeros((grid.dim,) + grid.shape)
        lap = np.zeros(grid.shape)
        for kint, a, b in self.modes:
            k = grid.kmode(kint)
            phase = np.tensordot(k, grid.mesh, axes=1)
            c, s = np.cos(phase), np.sin(phase)
            val += a * c + b * s
            dval = -a * s + b * c
            grad += k.reshape((-1,) + (1,) * grid.dim) * dval
            lap += -(k @ k) * (a * c + b * s)
        return val, grad, lap


def weak_form_residual(traj, drift, phi):
    """Residual of the distributional identity tested against ``phi``.

    Time derivatives are taken as differences of ``phi`` between samples,
    so the mass identity is reproduced to rounding.
    """
    grid = traj.grid
    val, grad, lap = phi.spatial(grid)
    t = traj.times
    total = 0.0
    for i in range(len(t) - 1):
        dt = t[i + 1] - t[i]
        rho_mid = 0.5 * (traj.densities[i] + traj.densities[i + 1])
        tm = 0.5 * (t[i] + t[i + 1])
        v = drift.sample(t[i])
        dpsi = phi.envelope(t[i + 1]) - phi.envelope(t[i])
        space = lap + np.sum(grad * v, axis=0)
        total += dpsi * g.integrate(grid, val * rho_mid)
        total += dt * phi.envelope(tm) * g.integrate(grid, space * rho_mid)
    total += phi.envelope(t[0]) * g.integrate(grid, val * traj.densities[0])
    return abs(float(total))
