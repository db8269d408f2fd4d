"""Picard iteration for the coupled density / concentration / fluid system.

Each sweep maps a full space-time iterate ``(rho_k, c_k, u_k)`` to the next
one, solving the three linearized equations over the whole time slab in
the order c, rho, u:

* ``c_{k+1}``: advected by ``u_k``, consumed at rate ``kappa(c_k) rho_k``;
* ``rho_{k+1}``: drift ``u_k + chi(c_k) grad c_{k+1}``;
* ``u_{k+1}``: quadratic term frozen at ``u_k``, force ``-rho_{k+1} grad phi``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import grid as g
from .advection import face_velocity
from .fokker_planck import step_fp, time_nodes
from .navier_stokes import kinetic_energy, momentum, step_ns
from .scalar_transport import SensitivityFns, step_c

FLOOR_REL = 1e-12


@dataclass(frozen=True)
class CoupledData:
    rho0: np.ndarray
    c0: np.ndarray
    u0: np.ndarray
    grad_phi: np.ndarray
    fns: SensitivityFns


@dataclass
class IterateTriple:
    """Space-time iterate stored at every solver node."""

    times: np.ndarray
    rho: np.ndarray
    c: np.ndarray
    u: np.ndarray
    k: int = 1
    max_div: np.ndarray = None


def initial_iterate(data, T, dt):
    """Constant-in-time extension of the initial data (iterate ``k = 1``)."""
    times = time_nodes(T, dt)
    n = len(times)
    rep = lambda f: np.repeat(np.asarray(f, dtype=float)[None], n, axis=0)
    return IterateTriple(times, rep(data.rho0), rep(data.c0), rep(data.u0), 1)


def state_record(grid, rho, c, u):
    """Scalar diagnostics of one coupled state (the coupled ``traj.csv`` columns)."""
    rec = {
        "mass": float(g.integrate(grid, rho)),
        "min": float(rho.min()),
        "moment2": g.second_moment(grid, rho),
        "c_min": float(c.min()),
        "c_max": float(c.max()),
        "c_integral": float(g.integrate(grid, c)),
        "energy": kinetic_energy(grid, u),
        "max_div": float(np.abs(g.divergence(grid, u)).max()),
    }
    for j, m in enumerate(momentum(grid, u)):
        rec[f"momentum_{'xyz'[j]}"] = float(m)
    return rec


def iterate_records(grid, it):
    """:func:`state_record` at every node of an iterate, as arrays."""
    rows = [state_record(grid, r, c, u) for r, c, u in zip(it.rho, it.c, it.u)]
    return {k: np.array([row[k] for row in rows]) for k in rows[0]}


def chemotactic_drift(grid, fns, c_prev, c_next):
    return fns.chi(c_prev) * g.gradient(grid, c_next)


def picard_sweep(grid, prev, data):
    """One sweep of the iteration; returns the iterate ``prev.k + 1``."""
    times = prev.times
    dt = times[1] - times[0]
    n = len(times)
    fns = data.fns

    c = np.empty_like(prev.c)
    c[0] = data.c0
    for i in range(n - 1):
        c[i + 1] = step_c(grid, c[i], prev.u[i], prev.rho[i], fns, dt, c_frozen=prev.c[i])

    rho = np.empty_like(prev.rho)
    rho[0] = data.rho0
    for i in range(n - 1):
        chem = chemotactic_drift(grid, fns, prev.c[i], c[i])
        faces = face_velocity(grid, prev.u[i], solenoidal=True) + face_velocity(grid, chem)
        rho[i + 1] = step_fp(grid, rho[i], prev.u[i] + chem, dt, faces=faces)

    u = np.empty_like(prev.u)
    u[0] = data.u0
    max_div = np.zeros(n)
    max_div[0] = float(np.abs(g.divergence(grid, u[0])).max())
    for i in range(n - 1):
        state = step_ns(grid, u[i], rho[i], data.grad_phi, dt, advect=prev.u[i])
        u[i + 1] = state.u
        max_div[i + 1] = state.max_div

    return IterateTriple(times, rho, c, u, prev.k + 1, max_div)


@dataclass
class CoupledTrajectory:
    """Forward solution: records at every node, states at the sample times."""

    step_times: np.ndarray
    records: dict
    times: np.ndarray
    rho: np.ndarray
    c: np.ndarray
    u: np.ndarray


def solve_coupled(grid, data, T, dt, sample_every=1):
    """March the coupled system forward, each equation lagged by one step.

    The step order matches :func:`picard_sweep`: ``c`` first, then ``rho``
    with the drift built from the new ``c``, then ``u``.
    """
    nodes = time_nodes(T, dt)
    dt = nodes[1] - nodes[0]
    fns = data.fns
    rho, c, u = (np.asarray(f, dtype=float).copy() for f in (data.rho0, data.c0, data.u0))
    rows, times, snaps = [], [], []
    for n, t in enumerate(nodes):
        rows.append(state_record(grid, rho, c, u))
        if n % sample_every == 0 or n == len(nodes) - 1:
            times.append(t)
            snaps.append((rho.copy(), c.copy(), u.copy()))
        if n == len(nodes) - 1:
            break
        c_new = step_c(grid, c, u, rho, fns, dt)
        chem = chemotactic_drift(grid, fns, c, c_new)
        faces = face_velocity(grid, u, solenoidal=True) + face_velocity(grid, chem)
        rho_new = step_fp(grid, rho, u + chem, dt, faces=faces)
        u = step_ns(grid, u, rho, data.grad_phi, dt).u
        rho, c = rho_new, c_new
    records = {k: np.array([row[k] for row in rows]) for k in rows[0]}
    return CoupledTrajectory(nodes, records, np.array(times), *(np.array(s) for s in zip(*snaps)))


# -- solution norms ---------------------------------------------------------


def discrete_xa_norm(grid, traj, a):
    """``max_n ||f(t_n)||_{L^a}``."""
    if len(traj) < 2:
        raise ValueError("need at least two time nodes")
    return max(g.lp_norm(grid, f, a) for f in traj)


def _trapezoid(dts, vals):
    return float(np.sum(0.5 * dts * (vals[1:] + vals[:-1])))


def ya_parts(grid, traj, times, a):
    """Space part ``(int ||f||^2_{W^{2,a}} dt)^{1/2}`` and time part ``(sum dt ||D_t f||^2_{L^a})^{1/2}``."""
    if len(traj) < 2:
        raise ValueError("need at least two time nodes")
    dts = np.diff(times)
    space = np.array([g.sobolev_norm(grid, f, 2, a) for f in traj])
    dfdt = [(traj[i + 1] - traj[i]) / dts[i] for i in range(len(dts))]
    tpart = np.array([g.lp_norm(grid, d, a) for d in dfdt])
    return np.sqrt(_trapezoid(dts, space**2)), float(np.sqrt(np.sum(dts * tpart**2)))


def discrete_ya_norm(grid, traj, times, a):
    s, t = ya_parts(grid, traj, times, a)
    return s + t


@dataclass(frozen=True)
class NormBundle:
    x_a: float
    y_a_c: float
    y_a_u: float
    a: float
    dim: int

    def __post_init__(self):
        if not self.a > self.dim / 2:
            raise ValueError(f"need a > d/2, got a={self.a}, d={self.dim}")

    @property
    def eta(self):
        return 1.0 - self.dim / (2.0 * self.a)

    @property
    def total(self):
        return self.x_a + self.y_a_c + self.y_a_u


def difference_norms(grid, new, old, a):
    return NormBundle(
        x_a=discrete_xa_norm(grid, new.rho - old.rho, a),
        y_a_c=discrete_ya_norm(grid, new.c - old.c, new.times, a),
        y_a_u=discrete_ya_norm(grid, new.u - old.u, new.times, a),
        a=a,
        dim=grid.dim,
    )


def initial_norms(grid, data, a):
    """The three initial quantities bounded by ``M/6`` in the smallness hypothesis."""
    return {
        "rho0": g.lp_norm(grid, data.rho0, 1) + g.lp_norm(grid, data.rho0, a),
        "c0": g.sobolev_norm(grid, data.c0, 2, a),
        "u0": g.sobolev_norm(grid, data.u0, 2, a),
    }


def check_smallness(grid, data, a, M):
    """``(ok, norms)``: whether each initial norm is below ``M/6``."""
    norms = initial_norms(grid, data, a)
    return all(v < M / 6 for v in norms.values()), norms


@dataclass
class ContractionReport:
    """``D_k`` for ``k = 1..K`` with ``D_k`` measuring iterate ``k+1`` minus iterate ``k``."""

    T: float
    a: float
    D_rho: np.ndarray
    D_u: np.ndarray
    D_c: np.ndarray
    smallness: bool = None
    initial: dict = field(default_factory=dict)
    final: IterateTriple = None
    sweeps: list = field(default_factory=list)

    @property
    def D(self):
        return self.D_rho + self.D_u + self.D_c

    @property
    def K(self):
        return len(self.D_rho)

    @property
    def floor(self):
        return FLOOR_REL * max(self.D[0], 1.0)

    def ratios(self):
        """``D_k / D_{k-1}`` for ``k >= 2``; NaN where ``D_{k-1}`` is converged (below floor)."""
        D = self.D
        out = np.full(self.K, np.nan)
        for k in range(1, self.K):
            if D[k - 1] > self.floor:
                out[k] = D[k] / D[k - 1]
        return out

    def _valid(self, kmin):
        r = self.ratios()[kmin - 1:]
        return r[np.isfinite(r)]

    def max_ratio(self, kmin):
        r = self._valid(kmin)
        return float(r.max()) if r.size else 0.0

    @property
    def below_one(self):
        return self.max_ratio(2) < 1.0

    @property
    def below_half(self):
        return self.max_ratio(3) <= 0.5

    @property
    def diverging(self):
        """``D_k`` increasing for three consecutive ``k``."""
        D = self.D
        inc = np.diff(D) > 0
        return any(inc[i:i + 3].all() for i in range(len(inc) - 2))

    def rows(self):
        r = self.ratios()
        for k in range(self.K):
            yield k + 1, self.D_rho[k], self.D_u[k], self.D_c[k], self.D[k], r[k]


def contraction_study(grid, data, T, dt, K=6, a=2.0, M=None, keep=False):
    """Run ``K`` sweeps from the constant extension and record ``D_k``."""
    if K < 4:
        raise ValueError("K must be at least 4")
    smallness, initial = None, {}
    if M is not None:
        smallness, initial = check_smallness(grid, data, a, M)
    it = initial_iterate(data, T, dt)
    Dr, Du, Dc, kept = [], [], [], []
    for _ in range(K):
        new = picard_sweep(grid, it, data)
        nb = difference_norms(grid, new, it, a)
        Dr.append(nb.x_a)
        Du.append(nb.y_a_u)
        Dc.append(nb.y_a_c)
        if keep:
            kept.append(new)
        it = new
    return ContractionReport(
        T=float(it.times[-1]), a=a, D_rho=np.array(Dr), D_u=np.array(Du), D_c=np.array(Dc),
        smallness=smallness, initial=initial, final=it, sweeps=kept,
    )


def calibrate_horizon(grid, data, dt, K=6, a=2.0, T0=0.1, Tmin=1e-3, M=None):
    """Halve ``T`` from ``T0`` until the ratios for ``k >= 3`` are at most 1/2.

    Returns ``(report, certified)``; ``certified`` is False when ``T`` fell
    below ``Tmin`` first, in which case the last report is returned.
    """
    T = T0
    while True:
        rep = contraction_study(grid, data, T, min(dt, T / 4), K, a, M)
        if rep.below_half:
            return rep, True
        if T / 2 < Tmin:
            return rep, False
        T /= 2


def locality_sweep(grid, data, dt, T0, K=6, a=2.0, Tmax=1.0):
    """Double ``T`` from ``T0``; returns ``(T_first_ratio_ge_1 or None, reports)``."""
    T, reports = T0, []
    while T <= Tmax * (1 + 1e-12):
        rep = contraction_study(grid, data, T, dt, K, a)
        reports.append(rep)
        if not rep.below_one:
            return T, reports
        T *= 2
    return None, reports
