"""Discrete optimal transport with quadratic cost.

Grid densities become point clouds with each cell's mass at its node, in
unwrapped coordinates: distances never wrap around the torus.
"""

from dataclasses import dataclass
import os

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, ConvergenceError

EXACT_CAPACITY = 4096
PLAN_ATOL = 1e-9


@dataclass(frozen=True)
class DiscreteMeasure:
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.support, dtype=float))
        if s.shape[0] == 1 and np.ndim(self.support) == 1:
            s = s.T
        w = np.asarray(self.weights, dtype=float).ravel()
        if s.shape[0] != w.size:
            raise ValueError("support and weights sizes differ")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.support.shape[1]

    def __len__(self):
        return self.weights.size

    def expect(self, fn):
        """``int fn d(mu)`` for a vectorized ``fn(points) -> values``."""
        return float(np.dot(self.weights, fn(self.support)))

    def trimmed(self):
        """Drop zero-weight atoms."""
        keep = self.weights > 0
        return DiscreteMeasure(self.support[keep], self.weights[keep])


@dataclass(frozen=True)
class TransportPlan:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    gamma: np.ndarray

    def marginal_error(self):
        return max(
            np.abs(self.gamma.sum(axis=1) - self.mu.weights).max(),
            np.abs(self.gamma.sum(axis=0) - self.nu.weights).max(),
        )

    def cost(self):
        return float(np.sum(self.gamma * sq_distances(self.mu.support, self.nu.support)))


def dirac(x):
    return DiscreteMeasure(np.atleast_2d(np.asarray(x, dtype=float)), [1.0])


def grid_measure(grid, rho):
    """Point masses ``h^d rho_i`` at the grid nodes."""
    w = np.asarray(rho, dtype=float).ravel() * grid.cell_volume
    w = w / w.sum()
    pts = grid.mesh.reshape(grid.dim, -1).T
    return DiscreteMeasure(pts, w)


def block_measure(grid, rho, factor):
    """Aggregate ``factor^dim`` blocks of cells into one atom at the block centroid."""
    if factor == 1:
        return grid_measure(grid, rho)
    if grid.n % factor:
        raise ValueError("factor must divide n")
    m = grid.n // factor
    shape = sum(((m, factor) for _ in range(grid.dim)), ())
    w = np.asarray(rho, dtype=float).reshape(shape).sum(axis=tuple(range(1, 2 * grid.dim, 2))).ravel()
    c = (np.arange(m) * factor + 0.5 * (factor - 1)) * grid.h
    pts = np.stack(np.meshgrid(*([c] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T
    return DiscreteMeasure(pts, w / w.sum())


def translate(mu, a):
    return DiscreteMeasure(mu.support + np.asarray(a, dtype=float), mu.weights)


def sq_distances(x, y):
    d = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", d, d)


def pushforward(mu, T):
    """Image measure of ``mu`` under the map ``T`` (atoms merged on collision)."""
    pts = np.array([np.atleast_1d(T(x)) for x in mu.support], dtype=float)
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    w = np.zeros(len(uniq))
    np.add.at(w, inv.ravel(), mu.weights)
    return DiscreteMeasure(uniq, w / w.sum())


def _pot():
    for key in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{key}", "1")
    import ot

    return ot


def w2_exact(mu, nu, gap_tol=1e-9):
    """Exact W2 by network simplex; returns ``(distance, plan)``."""
    if len(mu) > EXACT_CAPACITY or len(nu) > EXACT_CAPACITY:
        raise CapacityError(
            f"exact solver supports at most {EXACT_CAPACITY} atoms, got {len(mu)} x {len(nu)}"
        )
    ot = _pot()
    C = sq_distances(mu.support, nu.support)
    a = mu.weights
    b = nu.weights * (a.sum() / nu.weights.sum())
    gamma, log = ot.emd(a, b, C, numItermax=10**8, log=True)
    if log["warning"] is not None:
        raise ConvergenceError(f"network simplex: {log['warning']}")
    primal = float(np.sum(gamma * C))
    dual = float(a @ log["u"] + b @ log["v"])
    scale = max(primal, np.max(C) * 1e-12, 1e-300)
    if abs(primal - dual) > gap_tol * scale + 1e-15:
        raise ConvergenceError(f"primal-dual gap {abs(primal - dual):.3e} too large")
    return float(np.sqrt(max(primal, 0.0))), TransportPlan(mu, nu, gamma)


def _sinkhorn_potentials(loga, logb, C, eps, max_iter, tol, check_every=10):
    f = np.zeros(loga.size)
    g = np.zeros(logb.size)
    a = np.exp(loga)
    Ce = C / eps
    for it in range(1, max_iter + 1):
        f = -eps * logsumexp((g / eps + logb)[None, :] - Ce, axis=1)
        g = -eps * logsumexp((f / eps + loga)[:, None] - Ce, axis=0)
        if it % check_every == 0 or it == max_iter:
            logP = (f[:, None] + g[None, :] - C) / eps + loga[:, None] + logb[None, :]
            viol = np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum()
            if viol <= tol:
                return f, g, logP
    raise ConvergenceError(
        f"Sinkhorn did not reach tol={tol:g} in {max_iter} iterations (violation {viol:.3e})",
        violation=viol,
    )


def _symmetric_potential(loga, C, eps, max_iter, tol, check_every=10):
    """Self-transport: the averaged update ``f <- (f + T f) / 2`` converges far faster."""
    f = np.zeros(loga.size)
    a = np.exp(loga)
    Ce = C / eps
    for it in range(1, max_iter + 1):
        f = 0.5 * (f - eps * logsumexp((f / eps + loga)[None, :] - Ce, axis=1))
        if it % check_every == 0 or it == max_iter:
            logP = (f[:, None] + f[None, :] - C) / eps + loga[:, None] + loga[None, :]
            viol = np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum()
            if viol <= tol:
                return f, f, logP
    raise ConvergenceError(
        f"symmetric Sinkhorn did not reach tol={tol:g} in {max_iter} iterations (violation {viol:.3e})",
        violation=viol,
    )


def _same(mu, nu):
    return len(mu) == len(nu) and np.array_equal(mu.support, nu.support) and np.array_equal(mu.weights, nu.weights)


def _entropic_cost(mu, nu, eps, max_iter, tol):
    C = sq_distances(mu.support, nu.support)
    loga, logb = np.log(mu.weights), np.log(nu.weights)
    if _same(mu, nu):
        f, g, logP = _symmetric_potential(loga, C, eps, max_iter, tol)
    else:
        f, g, logP = _sinkhorn_potentials(loga, logb, C, eps, max_iter, tol)
    P = np.exp(logP)
    transport = float(np.sum(P * C))
    # dual value equals the primal entropic objective at optimality
    regularized = float(mu.weights @ f + nu.weights @ g)
    return transport, regularized, P


def w2_sinkhorn(mu, nu, eps, max_iter=100_000, tol=1e-8, debias=False, return_plan=False):
    """Entropic approximation of W2 (log-domain Sinkhorn, fixed ``eps``).

    Without ``debias`` the result is the square root of the transport cost
    of the entropic plan, which upper-bounds the exact value.  With
    ``debias`` it is the square root of the Sinkhorn divergence
    ``OT_eps(mu, nu) - (OT_eps(mu, mu) + OT_eps(nu, nu)) / 2``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    mu, nu = mu.trimmed(), nu.trimmed()
    transport, reg, P = _entropic_cost(mu, nu, eps, max_iter, tol)
    if debias:
        _, reg_mm, _ = _entropic_cost(mu, mu, eps, max_iter, tol)
        _, reg_nn, _ = _entropic_cost(nu, nu, eps, max_iter, tol)
        value = np.sqrt(max(reg - 0.5 * (reg_mm + reg_nn), 0.0))
    else:
        value = np.sqrt(max(transport, 0.0))
    if return_plan:
        return float(value), TransportPlan(mu, nu, P)
    return float(value)


def _quantile_pieces(points, weights):
    order = np.argsort(points, kind="stable")
    return points[order], np.cumsum(weights[order])


def w2_1d_quantile(mu, nu, cell_width=None):
    """Exact W2 in one dimension through quantile functions.

    With ``cell_width`` each atom's mass is spread uniformly over a cell of
    that width centred on the atom (piecewise-linear quantiles); otherwise
    the quantiles are the step functions of the atomic measures.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("quantile solver is one-dimensional")
    xa, ca = _quantile_pieces(mu.support[:, 0], mu.weights)
    xb, cb = _quantile_pieces(nu.support[:, 0], nu.weights)
    ca[-1] = cb[-1] = 1.0
    s = np.union1d(np.concatenate(([0.0], ca)), cb)
    s = s[(s >= 0) & (s <= 1)]
    lo, hi = s[:-1], s[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    mid = 0.5 * (lo + hi)
    ia = np.minimum(np.searchsorted(ca, mid), xa.size - 1)
    ib = np.minimum(np.searchsorted(cb, mid), xb.size - 1)
    if cell_width is None:
        diff = xa[ia] - xb[ib]
        total = np.sum((hi - lo) * diff**2)
    else:
        def quantile(x, c, idx, s_):
            start = np.where(idx > 0, c[idx - 1], 0.0)
            mass = c[idx] - start
            frac = np.where(mass > 0, (s_ - start) / np.where(mass > 0, mass, 1.0), 0.5)
            return x[idx] - 0.5 * cell_width + cell_width * frac

        d_lo = quantile(xa, ca, ia, lo) - quantile(xb, cb, ib, lo)
        d_hi = quantile(xa, ca, ia, hi) - quantile(xb, cb, ib, hi)
        # the difference is linear on each piece
        total = np.sum((hi - lo) * (d_lo**2 + d_lo * d_hi + d_hi**2) / 3.0)
    return float(np.sqrt(max(total, 0.0)))


def w2_grid(grid, rho_a, rho_b, method="auto", eps=None, coarsen=1):
    """W2 between two grid densities.

    ``auto`` uses the histogram quantile formula in 1D, the exact solver up
    to its capacity and Sinkhorn beyond.  ``coarsen`` aggregates blocks of
    cells first (see :func:`block_measure`).
    """
    mu, nu = block_measure(grid, rho_a, coarsen), block_measure(grid, rho_b, coarsen)
    if method == "auto":
        if grid.dim == 1:
            method = "quantile"
        elif len(mu) <= EXACT_CAPACITY:
            method = "exact"
        else:
            method = "sinkhorn"
    if method == "quantile":
        return w2_1d_quantile(mu, nu, cell_width=grid.h * coarsen)
    if method == "quantile_atoms":
        return w2_1d_quantile(mu, nu)
    if method == "exact":
        return w2_exact(mu, nu)[0]
    if method == "sinkhorn":
        diam2 = grid.dim * grid.length**2
        return w2_sinkhorn(mu, nu, eps if eps is not None else 1e-3 * diam2)
    raise ValueError(f"unknown method {method!r}")


def metric_derivative(grid, curve, times, t_index, method="auto", coarsen=1):
    """Difference quotient of W2 along a sampled curve of densities.

    Interior indices use the symmetric quotient; the end points fall back
    to one-sided quotients.
    """
    times = np.asarray(times, dtype=float)
    if len(curve) < 2:
        raise ValueError("need at least two samples")
    if len(curve) < 3 and 0 < t_index < len(curve) - 1:
        raise ValueError("symmetric quotient needs three samples")
    lo = max(t_index - 1, 0)
    hi = min(t_index + 1, len(curve) - 1)
    return w2_grid(grid, curve[lo], curve[hi], method, coarsen=coarsen) / (times[hi] - times[lo])


def marginal_check(plan, atol=PLAN_ATOL):
    return plan.marginal_error() <= atol and bool(np.all(plan.gamma >= 0))

