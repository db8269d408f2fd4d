"""Incompressible Navier-Stokes with potential forcing on the periodic grid.

``d_t u - Lap u + grad p = -(w.grad) w - rho grad(phi)``, ``div u = 0``, where
``w`` is ``u`` itself or, inside the iteration scheme, a frozen previous
iterate.  Pressure is never formed; the Leray projector removes gradient parts.
"""

from dataclasses import dataclass

import numpy as np

from . import grid as g
from .errors import CFLError, NumericalAbort

DIV_TOL = 1e-8
MAX_3D_N = 64


def leray_project(grid, v):
    """Spectral projection onto divergence-free fields."""
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.dim,) + grid.shape:
        raise ValueError("expected a vector field of shape (dim, *grid.shape)")
    return grid.ifft(_project_hat(grid, grid.fft(v)))


def _project_hat(grid, vh):
    ks = grid.deriv_wavenumbers
    k2 = grid.deriv_k_squared
    kdotv = sum(k * vh[j] for j, k in enumerate(ks))
    phi = kdotv / np.where(k2 == 0, 1.0, k2)
    return np.stack([vh[j] - k * phi for j, k in enumerate(ks)])


def _dealias_mask(grid):
    cut = (2.0 / 3.0) * np.pi / grid.h
    mask = np.ones_like(grid.k_squared, dtype=bool)
    for k in grid.wavenumbers:
        mask &= np.abs(k) < cut
    return mask


def advection_term(grid, w, u):
    """``(w.grad) u`` with 2/3-rule dealiasing."""
    mask = _dealias_mask(grid)
    wf = grid.ifft(grid.fft(w) * mask)
    uh = grid.fft(u) * mask
    out = np.zeros_like(u)
    for j, k in enumerate(grid.deriv_wavenumbers):
        out += wf[j] * grid.ifft(1j * k * uh)
    return grid.ifft(grid.fft(out) * mask)


def kinetic_energy(grid, u):
    return 0.5 * g.lp_norm(grid, u, 2) ** 2


def momentum(grid, u):
    return np.asarray(g.integrate(grid, u))


@dataclass(frozen=True)
class FluidState:
    u: np.ndarray
    energy: float
    max_div: float


def ns_cfl_limit(grid, umax):
    return np.inf if umax <= 0 else grid.h / (2 * umax)


def step_ns(grid, u, rho, grad_phi, dt, advect=None, allow_3d=False):
    """One semi-implicit step; returns a :class:`FluidState`.

    Advection and forcing are explicit, diffusion is the exact factor
    ``exp(-|k|^2 dt)``, followed by projection.  ``advect`` replaces ``u``
    in the quadratic term.
    """
    if grid.dim == 1:
        raise ValueError("Navier-Stokes needs dim >= 2")
    if grid.dim == 3 and not (allow_3d and grid.n <= MAX_3D_N):
        raise ValueError(f"3D flow needs allow_3d=True and n <= {MAX_3D_N}")
    u = np.asarray(u, dtype=float)
    w = u if advect is None else np.asarray(advect, dtype=float)
    umax = max(float(g.magnitude(grid, u).max()), float(g.magnitude(grid, w).max()))
    dt_max = ns_cfl_limit(grid, umax)
    if dt > dt_max * (1 + 1e-12):
        raise CFLError(dt, dt_max, "step_ns")

    rhs = -advection_term(grid, w, w)
    if rho is not None and grad_phi is not None:
        rhs = rhs - np.asarray(rho) * np.asarray(grad_phi)
    uh = grid.fft(u + dt * rhs)
    uh = np.exp(-dt * grid.k_squared) * _project_hat(grid, uh)
    out = grid.ifft(uh)
    max_div = float(np.abs(g.divergence(grid, out)).max())
    if max_div > DIV_TOL:
        raise NumericalAbort(f"step_ns: divergence {max_div:.3e} exceeds {DIV_TOL:g}")
    return FluidState(out, kinetic_energy(grid, out), max_div)
