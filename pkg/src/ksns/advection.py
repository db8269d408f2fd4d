"""Conservative first-order advection on the staggered (face) grid.

Face ``j`` of cell ``i`` sits at ``x_i + h/2 e_j``.  Face velocities are
obtained by spectral half-cell interpolation of node velocities; for
solenoidal fields they are additionally projected onto the kernel of the
discrete face-to-cell divergence, which makes the update doubly stochastic
(conservative and maximum-principle preserving at once).

Two monotone fluxes are offered.  ``upwind`` is the classical donor cell.
``rusanov`` (the default) is the centered flux plus a constant numerical
diffusion ``max|F_j| h / 2`` per axis; it coincides with upwind for constant
velocities and, unlike upwind, has no kink where the velocity changes sign.
That matters because the spectral heat step that follows turns grid-scale
kinks into small negative ripples far away.
"""

import math

import numpy as np


def face_velocity(grid, v, solenoidal=False):
    """Normal velocity on cell faces, shape ``(dim, *grid.shape)``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.dim,) + grid.shape:
        raise ValueError("velocity must have shape (dim, *grid.shape)")
    vh = grid.fft(v)
    faces = np.empty_like(vh)
    for j, k in enumerate(grid.deriv_wavenumbers):
        faces[j] = vh[j] * np.exp(0.5j * k * grid.h)
    if solenoidal:
        faces = _mac_project(grid, faces)
    return grid.ifft(faces)


def _mac_project(grid, faces_hat):
    h = grid.h
    div_sym = [(1 - np.exp(-1j * k * h)) / h for k in grid.wavenumbers]
    grad_sym = [(np.exp(1j * k * h) - 1) / h for k in grid.wavenumbers]
    div = sum(d * f for d, f in zip(div_sym, faces_hat))
    lap = sum(d * g for d, g in zip(div_sym, grad_sym))
    lap = np.where(lap == 0, 1.0, lap)
    phi = div / lap
    phi.flat[0] = 0.0
    return np.stack([f - g * phi for f, g in zip(faces_hat, grad_sym)])


def face_divergence(grid, faces):
    """Cell divergence of face-normal fluxes."""
    return sum((faces[j] - np.roll(faces[j], 1, axis=ax)) / grid.h for j, ax in enumerate(grid.axes))


def outflow_courant(grid, faces, dt):
    """Largest fraction of a cell's content leaving it in one step of ``dt``."""
    out = np.zeros(grid.shape)
    for j, ax in enumerate(grid.axes):
        out += np.maximum(faces[j], 0) + np.maximum(-np.roll(faces[j], 1, axis=ax), 0)
    return float(out.max()) * dt / grid.h


def rusanov_courant(grid, faces, dt):
    """Sub-step count making every Rusanov update coefficient nonnegative."""
    return 2.0 * sum(float(np.abs(f).max()) for f in faces) * dt / grid.h


def donor_cell(grid, q, faces, dt, scheme="rusanov"):
    """Advance ``dq/dt + div(F q) = 0`` by ``dt`` with a monotone face flux.

    Sub-steps are taken when needed so that every update stays a
    nonnegative combination of neighbours; returns ``(q, n_substeps)``.
    """
    if scheme == "upwind":
        courant = outflow_courant(grid, faces, dt)
    elif scheme == "rusanov":
        courant = rusanov_courant(grid, faces, dt)
        speed = [float(np.abs(f).max()) for f in faces]
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    nsub = max(1, math.ceil(courant - 1e-12))
    lam = dt / nsub / grid.h
    pos = [np.maximum(f, 0) for f in faces]
    neg = [np.minimum(f, 0) for f in faces]
    for _ in range(nsub):
        dflux = np.zeros(grid.shape)
        for j, ax in enumerate(grid.axes):
            right = np.roll(q, -1, axis=ax)
            if scheme == "upwind":
                flux = pos[j] * q + neg[j] * right
            else:
                flux = 0.5 * faces[j] * (q + right) - 0.5 * speed[j] * (right - q)
            dflux += flux - np.roll(flux, 1, axis=ax)
        q = q - lam * dflux
    return q, nsub
