"""Initial data and drift fields used by the experiments and tests.

Drifts and potentials are band-limited with a Gaussian filter of radius
``3h``.  The spectral heat step is not positivity preserving on grid data:
content near the Nyquist wavenumber that advection imprints on the density
comes back as small negative ripples, so every field that ends up
multiplying the density is kept free of it.
"""

import numpy as np

from . import grid as g
from .navier_stokes import leray_project


def gaussian(grid, sigma, center=None):
    """Unit-mass Gaussian density, normalized on the grid."""
    x = grid.centered_mesh if center is None else grid.mesh - np.reshape(center, (-1,) + (1,) * grid.dim)
    r2 = np.sum(x**2, axis=0)
    return g.as_density(grid, np.exp(-r2 / (2 * sigma**2)), normalize=True)


def two_bump(grid, sigma, separation, weight=0.5):
    """Mixture of two Gaussians placed symmetrically along the first axis."""
    off = np.zeros(grid.dim)
    off[0] = 0.5 * separation
    c = np.full(grid.dim, grid.center)
    rho = weight * gaussian(grid, sigma, c - off) + (1 - weight) * gaussian(grid, sigma, c + off)
    return g.as_density(grid, rho, normalize=True)


def gaussian_mixture(grid, rng, ncomp=3, spread=0.15, sigma=(0.05, 0.15)):
    """Random Gaussian mixture (lengths relative to ``L``) near the center."""
    L = grid.length
    rho = np.zeros(grid.shape)
    for _ in range(ncomp):
        c = grid.center + spread * L * rng.uniform(-1, 1, grid.dim)
        s = L * rng.uniform(*sigma)
        rho += rng.uniform(0.2, 1.0) * gaussian(grid, s, c)
    return g.as_density(grid, rho, normalize=True)


def smooth_random(grid, rng, ncomp=None, radius=None):
    """Gaussian-filtered white noise with unit max-norm."""
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    radius = 3 * grid.h if radius is None else radius
    f = g.gaussian_filter(grid, rng.standard_normal(shape), radius)
    return f / np.abs(f).max()


def bump(grid, radius, center=None):
    """Smooth compactly supported bump ``exp(1 - 1/(1 - r^2/R^2))`` (value 1 at center)."""
    x = grid.centered_mesh if center is None else grid.mesh - np.reshape(center, (-1,) + (1,) * grid.dim)
    s = np.sum(x**2, axis=0) / radius**2
    out = np.zeros(grid.shape)
    inside = s < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    return out


def band_limit(grid, f, radius=None):
    """Gaussian filter of radius ``3h`` (default): Nyquist content drops below 1e-19."""
    return g.gaussian_filter(grid, f, 3 * grid.h if radius is None else radius)


def localized_drift(grid, rng, amplitude, envelope_radius, radius=None):
    """Random smooth drift times a bump envelope, band-limited."""
    v = smooth_random(grid, rng, ncomp=grid.dim, radius=radius)
    return band_limit(grid, amplitude * v * bump(grid, envelope_radius))


def solenoidal_drift(grid, rng, amplitude, radius=None):
    """Random smooth divergence-free drift, scaled to max magnitude ``amplitude``."""
    v = leray_project(grid, smooth_random(grid, rng, ncomp=grid.dim, radius=radius))
    return amplitude * v / g.magnitude(grid, v).max()


def shear_drift(grid, amplitude, mode=1):
    """``v = (A sin(2 pi m x_2 / L), 0, ...)``: exactly divergence-free."""
    if grid.dim < 2:
        raise ValueError("shear needs dim >= 2")
    v = np.zeros((grid.dim,) + grid.shape)
    v[0] = amplitude * np.sin(2 * np.pi * mode * grid.mesh[1] / grid.length)
    return v


def compressive_drift(grid, amplitude, radius, center=None):
    """Band-limited drift ``-A x bump(|x| / R) / R`` pointing at ``center``; concentrates mass."""
    x = grid.centered_mesh if center is None else grid.mesh - np.reshape(center, (-1,) + (1,) * grid.dim)
    return band_limit(grid, -amplitude * x * bump(grid, radius, center) / radius)


def taylor_green(grid, amplitude=1.0, mode=1):
    """Two-dimensional Taylor-Green vortex (zero in any third component)."""
    if grid.dim < 2:
        raise ValueError("Taylor-Green needs dim >= 2")
    k = 2 * np.pi * mode / grid.length
    x, y = grid.mesh[0], grid.mesh[1]
    u = np.zeros((grid.dim,) + grid.shape)
    u[0] = amplitude * np.sin(k * x) * np.cos(k * y)
    u[1] = -amplitude * np.cos(k * x) * np.sin(k * y)
    return u


def potential_gradient(grid, strength, radius):
    """``grad phi`` for ``phi`` a band-limited bump of height ``strength``."""
    return g.gradient(grid, band_limit(grid, strength * bump(grid, radius)))
