"""Periodic torus grids, discrete functionals and spectral operators.

Scalar fields are arrays of shape ``grid.shape``; vector fields carry a
leading component axis, shape ``(ncomp, *grid.shape)``.  Node ``i`` sits at
``x_i = i * h``, so the torus center ``L/2`` is itself a node.
"""

from dataclasses import dataclass
from functools import cached_property
import os

import numpy as np

FISHER_FLOOR = 1e-14
MASS_ATOL = 1e-12


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``[0, L)^dim``.

    ``dim = 1`` is allowed for validation runs; the model itself lives in
    two and three dimensions.
    """

    dim: int
    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def h(self):
        return self.length / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def ncells(self):
        return self.n**self.dim

    @property
    def cell_volume(self):
        return self.h**self.dim

    @property
    def volume(self):
        return self.length**self.dim

    @property
    def axes(self):
        """Spatial axes of a field array (negative, so vector fields work too)."""
        return tuple(range(-self.dim, 0))

    @property
    def center(self):
        return 0.5 * self.length

    @cached_property
    def coords(self):
        return np.arange(self.n) * self.h

    @cached_property
    def mesh(self):
        """Node coordinates, shape ``(dim, *shape)``."""
        return np.stack(np.meshgrid(*([self.coords] * self.dim), indexing="ij"))

    @cached_property
    def centered_mesh(self):
        """Unwrapped coordinates relative to the torus center."""
        return self.mesh - self.center

    # -- Fourier machinery (real FFT over the spatial axes) ----------------

    def _axis_k(self, axis, real_last, zero_nyquist):
        if real_last and axis == self.dim - 1:
            k = np.fft.rfftfreq(self.n, d=self.h) * 2 * np.pi
            if zero_nyquist:
                k[-1] = 0.0
        else:
            k = np.fft.fftfreq(self.n, d=self.h) * 2 * np.pi
            if zero_nyquist:
                k[self.n // 2] = 0.0
        shape = [1] * self.dim
        shape[axis] = k.size
        return k.reshape(shape)

    @cached_property
    def wavenumbers(self):
        """Per-axis wavenumbers on the rfft layout, Nyquist kept."""
        return tuple(self._axis_k(a, True, False) for a in range(self.dim))

    @cached_property
    def deriv_wavenumbers(self):
        """Per-axis first-derivative symbols (Nyquist zeroed, keeps fields real)."""
        return tuple(self._axis_k(a, True, True) for a in range(self.dim))

    @cached_property
    def k_squared(self):
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def deriv_k_squared(self):
        return sum(k**2 for k in self.deriv_wavenumbers)

    def fft(self, f):
        return np.fft.rfftn(f, axes=self.axes)

    def ifft(self, fh):
        return np.fft.irfftn(fh, s=self.shape, axes=self.axes)

    def kmode(self, integer_k):
        """Physical wavevector of an integer Fourier mode."""
        return 2 * np.pi / self.length * np.asarray(integer_k, dtype=float)


# -- field helpers ----------------------------------------------------------


def _spatial_check(grid, f):
    f = np.asarray(f, dtype=float)
    if f.shape[f.ndim - grid.dim:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return f


def magnitude(grid, f):
    """Pointwise Euclidean magnitude over any leading component axes."""
    f = _spatial_check(grid, f)
    if f.ndim == grid.dim:
        return np.abs(f)
    comps = f.reshape((-1,) + grid.shape)
    return np.sqrt(np.sum(comps**2, axis=0))


def as_density(grid, values, normalize=False, atol=MASS_ATOL):
    """Validate (and optionally normalize) a probability density on ``grid``."""
    rho = np.array(_spatial_check(grid, values), dtype=float)
    if rho.shape != grid.shape:
        raise ValueError("density must be a scalar field")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density has non-finite values")
    if rho.min() < 0:
        raise ValueError(f"density has negative values (min {rho.min():.3e})")
    mass = integrate(grid, rho)
    if normalize:
        if mass <= 0:
            raise ValueError("cannot normalize a zero density")
        rho /= mass
    elif abs(mass - 1.0) > atol:
        raise ValueError(f"density mass {mass!r} differs from 1 by more than {atol}")
    return rho


def boundary_mass(grid, rho, width=10):
    """Mass within ``width`` cells of the faces of the fundamental cell."""
    idx = np.arange(grid.n)
    near = (idx < width) | (idx >= grid.n - width)
    mask = np.zeros(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.n
        mask |= near.reshape(shape)
    return integrate(grid, np.where(mask, rho, 0.0))


def check_localized(grid, rho, width=10, tol=1e-8):
    """Raise if too much mass sits near the truncation boundary."""
    m = boundary_mass(grid, rho, width)
    if m > tol:
        raise ValueError(
            f"density not localized: mass {m:.3e} within {width} cells of the boundary "
            f"exceeds {tol:.1e}; enlarge L"
        )
    return m


# -- functionals ------------------------------------------------------------


def integrate(grid, f):
    """``h^dim * sum(f)`` over the spatial axes."""
    f = _spatial_check(grid, f)
    return grid.cell_volume * np.sum(f, axis=grid.axes)


def lp_norm(grid, f, p):
    """Discrete L^p norm; vector fields use the pointwise magnitude."""
    if not (p == np.inf or p >= 1):
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    a = magnitude(grid, f)
    if p == np.inf:
        return float(a.max())
    if p == 1:
        return float(integrate(grid, a))
    if p == 2:
        return float(np.sqrt(integrate(grid, a * a)))
    return float(integrate(grid, a**p) ** (1.0 / p))


def fd_gradient(grid, f):
    """Centered second-order differences, one new leading axis of size dim."""
    f = _spatial_check(grid, f)
    out = [(np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * grid.h) for ax in grid.axes]
    return np.stack(out)


def fd_hessian(grid, f):
    """Centered second differences; diagonal uses the 3-point stencil."""
    f = _spatial_check(grid, f)
    h = grid.h
    rows = []
    for i, ai in enumerate(grid.axes):
        row = []
        for j, aj in enumerate(grid.axes):
            if i == j:
                d2 = (np.roll(f, -1, axis=ai) - 2 * f + np.roll(f, 1, axis=ai)) / h**2
            else:
                di = (np.roll(f, -1, axis=ai) - np.roll(f, 1, axis=ai)) / (2 * h)
                d2 = (np.roll(di, -1, axis=aj) - np.roll(di, 1, axis=aj)) / (2 * h)
            row.append(d2)
        rows.append(np.stack(row))
    return np.stack(rows)


def sobolev_norm(grid, f, k, p):
    """W^{k,p} norm: L^p norms of f, |grad f| and (k=2) |Hessian f| summed."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    total = lp_norm(grid, f, p) + lp_norm(grid, fd_gradient(grid, f), p)
    if k == 2:
        total += lp_norm(grid, fd_hessian(grid, f), p)
    return total


def second_moment(grid, rho):
    r2 = np.sum(grid.centered_mesh**2, axis=0)
    return float(integrate(grid, r2 * rho))


def center_of_mass(grid, rho):
    return np.array([integrate(grid, x * rho) for x in grid.mesh]) / integrate(grid, rho)


def entropy(grid, rho):
    """``int rho ln rho`` with ``0 ln 0 = 0``."""
    rho = _spatial_check(grid, rho)
    pos = rho > 0
    val = np.zeros_like(rho)
    val[pos] = rho[pos] * np.log(rho[pos])
    return float(integrate(grid, val))


def fisher_information(grid, rho, floor=FISHER_FLOOR):
    g = gradient(grid, rho)
    return float(integrate(grid, np.sum(g * g, axis=0) / np.maximum(rho, floor)))


# -- spectral operators -----------------------------------------------------


def gradient(grid, f):
    f = _spatial_check(grid, f)
    fh = grid.fft(f)
    return np.stack([grid.ifft(1j * k * fh) for k in grid.deriv_wavenumbers], axis=0 if f.ndim == grid.dim else 1)


def divergence(grid, g):
    g = _spatial_check(grid, g)
    if g.shape[0] != grid.dim:
        raise ValueError("divergence needs a dim-component vector field")
    gh = grid.fft(g)
    return grid.ifft(sum(1j * k * gh[j] for j, k in enumerate(grid.deriv_wavenumbers)))


def laplacian(grid, f):
    """Symbol ``-sum k_j^2`` with the derivative wavenumbers, so it equals div(grad)."""
    f = _spatial_check(grid, f)
    return grid.ifft(-grid.deriv_k_squared * grid.fft(f))


def heat_propagator(grid, f, t):
    """Exact ``exp(t Laplacian)`` on the trigonometric interpolant of ``f``."""
    f = _spatial_check(grid, f)
    if t == 0:
        return f.copy()
    return grid.ifft(np.exp(-t * grid.k_squared) * grid.fft(f))


def gaussian_filter(grid, f, radius):
    """Convolution with a unit-mass Gaussian of standard deviation ``radius``."""
    return grid.ifft(np.exp(-0.5 * radius**2 * grid.k_squared) * grid.fft(f))


# -- KSNS1 field files --------------------------------------------------------


def write_field(path, grid, values, time=0.0, tag=None):
    """Write a field as KSNS1 text (17 significant digits), atomically.

    ``tag`` (one token, e.g. a config hash) is appended to the header line.
    """
    values = _spatial_check(grid, values)
    ncomp = 1 if values.ndim == grid.dim else values.shape[0]
    header = f"KSNS1 {grid.dim} {grid.n} {grid.length!r} {ncomp} {float(time)!r}"
    header += f" {tag}\n" if tag else "\n"
    body = "\n".join(f"{x:.17g}" for x in values.ravel(order="C"))
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(header)
        fh.write(body)
        fh.write("\n")
    os.replace(tmp, path)


def read_field(path):
    """Return ``(grid, values, time)`` from a KSNS1 file."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) not in (6, 7) or head[0] != "KSNS1":
            raise ValueError(f"{path}: not a KSNS1 file")
        dim, n, ncomp = int(head[1]), int(head[2]), int(head[4])
        grid = TorusGrid(dim, n, float(head[3]))
        data = np.loadtxt(fh, dtype=float, ndmin=1)
    expected = ncomp * grid.ncells
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {data.size}")
    shape = grid.shape if ncomp == 1 else (ncomp,) + grid.shape
    return grid, data.reshape(shape), float(head[5])
