"""Advection-diffusion of a consumed concentration: ``d_t c + u.grad c - Lap c = -kappa(c) rho``.

The step mirrors :func:`ksns.fokker_planck.step_fp`: half heat step, upwind
advection by a divergence-free velocity on MAC-projected faces (so the
update is a convex combination of neighbours), a reaction substep and a
second half heat step.
"""

from dataclasses import dataclass

import numpy as np

from . import grid as g
from .advection import donor_cell, face_velocity
from .errors import CFLError, NumericalAbort
from .fokker_planck import cfl_limit

DIV_TOL = 1e-8
NEG_TOL = 1e-12
MAX_TOL = 1e-12


@dataclass(frozen=True)
class ScalarFn:
    """Scalar function given by polynomial coefficients or by a table.

    ``coeffs[i]`` multiplies ``c**i``.  A table ``(nodes, values)`` is
    interpolated linearly and extended by its end slopes.
    """

    coeffs: tuple = None
    nodes: tuple = None
    values: tuple = None

    def __post_init__(self):
        if (self.coeffs is None) == (self.nodes is None):
            raise ValueError("give either coeffs or (nodes, values)")
        if self.nodes is not None:
            x = np.asarray(self.nodes, dtype=float)
            if len(x) < 2 or np.any(np.diff(x) <= 0) or len(self.values) != len(x):
                raise ValueError("table nodes must be increasing and match values")

    @classmethod
    def poly(cls, *coeffs):
        return cls(coeffs=tuple(float(a) for a in coeffs))

    @classmethod
    def table(cls, nodes, values):
        return cls(nodes=tuple(map(float, nodes)), values=tuple(map(float, values)))

    def __call__(self, c):
        c = np.asarray(c, dtype=float)
        if self.coeffs is not None:
            return np.polynomial.polynomial.polyval(c, self.coeffs) + 0.0 * c
        x, y = np.asarray(self.nodes), np.asarray(self.values)
        out = np.interp(c, x, y)
        lo, hi = (y[1] - y[0]) / (x[1] - x[0]), (y[-1] - y[-2]) / (x[-1] - x[-2])
        out = np.where(c < x[0], y[0] + lo * (c - x[0]), out)
        return np.where(c > x[-1], y[-1] + hi * (c - x[-1]), out)

    def linear_rate(self):
        """``k0`` if the function is exactly ``k0 * c``, else ``None``."""
        if self.coeffs is not None:
            a = np.trim_zeros(np.asarray(self.coeffs), "b")
            if a.size == 0:
                return 0.0
            if a.size == 2 and a[0] == 0:
                return float(a[1])
            return None
        x, y = np.asarray(self.nodes), np.asarray(self.values)
        if x[0] == 0 and y[0] == 0 and np.allclose(y, x * y[-1] / x[-1], rtol=0, atol=1e-15):
            return float(y[-1] / x[-1])
        return None


@dataclass(frozen=True)
class SensitivityFns:
    """Chemotactic sensitivity ``chi`` and consumption rate ``kappa``.

    Both must be nonnegative and nondecreasing on ``[0, cmax]``, and
    ``kappa(0) = 0``; checked once at construction.
    """

    chi: ScalarFn
    kappa: ScalarFn
    cmax: float = 1.0

    def __post_init__(self):
        c = np.linspace(0.0, self.cmax, 257)
        if self.chi.nodes is not None or self.kappa.nodes is not None:
            c = np.union1d(c, [x for f in (self.chi, self.kappa) if f.nodes for x in f.nodes if 0 <= x <= self.cmax])
        for name, fn in (("chi", self.chi), ("kappa", self.kappa)):
            vals = fn(c)
            if np.any(vals < -1e-15):
                raise ValueError(f"{name} must be nonnegative on [0, {self.cmax}]")
            if np.any(np.diff(vals) < -1e-13):
                raise ValueError(f"{name} must be nondecreasing on [0, {self.cmax}]")
        if abs(float(self.kappa(0.0))) > 0:
            raise ValueError("kappa(0) must vanish")

    @classmethod
    def linear(cls, chi0, kappa0, cmax=1.0):
        """``chi = chi0`` and ``kappa(c) = kappa0 * c``."""
        return cls(ScalarFn.poly(chi0), ScalarFn.poly(0.0, kappa0), cmax)

    @classmethod
    def inert(cls):
        return cls.linear(0.0, 0.0)


@dataclass(frozen=True)
class ConcentrationState:
    c: np.ndarray
    c_min: float
    c_max: float

    @classmethod
    def of(cls, c):
        return cls(c, float(c.min()), float(c.max()))


def _react(c, rho, fns, dt, c_frozen):
    k0 = fns.kappa.linear_rate()
    if k0 is not None:
        return c * np.exp(-k0 * rho * dt)
    ref = c if c_frozen is None else c_frozen
    return np.maximum(c - dt * fns.kappa(ref) * rho, 0.0)


def step_c(grid, c, u, rho, fns, dt, c_frozen=None, faces=None, log_step=False):
    """One step of the concentration equation.

    The sink is ``kappa(c_frozen) rho`` (``c_frozen`` defaults to ``c``).
    For linear ``kappa`` it is integrated exactly as ``c exp(-k0 rho dt)``;
    otherwise by explicit Euler clamped at zero.
    """
    c = np.asarray(c, dtype=float)
    u = np.asarray(u, dtype=float)
    if c.min() < -NEG_TOL:
        raise ValueError(f"step_c: negative concentration {c.min():.3e}")
    div = float(np.abs(g.divergence(grid, u)).max())
    if div > DIV_TOL:
        raise ValueError(f"step_c: velocity divergence {div:.3e} exceeds {DIV_TOL:g}")
    if faces is None:
        faces = face_velocity(grid, u, solenoidal=True)
    vmax = max(float(g.magnitude(grid, u).max()), float(np.abs(faces).max()))
    dt_max = cfl_limit(grid, vmax)
    if dt > dt_max * (1 + 1e-12):
        raise CFLError(dt, dt_max, "step_c")

    cap = float(c.max())
    out = g.heat_propagator(grid, c, 0.5 * dt)
    out, nsub = donor_cell(grid, out, faces, dt)
    out = _react(out, rho, fns, dt, c_frozen)
    out = g.heat_propagator(grid, out, 0.5 * dt)

    lo, hi = float(out.min()), float(out.max())
    if lo < -NEG_TOL or hi > cap + MAX_TOL:
        raise NumericalAbort(f"step_c: range [{lo:.3e}, {hi:.3e}] leaves [0, {cap:.6g}]")
    out = np.clip(out, 0.0, cap)
    if log_step:
        return out, {"pre_min": lo, "pre_max": hi, "substeps": nsub}
    return out


def consumption_record(grid, c_before, c_after, rho, dt):
    """Discrete ``int kappa(c) rho dx`` recovered from the change in ``int c``."""
    return float((g.integrate(grid, c_before) - g.integrate(grid, c_after)) / dt)
