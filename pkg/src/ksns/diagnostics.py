"""Inequality checks on recorded trajectories, collected in a ledger.

Every entry stores both sides of its inequality.  Constants that the
estimates only assert to exist are either derived in closed form (the
entropy/moment constants) or fitted once on a calibration run and then
passed in frozen.
"""

from dataclasses import dataclass
import csv
import hashlib
import io
import itertools
import math
import os

import numpy as np
from scipy.special import roots_legendre

from . import grid as g
from .fokker_planck import NEG_BUDGET, check_admissible, lp_growth_exponent
from .transport import metric_derivative, w2_grid

QUAD_HEADROOM = 0.05
HOLDER_TOL = 0.20
HEAT_EXPONENT_TOL = 0.15
METRIC_SLACK = 0.05


@dataclass
class LedgerEntry:
    name: str
    anchor: str
    lhs: np.ndarray
    rhs: np.ndarray
    fitted_const: float = float("nan")
    margin: float = float("nan")
    passed: bool = False
    note: str = ""
    required: bool = True

    def __post_init__(self):
        self.lhs = np.atleast_1d(np.asarray(self.lhs, dtype=float))
        self.rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        self.passed = bool(self.passed)

    @property
    def lhs_max(self):
        return float(np.max(self.lhs)) if self.lhs.size else float("nan")

    @property
    def rhs_min(self):
        return float(np.min(self.rhs)) if self.rhs.size else float("nan")


def _inequality(name, anchor, lhs, rhs, fitted=float("nan"), note="", rtol=0.0):
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    slack = rhs + rtol * np.abs(rhs) - lhs
    margin = float(np.min(slack)) if slack.size else 0.0
    return LedgerEntry(name, anchor, lhs, rhs, fitted, margin, margin >= 0, note)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class DiagnosticsLedger:
    """Ordered collection of checks; each name may appear only once."""

    COLUMNS = ("name", "anchor", "lhs_max", "rhs_min", "fitted_const", "margin", "pass")

    def __init__(self, config_hash=""):
        self.config_hash = config_hash
        self.entries = []

    def add(self, entry):
        if any(e.name == entry.name for e in self.entries):
            raise ValueError(f"duplicate ledger entry {entry.name!r}")
        self.entries.append(entry)
        return entry

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def __len__(self):
        return len(self.entries)

    @property
    def all_pass(self):
        """Whether every required entry passed (reported-only entries are ignored)."""
        return all(e.passed for e in self.entries if e.required)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for e in self.entries:
            w.writerow([e.name, e.anchor] + [_fmt(x) for x in (e.lhs_max, e.rhs_min, e.fitted_const, e.margin, e.passed)])
        return buf.getvalue()

    def write(self, path):
        atomic_write(path, self.to_csv())


def atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def config_hash(text):
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# -- elementary invariants ------------------------------------------------------


def check_mass(traj, tol=1e-11):
    dev = np.abs(np.asarray(traj.records["mass"]) - 1.0)
    return _inequality("mass", "mass conservation", dev, np.full(dev.shape, tol))


def check_positivity(traj, budget=NEG_BUDGET):
    neg = -np.minimum(np.asarray(traj.records["min"]), 0.0)
    return _inequality("positivity", "nonnegativity of the density", neg, np.full(neg.shape, budget))


# -- L^p growth bound -------------------------------------------------------------


def lp_exponent_terms(traj, alpha, beta, form="mixed"):
    """Growth functional ``G(t_n)`` multiplying the constant in the exponent.

    ``integral``: ``int_0^t ||v||_alpha^gamma``.  ``mixed``:
    ``||v||_{L^beta(0,t; L^alpha)}^gamma t^{(beta - gamma)/beta}``, which
    dominates the integral form by Hoelder.  ``gamma = 2 alpha / (alpha - d)``.
    """
    grid = traj.grid
    t = np.asarray(traj.step_times)
    v = np.asarray(traj.records["v_alpha"])
    gam = lp_growth_exponent(grid.dim, alpha)
    dts = np.diff(t)
    if form == "integral":
        return np.concatenate(([0.0], np.cumsum(dts * v[:-1] ** gam)))
    if form == "mixed":
        norm = np.concatenate(([0.0], np.cumsum(dts * v[:-1] ** beta))) ** (1.0 / beta)
        return norm**gam * t ** ((beta - gam) / beta)
    raise ValueError(f"unknown form {form!r}")


def _lp_series(traj, q):
    key = {1: "l1", 2: "l2"}.get(q)
    if key is None and q == traj.p:
        key = "lp"
    if key is None:
        raise ValueError(f"no record for q={q}; trajectories store q in (1, 2, p)")
    return np.asarray(traj.records[key])


def admissible_q(traj, alpha, beta, qs=None):
    """Exponents in ``qs`` (default ``{1, 2, p}``) for which ``(alpha, beta)`` is admissible.

    ``q = 1`` is always kept: mass conservation makes the bound trivial.
    """
    qs = sorted(set(qs or (1, 2, traj.p)))
    out = []
    for q in qs:
        if q == 1:
            out.append(q)
            continue
        try:
            check_admissible(traj.grid.dim, q, alpha, beta)
            out.append(q)
        except ValueError:
            pass
    return out


def fit_lp_constant(traj, alpha, beta, qs=None, form="mixed"):
    """Smallest ``C >= 0`` for which the exponential bound holds on ``traj``."""
    G = lp_exponent_terms(traj, alpha, beta, form)
    best = 0.0
    for q in admissible_q(traj, alpha, beta, qs):
        r = _lp_series(traj, q) / _lp_series(traj, q)[0]
        grow = np.log(np.maximum(r, 1e-300))
        for gi, li in zip(G[1:], grow[1:]):
            if li <= 1e-13:
                continue
            best = max(best, li / gi if gi > 0 else math.inf)
    return best


def check_lp_bound(traj, alpha, beta, C_fit, qs=None, form="mixed", name=None):
    check_admissible(traj.grid.dim, traj.p, alpha, beta)
    G = lp_exponent_terms(traj, alpha, beta, form)
    lhs, rhs = [], []
    used = admissible_q(traj, alpha, beta, qs)
    for q in used:
        s = _lp_series(traj, q)
        lhs.append(s)
        rhs.append(s[0] * np.exp(C_fit * G))
    entry = _inequality(
        name or f"lp_bound_{form}", "L^p a priori bound", np.concatenate(lhs), np.concatenate(rhs),
        fitted=fit_lp_constant(traj, alpha, beta, qs, form), note=f"q={used}", rtol=1e-12,
    )
    return entry


def lp_nonincreasing(traj, qs=(1, 2), rtol=1e-13):
    """Whether each recorded ``||rho||_q`` is nonincreasing step to step (rounding ``rtol``)."""
    for q in list(qs) + [traj.p]:
        s = _lp_series(traj, q)
        if np.any(np.diff(s) > rtol * s[:-1]):
            return False
    return True


def check_lp_monotone(traj, name="lp_monotone"):
    lhs, rhs = [], []
    for q in (1, 2, traj.p):
        s = _lp_series(traj, q)
        lhs.append(s[1:])
        rhs.append(s[:-1])
    return _inequality(name, "L^p decay under divergence-free drift", np.concatenate(lhs), np.concatenate(rhs), rtol=1e-13)


# -- entropy and second moment ------------------------------------------------------


def _cumtrapz(t, f):
    t, f = np.asarray(t), np.asarray(f)
    return np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (f[1:] + f[:-1]))))


def check_entropy_dissipation(traj, headroom=QUAD_HEADROOM):
    """``H(rho_t) + 1/2 int Fisher <= H(rho_0) + 2 int int |v|^2 rho``.

    The headroom is relative to the sum of the magnitudes of the terms.
    """
    r = traj.records
    t = traj.step_times
    fisher = _cumtrapz(t, r["fisher"])
    drive = _cumtrapz(t, r["v_sq_rho"])
    H = np.asarray(r["entropy"])
    lhs = H + 0.5 * fisher
    rhs = H[0] + 2 * drive
    scale = np.abs(H) + 0.5 * fisher + abs(H[0]) + 2 * drive
    lhs, rhs, scale = lhs[1:], rhs[1:], scale[1:]
    slack = rhs + headroom * scale - lhs
    return LedgerEntry("entropy_dissipation", "entropy-Fisher estimate", lhs, rhs,
                       margin=float(slack.min()), passed=slack.min() >= 0)


def check_second_moment(traj, headroom=QUAD_HEADROOM):
    """``m2(t) <= e^t (m2(0) + int (||v||_{2p'}^2 ||rho||_p + 2d))``."""
    r = traj.records
    t = np.asarray(traj.step_times)
    d = traj.grid.dim
    source = _cumtrapz(t, np.asarray(r["v_2pp"]) ** 2 * np.asarray(r["lp"]) + 2 * d)
    m2 = np.asarray(r["moment2"])
    rhs = np.exp(t) * (m2[0] + source)
    return _inequality("second_moment", "second-moment estimate", m2[1:], rhs[1:], rtol=headroom)


def entropy_moment_constants(dim, p):
    """Closed-form constants ``(a, b)`` of the entropy / moment splitting.

    ``-s ln s <= (2/e) sqrt(s)`` on ``(0, 1)`` gives
    ``a = (2/e)(2 pi)^{d/2}``; ``ln s <= s^{p-1} / (e (p-1))`` on ``s > 1``
    gives ``b = 1 / (e (p - 1))``.
    """
    if not p > 1:
        raise ValueError("p must exceed 1")
    return 2.0 / math.e * (2 * math.pi) ** (dim / 2), 1.0 / (math.e * (p - 1))


def check_entropy_moment_bound(grid, rho, p, name="entropy_moment"):
    a, b = entropy_moment_constants(grid.dim, p)
    rho = np.asarray(rho, dtype=float)
    pos = rho > 0
    rlnr = np.zeros_like(rho)
    rlnr[pos] = rho[pos] * np.log(rho[pos])
    low = -g.integrate(grid, np.where(rho < 1, rlnr, 0.0))
    high = g.integrate(grid, np.where(rho > 1, rlnr, 0.0))
    lhs = [low, high]
    rhs = [g.second_moment(grid, rho) + a, b * g.integrate(grid, rho**p)]
    entry = _inequality(name, "entropy splitting by moment and L^p", lhs, rhs, fitted=a, note=f"b={b!r}")
    return entry


# -- Hoelder continuity in W2 ---------------------------------------------------------


def holder_constant(grid, times, densities, method="auto", coarsen=1):
    """``max_{s<t} W2(rho_s, rho_t) / sqrt(t - s)`` over all sampled pairs."""
    best = 0.0
    for i, j in itertools.combinations(range(len(times)), 2):
        d = w2_grid(grid, densities[i], densities[j], method, coarsen=coarsen)
        best = max(best, d / math.sqrt(times[j] - times[i]))
    return best


def check_holder_w2(traj, refined=None, tol=HOLDER_TOL, method="auto", coarsen=1, name="holder_w2"):
    """Hoelder-1/2 constant, finite and (with ``refined``) stable under refinement.

    ``refined`` must be sampled at the same times as ``traj``.
    """
    if len(traj.times) < 4:
        raise ValueError("need at least 4 samples")
    C = holder_constant(traj.grid, traj.times, traj.densities, method, coarsen)
    if refined is None:
        ok = math.isfinite(C)
        return LedgerEntry(name, "Hoelder-1/2 continuity in W2", [C], [math.inf], C, math.inf if ok else -math.inf, ok)
    if not np.allclose(refined.times, traj.times, rtol=0, atol=1e-12):
        raise ValueError("refined run must share the sample times")
    C2 = holder_constant(refined.grid, refined.times, refined.densities, method, coarsen)
    dev = abs(C2 - C) / max(C, 1e-300)
    ok = math.isfinite(C) and math.isfinite(C2) and dev <= tol
    return LedgerEntry(name, "Hoelder-1/2 continuity in W2", [dev], [tol], C, tol - dev, ok, note=f"refined={C2!r}")


# -- metric derivative ------------------------------------------------------------------


def check_metric_derivative_bound(traj, slack=METRIC_SLACK, method="auto", name="metric_derivative"):
    """``|rho'|(t) <= ||w_t||_{L^2(rho_t)} (1 + slack)`` at interior samples."""
    if len(traj.times) < 3:
        raise ValueError("need at least 3 samples")
    steps = np.asarray(traj.step_times)
    wr = np.asarray(traj.records["w_rho"])
    lhs, rhs = [], []
    for i in range(1, len(traj.times) - 1):
        lhs.append(metric_derivative(traj.grid, traj.densities, traj.times, i, method))
        rhs.append(wr[int(np.argmin(np.abs(steps - traj.times[i])))])
    return _inequality(name, "metric derivative bounded by the velocity", lhs, rhs, rtol=slack)


# -- heat smoothing ----------------------------------------------------------------------


def _time_norm(vals, weights, beta):
    return float(np.sum(weights * np.asarray(vals) ** beta) ** (1.0 / beta))


def heat_gradient_norm(grid, source, w0, T, alpha, beta, nt=48):
    """``||grad w||_{L^beta(0,T; L^alpha)}`` for ``w_t - Lap w = source``, ``w(0) = w0``.

    The source is constant in time; each Fourier mode is integrated in
    closed form and the time norm uses Gauss-Legendre nodes.
    """
    x, wq = roots_legendre(nt)
    t = 0.5 * T * (x + 1)
    wq = 0.5 * T * wq
    k2 = grid.k_squared
    hh = grid.fft(source)
    wh0 = grid.fft(w0)
    safe = np.where(k2 == 0, 1.0, k2)
    vals = []
    for ti in t:
        duh = np.where(k2 == 0, ti, -np.expm1(-k2 * ti) / safe)
        wh = np.exp(-k2 * ti) * wh0 + duh * hh
        grad = np.stack([grid.ifft(1j * k * wh) for k in grid.deriv_wavenumbers])
        vals.append(g.lp_norm(grid, grad, alpha))
    return _time_norm(vals, wq, beta)


def heat_exponent(dim, alpha, gamma):
    """Predicted power of ``T`` for the source term: ``(d/alpha + 1 - d/gamma) / 2``."""
    return 0.5 * (dim / alpha + 1 - dim / gamma)


def check_heat_exponents(dim, alpha, beta, gamma):
    if not alpha > dim:
        raise ValueError(f"need alpha > d, got alpha={alpha}")
    if dim / alpha + 2 / beta > 1 + 1e-12:
        raise ValueError("need d/alpha + 2/beta <= 1")
    if not 1 < gamma <= alpha:
        raise ValueError("need 1 < gamma <= alpha")
    if not 1 / gamma < 1 / alpha + 1 / dim:
        raise ValueError("need 1/gamma < 1/alpha + 1/d")


def check_heat_smoothing(grid, alpha, beta, gamma, profile, T=0.25, levels=3, tol=HEAT_EXPONENT_TOL,
                         name="heat_smoothing"):
    """Fit the ``T``-exponent of ``||grad w|| / ||h||`` on a dyadic ladder.

    The source on each rung is ``profile((x - center) / sqrt(T))``, the
    parabolic rescaling of one shape, with zero initial data.
    """
    check_heat_exponents(grid.dim, alpha, beta, gamma)
    Ts = T / 2.0 ** np.arange(levels)
    ratios = []
    for Ti in Ts:
        src = profile(grid.centered_mesh / math.sqrt(Ti))
        num = heat_gradient_norm(grid, src, np.zeros(grid.shape), Ti, alpha, beta)
        den = Ti ** (1 / beta) * g.lp_norm(grid, src, gamma)
        ratios.append(num / den if den > 0 else 0.0)
    pred = heat_exponent(grid.dim, alpha, gamma)
    if max(ratios) == 0:
        return LedgerEntry(name, "heat smoothing with source", [0.0], [0.0], 0.0, 0.0, True, "zero source")
    slope = float(np.polyfit(np.log(Ts), np.log(ratios), 1)[0])
    C = float(max(r / t**pred for r, t in zip(ratios, Ts)))
    dev = abs(slope - pred)
    return LedgerEntry(name, "heat smoothing with source", [dev], [tol * abs(pred)], C,
                       tol * abs(pred) - dev, dev <= tol * abs(pred), note=f"slope={slope!r} predicted={pred!r}")


def single_mode_gradient_norm(grid, kint, T, alpha, beta):
    """Numerical and closed-form ``||grad e^{t Lap} w0||_{L^beta L^alpha}`` for ``w0 = sin(k.x)``."""
    k = grid.kmode(kint)
    w0 = np.sin(np.tensordot(k, grid.mesh, axes=1))
    num = heat_gradient_norm(grid, np.zeros(grid.shape), w0, T, alpha, beta)
    k2 = float(k @ k)
    g0 = g.lp_norm(grid, g.gradient(grid, w0), alpha)
    exact = g0 * (-math.expm1(-beta * k2 * T) / (beta * k2)) ** (1 / beta)
    return num, exact, g0


def check_heat_initial_term(grid, kint, T, alpha, beta, name="heat_initial_term"):
    """The initial-data term is bounded by ``T^{1/beta} ||grad w0||_alpha``."""
    num, exact, g0 = single_mode_gradient_norm(grid, kint, T, alpha, beta)
    bound = T ** (1 / beta) * g0
    ok = num <= bound * (1 + 1e-12) and abs(num - exact) <= 1e-6 * exact
    return LedgerEntry(name, "heat smoothing of initial data", [num], [bound], num / bound,
                       bound - num, ok, note=f"closed_form={exact!r}")


# -- coupled system ---------------------------------------------------------------------


def coupled_invariant_entries(rec, c0max, mass_tol=1e-11, max_tol=1e-10, div_tol=1e-8):
    """Mass, positivity, maximum principle and incompressibility at every node."""
    mass = np.asarray(rec["mass"])
    n = len(mass)
    return [
        _inequality("coupled_mass", "mass conservation", np.abs(mass - mass[0]), np.full(n, mass_tol)),
        _inequality("coupled_positivity", "nonnegativity of the density",
                    -np.minimum(rec["min"], 0), np.zeros(n)),
        _inequality("max_principle", "maximum principle for the concentration",
                    rec["c_max"], np.full(n, c0max + max_tol)),
        _inequality("c_nonneg", "nonnegativity of the concentration", -np.minimum(rec["c_min"], 0), np.zeros(n)),
        _inequality("c_integral", "consumption only removes concentration",
                    np.diff(rec["c_integral"]), np.full(n - 1, 1e-12 * abs(rec["c_integral"][0]))),
        _inequality("divergence", "incompressibility", rec["max_div"], np.full(n, div_tol)),
    ]


def contraction_entries(ratios, D, smallness=None):
    """Required ``D_k / D_{k-1} < 1`` (k >= 2); reported ``<= 1/2`` (k >= 3)."""
    ratios = np.asarray(ratios, dtype=float)
    r2 = ratios[1:][np.isfinite(ratios[1:])]
    r3 = ratios[2:][np.isfinite(ratios[2:])]
    lt1 = LedgerEntry("contraction_ratio", "contraction of the iteration", r2 if r2.size else [0.0],
                      [1.0], float(r2.max()) if r2.size else 0.0,
                      1.0 - (r2.max() if r2.size else 0.0), (r2 < 1).all())
    half = LedgerEntry("contraction_half", "contraction factor one half", r3 if r3.size else [0.0],
                       [0.5], float(r3.max()) if r3.size else 0.0,
                       0.5 - (r3.max() if r3.size else 0.0), (r3 <= 0.5).all(), required=False)
    out = [lt1, half]
    if smallness is not None:
        ok, norms, M = smallness
        vals = list(norms.values())
        out.append(LedgerEntry("smallness", "initial-data smallness", vals, [M / 6], M / 6,
                               M / 6 - max(vals), ok))
    return out
