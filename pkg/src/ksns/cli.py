"""Command-line driver: flat configs, experiment runs and bit-stable artifacts.

``ksns run --config FILE`` runs one experiment and writes ``config.txt``,
``traj.csv`` and ``ledger.csv`` (plus ``contraction.csv`` in contraction
mode) and KSNS1 field dumps under ``fields/``.  ``ksns w2`` compares two
field files.  ``ksns ledger --traj DIR`` rebuilds the ledger of a finished
run from its files alone.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error,
3 numerical abort.
"""

import argparse
import csv
import dataclasses
from dataclasses import dataclass
import io
import math
import os
import sys

import numpy as np

from . import fields as F
from . import grid as g
from .coupled import CoupledData, ContractionReport, calibrate_horizon, contraction_study, iterate_records, \
    solve_coupled
from .diagnostics import DiagnosticsLedger, LedgerEntry, atomic_write, check_entropy_dissipation, \
    check_entropy_moment_bound, check_holder_w2, check_lp_bound, check_lp_monotone, check_mass, \
    check_metric_derivative_bound, check_positivity, check_second_moment, config_hash, contraction_entries, \
    coupled_invariant_entries, fit_lp_constant
from .errors import CFLError, ConfigError, ConvergenceError, NumericalAbort
from .fokker_planck import RECORD_KEYS, DriftSpec, FPTrajectory, cfl_limit, check_admissible, solve_fp, time_nodes
from .scalar_transport import ScalarFn, SensitivityFns
from .transport import w2_grid

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
DT_SAFETY = 0.9
AUTO_SAMPLES = 8

MODES = ("fp", "coupled", "contraction", "w2", "ledger")
RHO0 = ("gaussian", "two_bump")
C0 = ("constant", "bump")
U0 = ("zero", "taylor_green", "random")
DRIFTS = ("zero", "localized", "solenoidal", "shear", "compressive")
SOLENOIDAL_DRIFTS = ("zero", "solenoidal", "shear")
W2_METHODS = ("auto", "exact", "sinkhorn", "quantile")
LP_FORMS = ("mixed", "integral")


@dataclass
class ExperimentConfig:
    """Every recognized config key with its default.

    ``alpha`` defaults to ``2 dim``; ``dt`` and ``sample_every`` are left
    unset and resolved at run time (CFL-safe step, about 8 samples).
    Relative paths are taken relative to the working directory.
    """

    mode: str
    dim: int = 2
    n: int = 64
    L: float = 8.0
    T: float = 0.1
    dt: float = None
    sample_every: int = None
    p: float = 2.0
    a: float = 2.0
    alpha: float = None
    beta: float = 4.0
    chi: tuple = (1.0,)
    kappa: tuple = (0.0, 1.0)
    cmax: float = 1.0
    phi_strength: float = 0.0
    phi_radius: float = 1.0
    rho0: str = "gaussian"
    sigma: float = 0.4
    separation: float = 1.0
    c0: str = "constant"
    c0_value: float = 0.5
    c0_radius: float = 1.5
    u0: str = "zero"
    u0_amplitude: float = 0.05
    u0_mode: int = 1
    u0_radius: float = None
    drift: str = "zero"
    drift_amplitude: float = 1.0
    drift_radius: float = None
    drift_envelope: float = 2.5
    drift_mode: int = 1
    seed: int = 0
    K: int = 6
    M: float = None
    certify: bool = False
    calibrate: bool = False
    lp_const: float = None
    lp_form: str = "mixed"
    holder_refine: bool = False
    metric_derivative: bool = False
    coarsen: int = 1
    outdir: str = "out"
    field_a: str = None
    field_b: str = None
    w2_method: str = "auto"
    eps: float = None
    traj: str = None

    @property
    def grid(self):
        return g.TorusGrid(self.dim, self.n, self.L)

    @property
    def fns(self):
        return SensitivityFns(ScalarFn.poly(*self.chi), ScalarFn.poly(*self.kappa), self.cmax)

    @property
    def solenoidal(self):
        return self.drift in SOLENOIDAL_DRIFTS


FIELDS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


# -- parsing -------------------------------------------------------------------


def _parse_int(s):
    return int(s)


def _parse_float(s):
    x = float(s)
    if not math.isfinite(x):
        raise ValueError(s)
    return x


def _parse_bool(s):
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(s)


def _parse_floats(s):
    return tuple(_parse_float(x) for x in s.split(","))


PARSERS = {int: _parse_int, float: _parse_float, bool: _parse_bool, tuple: _parse_floats, str: str}
KIND = {int: "integer", float: "number", bool: "boolean", tuple: "list of numbers", str: "string"}


def parse_config(text):
    """Parse flat ``key = value`` text into a validated :class:`ExperimentConfig`.

    ``#`` starts a comment.  The first problem is raised as a
    :class:`ConfigError` carrying its line number.
    """
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        kind = FIELDS[key]
        try:
            values[key] = PARSERS[kind](val)
        except ValueError:
            raise ConfigError(f"malformed {KIND[kind]} for {key!r}: {val!r}", lineno) from None
        lines[key] = lineno
    if "mode" not in values:
        raise ConfigError("missing required key 'mode'")
    cfg = ExperimentConfig(**values)
    if cfg.alpha is None:
        cfg.alpha = 2.0 * cfg.dim
    _validate(cfg, lines)
    return cfg


def _validate(cfg, lines):
    def fail(msg, *keys):
        line = next((lines[k] for k in keys if k in lines), None)
        raise ConfigError(msg, line)

    if cfg.mode not in MODES:
        fail(f"mode must be one of {', '.join(MODES)}", "mode")
    if cfg.mode == "w2":
        if not (cfg.field_a and cfg.field_b):
            fail("mode w2 needs field_a and field_b", "mode")
        if cfg.w2_method not in W2_METHODS:
            fail(f"w2_method must be one of {', '.join(W2_METHODS)}", "w2_method")
        return
    if cfg.mode == "ledger":
        if not cfg.traj:
            fail("mode ledger needs traj", "mode")
        return
    try:
        cfg.grid
    except ValueError as e:
        fail(str(e), "n", "dim", "L")
    if not cfg.T > 0:
        fail("T must be positive", "T")
    if cfg.dt is not None and not cfg.dt > 0:
        fail("dt must be positive", "dt")
    if cfg.sample_every is not None and cfg.sample_every < 1:
        fail("sample_every must be at least 1", "sample_every")
    if cfg.coarsen < 1 or cfg.n % cfg.coarsen:
        fail("coarsen must be a positive divisor of n", "coarsen")
    if not (cfg.rho0 in RHO0 or cfg.rho0.startswith("file:")):
        fail(f"rho0 must be one of {', '.join(RHO0)} or file:PATH", "rho0")
    for key in ("sigma", "separation", "c0_radius", "phi_radius", "drift_envelope", "cmax"):
        if not getattr(cfg, key) > 0:
            fail(f"{key} must be positive", key)
    if cfg.mode == "fp":
        if cfg.drift not in DRIFTS:
            fail(f"drift must be one of {', '.join(DRIFTS)}", "drift")
        if cfg.drift == "shear" and cfg.dim < 2:
            fail("shear drift needs dim >= 2", "drift", "dim")
        if not cfg.alpha > cfg.dim:
            fail(f"inadmissible exponents: need alpha > d (alpha={cfg.alpha!r}, d={cfg.dim})", "alpha", "dim")
        try:
            check_admissible(cfg.dim, cfg.p, cfg.alpha, cfg.beta)
        except ValueError as e:
            fail(f"inadmissible exponents: {e}", "alpha", "beta", "p")
        if cfg.lp_form not in LP_FORMS:
            fail(f"lp_form must be one of {', '.join(LP_FORMS)}", "lp_form")
        if cfg.lp_const is not None and cfg.lp_const < 0:
            fail("lp_const must be nonnegative", "lp_const")
        return
    # coupled and contraction
    if cfg.dim < 2:
        fail("the coupled system needs dim >= 2", "dim")
    if cfg.dim == 3 and cfg.n > 64:
        fail("3D coupled runs are limited to n <= 64", "n")
    if not cfg.a > cfg.dim / 2:
        fail(f"need a > d/2 (a={cfg.a!r}, d={cfg.dim})", "a")
    if cfg.c0 not in C0:
        fail(f"c0 must be one of {', '.join(C0)}", "c0")
    if cfg.u0 not in U0:
        fail(f"u0 must be one of {', '.join(U0)}", "u0")
    if not 0 <= cfg.c0_value <= cfg.cmax:
        fail("c0_value must lie in [0, cmax]", "c0_value")
    try:
        cfg.fns
    except ValueError as e:
        fail(str(e), "chi", "kappa", "cmax")
    if cfg.mode == "contraction":
        if cfg.K < 4:
            fail("K must be at least 4", "K")
        if cfg.certify and cfg.M is None:
            fail("certify needs the smallness scale M", "certify")
        if cfg.M is not None and not cfg.M > 0:
            fail("M must be positive", "M")


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def dump_config(cfg):
    """Canonical text: every set key in declaration order; parses back to ``cfg``."""
    out = []
    for name in FIELDS:
        v = getattr(cfg, name)
        if v is not None:
            out.append(f"{name} = {_fmt_value(v)}")
    return "\n".join(out) + "\n"


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


# -- experiment setup ------------------------------------------------------------


def initial_density(cfg, grid):
    if cfg.rho0.startswith("file:"):
        fgrid, vals, _ = g.read_field(cfg.rho0[5:])
        if fgrid != grid:
            raise ConfigError(f"rho0 file grid {fgrid} does not match the configured grid")
        return g.as_density(grid, vals, normalize=True)
    if cfg.rho0 == "gaussian":
        return F.gaussian(grid, cfg.sigma)
    return F.two_bump(grid, cfg.sigma, cfg.separation)


def drift_field(cfg, grid, rng):
    amp, radius = cfg.drift_amplitude, cfg.drift_radius
    if cfg.drift == "zero":
        return np.zeros((grid.dim,) + grid.shape)
    if cfg.drift == "localized":
        return F.localized_drift(grid, rng, amp, cfg.drift_envelope, radius)
    if cfg.drift == "solenoidal":
        return F.solenoidal_drift(grid, rng, amp, radius)
    if cfg.drift == "shear":
        return F.shear_drift(grid, amp, cfg.drift_mode)
    return F.compressive_drift(grid, amp, cfg.drift_envelope)


def coupled_data(cfg, grid):
    rng = np.random.default_rng(cfg.seed)
    rho0 = initial_density(cfg, grid)
    if cfg.c0 == "constant":
        c0 = np.full(grid.shape, cfg.c0_value)
    else:
        # a Gaussian profile would leave a kink at the periodic boundary
        c0 = cfg.c0_value * (0.5 + 0.5 * F.band_limit(grid, F.bump(grid, cfg.c0_radius)))
    if cfg.u0 == "zero":
        u0 = np.zeros((grid.dim,) + grid.shape)
    elif cfg.u0 == "taylor_green":
        u0 = F.taylor_green(grid, cfg.u0_amplitude, cfg.u0_mode)
    else:
        u0 = F.solenoidal_drift(grid, rng, cfg.u0_amplitude, cfg.u0_radius)
    if cfg.phi_strength:
        grad_phi = F.potential_gradient(grid, cfg.phi_strength, cfg.phi_radius)
    else:
        grad_phi = np.zeros((grid.dim,) + grid.shape)
    return CoupledData(rho0, c0, u0, grad_phi, cfg.fns)


def resolve_dt(cfg, grid, vmax):
    """``(dt, note)``: the configured step, or a CFL-safe default with a note saying so."""
    if cfg.dt is not None:
        dt = cfg.dt
        note = None
    else:
        dt = DT_SAFETY * cfl_limit(grid, vmax)
        note = f"dt not set; using CFL-safe dt={dt!r} (max speed {vmax!r})"
    nodes = time_nodes(cfg.T, dt)
    return nodes[1] - nodes[0], note


def resolve_sample_every(cfg, dt):
    if cfg.sample_every is not None:
        return cfg.sample_every
    return max(1, len(time_nodes(cfg.T, dt)) // AUTO_SAMPLES)


def coupled_speed(grid, data):
    """Speed estimate for the default step: twice the initial transport speed."""
    chem = data.fns.chi(data.c0) * g.gradient(grid, data.c0)
    return 2.0 * float(g.magnitude(grid, data.u0 + chem).max())


# -- artifact I/O ------------------------------------------------------------------


def _rows_csv(tag, columns, rows, extra_header=()):
    buf = io.StringIO()
    buf.write(f"# config_hash={tag}\n")
    for line in extra_header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([x if isinstance(x, str) else repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                    for x in row])
    return buf.getvalue()


def _read_csv(path):
    """``(header_items, columns, rows)``; header items are the ``# key=value`` lines."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    head = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        for item in lines[i][1:].split():
            key, _, val = item.partition("=")
            head[key] = val
        i += 1
    reader = csv.reader(lines[i:])
    columns = next(reader)
    return head, columns, list(reader)


def _field_dir(outdir):
    path = os.path.join(outdir, "fields")
    os.makedirs(path, exist_ok=True)
    for name in os.listdir(path):
        if name.endswith(".field"):
            os.remove(os.path.join(path, name))
    return path


def _sample_labels(step_times, times):
    labels = [""] * len(step_times)
    for k, t in enumerate(times):
        labels[int(np.argmin(np.abs(step_times - t)))] = f"{k:04d}"
    return labels


def write_trajectory(outdir, grid, tag, step_times, records, keys, times, fields):
    """Write ``traj.csv`` and the sampled fields; ``fields`` maps a prefix to its stack."""
    os.makedirs(outdir, exist_ok=True)
    fdir = _field_dir(outdir)
    labels = _sample_labels(step_times, times)
    rows = [[i, step_times[i], labels[i]] + [records[k][i] for k in keys] for i in range(len(step_times))]
    atomic_write(os.path.join(outdir, "traj.csv"), _rows_csv(tag, ["step", "t", "field"] + list(keys), rows))
    for prefix, stack in fields.items():
        for k, (t, f) in enumerate(zip(times, stack)):
            g.write_field(os.path.join(fdir, f"{prefix}_{k:04d}.field"), grid, f, t, tag=tag)


def read_trajectory(outdir, prefixes):
    """``(tag, step_times, records, times, fields)`` from a directory written by :func:`write_trajectory`."""
    head, columns, rows = _read_csv(os.path.join(outdir, "traj.csv"))
    data = list(zip(*rows))
    step_times = np.array([float(x) for x in data[1]])
    records = {c: np.array([float(x) for x in col]) for c, col in zip(columns[3:], data[3:])}
    labelled = [(lab, t) for lab, t in zip(data[2], step_times) if lab]
    fields = {p: [] for p in prefixes}
    for lab, _ in labelled:
        for p in prefixes:
            _, vals, _ = g.read_field(os.path.join(outdir, "fields", f"{p}_{lab}.field"))
            fields[p].append(vals)
    times = np.array([t for _, t in labelled])
    return head.get("config_hash", ""), step_times, records, times, {p: np.array(v) for p, v in fields.items()}


def write_config(outdir, cfg, tag):
    os.makedirs(outdir, exist_ok=True)
    atomic_write(os.path.join(outdir, "config.txt"), f"# config_hash={tag}\n" + dump_config(cfg))


# -- fp mode ------------------------------------------------------------------------


def _fp_traj(grid, cfg, step_times, records, times, densities):
    return FPTrajectory(grid, times, densities, step_times, records, p=cfg.p)


def fp_ledger(cfg, traj, refined, tag):
    led = DiagnosticsLedger(tag)
    led.add(check_mass(traj))
    led.add(check_positivity(traj))
    if cfg.lp_const is None:
        C = fit_lp_constant(traj, cfg.alpha, cfg.beta, form=cfg.lp_form)
        entry = check_lp_bound(traj, cfg.alpha, cfg.beta, C, form=cfg.lp_form, name="lp_bound")
        entry.note += " calibration run: constant fitted on this trajectory"
    else:
        entry = check_lp_bound(traj, cfg.alpha, cfg.beta, cfg.lp_const, form=cfg.lp_form, name="lp_bound")
    led.add(entry)
    if cfg.solenoidal:
        led.add(check_lp_monotone(traj))
    led.add(check_entropy_dissipation(traj))
    led.add(check_second_moment(traj))
    led.add(check_entropy_moment_bound(traj.grid, traj.densities[-1], cfg.p))
    if len(traj.times) >= 4:
        led.add(check_holder_w2(traj, refined, method=cfg.w2_method, coarsen=cfg.coarsen))
    if cfg.metric_derivative:
        led.add(check_metric_derivative_bound(traj, method=cfg.w2_method))
    return led


def run_fp(cfg, outdir, tag, log):
    grid = cfg.grid
    rng = np.random.default_rng(cfg.seed)
    rho0 = initial_density(cfg, grid)
    v = drift_field(cfg, grid, rng)
    dt, note = resolve_dt(cfg, grid, float(g.magnitude(grid, v).max()))
    if note:
        log(note)
    every = resolve_sample_every(cfg, dt)
    drift = DriftSpec.constant(v, cfg.alpha, cfg.beta, cfg.solenoidal)
    traj = solve_fp(grid, rho0, drift, cfg.T, dt, every, cfg.p)
    write_trajectory(outdir, grid, tag, traj.step_times, traj.records, RECORD_KEYS, traj.times,
                     {"rho": traj.densities})
    refined = None
    if cfg.holder_refine:
        refined = solve_fp(grid, rho0, drift, cfg.T, dt / 2, 2 * every, cfg.p)
        write_trajectory(os.path.join(outdir, "refined"), grid, tag, refined.step_times, refined.records,
                         RECORD_KEYS, refined.times, {"rho": refined.densities})
    return fp_ledger(cfg, traj, refined, tag)


def _load_fp(cfg, outdir):
    tag, st, rec, times, flds = read_trajectory(outdir, ["rho"])
    return tag, _fp_traj(cfg.grid, cfg, st, rec, times, flds["rho"])


def rebuild_fp(cfg, outdir):
    tag, traj = _load_fp(cfg, outdir)
    refined = None
    if cfg.holder_refine:
        _, refined = _load_fp(cfg, os.path.join(outdir, "refined"))
    return fp_ledger(cfg, traj, refined, tag)


# -- coupled mode ---------------------------------------------------------------------


def coupled_ledger(records, tag):
    led = DiagnosticsLedger(tag)
    for e in coupled_invariant_entries(records, float(records["c_max"][0])):
        led.add(e)
    return led


def run_coupled(cfg, outdir, tag, log):
    grid = cfg.grid
    data = coupled_data(cfg, grid)
    g.check_localized(grid, data.rho0)
    dt, note = resolve_dt(cfg, grid, coupled_speed(grid, data))
    if note:
        log(note)
    tr = solve_coupled(grid, data, cfg.T, dt, resolve_sample_every(cfg, dt))
    write_trajectory(outdir, grid, tag, tr.step_times, tr.records, list(tr.records), tr.times,
                     {"rho": tr.rho, "c": tr.c, "u": tr.u})
    return coupled_ledger(tr.records, tag)


def rebuild_coupled(cfg, outdir):
    tag, _, records, _, _ = read_trajectory(outdir, [])
    return coupled_ledger(records, tag)


# -- contraction mode -------------------------------------------------------------------

CONTRACTION_COLUMNS = ("k", "D_rho", "D_u", "D_c", "D_total", "ratio")


def contraction_ledger(report, smallness, certified, tag):
    led = DiagnosticsLedger(tag)
    for e in contraction_entries(report.ratios(), report.D, smallness):
        led.add(e)
    if certified is not None:
        led.add(LedgerEntry("horizon_calibrated", "horizon bisection", [report.T], [report.T],
                            report.T, 0.0, certified, required=False))
    return led


def run_contraction(cfg, outdir, tag, log):
    grid = cfg.grid
    data = coupled_data(cfg, grid)
    g.check_localized(grid, data.rho0)
    dt, note = resolve_dt(cfg, grid, coupled_speed(grid, data))
    if note:
        log(note)
    certified = None
    if cfg.calibrate:
        rep, certified = calibrate_horizon(grid, data, dt, cfg.K, cfg.a, T0=cfg.T, M=cfg.M)
        log(f"horizon T={rep.T!r} ({'certified' if certified else 'not certified'})")
    else:
        rep = contraction_study(grid, data, cfg.T, dt, cfg.K, cfg.a, cfg.M)
    smallness = None if cfg.M is None else (rep.smallness, rep.initial, cfg.M)
    head = [f"T={rep.T!r}", f"a={rep.a!r}"]
    if smallness is not None:
        head.append(f"M={cfg.M!r} " + " ".join(f"{k}={v!r}" for k, v in rep.initial.items()))
    if certified is not None:
        head.append(f"certified={int(certified)}")
    os.makedirs(outdir, exist_ok=True)
    atomic_write(os.path.join(outdir, "contraction.csv"),
                 _rows_csv(tag, CONTRACTION_COLUMNS, list(rep.rows()), head))
    it = rep.final
    rec = iterate_records(grid, it)
    write_trajectory(outdir, grid, tag, it.times, rec, list(rec), it.times[[0, -1]],
                     {"rho": it.rho[[0, -1]], "c": it.c[[0, -1]], "u": it.u[[0, -1]]})
    return contraction_ledger(rep, smallness, certified, tag)


def rebuild_contraction(cfg, outdir):
    head, columns, rows = _read_csv(os.path.join(outdir, "contraction.csv"))
    cols = {c: np.array([float(r[i]) for r in rows]) for i, c in enumerate(columns)}
    rep = ContractionReport(float(head["T"]), float(head["a"]), cols["D_rho"], cols["D_u"], cols["D_c"])
    smallness = None
    if "M" in head:
        M = float(head["M"])
        initial = {k: float(head[k]) for k in ("rho0", "c0", "u0")}
        smallness = (all(v < M / 6 for v in initial.values()), initial, M)
    certified = None if "certified" not in head else head["certified"] == "1"
    return contraction_ledger(rep, smallness, certified, head.get("config_hash", ""))


# -- commands -----------------------------------------------------------------------------

RUNNERS = {"fp": run_fp, "coupled": run_coupled, "contraction": run_contraction}
REBUILDERS = {"fp": rebuild_fp, "coupled": rebuild_coupled, "contraction": rebuild_contraction}


def _log(msg):
    print(f"ksns: {msg}", file=sys.stderr)


def w2_fields(path_a, path_b, method="auto", eps=None, coarsen=1):
    """W2 between two KSNS1 density files on the same grid."""
    grid_a, a, _ = g.read_field(path_a)
    grid_b, b, _ = g.read_field(path_b)
    if grid_a != grid_b:
        raise ValueError(f"grids differ: {grid_a} vs {grid_b}")
    a = g.as_density(grid_a, a, normalize=True)
    b = g.as_density(grid_b, b, normalize=True)
    if np.array_equal(a, b):
        return 0.0
    return w2_grid(grid_a, a, b, method, eps=eps, coarsen=coarsen)


def ledger_from_dir(outdir):
    """Rebuild the ledger of a finished run from ``config.txt``, ``traj.csv`` and the fields."""
    cfg = load_config(os.path.join(outdir, "config.txt"))
    if cfg.mode not in REBUILDERS:
        raise ConfigError(f"mode {cfg.mode!r} leaves no trajectory")
    tag = config_hash(dump_config(cfg))
    led = REBUILDERS[cfg.mode](cfg, outdir)
    if led.config_hash != tag:
        raise ConfigError(f"{outdir}: trajectory hash {led.config_hash} does not match config {tag}")
    return led


def run(cfg, log=_log):
    """Run one experiment; returns the exit code (0 pass, 1 a required check failed)."""
    if cfg.mode == "w2":
        print(f"{w2_fields(cfg.field_a, cfg.field_b, cfg.w2_method, cfg.eps, cfg.coarsen):.17g}")
        return EXIT_PASS
    if cfg.mode == "ledger":
        led = ledger_from_dir(cfg.traj)
        sys.stdout.write(led.to_csv())
        return EXIT_PASS if led.all_pass else EXIT_FAIL
    tag = config_hash(dump_config(cfg))
    write_config(cfg.outdir, cfg, tag)
    led = RUNNERS[cfg.mode](cfg, cfg.outdir, tag, log)
    led.write(os.path.join(cfg.outdir, "ledger.csv"))
    for e in led.entries:
        if not e.passed:
            log(f"{'FAIL' if e.required else 'note'}: {e.name} margin={e.margin!r}")
    return EXIT_PASS if led.all_pass else EXIT_FAIL


def _cmd_run(args):
    return run(load_config(args.config))


def _cmd_w2(args):
    method, eps = "auto", None
    if args.exact:
        method = "exact"
    elif args.sinkhorn is not None:
        method, eps = "sinkhorn", args.sinkhorn
    print(f"{w2_fields(args.a, args.b, method, eps):.17g}")
    return EXIT_PASS


def _cmd_ledger(args):
    return run(ExperimentConfig(mode="ledger", traj=args.traj))


def build_parser():
    parser = argparse.ArgumentParser(prog="ksns", description="Drift-diffusion and coupled-flow experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, metavar="FILE")
    p_run.set_defaults(func=_cmd_run)
    p_w2 = sub.add_parser("w2", help="W2 distance between two KSNS1 density files")
    p_w2.add_argument("a", metavar="A.field")
    p_w2.add_argument("b", metavar="B.field")
    which = p_w2.add_mutually_exclusive_group()
    which.add_argument("--exact", action="store_true", help="exact linear-programming solver")
    which.add_argument("--sinkhorn", type=float, metavar="EPS", help="entropic solver at regularization EPS")
    p_w2.set_defaults(func=_cmd_w2)
    p_led = sub.add_parser("ledger", help="rebuild the ledger of a finished run")
    p_led.add_argument("--traj", required=True, metavar="DIR")
    p_led.set_defaults(func=_cmd_ledger)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_PASS
    try:
        return args.func(args)
    except (NumericalAbort, CFLError, ConvergenceError) as e:
        _log(f"numerical abort: {e}")
        return EXIT_ABORT
    except (ValueError, OSError) as e:
        _log(f"error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
