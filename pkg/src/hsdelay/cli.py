"""Command line drivers: run, certify, sweep, observability, spectrum.

Configs are plain text, one ``key = value`` per line, ``#`` starts a comment.
Lists are comma separated.  Unknown keys are rejected with the line number.

Exit codes: 0 success, 1 verdict failure, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import click
import numpy as np

from . import data as D
from .diagnostics import (
    fit_decay,
    observability_decay,
    observability_quotient,
    record_dissipation,
    verify_theorem_1,
)
from .discretization import Grid
from .errors import (
    ConfigError,
    EigensolveFailure,
    HorizonTooShort,
    HSDelayError,
    NoConvergence,
    NonFiniteState,
    NotDefined,
    SingularSystem,
)
from .integrator import SolverOptions, picard_solve, simulate
from .params import (
    Gains,
    LyapunovWeights,
    SystemParams,
    check_weights,
    dissipation_constant,
    is_negative_definite,
    kato_constant,
    mu_bounds,
    phi_matrix,
    phi_star_matrix,
    psi_matrix,
    smallness_radius,
    theoretical_decay_rate,
)
from .spectral import assemble_generator, spectrum_report

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (NonFiniteState, NoConvergence, SingularSystem, EigensolveFailure, NotDefined)

ENERGY_HEADER = ["t", "E", "V", "E_bound"]
TRACE_HEADER = ["t", "ux_L", "ux_delayed", "vx_0", "dissipation_rhs"]
SWEEP_HEADER = ["alpha", "beta", "admissible", "lambda_theory", "kappa_theory",
                "lambda_emp", "kappa_emp", "abscissa", "error"]

DEFAULT_SEED = 20240917


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.1
    beta: float = 0.1
    L: float = 1.0
    h: float = 1.0
    N: int = 64
    M: int = 32
    substeps: int = 64
    T: float = 10.0
    theta: float = 0.5
    # initial data: sine (coefficients u_modes, v_modes), bump, zero
    data: str = "sine"
    u_modes: tuple = (1.0,)
    v_modes: tuple = ()
    bump_center: float = 0.5
    bump_width: float = 0.1
    bump_amplitude: float = 1.0
    data_norm: float = 0.0  # rescale data to this H-norm when > 0
    history: str = "zero"
    history_params: tuple = ()
    mu1: float = 0.1
    mu2: float = 0.1
    r: float = 0.0  # radius for the decay certificate; 0 means the data norm
    mode: str = "linear"
    verdict: bool = True
    energy_csv: str = "energy.csv"
    trace_csv: str = "traces.csv"
    summary: str = "verdict.txt"
    csv_stride: int = 64
    seed: int = DEFAULT_SEED
    # observability
    samples: int = 100
    obs_T: float = 2.0
    quotient_csv: str = "quotients.csv"
    # sweep
    alpha_min: float = 0.0
    alpha_max: float = 0.0
    alpha_steps: int = 0
    beta_min: float = 0.0
    beta_max: float = 0.0
    beta_steps: int = 0
    simulate: bool = True
    spectrum: bool = False
    sweep_csv: str = "sweep.csv"
    # spectrum
    eigen_csv: str = ""

    @property
    def params(self) -> SystemParams:
        return SystemParams.make(self.alpha, self.beta, self.L, self.h)

    @property
    def grid(self) -> Grid:
        return Grid(self.N, self.L)

    @property
    def options(self) -> SolverOptions:
        return SolverOptions(cells=self.M, substeps=self.substeps, theta=self.theta)

    @property
    def weights(self) -> LyapunovWeights:
        return LyapunovWeights(self.mu1, self.mu2)


_CHOICES = {
    "data": ("sine", "bump", "zero"),
    "history": ("zero", "constant", "linear", "sine"),
    "mode": ("linear", "nonlinear", "picard"),
}


def _convert(name: str, kind, raw: str):
    if kind is bool or kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite")
        return v
    if kind is tuple or kind == "tuple":
        return tuple(float(q) for q in raw.split(",") if q.strip())
    if name in _CHOICES and raw not in _CHOICES[name]:
        raise ValueError(f"{name} must be one of {', '.join(_CHOICES[name])}")
    return raw


def parse_config(text: str) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values: dict = {}
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in types:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first on line {seen[key]})", lineno)
        seen[key] = lineno
        try:
            values[key] = _convert(key, types[key], raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None
    cfg = RunConfig(**values)
    _validate(cfg, seen)
    return cfg


def _validate(cfg: RunConfig, lines: dict[str, int]) -> None:
    def fail(key, msg):
        raise ConfigError(msg, lines.get(key))

    for key in ("L", "h", "T", "obs_T"):
        if not getattr(cfg, key) > 0:
            fail(key, f"{key} must be positive")
    if cfg.N < 8:
        fail("N", "N must be at least 8")
    if cfg.M < 4:
        fail("M", "M must be at least 4")
    if cfg.substeps < 1:
        fail("substeps", "substeps must be at least 1")
    if not 0.5 <= cfg.theta <= 1.0:
        fail("theta", "theta must lie in [0.5, 1]")
    if cfg.csv_stride < 1:
        fail("csv_stride", "csv_stride must be at least 1")
    if cfg.samples < 1:
        fail("samples", "samples must be at least 1")
    if cfg.alpha_steps < 0 or cfg.beta_steps < 0:
        fail("alpha_steps" if cfg.alpha_steps < 0 else "beta_steps", "step counts must be >= 0")


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


# ---------------------------------------------------------------- data

def build_data(cfg: RunConfig, p: SystemParams, grid: Grid) -> D.Data:
    if cfg.data == "zero":
        u = np.zeros(grid.N)
        v = np.zeros(grid.N)
    elif cfg.data == "bump":
        u = D.bump(grid, cfg.bump_center, cfg.bump_width, cfg.bump_amplitude)
        v = np.zeros(grid.N)
    else:
        u = D.sine_modes(grid, cfg.u_modes)
        v = D.sine_modes(grid, cfg.v_modes)
    d = D.Data(u, v, D.history(cfg.history, cfg.history_params))
    if cfg.data_norm > 0:
        d = D.normalize(p, grid, d, cfg.data_norm)
    return d


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------- run

@dataclass
class RunResult:
    record: object
    passed: bool
    lines: list = field(default_factory=list)
    bound: object = None


def execute_run(cfg: RunConfig, backend: str | None = None) -> RunResult:
    p, grid, opts = cfg.params, cfg.grid, cfg.options
    d = build_data(cfg, p, grid)
    lines = [f"mode: {cfg.mode}", f"alpha: {cfg.alpha!r}", f"beta: {cfg.beta!r}"]
    if cfg.mode == "picard":
        res = picard_solve(p, grid, d.u, d.v, d.z0, cfg.T, opts, backend=backend)
        rec = res.record
        lines.append(f"picard_iterations: {res.iterations}")
        lines.append("contraction_factors: " + ",".join(f"{q:.6g}" for q in res.contraction_factors))
    else:
        rec = simulate(p, grid, d.u, d.v, d.z0, cfg.T, opts, nonlinear=cfg.mode == "nonlinear", backend=backend)
    E = rec.E
    E0 = E[0]
    slack = 1e-10 if cfg.mode == "linear" else 1e-8
    rise = float(np.max(np.diff(E))) if E.size > 1 else 0.0
    monotone = rise <= slack * E0
    lines.append(f"energy_monotone: {monotone} (max increase {rise:.3e})")
    passed = monotone
    bound = None
    if cfg.verdict:
        norm0 = math.sqrt(2.0 * E0)
        r = cfg.r if cfg.r > 0 else norm0
        r_max = smallness_radius(p.L)
        lines.append(f"data_norm: {norm0!r}")
        lines.append(f"r_max: {r_max!r}")
        if E0 == 0:
            bound = theoretical_decay_rate(p, cfg.weights, 0.0)
            lines.append("decay: zero data")
        elif r < r_max:
            rep = verify_theorem_1(rec, cfg.weights, r)
            bound = theoretical_decay_rate(p, cfg.weights, r)
            lam_emp = rep.fit.lambda_emp if rep.fit is not None else float("nan")
            lines.append(f"lambda: {rep.lam!r}")
            lines.append(f"kappa: {rep.kappa!r}")
            lines.append(f"lambda_emp: {lam_emp!r}")
            lines.append(f"envelope_ok: {rep.envelope_ok} (max ratio {rep.max_envelope_ratio:.6g})")
            lines.append(f"fit_ok: {rep.fit_ok}")
            passed = passed and rep.passed
        else:
            lines.append(f"decay: data norm {r:g} not below r_max; no certificate")
    lines.append(f"verdict: {'pass' if passed else 'fail'}")
    return RunResult(rec, passed, lines, bound)


def write_run_outputs(cfg: RunConfig, res: RunResult, out_dir: Path) -> None:
    rec = res.record
    k = np.arange(0, rec.times.size, cfg.csv_stride)
    if k[-1] != rec.times.size - 1:
        k = np.append(k, rec.times.size - 1)
    t = rec.times[k]
    V = rec.lyapunov(cfg.mu1, cfg.mu2)[k]
    if res.bound is not None:
        Eb = res.bound.envelope(t, rec.E[0])
    else:
        Eb = [None] * k.size
    _write_csv(out_dir / cfg.energy_csv, ENERGY_HEADER, zip(t, rec.E[k], V, Eb))
    drhs = record_dissipation(rec)[k]
    _write_csv(out_dir / cfg.trace_csv, TRACE_HEADER,
               zip(t, rec.ux_L[k], rec.ux_delayed[k], rec.vx_0[k], drhs))
    (out_dir / cfg.summary).write_text("\n".join(res.lines) + "\n")


# ---------------------------------------------------------------- certify

def certificate(alpha: float, beta: float, L: float = 1.0, h: float = 1.0,
                mu1: float | None = None, mu2: float | None = None, r: float | None = None) -> list[str]:
    g = Gains(alpha, beta)
    out = [f"alpha = {alpha!r}", f"beta = {beta!r}", f"L = {L!r}", f"h = {h!r}"]
    out.append(f"admissible = {g.admissible}")
    out.append(f"margin = {g.margin:.12g}")
    for name, m in (("Phi", phi_matrix(g)), ("Phi_star", phi_star_matrix(g))):
        m1, m2 = m.minors
        out.append(f"{name} = [[{m.a11:.12g}, {m.a12:.12g}], [{m.a12:.12g}, {m.a22:.12g}]]")
        out.append(f"{name}_minors = {m1:.12g}, {m2:.12g}")
        out.append(f"{name}_negative_definite = {is_negative_definite(m)}")
    r_max = smallness_radius(L)
    out.append(f"r_max = {r_max:.12g}")
    out.append(f"kato_constant = {kato_constant(L, g):.12g}")
    if not g.admissible:
        return out
    out.append(f"K = {dissipation_constant(g):.12g}")
    try:
        mu1_max, _ = mu_bounds(g, L)
        out.append(f"mu1_max = {mu1_max:.12g}")
        if mu1 is not None:
            _, mu2_max = mu_bounds(g, L, mu1)
            out.append(f"mu2_max = {mu2_max:.12g}")
            if mu2 is not None:
                w = LyapunovWeights(mu1, mu2)
                psi = psi_matrix(g, w, L)
                out.append(f"Psi = [[{psi.a11:.12g}, {psi.a12:.12g}], [{psi.a12:.12g}, {psi.a22:.12g}]]")
                out.append(f"Psi_negative_definite = {is_negative_definite(psi)}")
                check_weights(g, L, w)
                b = theoretical_decay_rate(SystemParams.make(alpha, beta, L, h), w, r if r is not None else 0.0)
                out.append(f"lambda = {b.lam:.12g}")
                out.append(f"kappa = {b.kappa:.12g}")
    except HSDelayError as exc:
        out.append(f"error = {type(exc).__name__}: {exc}")
    return out


# ---------------------------------------------------------------- sweep

def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    if n <= 0:
        return np.zeros(0)
    return np.array([lo]) if n == 1 else np.linspace(lo, hi, n)


def sweep_rows(cfg: RunConfig, backend: str | None = None) -> list[list]:
    points = [(float(a), float(b)) for a in _axis(cfg.alpha_min, cfg.alpha_max, cfg.alpha_steps)
              for b in _axis(cfg.beta_min, cfg.beta_max, cfg.beta_steps)]
    # admissibility of every point is settled before anything runs
    status = [(a, b, Gains(a, b).admissible) for a, b in points]
    rows = []
    for a, b, ok in status:
        row = [a, b, ok, None, None, None, None, None, ""]
        if not ok:
            rows.append(row)
            continue
        try:
            pc = replace(cfg, alpha=a, beta=b)
            p, grid = pc.params, pc.grid
            d = build_data(pc, p, grid)
            norm0 = D.h_norm(p, grid, d.u, d.v, d.z0)
            r = pc.r if pc.r > 0 else norm0
            bound = theoretical_decay_rate(p, pc.weights, r)
            row[3], row[4] = bound.lam, bound.kappa
            if pc.simulate:
                rec = simulate(p, grid, d.u, d.v, d.z0, pc.T, pc.options,
                               nonlinear=pc.mode != "linear", backend=backend)
                fit = fit_decay(rec.E, rec.times)
                row[5], row[6] = fit.lambda_emp, fit.kappa_emp
            if pc.spectrum:
                row[7] = spectrum_report(assemble_generator(grid, p, pc.M), p).abscissa
        except (HSDelayError, ValueError, ArithmeticError) as exc:
            row[8] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


# ---------------------------------------------------------------- observability

@dataclass
class ObservabilityResult:
    C_emp: float
    delta: float
    mu0: float
    quotients: np.ndarray
    records: list = field(default_factory=list)  # (times, E) pairs

    def bound_ratio(self) -> float:
        """Largest E(t) / ((1/delta) exp(-mu0 t) E(0)) over the kept records."""
        worst = 0.0
        for t, E in self.records:
            if E[0] > 0:
                env = E[0] / self.delta * np.exp(-self.mu0 * t)
                worst = max(worst, float(np.max(E / env)))
        return worst


def estimate_observability(cfg: RunConfig, samples: int, T: float, backend: str | None = None,
                           horizon: float | None = None, keep_records: bool = False) -> ObservabilityResult:
    """Max observability quotient over a seeded random family of unit-norm data.

    Runs last ``horizon`` (default T); the quotient always uses [0, T].
    """
    p, grid, opts = cfg.params, cfg.grid, cfg.options
    if not T > p.h:
        raise HorizonTooShort(f"T={T:g} must exceed h={p.h:g}")
    horizon = max(T, horizon or T)
    rng = np.random.default_rng(cfg.seed)
    q = np.empty(samples)
    kept = []
    for i in range(samples):
        if cfg.data == "zero":
            d = D.Data(np.zeros(grid.N), np.zeros(grid.N), D.history("zero"))
        else:
            d = D.normalize(p, grid, D.random_data(p, grid, rng), 1.0)
        rec = simulate(p, grid, d.u, d.v, d.z0, horizon, opts, backend=backend)
        q[i] = observability_quotient(rec, T)
        if keep_records:
            kept.append((rec.times, rec.E))
    C = float(q.max())
    delta, mu0 = observability_decay(C, T)
    return ObservabilityResult(C, delta, mu0, q, kept)


# ---------------------------------------------------------------- click glue

def _fail(code: int, msg: str):
    click.echo(msg, err=True)
    sys.exit(code)


def _load(path) -> RunConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")
    except HSDelayError as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")


@click.group()
def main():
    """Boundary-delay feedback experiments for a coupled KdV-type system."""


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def run(config, out_dir):
    """Simulate one configuration and write energy, trace and verdict files."""
    cfg = _load(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cfg.params
        cfg.weights
        res = execute_run(cfg)
    except NUMERIC_ERRORS as exc:
        _fail(EXIT_NUMERIC, f"numerical failure: {type(exc).__name__}: {exc}")
    except HSDelayError as exc:
        _fail(EXIT_CONFIG, f"config error: {type(exc).__name__}: {exc}")
    write_run_outputs(cfg, res, out)
    click.echo("\n".join(res.lines))
    sys.exit(EXIT_OK if res.passed else EXIT_VERDICT)


@main.command()
@click.option("--alpha", type=float, required=True)
@click.option("--beta", type=float, required=True)
@click.option("--L", "L", type=float, default=1.0, show_default=True)
@click.option("--h", type=float, default=1.0, show_default=True)
@click.option("--mu1", type=float, default=None)
@click.option("--mu2", type=float, default=None)
@click.option("--r", type=float, default=None)
def certify(alpha, beta, L, h, mu1, mu2, r):
    """Print the closed-form certificate for one gain point."""
    click.echo("\n".join(certificate(alpha, beta, L, h, mu1, mu2, r)))


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def sweep(config, out_dir):
    """Evaluate a rectangular (alpha, beta) grid and write one CSV row per point."""
    cfg = _load(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep_rows(cfg)
    _write_csv(out / cfg.sweep_csv, SWEEP_HEADER, rows)
    bad = [r for r in rows if r[5] is not None and r[3] is not None and r[5] < r[3]]
    click.echo(f"{len(rows)} points, {len(bad)} below the certified rate")
    sys.exit(EXIT_VERDICT if bad else EXIT_OK)


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--samples", type=int, default=None, help="overrides the config value")
@click.option("--T", "T", type=float, default=None, help="horizon; overrides obs_T")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def observability(config, samples, T, out_dir):
    """Estimate the observability constant and the decay it implies."""
    cfg = _load(config)
    samples = samples if samples is not None else cfg.samples
    T = T if T is not None else cfg.obs_T
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = estimate_observability(cfg, samples, T)
    except HorizonTooShort as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")
    except NUMERIC_ERRORS as exc:
        _fail(EXIT_NUMERIC, f"numerical failure: {type(exc).__name__}: {exc}")
    except HSDelayError as exc:
        _fail(EXIT_CONFIG, f"config error: {type(exc).__name__}: {exc}")
    _write_csv(out / cfg.quotient_csv, ["sample", "quotient"], enumerate(res.quotients))
    click.echo(f"C_emp = {res.C_emp!r}\ndelta = {res.delta!r}\nmu0 = {res.mu0!r}")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def spectrum(config, out_dir):
    """Spectral abscissa and weighted dissipativity of the discrete generator."""
    cfg = _load(config)
    try:
        p = cfg.params
        gm = assemble_generator(cfg.grid, p, cfg.M)
        rep = spectrum_report(gm, p)
    except EigensolveFailure as exc:
        _fail(EXIT_NUMERIC, f"numerical failure: {exc}")
    except HSDelayError as exc:
        _fail(EXIT_CONFIG, f"config error: {type(exc).__name__}: {exc}")
    if cfg.eigen_csv:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ev = rep.eigenvalues[np.lexsort((rep.eigenvalues.imag, rep.eigenvalues.real))]
        _write_csv(out / cfg.eigen_csv, ["re", "im"], zip(ev.real, ev.imag))
    click.echo(f"size = {gm.size}\nabscissa = {rep.abscissa!r}\n"
               f"dissipativity_max = {rep.dissipativity_max!r}\n"
               f"scaled_dissipativity = {rep.scaled_dissipativity!r}")
    sys.exit(EXIT_OK if rep.abscissa < 0 else EXIT_VERDICT)


if __name__ == "__main__":
    main()
