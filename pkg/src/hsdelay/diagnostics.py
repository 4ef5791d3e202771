"""Energy and Lyapunov functionals, identity checks, decay fits and verdicts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .delayline import init_from_history
from .discretization import Grid, TraceSample, centered_diff, full_gradient
from .errors import (
    EmptyWindow,
    HorizonTooShort,
    NonPositiveEnergy,
    NotDefined,
    NotLinearRun,
    PreconditionViolated,
    WeightsInadmissible,
)
from .integrator import SimulationRecord, State, _history_callable
from .params import (
    Gains,
    LyapunovWeights,
    SystemParams,
    kato_constant,
    mu_bounds,
    phi_matrix,
    smallness_radius,
    theoretical_decay_rate,
)

__all__ = [
    "TraceSample",
    "DecayEstimate",
    "energy",
    "lyapunov",
    "dissipation_rhs",
    "check_energy_identity",
    "fit_decay",
    "verify_theorem_1",
    "kato_check",
    "observability_quotient",
    "observability_decay",
    "smallness_check",
]


def energy(p: SystemParams, grid: Grid, s: State) -> float:
    pde = 0.5 * grid.dx * float(s.u @ s.u + s.v @ s.v)
    return pde + 0.5 * p.gains.beta * p.h * s.line.l2_norm_rho_sq()


def _check_lyapunov_weights(g: Gains, L: float, w: LyapunovWeights) -> None:
    # zero weights are allowed here: they only switch a term off
    mu1_max, _ = mu_bounds(g, L)
    if not w.mu1 < mu1_max:
        raise WeightsInadmissible(f"mu1={w.mu1:g} must be below {mu1_max:g}")
    _, mu2_max = mu_bounds(g, L, w.mu1)
    if not w.mu2 < mu2_max:
        raise WeightsInadmissible(f"mu2={w.mu2:g} must be below {mu2_max:g}")


def lyapunov(p: SystemParams, grid: Grid, s: State, w: LyapunovWeights) -> float:
    _check_lyapunov_weights(p.gains, p.L, w)
    x = grid.x
    v1 = 0.5 * grid.dx * float(((p.L - x) * s.u) @ s.u + (x * s.v) @ s.v)
    v2 = 0.5 * p.gains.beta * p.h * s.line.weighted_lyapunov_rho()
    return energy(p, grid, s) + w.mu1 * v1 + w.mu2 * v2


def dissipation_rhs(g: Gains, tr) -> float | np.ndarray:
    """1/2 (a, b) Phi (a, b)^T - c^2/2; accepts a TraceSample or arrays (a, b, c)."""
    if isinstance(tr, TraceSample):
        a, b, c = tr.ux_L, tr.ux_delayed, tr.vx_0
    else:
        a, b, c = tr
    phi = phi_matrix(g)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    out = 0.5 * (phi.a11 * a * a + 2 * phi.a12 * a * b + phi.a22 * b * b) - 0.5 * c * c
    return float(out) if out.ndim == 0 else out


def record_dissipation(rec: SimulationRecord) -> np.ndarray:
    return dissipation_rhs(rec.params.gains, (rec.ux_L, rec.ux_delayed, rec.vx_0))


def check_energy_identity(rec: SimulationRecord) -> tuple[float, np.ndarray]:
    """Per-step |dE/dt - rate at midpoint traces| for a linear run."""
    if rec.nonlinear:
        raise NotLinearRun("energy identity check needs a linear-mode record")
    mid = lambda q: 0.5 * (q[1:] + q[:-1])
    rate = dissipation_rhs(rec.params.gains, (mid(rec.ux_L), mid(rec.ux_delayed), mid(rec.vx_0)))
    res = np.abs(np.diff(rec.E) / rec.dt - rate)
    return (float(res.max()) if res.size else 0.0), res


@dataclass(frozen=True)
class DecayEstimate:
    lambda_emp: float
    kappa_emp: float
    residual: float
    window: tuple[float, float]
    points: int


def fit_decay(energies, times, window=None) -> DecayEstimate:
    """Least-squares line through (t, ln E) on a window.

    The default window is [0.2 T, T].  When some E inside the window is not
    positive the window is cut at the first such sample.
    """
    E = np.asarray(energies, dtype=float)
    t = np.asarray(times, dtype=float)
    if E.shape != t.shape or E.size == 0:
        raise EmptyWindow("energies and times must be equal-length and non-empty")
    if not E[0] > 0:
        raise NonPositiveEnergy(f"E(0) = {E[0]:g} is not positive")
    T = t[-1]
    t0, t1 = (0.2 * T, T) if window is None else (float(window[0]), float(window[1]))
    idx = np.flatnonzero((t >= t0 - 1e-12 * max(1.0, abs(T))) & (t <= t1 + 1e-12 * max(1.0, abs(T))))
    if idx.size:
        bad = np.flatnonzero(~(E[idx] > 0))
        if bad.size:
            idx = idx[: bad[0]]
    if idx.size < 2:
        raise EmptyWindow(f"fewer than two positive samples in [{t0:g}, {t1:g}]")
    ts, ys = t[idx], np.log(E[idx])
    tm = ts.mean()
    dtm = ts - tm
    slope = float(dtm @ (ys - ys.mean()) / (dtm @ dtm))
    intercept = float(ys.mean() - slope * tm)
    resid = ys - (intercept + slope * ts)
    return DecayEstimate(
        lambda_emp=-slope,
        kappa_emp=math.exp(intercept) / E[0],
        residual=float(np.sqrt(np.mean(resid**2))),
        window=(float(ts[0]), float(ts[-1])),
        points=int(idx.size),
    )


def data_norm_H(p: SystemParams, grid: Grid, s: State) -> float:
    """||(u, v, z)||_H with the beta*h weight on the delay part; equals sqrt(2E)."""
    return math.sqrt(2.0 * energy(p, grid, s))


@dataclass
class TheoremReport:
    passed: bool
    lam: float
    kappa: float
    r: float
    r_max: float
    data_norm: float
    envelope_ok: bool
    max_envelope_ratio: float
    fit_ok: bool
    fit: DecayEstimate | None
    lyapunov_monotone: bool
    max_lyapunov_increase: float
    notes: list = field(default_factory=list)


def verify_theorem_1(
    rec: SimulationRecord,
    w: LyapunovWeights,
    r: float,
    slack: float = 1.05,
    lam_scale: float = 1.0,
    window=None,
) -> TheoremReport:
    """Check E(t) <= slack * kappa E(0) exp(-lambda t) and lambda_emp >= lambda.

    ``lam_scale`` multiplies the certified rate; values above one give the
    negative control that must fail.
    """
    p = rec.params
    if not p.gains.admissible:
        raise PreconditionViolated("gains violate the admissibility condition")
    r_max = smallness_radius(p.L)
    norm0 = math.sqrt(max(2.0 * rec.E[0], 0.0))
    if not r < r_max:
        raise PreconditionViolated(f"r={r:g} is not below r_max={r_max:g}")
    if norm0 > r * (1 + 1e-12):
        raise PreconditionViolated(f"data norm {norm0:g} exceeds r={r:g}")
    bound = theoretical_decay_rate(p, w, r)
    lam = bound.lam * lam_scale
    E0 = rec.E[0]
    notes = []
    if E0 == 0:
        return TheoremReport(True, lam, bound.kappa, r, r_max, norm0, True, 0.0, True, None, True, 0.0,
                             ["zero data"])
    env = slack * bound.kappa * E0 * np.exp(-lam * rec.times)
    ratio = rec.E / env
    envelope_ok = bool(np.all(ratio <= 1.0))
    try:
        fit = fit_decay(rec.E, rec.times, window)
        fit_ok = fit.lambda_emp >= lam
    except (EmptyWindow, NonPositiveEnergy) as exc:
        fit, fit_ok = None, False
        notes.append(f"decay fit failed: {exc}")
    V = rec.lyapunov(w.mu1, w.mu2) * np.exp(lam * rec.times)
    inc = np.diff(V)
    max_inc = float(inc.max() / V[0]) if inc.size else 0.0
    return TheoremReport(
        passed=envelope_ok and fit_ok,
        lam=lam,
        kappa=bound.kappa,
        r=r,
        r_max=r_max,
        data_norm=norm0,
        envelope_ok=envelope_ok,
        max_envelope_ratio=float(ratio.max()),
        fit_ok=fit_ok,
        fit=fit,
        lyapunov_monotone=max_inc <= 1e-8,
        max_lyapunov_increase=max_inc,
        notes=notes,
    )


def _time_trapezoid(f: np.ndarray, dt: float) -> float:
    if f.size < 2:
        return 0.0
    return float(dt * (f.sum() - 0.5 * (f[0] + f[-1])))


def kato_check(rec: SimulationRecord) -> tuple[float, float, float]:
    if rec.nonlinear:
        raise NotLinearRun("Kato check needs a linear-mode record")
    p, grid = rec.params, rec.grid
    s0 = rec.initial
    lhs = _time_trapezoid(rec.grad2, rec.dt)
    data = grid.dx * float(s0.u @ s0.u + s0.v @ s0.v) + s0.line.l2_norm_rho_sq()
    bound = kato_constant(p.L, p.gains) * data
    ratio = lhs / bound if bound > 0 else 0.0
    return lhs, bound, ratio


def _horizon_index(rec: SimulationRecord, T: float) -> int:
    k = int(round(T / rec.dt))
    if k > rec.nsteps:
        raise HorizonTooShort(f"record covers t <= {rec.times[-1]:g}, need T={T:g}")
    return k


def observability_quotient(rec: SimulationRecord, T: float) -> float:
    if not T > rec.params.h:
        raise HorizonTooShort(f"T={T:g} must exceed the delay h={rec.params.h:g}")
    k = _horizon_index(rec, T)
    num = 2.0 * rec.E[0]
    tr = rec.ux_L[: k + 1] ** 2 + rec.ux_delayed[: k + 1] ** 2 + rec.vx_0[: k + 1] ** 2
    den = _time_trapezoid(tr, rec.dt)
    if num == 0.0 and den == 0.0:
        raise NotDefined("zero data: the observability quotient is 0/0")
    if den < 1e-300:
        return math.inf
    return num / den


def observability_decay(C: float, T: float) -> tuple[float, float]:
    if not (C > 0 and T > 0):
        raise ValueError("need C > 0 and T > 0")
    if math.isinf(C):
        return 1.0, 0.0
    return C / (1.0 + C), math.log1p(1.0 / C) / T


@dataclass
class SmallnessReport:
    data_norm: float
    r: float
    r_max: float
    inside: bool
    cubic_lhs: float
    cubic_rhs: float
    mixed_lhs: float
    mixed_rhs: float

    @property
    def cubic_ok(self) -> bool:
        return abs(self.cubic_lhs) <= self.cubic_rhs

    @property
    def mixed_ok(self) -> bool:
        return abs(self.mixed_lhs) <= self.mixed_rhs

    @property
    def passed(self) -> bool:
        return self.inside and self.cubic_ok and self.mixed_ok


def smallness_check(p: SystemParams, grid: Grid, u0, v0, z0, r: float, M: int = 4096) -> SmallnessReport:
    """Data norm against r and r_max, plus the two trilinear bounds on the data."""
    u = np.asarray(u0, float)
    v = np.asarray(v0, float)
    line = init_from_history(_history_callable(z0), M, p.h)
    dx, L, x = grid.dx, p.L, grid.x
    norm = math.sqrt(dx * float(u @ u + v @ v) + p.gains.beta * p.h * line.l2_norm_rho_sq())
    r_max = smallness_radius(L)
    ux = full_gradient(grid, u)
    vx = full_gradient(grid, v)
    ux2 = dx * float(ux @ ux - 0.5 * (ux[0] ** 2 + ux[-1] ** 2))
    vx2 = dx * float(vx @ vx - 0.5 * (vx[0] ** 2 + vx[-1] ** 2))
    cubic = dx * float(np.sum(u**3))
    mixed = 3.0 * dx * float(np.sum((L - 2 * x) * u * v * centered_diff(grid, v)))
    return SmallnessReport(
        data_norm=norm,
        r=r,
        r_max=r_max,
        inside=norm <= r and r < r_max,
        cubic_lhs=cubic,
        cubic_rhs=L**1.5 * r * ux2,
        mixed_lhs=mixed,
        mixed_rhs=3.0 * L**1.5 * r * vx2,
    )


# ---------------------------------------------------------------- further identities

def kato_time_residual(rec: SimulationRecord) -> tuple[float, float]:
    """Residual of T int(u0^2+v0^2) = int int(u^2+v^2) + int (T-t)(a^2/2 - g^2 + c^2).

    Returns (residual, scale) where scale is the left-hand side.
    """
    if rec.nonlinear:
        raise NotLinearRun("time-weighted identity holds for linear runs")
    g = rec.params.gains
    T = rec.times[-1]
    gg = g.alpha * rec.ux_L + g.beta * rec.ux_delayed
    flux = (T - rec.times) * (0.5 * rec.ux_L**2 - gg**2 + rec.vx_0**2)
    lhs = T * rec.l2[0]
    rhs = _time_trapezoid(rec.l2, rec.dt) + _time_trapezoid(flux, rec.dt)
    return abs(lhs - rhs), lhs


def kato_delay_balance(rec: SimulationRecord) -> tuple[float, float]:
    """int a^2 + h int z0^2 against int b^2 + h int z(T)^2; returns (lhs, rhs)."""
    h = rec.params.h
    lhs = _time_trapezoid(rec.ux_L**2, rec.dt) + h * rec.initial.line.l2_norm_rho_sq()
    rhs = _time_trapezoid(rec.ux_delayed**2, rec.dt) + h * rec.final.line.l2_norm_rho_sq()
    return lhs, rhs


def trace_estimate(rec: SimulationRecord) -> tuple[float, float]:
    """int c^2 against (3 + 2 alpha^2 + 2 beta^2)(|(u0,v0)|^2 + |z0|^2)."""
    g = rec.params.gains
    s0 = rec.initial
    data = rec.grid.dx * float(s0.u @ s0.u + s0.v @ s0.v) + s0.line.l2_norm_rho_sq()
    return _time_trapezoid(rec.vx_0**2, rec.dt), (3 + 2 * g.alpha**2 + 2 * g.beta**2) * data
