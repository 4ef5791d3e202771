"""Theta-scheme time stepping, IMEX nonlinear steps and the Picard solver.

One step of length dt solves

    (I - theta dt A) y+ = (I + (1-theta) dt A) y + dt c (theta b+ + (1-theta) b)
                          + dt (s + F(y))

where A is the spatial operator, c its delay coupling, b and b+ the delayed
traces at the two ends of the step (both known history values), s an
optional source and F the quadratic terms.  Sources and F are evaluated at
the start of the step, so a Picard iteration whose sources come from the
previous iterate converges to exactly the IMEX trajectory.

The step is locked to the delay line: dt = h / M_line with
M_line = cells * substeps.  ``substeps`` refines the shift register by an
integer factor, which keeps the transport exact while decoupling the time
resolution from the nominal delay cell count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg.lapack import dgbtrf

from . import _kernels
from .delayline import DelayLine, init_from_history
from .discretization import (
    Grid,
    SpatialOperator,
    TraceSample,
    build_linear_operator,
    nonlinear_rhs,
    trace_uL,
)
from .errors import NoConvergence, NonFiniteState, SingularSystem
from .params import SystemParams


@dataclass
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    line: DelayLine

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.v.copy(), self.line.copy())


@dataclass(frozen=True)
class SourcePair:
    """Forcing sampled at the step times t_k, arrays of shape (steps, N)."""

    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        f1 = np.atleast_2d(np.asarray(self.f1, dtype=float))
        f2 = np.atleast_2d(np.asarray(self.f2, dtype=float))
        if f1.shape != f2.shape:
            raise ValueError(f"source shapes differ: {f1.shape} vs {f2.shape}")
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "f2", f2)

    @classmethod
    def from_function(cls, fun: Callable, grid: Grid, times) -> "SourcePair":
        """Sample fun(t, x) -> (f1, f2) on the grid at each time."""
        f1 = np.empty((len(times), grid.N))
        f2 = np.empty_like(f1)
        for k, t in enumerate(times):
            a, b = fun(t, grid.x)
            f1[k], f2[k] = a, b
        return cls(f1, f2)

    def interleaved(self, nsteps: int) -> np.ndarray:
        if self.f1.shape[0] < nsteps:
            raise ValueError(f"sources cover {self.f1.shape[0]} steps, run needs {nsteps}")
        N = self.f1.shape[1]
        out = np.empty((nsteps, 2 * N))
        out[:, 0::2] = self.f1[:nsteps]
        out[:, 1::2] = self.f2[:nsteps]
        return out


@dataclass(frozen=True)
class SolverOptions:
    cells: int = 64
    substeps: int = 64
    theta: float = 0.5
    snapshot_stride: int = 0
    picard_tol: float = 1e-10
    picard_maxiter: int = 40

    def __post_init__(self):
        if int(self.cells) != self.cells or self.cells < 1:
            raise ValueError(f"cells must be a positive integer, got {self.cells}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")

    @property
    def line_cells(self) -> int:
        return int(self.cells * self.substeps)

    def dt(self, h: float) -> float:
        return h / self.line_cells


@dataclass
class SimulationRecord:
    params: SystemParams
    grid: Grid
    opts: SolverOptions
    nonlinear: bool
    times: np.ndarray
    E: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    ux_L: np.ndarray
    ux_delayed: np.ndarray
    vx_0: np.ndarray
    l2: np.ndarray
    grad2: np.ndarray
    initial: State
    final: State
    has_sources: bool = False
    snapshots: list = field(default_factory=list)
    fields: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return self.opts.dt(self.params.h)

    @property
    def nsteps(self) -> int:
        return len(self.times) - 1

    @property
    def traces(self) -> list[TraceSample]:
        return [TraceSample(*row) for row in zip(self.times, self.ux_L, self.ux_delayed, self.vx_0)]

    def lyapunov(self, mu1: float, mu2: float) -> np.ndarray:
        return self.E + mu1 * self.V1 + mu2 * self.V2

    def energies(self, mu1: float = 0.0, mu2: float = 0.0) -> np.ndarray:
        return np.column_stack([self.E, self.lyapunov(mu1, mu2)])

    def field_history(self) -> tuple[np.ndarray, np.ndarray]:
        if self.fields is None:
            raise ValueError("run was made without keep_fields")
        return self.fields[:, 0::2], self.fields[:, 1::2]


class _Stepper:
    """Factorized theta-scheme matrices for one operator, dt and theta."""

    def __init__(self, op: SpatialOperator, dt: float, theta: float):
        self.op = op
        self.dt = dt
        self.theta = theta
        ab, kl, ku = op.interleaved_bands()
        n = op.size
        self.kl, self.ku = kl, ku
        rb = (1.0 - theta) * dt * ab
        rb[ku] += 1.0
        self.rb = np.ascontiguousarray(rb)
        lhs = np.zeros((2 * kl + ku + 1, n))
        lhs[kl:] = -theta * dt * ab
        lhs[kl + ku] += 1.0
        lub, piv, info = dgbtrf(lhs, kl, ku)
        if info != 0:
            raise SingularSystem(f"theta-scheme matrix singular (dgbtrf info={info})")
        self.lub = np.ascontiguousarray(lub)
        self.piv = np.ascontiguousarray(piv.astype(np.int64))
        self.luT = np.ascontiguousarray(lub.T)
        self.rT = np.ascontiguousarray(self.rb.T)
        self.dinv = 1.0 / lub[kl + ku]
        # band row r holds diagonal offset ku - r, column aligned like dia storage
        self.R = sp.dia_array((self.rb, np.arange(ku, -kl - 1, -1)), shape=(n, n)).tocsr()
        self.cval = float(op.delay_coupling[-1])

    def solve(self, b: np.ndarray, backend: str | None = None) -> np.ndarray:
        return _kernels.band_solve(self, b, backend)

    def explicit(self, y: np.ndarray, backend: str | None = None) -> np.ndarray:
        return _kernels.band_matvec(self, y, backend)


_STEPPERS: dict = {}


def _stepper(op: SpatialOperator, dt: float, theta: float) -> _Stepper:
    key = (id(op), dt, theta)
    st = _STEPPERS.get(key)
    if st is None or st.op is not op:
        if len(_STEPPERS) > 32:
            _STEPPERS.clear()
        st = _Stepper(op, dt, theta)
        _STEPPERS[key] = st
    return st


def _interleave(u, v) -> np.ndarray:
    y = np.empty(2 * len(u))
    y[0::2] = u
    y[1::2] = v
    return y


def _check_locked(s: State, opts: SolverOptions) -> float:
    if s.line.M != opts.line_cells:
        raise ValueError(
            f"delay line has {s.line.M} cells but options require {opts.line_cells}; dt would not lock to h"
        )
    return s.line.dt


def _advance(s: State, op: SpatialOperator, opts: SolverOptions, rhs_fn, source=None) -> State:
    dt = _check_locked(s, opts)
    st = _stepper(op, dt, opts.theta)
    grid = op.grid
    y = _interleave(s.u, s.v)
    rhs = st.explicit(y)
    line = s.line.copy()
    smp = line.samples
    b_now, b_next = smp[-1], smp[-2]
    rhs[-1] += dt * st.cval * (opts.theta * b_next + (1.0 - opts.theta) * b_now)
    if rhs_fn is not None:
        fu, fv = rhs_fn(grid, s.u, s.v)
        rhs += dt * _interleave(fu, fv)
    if source is not None:
        rhs += dt * _interleave(*source)
    y = st.solve(rhs)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState(line.steps + 1, s.t + dt)
    u, v = y[0::2].copy(), y[1::2].copy()
    line.push(trace_uL(grid, u))
    return State(s.t + dt, u, v, line)


def step_linear(s: State, op: SpatialOperator, opts: SolverOptions, source=None) -> State:
    return _advance(s, op, opts, None, source)


def step_nonlinear(s: State, op: SpatialOperator, opts: SolverOptions, rhs_fn=nonlinear_rhs, source=None) -> State:
    return _advance(s, op, opts, rhs_fn, source)


def _history_callable(z0):
    if z0 is None:
        return lambda rho: np.zeros_like(rho)
    if callable(z0):
        return z0
    return lambda rho: np.full_like(rho, float(z0))


def initial_state(p: SystemParams, grid: Grid, u0, v0, z0, opts: SolverOptions) -> State:
    u = np.array(u0, dtype=float).reshape(-1)
    v = np.array(v0, dtype=float).reshape(-1)
    if u.size != grid.N or v.size != grid.N:
        raise ValueError(f"initial fields must have length N={grid.N}")
    line = init_from_history(_history_callable(z0), opts.line_cells, p.h)
    # the newest sample is the current trace by definition of the state
    line.set_newest(trace_uL(grid, u))
    return State(0.0, u, v, line)


def steps_for(T: float, dt: float) -> int:
    return max(0, int(math.ceil(T / dt - 1e-9)))


def simulate(
    p: SystemParams,
    grid: Grid,
    u0,
    v0,
    z0,
    T: float,
    opts: SolverOptions = SolverOptions(),
    nonlinear: bool = False,
    sources: SourcePair | None = None,
    keep_fields: bool = False,
    backend: str | None = None,
    op: SpatialOperator | None = None,
) -> SimulationRecord:
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    if grid.L != p.L:
        raise ValueError(f"grid length {grid.L} differs from L={p.L}")
    op = op or build_linear_operator(grid, p.gains)
    s0 = initial_state(p, grid, u0, v0, z0, opts)
    dt = opts.dt(p.h)
    nsteps = steps_for(T, dt)
    st = _stepper(op, dt, opts.theta)
    n = 2 * grid.N
    y = _interleave(s0.u, s0.v)
    line = s0.line.copy()
    buf, head = line._raw()
    buf = buf.copy()
    src = sources.interleaved(nsteps) if sources is not None else np.zeros((1, n))
    stride = int(opts.snapshot_stride)
    nsnap = nsteps // stride + 1 if stride > 0 else 1
    snap_y = np.zeros((nsnap, n))
    snap_z = np.zeros((nsnap, line.M + 1) if stride > 0 else (1, 1))
    fields = np.zeros((nsteps + 1, n) if keep_fields else (1, n))
    out = np.zeros((nsteps + 1, _kernels.NCOL))
    head, status = _kernels.run_loop(
        st, backend=backend,
        N=grid.N, dx=grid.dx, L=grid.L, beta=p.gains.beta, h=p.h,
        theta=float(opts.theta), dt=dt, cval=st.cval,
        y=y, buf=buf, head=head, nsteps=nsteps, nonlinear=bool(nonlinear),
        src=src, use_src=sources is not None, stride=stride,
        out=out, snap_y=snap_y, snap_z=snap_z, fields=fields, keep_fields=bool(keep_fields),
    )
    if status >= 0:
        raise NonFiniteState(status, status * dt)
    line._set_raw(buf, head, nsteps)
    final = State(nsteps * dt, y[0::2].copy(), y[1::2].copy(), line)
    times = dt * np.arange(nsteps + 1)
    snaps = []
    if stride > 0:
        for i in range(nsnap):
            ln = DelayLine(line.M, p.h, snap_z[i])
            ln.steps = i * stride
            snaps.append(State(times[i * stride], snap_y[i, 0::2].copy(), snap_y[i, 1::2].copy(), ln))
    return SimulationRecord(
        params=p, grid=grid, opts=opts, nonlinear=bool(nonlinear), times=times,
        E=out[:, 0].copy(), V1=out[:, 1].copy(), V2=out[:, 2].copy(),
        ux_L=out[:, 3].copy(), ux_delayed=out[:, 4].copy(), vx_0=out[:, 5].copy(),
        l2=out[:, 6].copy(), grad2=out[:, 7].copy(),
        initial=s0, final=final, has_sources=sources is not None,
        snapshots=snaps, fields=fields if keep_fields else None,
    )


# ---------------------------------------------------------------- Picard

def grad_sq_history(fields: np.ndarray, dx: float) -> np.ndarray:
    """Squared H1 seminorm per time row of an interleaved field history."""
    u = fields[:, 0::2]
    v = fields[:, 1::2]
    total = np.zeros(fields.shape[0])
    for w in (u, v):
        pad = np.pad(w, ((0, 0), (1, 1)))
        d = (pad[:, 2:] - pad[:, :-2]) / (2 * dx)
        left = (4 * w[:, 0] - w[:, 1]) / (2 * dx)
        right = (w[:, -2] - 4 * w[:, -1]) / (2 * dx)
        total += np.sum(d * d, axis=1) + 0.5 * (left**2 + right**2)
    return dx * total


def b_norm(fields: np.ndarray, dx: float, dt: float) -> float:
    """Discrete sup_t |(u,v)| + (int |(u_x,v_x)|^2 dt)^(1/2), trapezoid in time."""
    l2 = dx * np.sum(fields * fields, axis=1)
    g2 = grad_sq_history(fields, dx)
    tint = dt * (g2.sum() - 0.5 * (g2[0] + g2[-1])) if g2.size > 1 else 0.0
    return float(np.sqrt(l2.max()) + np.sqrt(max(tint, 0.0)))


def nonlinear_history(fields: np.ndarray, dx: float) -> np.ndarray:
    """Quadratic terms evaluated on every row of an interleaved history."""
    u = fields[:, 0::2]
    v = fields[:, 1::2]

    def d(w):
        pad = np.pad(w, ((0, 0), (1, 1)))
        return (pad[:, 2:] - pad[:, :-2]) / (2 * dx)

    dv = d(v)
    out = np.empty_like(fields)
    out[:, 0::2] = u * d(u) + d(u * u) + 3 * v * dv
    out[:, 1::2] = -3 * u * dv
    return out


@dataclass
class PicardResult:
    record: SimulationRecord
    iterations: int
    contraction_factors: list


def picard_solve(
    p: SystemParams,
    grid: Grid,
    u0,
    v0,
    z0,
    T: float,
    opts: SolverOptions = SolverOptions(),
    backend: str | None = None,
) -> PicardResult:
    """Fixed-point iteration of the map Gamma using linear solves with sources."""
    op = build_linear_operator(grid, p.gains)
    dx, dt = grid.dx, opts.dt(p.h)
    prev = simulate(p, grid, u0, v0, z0, T, opts, keep_fields=True, backend=backend, op=op)
    nsteps = prev.nsteps
    factors: list[float] = []
    last_diff = None
    for it in range(1, opts.picard_maxiter + 1):
        F = nonlinear_history(prev.fields[:nsteps], dx)
        if not np.all(np.isfinite(F)):
            raise NoConvergence(it, factors)
        src = SourcePair(F[:, 0::2], F[:, 1::2])
        try:
            cur = simulate(p, grid, u0, v0, z0, T, opts, sources=src, keep_fields=True, backend=backend, op=op)
        except NonFiniteState:
            raise NoConvergence(it, factors) from None
        diff = b_norm(cur.fields - prev.fields, dx, dt)
        if not math.isfinite(diff):
            raise NoConvergence(it, factors)
        if last_diff is not None and last_diff > 0:
            factors.append(diff / last_diff)
        last_diff = diff
        prev = cur
        if diff < opts.picard_tol:
            return PicardResult(cur, it, factors)
    raise NoConvergence(opts.picard_maxiter, factors)
