"""Uniform grid, third-derivative operators with boundary closures, traces and nonlinear terms.

Unknowns are the interior values u_1..u_N, v_1..v_N with u = v = 0 at both
ends eliminated.  In terms of the dimensionless centered stencil
D = (1/2, -1, 0, 1, -1/2) for dx^3 * d^3/dx^3, the semi-discrete system is

    u_t = (D + Cu) u / (2 dx^3)
    v_t = -((D + Cv) v + dx * g * e_N) / dx^3,   g = alpha*a + beta*b

where Cu and Cv are closure corrections supported on the first and last two
rows.  The u closure uses the ghost value u_{-1} = u_1 (from u_x(0) = 0) on the
left and a dissipative correction on the right; the v closure uses the ghost
value v_{N+2} = v_N + 2 dx g on the right.  Traces are one-sided:

    a = u_x(L) ~ (u_{N-1} - 4 u_N) / (2 dx),   c = v_x(0) ~ (4 v_1 - v_2) / (2 dx).

With these choices the discrete energy dx/2 * |y|^2 obeys

    dE/dt = 1/2 (a,b) Phi (a,b)^T - c^2/2 - u_1^2/(4 dx^2) - (v_N/dx + g)^2 / 2

exactly, so the last two terms are the only (O(dx^2)) departures from the
continuous identity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .delayline import DelayLine
from .errors import GridTooCoarse
from .params import Gains

# (offset, coefficient) of the centered stencil, dimensionless
CENTERED = ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5))
# u_x(L) ~ (TRACE_L[0]*u_{N-1} + TRACE_L[1]*u_N) / dx
TRACE_L = (0.5, -2.0)


@dataclass(frozen=True)
class Grid:
    N: int
    L: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 8:
            raise GridTooCoarse(f"need N >= 8 interior points, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / (self.N + 1)

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(1, self.N + 1)

    @property
    def x_full(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.N + 2)

    def sample(self, f) -> np.ndarray:
        return np.asarray(f(self.x), dtype=float) * np.ones(self.N)

    def refine(self) -> "Grid":
        return Grid(2 * self.N + 1, self.L)


@dataclass(frozen=True)
class TraceSample:
    t: float
    ux_L: float
    ux_delayed: float
    vx_0: float


def _stencil_matrix(N: int) -> np.ndarray:
    D = np.zeros((N, N))
    for off, c in CENTERED:
        idx = np.arange(max(0, -off), min(N, N - off))
        D[idx, idx + off] += c
    return D


def u_block_dimless(N: int) -> np.ndarray:
    D = _stencil_matrix(N)
    D[0, 0] += -0.5
    D[N - 2, N - 2] += -0.125
    D[N - 2, N - 1] += 0.25
    D[N - 1, N - 2] += 0.75
    D[N - 1, N - 1] += -2.0
    return D


def v_block_dimless(N: int) -> np.ndarray:
    D = _stencil_matrix(N)
    D[0, 0] += 2.0
    D[0, 1] += -0.75
    D[1, 0] += -0.25
    D[1, 1] += 0.125
    D[N - 1, N - 1] += 0.5
    return D


@dataclass(frozen=True)
class SpatialOperator:
    """Linear part of the semi-discrete system acting on stacked (u, v).

    d/dt (u, v) = interior @ (u, v) + delay_coupling * z(t, 1)
    """

    grid: Grid
    gains: Gains
    interior: sp.csr_array
    delay_coupling: np.ndarray

    @property
    def size(self) -> int:
        return 2 * self.grid.N

    def dense(self) -> np.ndarray:
        return self.interior.toarray()

    def apply(self, u, v, z_delayed: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        y = np.concatenate([np.asarray(u, float), np.asarray(v, float)])
        out = self.interior @ y + self.delay_coupling * z_delayed
        N = self.grid.N
        return out[:N], out[N:]

    def interleaved_bands(self) -> tuple[np.ndarray, int, int]:
        """Interior matrix in LAPACK band storage with (u_i, v_i) interleaved.

        Returns (ab, kl, ku) where A[i, j] sits at ab[ku + i - j, j].
        """
        N = self.grid.N
        perm = np.empty(2 * N, dtype=np.int64)
        perm[0::2] = np.arange(N)
        perm[1::2] = np.arange(N, 2 * N)
        A = self.interior.tocoo()
        inv = np.empty_like(perm)
        inv[perm] = np.arange(2 * N)
        rows, cols = inv[A.row], inv[A.col]
        kl = int(max(0, (rows - cols).max()))
        ku = int(max(0, (cols - rows).max()))
        ab = np.zeros((kl + ku + 1, 2 * N))
        np.add.at(ab, (ku + rows - cols, cols), A.data)
        return ab, kl, ku


def build_linear_operator(grid: Grid, g: Gains) -> SpatialOperator:
    N, dx = grid.N, grid.dx
    A = np.zeros((2 * N, 2 * N))
    A[:N, :N] = u_block_dimless(N) / (2 * dx**3)
    A[N:, N:] = -v_block_dimless(N) / dx**3
    # v-row N receives -(dx*g)/dx^3 with g = alpha*a + beta*b and a = ell.u/dx
    A[2 * N - 1, N - 2] += -g.alpha * TRACE_L[0] / dx**3
    A[2 * N - 1, N - 1] += -g.alpha * TRACE_L[1] / dx**3
    coupling = np.zeros(2 * N)
    coupling[2 * N - 1] = -g.beta / dx**2
    return SpatialOperator(grid, g, sp.csr_array(A), coupling)


def trace_uL(grid: Grid, u) -> float:
    return (TRACE_L[0] * u[-2] + TRACE_L[1] * u[-1]) / grid.dx


def trace_v0(grid: Grid, v) -> float:
    return (4.0 * v[0] - v[1]) / (2.0 * grid.dx)


def boundary_traces(grid: Grid, u, v, line: DelayLine) -> TraceSample:
    return TraceSample(line.t, trace_uL(grid, u), line.delayed_value(), trace_v0(grid, v))


def centered_diff(grid: Grid, w) -> np.ndarray:
    """Centered first difference on interior nodes with zero end values."""
    w = np.asarray(w, float)
    p = np.concatenate([[0.0], w, [0.0]])
    return (p[2:] - p[:-2]) / (2.0 * grid.dx)


def nonlinear_rhs(grid: Grid, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic terms (3 u u_x + 3 v v_x, -3 u v_x).

    3 u u_x is written as u*D(u) + D(u^2), a split whose discrete inner
    product with u vanishes; the v terms cancel against each other in the
    energy for the plain product form.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    du = centered_diff(grid, u)
    dv = centered_diff(grid, v)
    fu = u * du + centered_diff(grid, u * u) + 3.0 * v * dv
    fv = -3.0 * u * dv
    return fu, fv


def full_gradient(grid: Grid, w, left: float | None = None, right: float | None = None) -> np.ndarray:
    """Derivative on all N+2 nodes: centered inside, one-sided at the ends."""
    w = np.asarray(w, float)
    dx = grid.dx
    out = np.empty(w.size + 2)
    out[1:-1] = centered_diff(grid, w)
    out[0] = (4.0 * w[0] - w[1]) / (2.0 * dx) if left is None else left
    out[-1] = (w[-2] - 4.0 * w[-1]) / (2.0 * dx) if right is None else right
    return out


def trapezoid_full(grid: Grid, f_full) -> float:
    f = np.asarray(f_full, float)
    return grid.dx * (f.sum() - 0.5 * (f[0] + f[-1]))


def interior_integral(grid: Grid, f) -> float:
    """Trapezoid over (0, L) for a field vanishing at both ends."""
    return grid.dx * float(np.sum(f))
