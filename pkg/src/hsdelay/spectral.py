"""Finite-dimensional generator of the full linear system and its spectrum.

State ordering is (u_1..u_N, v_1..v_N, z_0..z_M).  The transport part uses a
finite-volume upwind discretization of -(1/h) z_rho on M cells with half
cells at both ends:

    z_0' = (2M/h)(a - z_0),  z_j' = (M/h)(z_{j-1} - z_j),  z_M' = (2M/h)(z_{M-1} - z_M)

where a is the discrete u_x(t, L).  Paired with the trapezoid weight in rho
this makes the discrete generator dissipative for exactly the same reason the
continuous one is.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from .discretization import TRACE_L, Grid, build_linear_operator
from .errors import EigensolveFailure, GridMismatch
from .params import Gains, SystemParams


@dataclass(frozen=True)
class GeneratorMatrix:
    A: np.ndarray
    weights: np.ndarray | None = None
    N: int = 0
    M: int = 0
    L: float = 1.0

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def pde_block(self) -> np.ndarray:
        n = 2 * self.N
        return self.A[:n, :n]

    @property
    def delay_block(self) -> np.ndarray:
        n = 2 * self.N
        return self.A[n:, n:]

    def norm(self) -> float:
        return float(np.linalg.norm(self.A, 2))


def _weights(grid: Grid, beta: float, h: float, M: int) -> np.ndarray:
    wz = np.full(M + 1, beta * h / M)
    wz[0] *= 0.5
    wz[-1] *= 0.5
    return np.concatenate([np.full(2 * grid.N, grid.dx), wz])


def assemble_generator(grid: Grid, p: SystemParams, M: int, feedback: bool = True) -> GeneratorMatrix:
    if M < 4:
        raise ValueError(f"need M >= 4 transport cells, got {M}")
    N, dx, h = grid.N, grid.dx, p.h
    n = 2 * N + M + 1
    op = build_linear_operator(grid, p.gains)
    A = np.zeros((n, n))
    A[: 2 * N, : 2 * N] = op.dense()
    z = 2 * N
    A[: 2 * N, z + M] = op.delay_coupling
    if feedback:
        A[z, N - 2] += 2 * M / h * TRACE_L[0] / dx
        A[z, N - 1] += 2 * M / h * TRACE_L[1] / dx
    else:
        A[2 * N - 1, : N] = 0.0
        A[2 * N - 1, z + M] = 0.0
    A[z, z] -= 2 * M / h
    j = np.arange(1, M)
    A[z + j, z + j - 1] += M / h
    A[z + j, z + j] -= M / h
    A[z + M, z + M - 1] += 2 * M / h
    A[z + M, z + M] -= 2 * M / h
    return GeneratorMatrix(A, _weights(grid, p.gains.beta, h, M), N, M, grid.L)


def pde_generator(grid: Grid, g: Gains) -> GeneratorMatrix:
    """PDE block alone with the delayed term removed (identity-weighted)."""
    op = build_linear_operator(grid, g)
    return GeneratorMatrix(op.dense(), np.full(2 * grid.N, grid.dx), grid.N, 0, grid.L)


def _as_matrix(gm) -> np.ndarray:
    return gm.A if isinstance(gm, GeneratorMatrix) else np.asarray(gm, dtype=float)


def eigenvalues(gm, method: str = "blocks") -> np.ndarray:
    """All eigenvalues.

    ``blocks`` splits the matrix into its strongly connected components
    (the irreducible diagonal blocks of a block-triangular permutation) and
    solves each densely; the spectrum is the union.  This avoids the round-off
    splitting of the defective transport eigenvalue that a single dense solve
    of the coupled matrix shows.  ``dense`` solves the whole matrix at once.
    """
    A = _as_matrix(gm)
    try:
        if method == "dense":
            return np.linalg.eigvals(A)
        if method != "blocks":
            raise ValueError(f"unknown method {method!r}")
        ncomp, labels = connected_components(A != 0, directed=True, connection="strong")
        parts = []
        for c in range(ncomp):
            idx = np.flatnonzero(labels == c)
            sub = A[np.ix_(idx, idx)]
            parts.append(sub.diagonal().astype(complex) if idx.size == 1 else np.linalg.eigvals(sub))
        return np.concatenate(parts)
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc


def spectral_abscissa(gm, method: str = "blocks") -> float:
    ev = eigenvalues(gm, method)
    if not np.all(np.isfinite(ev)):
        raise EigensolveFailure("non-finite eigenvalues")
    return float(ev.real.max())


def dissipativity_check(gm: GeneratorMatrix, p: SystemParams | None = None) -> float:
    """Largest eigenvalue of (W A + A^T W)/2 relative to W.

    A value <= 0 (up to round-off) means <A y, y>_W <= 0 for every y.
    """
    A = gm.A
    if p is not None and gm.M > 0:
        grid = Grid(gm.N, gm.L)
        w = _weights(grid, p.gains.beta, p.h, gm.M)
    else:
        w = gm.weights
    if w is None:
        w = np.ones(A.shape[0])
    WA = w[:, None] * A
    S = 0.5 * (WA + WA.T)
    try:
        mu = sla.eigh(S, np.diag(w), eigvals_only=True)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise EigensolveFailure(str(exc)) from exc
    return float(mu.max())


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    abscissa: float
    dissipativity_max: float
    norm: float

    @property
    def scaled_dissipativity(self) -> float:
        return self.dissipativity_max / self.norm


def spectrum_report(gm: GeneratorMatrix, p: SystemParams, method: str = "blocks") -> SpectrumReport:
    ev = eigenvalues(gm, method)
    return SpectrumReport(ev, float(ev.real.max()), dissipativity_check(gm, p), gm.norm())


@dataclass(frozen=True)
class AbscissaComparison:
    abscissa: float
    predicted_rate: float
    lambda_emp: float
    gap: float
    window: tuple[float, float]


def resolved_window(times, E, upper: float = 1e-3, lower: float = 1e-10) -> tuple[float, float]:
    """From the first time E/E0 <= upper to the last time E/E0 >= lower.

    This skips the initial transient and stops before the energy sinks into
    round-off, so the fit sees the asymptotic exponential regime.
    """
    t = np.asarray(times, float)
    r = np.asarray(E, float) / E[0]
    below = np.flatnonzero(r <= upper)
    above = np.flatnonzero(r >= lower)
    if below.size == 0 or above.size == 0:
        return float(t[0]), float(t[-1])
    return float(t[below[0]]), float(t[above[-1]])


def decay_gap(abscissa: float, times, E, window=None) -> AbscissaComparison:
    from .diagnostics import fit_decay

    if window is None:
        E = np.asarray(E, float)
        window = resolved_window(times, E) if E[0] > 0 else (0.0, float(np.asarray(times)[-1]))
    fit = fit_decay(E, times, window)
    pred = 2.0 * abs(abscissa)
    gap = abs(fit.lambda_emp - pred) / pred if pred > 0 else float("inf")
    return AbscissaComparison(abscissa, pred, fit.lambda_emp, gap, fit.window)


def abscissa_vs_decay(gm: GeneratorMatrix, rec, window=None, method: str = "blocks") -> AbscissaComparison:
    if rec.grid.N != gm.N or rec.grid.L != gm.L:
        raise GridMismatch(f"record grid (N={rec.grid.N}, L={rec.grid.L}) != generator (N={gm.N}, L={gm.L})")
    return decay_gap(spectral_abscissa(gm, method), rec.times, rec.E, window)
