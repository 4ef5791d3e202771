"""Named initial-data and delay-history families.

Spatial profiles are multiplied by the window sin(pi x / L)^p.  With p >= 4
the fields and their first derivatives vanish at both ends, so the data are
compatible with the boundary conditions and the feedback law at t = 0 when
the history also vanishes at rho = 0 and rho = 1.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .delayline import init_from_history
from .discretization import Grid
from .params import SystemParams

WINDOW_POWER = 6


def window(grid: Grid, power: int = WINDOW_POWER) -> np.ndarray:
    return np.sin(np.pi * grid.x / grid.L) ** power


def sine_modes(grid: Grid, coeffs: Sequence[float], power: int = WINDOW_POWER) -> np.ndarray:
    """sum_k c_k sin(k pi x / L), windowed; coeffs[0] multiplies k = 1."""
    x = grid.x
    f = np.zeros_like(x)
    for k, c in enumerate(coeffs, start=1):
        f += c * np.sin(k * np.pi * x / grid.L)
    return f * window(grid, power)


def bump(grid: Grid, center: float, width: float, amplitude: float, power: int = WINDOW_POWER) -> np.ndarray:
    if not width > 0:
        raise ValueError("bump width must be positive")
    x = grid.x
    return amplitude * np.exp(-(((x - center) / width) ** 2)) * window(grid, power)


def history(kind: str, params: Sequence[float] = ()):
    """Delay history z0(rho) on [0, 1] as a callable.

    constant: (c,)   linear: (a, b) -> a + b rho   sine: (amp, k) -> amp sin(k pi rho)
    zero: ()
    """
    vals = [float(q) for q in params]
    if kind == "zero":
        return lambda rho: np.zeros_like(rho)
    if kind == "constant":
        (c,) = vals or [0.0]
        return lambda rho: np.full_like(rho, c)
    if kind == "linear":
        a, b = (vals + [0.0, 0.0])[:2]
        return lambda rho: a + b * rho
    if kind == "sine":
        amp, k = (vals + [1.0, 1.0])[:2]
        return lambda rho: amp * np.sin(k * np.pi * rho)
    raise ValueError(f"unknown history family {kind!r}")


def h_norm(p: SystemParams, grid: Grid, u, v, z0, M: int = 4096) -> float:
    """||(u, v, z)||_H from grid values and the history callable."""
    line = init_from_history(z0, M, p.h)
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    return math.sqrt(grid.dx * float(u @ u + v @ v) + p.gains.beta * p.h * line.l2_norm_rho_sq())


@dataclass(frozen=True)
class Data:
    u: np.ndarray
    v: np.ndarray
    z0: object

    def scaled(self, s: float) -> "Data":
        z = self.z0
        return Data(s * self.u, s * self.v, lambda rho: s * z(rho))


def normalize(p: SystemParams, grid: Grid, d: Data, target: float, M: int = 4096) -> Data:
    n = h_norm(p, grid, d.u, d.v, d.z0, M)
    if n == 0:
        return d
    return d.scaled(target / n)


def random_data(p: SystemParams, grid: Grid, rng: np.random.Generator, modes: int = 10,
                knots: int = 5) -> Data:
    """Random windowed sine series for u and v plus a piecewise-linear history.

    The history vanishes at both ends of [0, 1] to keep the data compatible.
    """
    cu = rng.uniform(-1, 1, modes)
    cv = rng.uniform(-1, 1, modes)
    nodes = np.linspace(0.0, 1.0, knots + 2)
    vals = np.concatenate(([0.0], rng.uniform(-1, 1, knots), [0.0]))
    z0 = lambda rho: np.interp(rho, nodes, vals)
    return Data(sine_modes(grid, cu), sine_modes(grid, cv), z0)
