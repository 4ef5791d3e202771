"""Shift-register realization of the delayed boundary trace.

The line stores z(t, rho) = u_x(t - h*rho, L) at rho_j = j/M.  Pushing a new
trace advances time by dt = h/M and is the exact nodal solution of the
transport equation h z_t + z_rho = 0, so no transport error is introduced.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import InvalidCellCount


def _trap_weights(M: int) -> np.ndarray:
    w = np.full(M + 1, 1.0 / M)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


class DelayLine:
    """Ring buffer with shifted-sequence semantics.

    ``samples[0]`` is the newest trace and ``samples[M]`` the delayed one.
    """

    __slots__ = ("M", "h", "_buf", "_head", "steps")

    def __init__(self, M: int, h: float = 1.0, samples=None):
        if int(M) != M or M < 1:
            raise InvalidCellCount(f"cell count must be a positive integer, got {M}")
        if not h > 0:
            raise ValueError(f"delay h must be positive, got {h}")
        self.M = int(M)
        self.h = float(h)
        self._buf = np.zeros(self.M + 1)
        if samples is not None:
            s = np.asarray(samples, dtype=float)
            if s.shape != (self.M + 1,):
                raise ValueError(f"expected {self.M + 1} samples, got shape {s.shape}")
            self._buf[:] = s
        # samples[j] lives at _buf[(_head + j) % (M+1)]
        self._head = 0
        self.steps = 0

    @property
    def dt(self) -> float:
        return self.h / self.M

    @property
    def t(self) -> float:
        return self.steps * self.dt

    @property
    def samples(self) -> np.ndarray:
        return np.roll(self._buf, -self._head)

    @property
    def rho(self) -> np.ndarray:
        return np.arange(self.M + 1) / self.M

    def push(self, new_trace: float) -> "DelayLine":
        # the slot of samples[M] is recycled as the new samples[0]
        self._head = (self._head - 1) % (self.M + 1)
        self._buf[self._head] = new_trace
        self.steps += 1
        return self

    def delayed_value(self) -> float:
        return float(self._buf[(self._head + self.M) % (self.M + 1)])

    def newest(self) -> float:
        return float(self._buf[self._head])

    def set_newest(self, value: float) -> None:
        self._buf[self._head] = value

    def l2_norm_rho_sq(self) -> float:
        return float(_trap_weights(self.M) @ self.samples**2)

    def weighted_lyapunov_rho(self) -> float:
        return float(_trap_weights(self.M) @ ((1.0 - self.rho) * self.samples**2))

    def copy(self) -> "DelayLine":
        other = DelayLine(self.M, self.h)
        other._buf = self._buf.copy()
        other._head = self._head
        other.steps = self.steps
        return other

    # raw access for the time-stepping kernels
    def _raw(self) -> tuple[np.ndarray, int]:
        return self._buf, self._head

    def _set_raw(self, buf: np.ndarray, head: int, steps: int) -> None:
        self._buf = buf
        self._head = int(head)
        self.steps += int(steps)

    def __repr__(self) -> str:
        return f"DelayLine(M={self.M}, h={self.h}, t={self.t:g})"


def init_from_history(z0: Callable[[np.ndarray], np.ndarray] | float, M: int, h: float = 1.0) -> DelayLine:
    """Sample the history z(0, rho) = z0(rho) at rho_j = j/M."""
    if int(M) != M or M < 1:
        raise InvalidCellCount(f"cell count must be a positive integer, got {M}")
    rho = np.arange(int(M) + 1) / int(M)
    if callable(z0):
        vals = np.broadcast_to(np.asarray(z0(rho), dtype=float), rho.shape)
    else:
        vals = np.full(rho.shape, float(z0))
    return DelayLine(int(M), h, vals)


def push(line: DelayLine, new_trace: float) -> DelayLine:
    return line.push(new_trace)


def delayed_value(line: DelayLine) -> float:
    return line.delayed_value()


def l2_norm_rho_sq(line: DelayLine) -> float:
    return line.l2_norm_rho_sq()


def weighted_lyapunov_rho(line: DelayLine) -> float:
    return line.weighted_lyapunov_rho()
