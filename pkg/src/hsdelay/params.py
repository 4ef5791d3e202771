"""Gain validation, the 2x2 stability matrices and closed-form decay certificates."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    GainsInadmissible,
    Mu1TooLarge,
    OutOfAdmissibleRegion,
    RadiusTooLarge,
    WeightsInadmissible,
)

DEFINITENESS_TOL = 1e-12


@dataclass(frozen=True)
class Gains:
    """Feedback gains of v_x(t,L) = alpha*u_x(t,L) + beta*u_x(t-h,L).

    Construction does not validate; use :func:`validate_gains` when the
    admissibility condition is required.
    """

    alpha: float
    beta: float

    @property
    def load(self) -> float:
        return 2.0 * self.alpha**2 + 1.5 * self.beta

    @property
    def margin(self) -> float:
        """Distance 1/2 - (2a^2 + 3b/2); positive inside the region."""
        return 0.5 - self.load

    @property
    def alt_margin(self) -> float:
        """Same margin with the alpha^2 coefficient taken as 1 instead of 2."""
        return 0.5 - (self.alpha**2 + 1.5 * self.beta)

    @property
    def admissible(self) -> bool:
        return self.beta > 0 and 0 < self.load < 0.5


def validate_gains(alpha: float, beta: float) -> Gains:
    alpha = float(alpha)
    beta = float(beta)
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise OutOfAdmissibleRegion("finite gains", float("nan"))
    if not beta > 0:
        raise OutOfAdmissibleRegion("beta > 0", beta)
    g = Gains(alpha, beta)
    if not g.load > 0:
        raise OutOfAdmissibleRegion("2*alpha^2 + 1.5*beta > 0", g.load)
    if not g.margin > 0:
        raise OutOfAdmissibleRegion("2*alpha^2 + 1.5*beta < 0.5", g.margin)
    return g


@dataclass(frozen=True)
class SystemParams:
    L: float
    h: float
    gains: Gains

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"L must be positive, got {self.L}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"h must be positive, got {self.h}")
        validate_gains(self.gains.alpha, self.gains.beta)

    @classmethod
    def make(cls, alpha: float, beta: float, L: float = 1.0, h: float = 1.0) -> "SystemParams":
        return cls(float(L), float(h), validate_gains(alpha, beta))

    @classmethod
    def unchecked(cls, alpha: float, beta: float, L: float = 1.0, h: float = 1.0) -> "SystemParams":
        """Skip the gain condition, for studying points outside the region."""
        p = object.__new__(cls)
        object.__setattr__(p, "L", float(L))
        object.__setattr__(p, "h", float(h))
        object.__setattr__(p, "gains", Gains(float(alpha), float(beta)))
        return p


@dataclass(frozen=True)
class SymMatrix2:
    a11: float
    a12: float
    a22: float

    @property
    def det(self) -> float:
        return self.a11 * self.a22 - self.a12**2

    @property
    def minors(self) -> tuple[float, float]:
        return self.a11, self.det

    def eigvalsh(self) -> tuple[float, float]:
        """Closed-form eigenvalues, ascending."""
        mean = 0.5 * (self.a11 + self.a22)
        rad = math.hypot(0.5 * (self.a11 - self.a22), self.a12)
        return mean - rad, mean + rad

    def to_array(self):
        import numpy as np

        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    def quad(self, x: float, y: float) -> float:
        return self.a11 * x * x + 2.0 * self.a12 * x * y + self.a22 * y * y


def phi_matrix(g: Gains) -> SymMatrix2:
    a, b = g.alpha, g.beta
    return SymMatrix2(a * a - 0.5 + b, a * b, b * b - b)


def phi_star_matrix(g: Gains) -> SymMatrix2:
    a, b = g.alpha, g.beta
    return SymMatrix2(2 * a * a + b - 1.0, a * b, 2 * b * b - b)


@dataclass(frozen=True)
class LyapunovWeights:
    mu1: float
    mu2: float

    def __post_init__(self):
        if not (self.mu1 >= 0 and self.mu2 >= 0):
            raise WeightsInadmissible(f"weights must be non-negative, got ({self.mu1}, {self.mu2})")


def psi_matrix(g: Gains, w: LyapunovWeights, L: float) -> SymMatrix2:
    a, b = g.alpha, g.beta
    phi = phi_matrix(g)
    s = L * w.mu1
    return SymMatrix2(
        phi.a11 + s * a * a + w.mu2 * b,
        phi.a12 + s * a * b,
        phi.a22 + s * b * b,
    )


def is_negative_definite(m: SymMatrix2, tol: float = DEFINITENESS_TOL) -> bool:
    return m.a11 < -tol and m.det > tol


def mu_bounds(g: Gains, L: float, mu1: float | None = None) -> tuple[float, float | None]:
    """Upper limits for the Lyapunov weights; the alpha=0 branch is vacuous."""
    a2, b = g.alpha**2, g.beta
    first = math.inf if a2 == 0 else (1 - 2 * b - 2 * a2) / (2 * L * a2)
    second = (1 - 2 * a2 - 3 * b) / (L * (2 * a2 + b))
    mu1_max = min(first, second)
    if mu1 is None:
        return mu1_max, None
    if mu1 >= mu1_max:
        raise Mu1TooLarge(mu1, mu1_max)
    k = 1 + L * mu1
    mu2_max = min(
        (1 - 2 * b - 2 * k * a2) / (2 * b),
        (1 - 2 * k * a2 - k * b - 2 * b) / (2 * b),
    )
    return mu1_max, mu2_max


def check_weights(g: Gains, L: float, w: LyapunovWeights) -> None:
    """Raise WeightsInadmissible unless both weights lie strictly inside the box."""
    if not (w.mu1 > 0 and w.mu2 > 0):
        raise WeightsInadmissible(f"weights must be positive, got ({w.mu1}, {w.mu2})")
    try:
        _, mu2_max = mu_bounds(g, L, w.mu1)
    except Mu1TooLarge as exc:
        raise WeightsInadmissible(str(exc)) from exc
    if not w.mu2 < mu2_max:
        raise WeightsInadmissible(f"mu2={w.mu2:g} must be below mu2_max={mu2_max:g}")


def smallness_radius(L: float) -> float:
    return 3.0 / (16.0 * L**1.5)


@dataclass(frozen=True)
class DecayBound:
    lam: float
    kappa: float
    r_max: float
    lam_spatial: float
    lam_delay: float

    def envelope(self, t, E0: float):
        import numpy as np

        return self.kappa * E0 * np.exp(-self.lam * np.asarray(t, dtype=float))


def theoretical_decay_rate(p: SystemParams, w: LyapunovWeights, r: float) -> DecayBound:
    """Rate and prefactor of E(t) <= kappa E(0) exp(-lambda t).

    ``r`` equal to the smallness radius is accepted and yields lambda = 0.
    """
    L, h = p.L, p.h
    check_weights(p.gains, L, w)
    r_max = smallness_radius(L)
    if not 0 <= r <= r_max:
        raise RadiusTooLarge(f"r={r:g} outside [0, {r_max:g}]")
    lam_x = math.pi**2 * w.mu1 * (3 - 16 * L**1.5 * r) / (2 * L**2 * (1 + L * w.mu1))
    lam_x = max(lam_x, 0.0)
    lam_z = w.mu2 / (h * (1 + w.mu2))
    kappa = 1 + max(w.mu1 * L, w.mu2)
    return DecayBound(min(lam_x, lam_z), kappa, r_max, lam_x, lam_z)


def dissipation_constant(g: Gains) -> float:
    """min(-lambda_max(Phi)/2, 1/2).

    Only negative definiteness of Phi is needed, which the gain condition
    implies; points outside the region with a definite Phi are accepted.
    """
    phi = phi_matrix(g)
    if not is_negative_definite(phi):
        raise GainsInadmissible(f"Phi is not negative definite at gains ({g.alpha}, {g.beta})")
    top = phi.eigvalsh()[1]
    return min(-0.5 * top, 0.5)


def kato_constant(L: float, g: Gains) -> float:
    return 4.0 / 3.0 * L * (1 + g.alpha**2 + g.beta**2)
