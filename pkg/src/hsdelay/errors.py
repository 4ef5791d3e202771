"""Exception types raised across the package."""


class HSDelayError(Exception):
    """Base class for every error raised by hsdelay."""


class OutOfAdmissibleRegion(HSDelayError, ValueError):
    def __init__(self, constraint: str, margin: float):
        self.constraint = constraint
        self.margin = margin
        super().__init__(f"gain condition violated: {constraint} (margin {margin:+.6g})")


class GainsInadmissible(HSDelayError, ValueError):
    pass


class Mu1TooLarge(HSDelayError, ValueError):
    def __init__(self, mu1: float, bound: float):
        self.mu1 = mu1
        self.bound = bound
        super().__init__(f"mu1={mu1:g} must be below mu1_max={bound:g}")


class WeightsInadmissible(HSDelayError, ValueError):
    pass


class RadiusTooLarge(HSDelayError, ValueError):
    pass


class InvalidCellCount(HSDelayError, ValueError):
    pass


class GridTooCoarse(HSDelayError, ValueError):
    pass


class GridMismatch(HSDelayError, ValueError):
    pass


class SingularSystem(HSDelayError, ArithmeticError):
    pass


class NonFiniteState(HSDelayError, ArithmeticError):
    def __init__(self, step: int, t: float):
        self.step = step
        self.t = t
        super().__init__(f"non-finite state at step {step} (t={t:g})")


class NoConvergence(HSDelayError, ArithmeticError):
    def __init__(self, iterations: int, contraction_factors):
        self.iterations = iterations
        self.contraction_factors = list(contraction_factors)
        super().__init__(f"Picard iteration did not converge after {iterations} iterations")


class NotLinearRun(HSDelayError, ValueError):
    pass


class EmptyWindow(HSDelayError, ValueError):
    pass


class NonPositiveEnergy(HSDelayError, ValueError):
    pass


class PreconditionViolated(HSDelayError, ValueError):
    pass


class HorizonTooShort(HSDelayError, ValueError):
    pass


class NotDefined(HSDelayError, ValueError):
    pass


class EigensolveFailure(HSDelayError, ArithmeticError):
    pass


class ConfigError(HSDelayError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
