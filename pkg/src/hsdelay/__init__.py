"""Simulation and certification toolkit for a coupled KdV-type system with
delayed boundary feedback v_x(t, L) = alpha u_x(t, L) + beta u_x(t - h, L)."""
from .delayline import DelayLine, init_from_history
from .diagnostics import (
    check_energy_identity,
    dissipation_rhs,
    energy,
    fit_decay,
    kato_check,
    lyapunov,
    observability_decay,
    observability_quotient,
    smallness_check,
    verify_theorem_1,
)
from .discretization import Grid, TraceSample, boundary_traces, build_linear_operator
from .errors import HSDelayError
from .integrator import (
    SimulationRecord,
    SolverOptions,
    SourcePair,
    State,
    picard_solve,
    simulate,
    step_linear,
    step_nonlinear,
)
from .params import (
    Gains,
    LyapunovWeights,
    SystemParams,
    mu_bounds,
    phi_matrix,
    phi_star_matrix,
    psi_matrix,
    smallness_radius,
    theoretical_decay_rate,
    validate_gains,
)
from .spectral import (
    GeneratorMatrix,
    SpectrumReport,
    abscissa_vs_decay,
    assemble_generator,
    dissipativity_check,
    spectral_abscissa,
)

__version__ = "0.1.0"
