import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import smooth_data
from hsdelay.delayline import init_from_history
from hsdelay.diagnostics import (
    check_energy_identity,
    dissipation_rhs,
    energy,
    fit_decay,
    kato_check,
    kato_delay_balance,
    kato_time_residual,
    lyapunov,
    observability_decay,
    observability_quotient,
    smallness_check,
    trace_estimate,
    verify_theorem_1,
)
from hsdelay.discretization import Grid, TraceSample
from hsdelay.errors import (
    EmptyWindow,
    HorizonTooShort,
    NonPositiveEnergy,
    NotDefined,
    NotLinearRun,
    PreconditionViolated,
)
from hsdelay.integrator import SolverOptions, SourcePair, State, simulate
from hsdelay.params import LyapunovWeights, SystemParams

P = SystemParams.make(0.1, 0.1)
OPTS = SolverOptions(cells=16)


@pytest.fixture(scope="module")
def linear_run():
    g = Grid(32)
    d = smooth_data(P, g, 0.05)
    return simulate(P, g, d.u, d.v, d.z0, 3.0, OPTS)


def state(u, v, line):
    return State(0.0, np.asarray(u, float), np.asarray(v, float), line)


def test_energy_examples():
    g = Grid(99)
    zero = init_from_history(0.0, 8)
    assert energy(P, g, state(np.zeros(99), np.zeros(99), zero)) == 0.0
    assert energy(P, g, state(np.ones(99), np.zeros(99), zero)) == pytest.approx(0.495)
    p = SystemParams.make(0.0, 0.2)
    assert energy(p, g, state(np.zeros(99), np.zeros(99), init_from_history(1.0, 8))) == pytest.approx(0.1)


def test_lyapunov_examples():
    g = Grid(99)
    p = SystemParams.make(0.0, 0.2)
    zero = init_from_history(0.0, 8)
    w = LyapunovWeights(1.0, 0.0)
    assert lyapunov(p, g, state(np.zeros(99), np.zeros(99), zero), w) == 0.0
    s = state(np.ones(99), np.zeros(99), zero)
    assert lyapunov(p, g, s, w) - energy(p, g, s) == pytest.approx(0.25, abs=0.01)


def test_sandwich_on_record(linear_run):
    w = LyapunovWeights(0.1, 0.1)
    E = linear_run.E
    V = linear_run.lyapunov(w.mu1, w.mu2)
    kappa = 1 + max(w.mu1 * P.L, w.mu2)
    assert np.all(E <= V * (1 + 1e-14))
    assert np.all(V <= kappa * E * (1 + 1e-14))


@given(st.integers(0, 2**31 - 1), st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3))
def test_energy_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    g = Grid(16)
    u, v = rng.standard_normal((2, 16))
    z = rng.standard_normal(9)
    from hsdelay.delayline import DelayLine
    e1 = energy(P, g, state(u, v, DelayLine(8, 1.0, z)))
    e2 = energy(P, g, state(c * u, c * v, DelayLine(8, 1.0, c * z)))
    assert e2 == pytest.approx(c * c * e1, rel=1e-12)


def test_dissipation_rhs_examples():
    from hsdelay.params import Gains
    g = Gains(0.0, 0.2)
    assert dissipation_rhs(g, TraceSample(0.0, 0.0, 0.0, 0.0)) == 0.0
    assert dissipation_rhs(g, TraceSample(0.0, 1.0, 0.0, 0.0)) == pytest.approx(-0.15)
    assert dissipation_rhs(g, TraceSample(0.0, 0.0, 1.0, 0.0)) == pytest.approx(-0.08)
    assert dissipation_rhs(g, (np.ones(3), np.zeros(3), np.zeros(3))) == pytest.approx([-0.15] * 3)


def test_identity_zero_run_and_errors():
    g = Grid(16)
    rec = simulate(P, g, np.zeros(16), np.zeros(16), None, 0.5, OPTS)
    r, per = check_energy_identity(rec)
    assert r == 0.0 and not per.any()
    nl = simulate(P, g, np.zeros(16), np.zeros(16), None, 0.5, OPTS, nonlinear=True)
    with pytest.raises(NotLinearRun):
        check_energy_identity(nl)


def test_identity_insensitive_to_zero_source():
    g = Grid(16)
    d = smooth_data(P, g)
    opts = SolverOptions(cells=8, substeps=16)
    a = simulate(P, g, d.u, d.v, d.z0, 0.5, opts)
    n = a.nsteps
    b = simulate(P, g, d.u, d.v, d.z0, 0.5, opts, sources=SourcePair(np.zeros((n, 16)), np.zeros((n, 16))))
    assert np.array_equal(check_energy_identity(a)[1], check_energy_identity(b)[1])


def test_fit_exact_exponential():
    t = np.linspace(0, 10, 201)
    fit = fit_decay(2 * np.exp(-0.5 * t), t)
    assert fit.lambda_emp == pytest.approx(0.5, rel=1e-12)
    assert fit.kappa_emp * 2 == pytest.approx(2.0, rel=1e-12)
    assert fit.window == (2.0, 10.0)


def test_fit_constant_and_perturbed():
    t = np.linspace(0, 10, 201)
    assert fit_decay(np.full_like(t, 3.0), t).lambda_emp == pytest.approx(0.0, abs=1e-15)
    noise = 1 + 1e-8 * np.random.default_rng(0).uniform(-1, 1, t.size)
    assert abs(fit_decay(np.exp(-0.7 * t) * noise, t).lambda_emp - 0.7) < 1e-6


def test_fit_errors():
    t = np.linspace(0, 1, 11)
    with pytest.raises(NonPositiveEnergy):
        fit_decay(np.zeros(11), t)
    with pytest.raises(EmptyWindow):
        fit_decay(np.ones(11), t, window=(5.0, 6.0))
    E = np.exp(-t)
    E[3:] = 0.0
    with pytest.raises(EmptyWindow):
        fit_decay(E, t)


def test_verify_zero_data_passes():
    rec = simulate(P, Grid(16), np.zeros(16), np.zeros(16), None, 1.0, OPTS)
    assert verify_theorem_1(rec, LyapunovWeights(0.1, 0.1), 0.01).passed


def test_verify_preconditions(linear_run):
    with pytest.raises(PreconditionViolated):
        verify_theorem_1(linear_run, LyapunovWeights(0.1, 0.1), 0.01)
    with pytest.raises(PreconditionViolated):
        verify_theorem_1(linear_run, LyapunovWeights(0.1, 0.1), 0.1875)


def test_kato_zero_and_scaling():
    g = Grid(32)
    z = simulate(P, g, np.zeros(32), np.zeros(32), None, 1.0, OPTS)
    assert kato_check(z) == (0.0, 0.0, 0.0)
    d = smooth_data(P, g)
    a = kato_check(simulate(P, g, d.u, d.v, d.z0, 2.0, OPTS))
    b = kato_check(simulate(P, g, 2 * d.u, 2 * d.v, lambda r: 2 * d.z0(r), 2.0, OPTS))
    assert b[0] == pytest.approx(4 * a[0], rel=1e-10)
    assert b[1] == pytest.approx(4 * a[1], rel=1e-10)
    assert a[2] <= 1.05


def test_observability_quotient_contract(linear_run):
    with pytest.raises(HorizonTooShort):
        observability_quotient(linear_run, 1.0)
    with pytest.raises(HorizonTooShort):
        observability_quotient(linear_run, 10.0)
    q = observability_quotient(linear_run, 2.0)
    assert 0 < q < math.inf
    g = Grid(16)
    z = simulate(P, g, np.zeros(16), np.zeros(16), None, 2.0, OPTS)
    with pytest.raises(NotDefined):
        observability_quotient(z, 2.0)


def test_observability_scaling():
    g = Grid(32)
    d = smooth_data(P, g)
    a = simulate(P, g, d.u, d.v, d.z0, 2.0, OPTS)
    b = simulate(P, g, -3 * d.u, -3 * d.v, lambda r: -3 * d.z0(r), 2.0, OPTS)
    assert observability_quotient(b, 2.0) == pytest.approx(observability_quotient(a, 2.0), rel=1e-10)


def test_observability_decay_examples():
    assert observability_decay(1.0, 1.0) == pytest.approx((0.5, math.log(2)))
    assert observability_decay(1.0, 2.0) == pytest.approx((0.5, 0.34657359))
    d, mu = observability_decay(1e12, 1.0)
    assert d == pytest.approx(1.0) and mu == pytest.approx(0.0, abs=1e-11)


def test_smallness_examples():
    g = Grid(64)
    z = np.zeros(64)
    rep = smallness_check(P, g, z, z, None, 0.1)
    assert rep.passed and rep.data_norm == 0.0
    u = 0.01 * np.sin(np.pi * g.x)
    rep = smallness_check(P, g, u, z, None, 0.1)
    assert rep.data_norm <= rep.r and rep.cubic_ok and rep.mixed_ok
    c = 0.1875 / rep.data_norm
    rep = smallness_check(P, g, c * u, z, None, 0.1875)
    assert not rep.inside


def test_further_identities(linear_run):
    lhs, rhs = kato_delay_balance(linear_run)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    c2, bound = trace_estimate(linear_run)
    assert c2 <= bound


def test_time_weighted_identity_converges(linear_run):
    g = Grid(64)
    d = smooth_data(P, g, 0.05)
    fine = simulate(P, g, d.u, d.v, d.z0, 3.0, SolverOptions(cells=32))
    coarse = kato_time_residual(linear_run)
    finer = kato_time_residual(fine)
    assert (coarse[0] / coarse[1]) / (finer[0] / finer[1]) >= 3.0
