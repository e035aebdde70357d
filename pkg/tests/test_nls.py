import math

import numpy as np
import pytest

from apnls import APSeries, Basis, ContractionError, a_norm, evaluate, random_series, scale
from apnls.core import TruncationPolicy, mean_value, multiply
from apnls.nls import (
    BlowupClass,
    NonlinearitySpec,
    PicardConfig,
    SolutionTrace,
    SolverConfig,
    StepperConfig,
    certified_window,
    classify_blowup,
    classify_sign,
    mean_power_series,
    nonlinearity,
    picard_solve,
    riccati_bound,
    solve_backward,
    step_solve,
    zero_mode_residual,
)
from apnls.oracle import ode_reference
from apnls.schrodinger import propagate


def stepper(dt, radius=None, **kw):
    trunc = TruncationPolicy(eps=0.0 if radius else 1e-15, radius=radius)
    return SolverConfig(trunc=trunc, stepper=StepperConfig(dt=dt, **kw))


# -- spec validation -----------------------------------------------------------

@pytest.mark.parametrize("args", [(0, 0), (2, 3), (2, -1), (2.5, 1)])
def test_spec_rejects_invalid(args):
    with pytest.raises((ValueError, TypeError)):
        NonlinearitySpec(*args)


def test_modulus_needs_even_power():
    with pytest.raises(ValueError, match="even"):
        NonlinearitySpec(3, 1, 1.0, modulus=True)
    spec = NonlinearitySpec.power(4, 2j)
    assert (spec.k, spec.lam, spec.modulus) == (2, 2j, True)


def test_reversed_time_spec():
    spec = NonlinearitySpec(3, 2, 1 + 2j).reversed_time()
    assert (spec.p, spec.k, spec.lam) == (3, 2, 1 - 2j)


# -- nonlinearity --------------------------------------------------------------

def test_modulus_square_of_constant(b1):
    out, mass = nonlinearity(APSeries(b1, {0: 1.5}), NonlinearitySpec.power(2))
    assert out.as_dict() == {(0,): 2.25} and mass == 0


def test_cube_of_plane_wave(b1):
    out, _ = nonlinearity(APSeries(b1, {1: 1}), NonlinearitySpec(3, 3))
    assert out.as_dict() == {(3,): 1}


def test_two_wave_modulus(b2, rng):
    u = APSeries(b2, {(1, 0): 1, (0, 1): 1})
    out, _ = nonlinearity(u, NonlinearitySpec.power(2))
    assert out.as_dict() == {(0, 0): 2, (1, -1): 1, (-1, 1): 1}
    x = rng.uniform(-50, 50, 32)
    assert np.max(np.abs(evaluate(out, x) - np.abs(evaluate(u, x)) ** 2)) <= 1e-12


def test_nonlinearity_pointwise(b2, rng):
    spec = NonlinearitySpec(3, 1, 0.5 - 1j)
    for _ in range(5):
        u = random_series(b2, 4, 2, rng)
        x = rng.uniform(-20, 20, 32)
        v = evaluate(u, x)
        want = spec.lam * v * np.conj(v) ** 2
        assert np.max(np.abs(evaluate(nonlinearity(u, spec)[0], x) - want)) <= 1e-12


def test_nonlinearity_discarded_mass_bounds_the_loss(b2, rng):
    spec = NonlinearitySpec(3, 2, 2.0)
    for _ in range(10):
        u = random_series(b2, 6, 3, rng)
        exact, _ = nonlinearity(u, spec)
        for trunc in (TruncationPolicy(eps=1e-2), TruncationPolicy(eps=1e-16, max_support=20),
                      TruncationPolicy(radius=3)):
            approx, mass = nonlinearity(u, spec, trunc)
            assert a_norm(exact - approx) <= mass * (1 + 1e-12) + 1e-14


def test_zero_coupling_is_zero(b2, rng):
    out, mass = nonlinearity(random_series(b2, 4, 2, rng), NonlinearitySpec(2, 1, 0.0))
    assert out.support_size == 0 and mass == 0


# -- certified window ------------------------------------------------------------

def test_window_worked_example(b1):
    assert certified_window(APSeries(b1, {0: 1}), NonlinearitySpec.power(2)) == 0.125


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_window_scaling(b2, rng, p):
    f = random_series(b2, 4, 2, rng)
    spec = NonlinearitySpec(p, p, 1j)
    ratio = certified_window(scale(f, 2.0), spec) / certified_window(f, spec)
    assert ratio == pytest.approx(2.0 ** (1 - p), rel=1e-12)


def test_window_zero_data(b1):
    assert certified_window(APSeries(b1), NonlinearitySpec.power(2)) == math.inf
    with pytest.raises(ValueError):
        certified_window(APSeries(b1, {0: 1}), NonlinearitySpec.power(2), theta=0)


# -- Picard ----------------------------------------------------------------------

def test_picard_zero_data(b1):
    trace, diag = picard_solve(APSeries(b1), NonlinearitySpec.power(2))
    assert all(s.support_size == 0 for s in trace.snapshots)
    assert diag.iterations == 0


def test_picard_constant_data(b1):
    cfg = SolverConfig(picard=PicardConfig(grid=256), theta=0.9)
    trace, diag = picard_solve(APSeries(b1, {0: 1}), NonlinearitySpec.power(2, 1j), cfg)
    assert trace.times[-1] == pytest.approx(0.9 / 8)
    assert np.max(np.abs(trace.zero_mode - 1 / (1 - trace.times))) <= 1e-6
    assert diag.max_norm <= 2 * (1 + 1e-6)


def test_picard_matches_oracle(b1):
    f = APSeries(b1, {1: 0.1})
    spec = NonlinearitySpec(3, 2, 1.0)
    cfg = SolverConfig(trunc=TruncationPolicy(eps=0.0), picard=PicardConfig(grid=256))
    trace, _ = picard_solve(f, spec, cfg)
    support = [tuple(k) for k in trace.final.keys.tolist()]
    ref = ode_reference(f, spec, support, trace.times[-1], tol=1e-12, times=trace.times)
    assert max(a_norm(a - b) for a, b in zip(trace.snapshots, ref.snapshots)) <= 1e-8


def test_picard_contraction_ratios(b2, rng):
    for _ in range(5):
        f = random_series(b2, 3, 2, rng)
        cfg = SolverConfig(trunc=TruncationPolicy(eps=1e-16, radius=4),
                           picard=PicardConfig(grid=64), theta=1.0)
        _, diag = picard_solve(f, NonlinearitySpec(3, 2, 1j), cfg)
        assert all(r <= 0.55 for r in diag.ratios[1:])
        assert diag.max_norm <= 2 * a_norm(f) * (1 + 1e-6)


def test_picard_reports_failure(b1):
    cfg = SolverConfig(picard=PicardConfig(max_iters=2, grid=32))
    with pytest.raises(ContractionError) as err:
        picard_solve(APSeries(b1, {0: 1}), NonlinearitySpec.power(2, 1j), cfg)
    assert len(err.value.ratios) >= 1
    with pytest.raises(ContractionError):
        picard_solve(APSeries(b1, {0: 1}), NonlinearitySpec.power(2, 1j),
                     SolverConfig(picard=PicardConfig(grid=64)), T=0.9)


def test_lipschitz_dependence(b2, rng):
    spec = NonlinearitySpec(2, 1, 1j)
    cfg = SolverConfig(trunc=TruncationPolicy(eps=1e-16, radius=4),
                       picard=PicardConfig(grid=64))
    for _ in range(5):
        f = random_series(b2, 3, 2, rng)
        g = f + scale(random_series(b2, 3, 2, rng), 1e-4)
        T = min(certified_window(f, spec, 0.9), certified_window(g, spec, 0.9))
        uf, _ = picard_solve(f, spec, cfg, T=T)
        ug, _ = picard_solve(g, spec, cfg, T=T)
        dist = max(a_norm(a - b) for a, b in zip(uf.snapshots, ug.snapshots))
        assert dist <= 2 * a_norm(f - g)


# -- stepper ---------------------------------------------------------------------

def test_linear_stepping_is_free_flow(b2, rng):
    f = random_series(b2, 6, 3, rng)
    trace = step_solve(f, NonlinearitySpec(3, 2, 0.0), stepper(0.05, t_end=2.0))
    assert trace.halt_reason == "t_end"
    for t, s in zip(trace.times, trace.snapshots):
        assert a_norm(s - propagate(f, t)) <= 1e-10


def test_constant_data_blowup(b1):
    trace = step_solve(APSeries(b1, {0: 1}), NonlinearitySpec.power(2, 1j),
                       stepper(1e-3, blowup_norm_threshold=100.0))
    assert trace.halt_reason == "norm_threshold"
    assert 0.99 < trace.halt_time < 1.0
    exact = 1 / (1 - trace.times)
    assert np.max(np.abs(trace.a_norm - exact) / exact) <= 1e-5


def test_imaginary_constant_data_follows_tangent(b1):
    # u' = |u|^2 with u(0) = i keeps Im u = 1 and gives Re u = tan t.
    trace = step_solve(APSeries(b1, {0: 1j}), NonlinearitySpec.power(2, 1j),
                       stepper(1e-3, t_end=1.0))
    assert np.max(np.abs(trace.zero_mode - (np.tan(trace.times) + 1j))) <= 1e-9


def test_real_coupling_decays(b1):
    trace = step_solve(APSeries(b1, {0: 1j}), NonlinearitySpec.power(2, 1.0),
                       stepper(1e-2, t_end=10.0))
    assert np.all(np.diff(trace.a_norm) < 0)
    assert np.max(np.abs(trace.zero_mode - 1j / (1 + trace.times))) <= 1e-9


def test_stepper_halting_rules(b1, b2, rng):
    f = APSeries(b1, {0: 1})
    spec = NonlinearitySpec.power(2, 1j)
    tr = step_solve(f, spec, stepper(0.01, max_steps=5))
    assert tr.halt_reason == "max_steps" and tr.halt_time == pytest.approx(0.05)
    tr = step_solve(f, spec, stepper(0.03, t_end=0.1))
    assert tr.halt_reason == "t_end" and tr.times[-1] == 0.1
    g = random_series(b2, 6, 2, rng, norm=1.0)
    tr = step_solve(g, NonlinearitySpec(3, 2, 1.0),
                    SolverConfig(trunc=TruncationPolicy(eps=0.3),
                                 stepper=StepperConfig(dt=0.01, t_end=1.0)))
    assert tr.halt_reason == "accuracy_abort"


def test_step_matches_oracle(b1):
    f = APSeries(b1, {1: 0.1})
    spec = NonlinearitySpec(3, 2, 1.0)
    T = certified_window(f, spec)
    trace = step_solve(f, spec, SolverConfig(trunc=TruncationPolicy(eps=0.0, radius=9),
                                             stepper=StepperConfig(dt=T / 200, t_end=T)))
    box = [(n,) for n in range(-9, 10)]
    ref = ode_reference(f, spec, box, T, tol=1e-12, radius=9, times=trace.times)
    assert max(a_norm(a - b) for a, b in zip(trace.snapshots, ref.snapshots)) <= 1e-10


def test_backward_constant_data(b1):
    # lam = -i flips the sign test: blow-up at t = -1.
    f = APSeries(b1, {0: 1})
    spec = NonlinearitySpec.power(2, -1j)
    assert classify_blowup(spec.lam, f) is BlowupClass.BACKWARD
    trace = solve_backward(f, spec, stepper(1e-3, blowup_norm_threshold=100.0))
    assert trace.direction == -1
    assert trace.halt_reason == "norm_threshold" and 0.99 < trace.halt_time < 1.0
    assert np.max(np.abs(trace.zero_mode[:500] - 1 / (1 - trace.times[:500]))) <= 1e-6
    fwd = step_solve(f, spec, stepper(1e-2, t_end=5.0))
    assert fwd.halt_reason == "t_end"


def test_backward_agrees_with_forward_of_reversed_time(b2, rng):
    f = random_series(b2, 3, 2, rng, norm=0.3)
    spec = NonlinearitySpec(3, 1, 0.5 + 1j)
    cfg = stepper(0.01, radius=3, t_end=0.5)
    back = solve_backward(f, spec, cfg)
    # Stepping forward from u(-0.5) must bring the data back.
    again = step_solve(back.final, spec, cfg)
    assert a_norm(again.final - f) <= 1e-8


# -- classification ---------------------------------------------------------------

@pytest.mark.parametrize("lam,m,want", [
    (1j, 1, BlowupClass.FORWARD),
    (1, 1j, BlowupClass.BACKWARD),
    (1j, 1j, BlowupClass.INCONCLUSIVE),
    (1 + 1j, 1 - 1j, BlowupClass.FORWARD),
    (1 + 1j, -1 + 1j, BlowupClass.BACKWARD),
    (1 + 1j, 1 + 1j, BlowupClass.BOTH),
    (0, 1, BlowupClass.INCONCLUSIVE),
    (1j, 0, BlowupClass.INCONCLUSIVE),
])
def test_classify_sign(lam, m, want):
    assert classify_sign(lam, m) is want


def test_classify_uses_exact_zero(b1):
    assert classify_sign(1j, 1e-300) is BlowupClass.FORWARD
    f = APSeries(b1, {0: 1, 1: 5})
    assert classify_blowup(1j, f) is BlowupClass.FORWARD
    assert str(BlowupClass.BOTH) == "BothTests"


# -- zero mode and comparison ------------------------------------------------------

def test_zero_mode_residual_linear(b2, rng):
    trace = step_solve(random_series(b2, 4, 2, rng), NonlinearitySpec(2, 1, 0.0),
                       stepper(0.1, t_end=1.0))
    assert zero_mode_residual(trace, NonlinearitySpec(2, 1, 0.0)) == 0.0


def test_zero_mode_residual_small_on_smooth_run(b2, rng):
    f = random_series(b2, 4, 2, rng, norm=0.5)
    spec = NonlinearitySpec.power(2, 1j)
    trace = step_solve(f, spec, stepper(1e-3, radius=3, t_end=0.5))
    assert zero_mode_residual(trace, spec) <= 1e-6


def test_mean_power_nonnegative_and_zero_mode_monotone(b2, rng):
    for _ in range(3):
        f = random_series(b2, 4, 2, rng, norm=0.5)
        spec = NonlinearitySpec.power(4, 1j)
        cfg = SolverConfig(trunc=TruncationPolicy(eps=1e-12, radius=4),
                           stepper=StepperConfig(dt=1e-2, t_end=1.0))
        trace = step_solve(f, spec, cfg)
        g = mean_power_series(trace, spec)
        assert np.all(g.real >= 0) and np.all(g.imag == 0)
        assert np.all(np.diff(trace.zero_mode.real) >= -1e-12)


@pytest.mark.parametrize("p", [2, 4, 6])
def test_mean_power_dominates_power_of_mean(b2, rng, p):
    spec = NonlinearitySpec.power(p)
    for _ in range(50):
        u = random_series(b2, 5, 2, rng)
        lhs = mean_value(nonlinearity(u, spec)[0]).real
        assert lhs >= abs(mean_value(u)) ** p * (1 - 1e-12)


@pytest.mark.parametrize("c,lam,p,want", [
    (1, 1j, 2, 1.0), (2, 1j, 2, 0.5), (1, 1j, 4, 1 / 3), (-1, -1j, 2, 1.0),
    (1, 1, 2, None), (1, -1j, 2, None), (1j, 1j, 2, None),
])
def test_riccati_bound(b1, c, lam, p, want):
    got = riccati_bound(APSeries(b1, {0: c}), lam, p)
    assert got == (None if want is None else pytest.approx(want))


# -- trace -------------------------------------------------------------------------

def test_trace_csv_round_trip(tmp_path, b2, rng):
    f = random_series(b2, 4, 2, rng)
    trace = step_solve(f, NonlinearitySpec(2, 1, 1j), stepper(0.01, radius=3, t_end=0.2))
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    back = SolutionTrace.from_csv(path)
    for col in ("times", "a_norm", "l2_norm", "zero_mode", "discarded_mass"):
        assert np.array_equal(getattr(back, col), getattr(trace, col))


def test_trace_scalars_recomputable(b2, rng):
    f = random_series(b2, 4, 2, rng)
    trace = step_solve(f, NonlinearitySpec(2, 1, 1j), stepper(0.01, radius=3, t_end=0.2))
    assert np.all(np.diff(trace.times) > 0)
    for s, a, z in zip(trace.snapshots, trace.a_norm, trace.zero_mode):
        assert abs(a_norm(s) - a) <= 1e-12 and abs(mean_value(s) - z) <= 1e-12
