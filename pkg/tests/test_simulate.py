import io

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bifscope.converter import ConverterModel, RampSpec, SwitchedSystem, build_example
from bifscope.errors import InsufficientDataError
from bifscope.sampled import build
from bifscope.simulate import (PeriodVerdict, SimTrace, Simulator, detect_period, dominant_angle,
                               finite_difference_jacobian, simulate)
from bifscope.steady_state import find_operating_points

from conftest import random_models, well_posed


def ex1(v_s):
    m = build_example(1, v_s=v_s)
    return m, find_operating_points(m)[0]


def test_orbit_is_a_fixed_point_of_the_simulator():
    model, op = ex1(24.0)
    trace = simulate(model, op.x0_start, 50)
    drift = np.max(np.abs(trace.strobe_states - op.x0_start), axis=1)
    assert np.all(drift <= 1e-6 * np.max(np.abs(op.x0_start)))
    np.testing.assert_allclose(trace.duties, op.D, atol=1e-9)


def test_switching_event_matches_steady_state():
    model, op = ex1(24.0)
    trace = simulate(model, op.x0_start, 1)
    used = [e for e in trace.events if e[2]]
    assert len(used) == 1
    assert used[0][0] == pytest.approx(op.d, abs=1e-12 * op.period)


def test_cycle_matches_ode_solver():
    model, op = ex1(25.0)
    x = op.x0_start * 1.02
    sim = Simulator(model)
    x_next, duty, length = sim.cycle(x, None)
    sys, u = model.system, model.u
    d = duty * length
    xd = solve_ivp(lambda t, z: sys.A1 @ z + sys.B1 @ u, (0, d), x, rtol=1e-12, atol=1e-14).y[:, -1]
    # the crossing is where y meets the ramp
    assert sys.output(xd, u) == pytest.approx(float(model.ramp.h(d)), abs=1e-8)
    xT = solve_ivp(lambda t, z: sys.A2 @ z + sys.B2 @ u, (d, length), xd, rtol=1e-12, atol=1e-14).y[:, -1]
    np.testing.assert_allclose(x_next, xT, rtol=1e-8)


def test_ex1_p1_and_p2():
    model, op = ex1(24.0)
    assert str(detect_period(simulate(model, op.x0_start * 1.01, 400))) == "P1"
    model, op = ex1(25.0)
    v = detect_period(simulate(model, op.x0_start * 1.01, 400))
    assert v.kind == "P2" and v.period_estimate == pytest.approx(2 * 4e-4)


def test_unforced_dissipative_system_decays():
    # symmetric negative definite dynamics, no input: |x| strictly decreases
    A = -np.array([[2.0, 0.5], [0.5, 1.0]])
    zero = np.zeros((2, 2))
    sys = SwitchedSystem(A, A, zero, zero, [1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 0.0])
    model = ConverterModel(sys, RampSpec(0.0, 1.0, 0.1), np.zeros(2))
    trace = simulate(model, np.array([1.0, -2.0]), 40)
    norms = np.linalg.norm(trace.states, axis=1)
    assert np.all(np.diff(norms) <= 1e-12)


def test_ex5_saturates():
    model = build_example(5)
    trace = simulate(model, np.array([2.3, 16.2]), 100)
    assert str(detect_period(trace, 32)) == "Saturated"
    assert trace.duties[-1] == 1.0


def test_detect_period_needs_enough_cycles():
    model, op = ex1(24.0)
    with pytest.raises(InsufficientDataError):
        detect_period(simulate(model, op.x0_start, 20))


def _synthetic(strobes, period=1.0):
    n = len(strobes)
    X = np.asarray(strobes, dtype=float)
    return SimTrace(np.arange(n, dtype=float), X, X[:, 0], np.zeros(n), np.ones(n, dtype=int),
                    strobe_times=np.arange(n) * period, strobe_states=X, duties=np.full(n, 0.5), period=period)


def test_detect_period_on_synthetic_sequences():
    k = np.arange(200)
    p3 = np.stack([1 + np.cos(2 * np.pi * k / 3), np.ones_like(k)], axis=1)
    assert str(detect_period(_synthetic(p3))) == "P3"
    qp = np.stack([1 + 0.1 * np.cos(2 * np.pi * k / 9.7), 1 + 0.1 * np.sin(2 * np.pi * k / 9.7)], axis=1)
    v = detect_period(_synthetic(qp, period=2.0), tail_cycles=128)
    assert v.kind == "QuasiPeriodic"
    assert v.period_estimate == pytest.approx(9.7 * 2.0, rel=0.02)


def test_dominant_angle_non_integer_period():
    k = np.arange(256)
    assert dominant_angle(np.cos(2 * np.pi * k / 6.4 + 0.3)) == pytest.approx(2 * np.pi / 6.4, rel=5e-3)


def test_period_verdict_strings():
    assert str(PeriodVerdict("Pk", 4, 4.0)) == "P4"
    assert str(PeriodVerdict("QuasiPeriodic", None, 0.004)) == "QuasiPeriodic(0.004 s)"


def test_trace_csv(tmp_path):
    model, op = ex1(24.0)
    trace = simulate(model, op.x0_start, 2, samples_per_cycle=8)
    buf = io.StringIO()
    trace.to_csv(buf, model.system.state_names)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,i_L,v_C,y,h,stage"
    assert len(lines) == len(trace.times) + 1
    assert float(lines[1].split(",")[1]) == op.x0_start[0]


@pytest.mark.parametrize("example", [1, 6, 9])
def test_fd_jacobian_matches_monodromy(example):
    model = build_example(example)
    for op in find_operating_points(model):
        Phi = build(model, op).Phi
        J = finite_difference_jacobian(model, op.x0_start)
        assert np.max(np.abs(J - Phi)) <= 1e-4 * np.max(np.abs(Phi))


@pytest.mark.parametrize("cotc", [False, True])
def test_fd_jacobian_random_models(cotc):
    checked = 0
    for model, op in random_models(13, 30, cotc=cotc):
        if not well_posed(model, op):
            continue
        checked += 1
        Phi = build(model, op).Phi
        J = finite_difference_jacobian(model, op.x0_start)
        np.testing.assert_allclose(J, Phi, atol=1e-4 * np.max(np.abs(Phi)))
    assert checked >= 5
