import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bifscope.converter import SwitchedSystem, build_example
from bifscope.errors import DegenerateOrbitError
from bifscope.steady_state import (find_operating_points, make_operating_point, orbit_for_timing, residual,
                                   switch_on_fraction)

from conftest import random_models


def integrate(sys, u, x0, d, T):
    """Reference orbit with an adaptive ODE solver instead of matrix exponentials."""
    f1 = lambda t, x: sys.A1 @ x + sys.B1 @ u
    f2 = lambda t, x: sys.A2 @ x + sys.B2 @ u
    xd = solve_ivp(f1, (0, d), x0, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    xT = solve_ivp(f2, (d, T), xd, rtol=1e-12, atol=1e-14, method="DOP853").y[:, -1]
    return xd, xT


@pytest.mark.parametrize("example", [1, 5, 6, 7])
def test_orbit_closes_under_ode_integration(example):
    model = build_example(example)
    for op in find_operating_points(model):
        xd, xT = integrate(model.system, model.u, op.x0_start, op.d, op.period)
        scale = np.max(np.abs(op.x0_start)) + 1e-12
        np.testing.assert_allclose(xT, op.x0_start, atol=1e-8 * scale)
        np.testing.assert_allclose(xd, op.x0_switch, atol=1e-8 * scale)
        # the switching condition holds: y(d) = h(d)
        assert op.y_switch == pytest.approx(op.h_switch, abs=1e-9 * (abs(op.h_switch) + 1))


def test_operating_points_are_roots_of_residual():
    model = build_example(5)
    ops = find_operating_points(model)
    assert len(ops) == 2
    for op in ops:
        assert abs(residual(model, op.D)) < 1e-9
    assert [round(op.D, 2) for op in ops] == [0.59, 0.71]


def test_no_solution_beyond_fold():
    assert find_operating_points(build_example(5, v_r=0.50)) == []


def test_slopes_are_vector_field_at_switch():
    model = build_example(1)
    op = find_operating_points(model)[0]
    sys, u = model.system, model.u
    np.testing.assert_allclose(op.slope_minus, sys.A1 @ op.x0_switch + sys.B1 @ u)
    np.testing.assert_allclose(op.slope_plus, sys.A2 @ op.x0_switch + sys.B2 @ u)


def test_cotc_locked_period():
    model = build_example(9)
    ops = find_operating_points(model)
    assert len(ops) == 1
    assert ops[0].period == pytest.approx(3e-6, rel=1e-8)
    assert ops[0].d == pytest.approx(1.2e-6)


def test_pvmc_switch_fraction_is_complement():
    model = build_example(1)
    op = find_operating_points(model)[0]
    assert switch_on_fraction(model, op) == pytest.approx(1 - op.D)
    m5 = build_example(5)
    op5 = find_operating_points(m5)[0]
    assert switch_on_fraction(m5, op5) == op5.D


def test_degenerate_orbit():
    # a pure integrator in both stages has no isolated periodic orbit
    z = np.zeros((1, 1))
    sys = SwitchedSystem(z, z, [[1.0, 0.0]], [[-1.0, 0.0]], [1.0], [0.0, 0.0], [1.0], [1.0])
    with pytest.raises(DegenerateOrbitError):
        orbit_for_timing(sys, np.array([1.0, 0.0]), 0.5, 1.0)


def test_random_models_have_consistent_orbits():
    for model, op in random_models(11, 10):
        xd, xT = integrate(model.system, model.u, op.x0_start, op.d, op.period)
        np.testing.assert_allclose(xT, op.x0_start, rtol=1e-7, atol=1e-9)
        assert abs(residual(model, op.D)) < 1e-8 * (1 + abs(op.h_switch))


def test_make_operating_point_rejects_bad_duty():
    with pytest.raises(ValueError):
        from bifscope.steady_state import orbit_for_duty
        m = build_example(1)
        orbit_for_duty(m.system, m.ramp, m.u, 1.2)
    assert make_operating_point(build_example(1), 0.3).D == 0.3
