import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bifscope.converter import build_example
from bifscope.errors import GrazingError
from bifscope.freqplots import loop_gain
from bifscope.numerics import expm
from bifscope.sampled import build, build_cotc, build_fixed_freq, pole_report, poles_report
from bifscope.steady_state import find_operating_points

from conftest import random_model, random_models


def test_factorization_and_determinant_identity():
    for model, op in random_models(3, 20):
        sd = build(model, op)
        np.testing.assert_allclose(sd.Phi, sd.Phi0 - np.outer(sd.Gamma, sd.Psi), atol=1e-12)
        n = sd.dim
        for z in (1.7 + 0.2j, -1.3, 0.4j + 2.0):
            lhs = np.linalg.det(z * np.eye(n) - sd.Phi)
            rhs = np.linalg.det(z * np.eye(n) - sd.Phi0) * (1 + loop_gain(sd, z))
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_fixed_frequency_formula():
    model = build_example(1, v_s=25.0)
    op = find_operating_points(model)[0]
    sd = build_fixed_freq(model.system, model.ramp, op)
    sys = model.system
    E_on, E_off = expm(sys.A1, op.d), expm(sys.A2, op.period - op.d)
    den = sys.C @ op.slope_minus - model.m_a
    ref = E_off @ (np.eye(2) - np.outer(op.slope_minus - op.slope_plus, sys.C) / den) @ E_on
    np.testing.assert_allclose(sd.Phi, ref, rtol=1e-13, atol=1e-15)


def test_cotc_formula():
    model = build_example(9)
    op = find_operating_points(model)[0]
    sd = build_cotc(model.system, model.ramp, op)
    sys = model.system
    K = expm(sys.A2, op.period - op.d) @ expm(sys.A1, op.d)
    v = op.slope0_minus
    ref = (np.eye(2) - np.outer(v, sys.C) / (sys.C @ v - model.m_a)) @ K
    np.testing.assert_allclose(sd.Phi, ref, rtol=1e-13, atol=1e-15)
    assert sd.cotc


def test_grazing_detected():
    from bifscope.converter import RampSpec
    for model, op in random_models(5, 10):
        c_slope = float(model.system.C @ op.slope_minus)
        if c_slope > 0:
            break
    assert c_slope > 0
    # a ramp whose slope equals the output slope at the switch
    T = model.ramp.T
    ramp = RampSpec(0.0, c_slope * T, T)
    with pytest.raises(GrazingError):
        build_fixed_freq(model.system, ramp, op)


def test_pole_report_flags():
    r = poles_report([0.5, -0.2 + 0.3j, -0.2 - 0.3j])
    assert r.stable and r.n_outside == 0 and not r.marginal
    r = poles_report([1.2, 0.1])
    assert not r.stable and r.n_outside == 1 and r.spectral_radius == pytest.approx(1.2)
    r = poles_report([1.0 + 1e-8])
    assert r.marginal and not r.stable


def test_ex1_pdb_crossing():
    below = pole_report(build(*_model_op(24.0)))
    above = pole_report(build(*_model_op(25.0)))
    assert below.stable and not above.stable
    assert np.real(above.poles[0]) < -1


def _model_op(v_s):
    m = build_example(1, v_s=v_s)
    return m, find_operating_points(m)[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_of_rank_one_update(seed):
    r = random_model(np.random.default_rng(seed))
    if r is None:
        return
    from bifscope.steady_state import make_operating_point
    model, D = r
    sd = build(model, make_operating_point(model, D))
    # tr(Phi) = tr(Phi0) - Psi . Gamma
    assert np.trace(sd.Phi) == pytest.approx(np.trace(sd.Phi0) - sd.Psi @ sd.Gamma, rel=1e-9, abs=1e-12)
