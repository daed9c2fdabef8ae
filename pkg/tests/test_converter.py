import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bifscope.converter import (EXAMPLES, TEMPLATES, ControlScheme, ConverterModel, RampSpec, SwitchedSystem,
                                TransferFunction, build_example, build_model, compose_plant_compensator,
                                load_model, loads, model_to_dict, save_model, state_space_to_tf,
                                tf_to_state_space)
from bifscope.converter import io as model_io
from bifscope.errors import DimensionError, ModelFormatError, RealizationError


def tf_response(A, B, C, D, s):
    n = A.shape[0]
    return (C @ np.linalg.solve(s * np.eye(n) - A, B)).item() + D


# model validation --------------------------------------------------------------------

def test_switched_system_shapes():
    sys = SwitchedSystem(np.eye(2), np.eye(2), np.ones((2, 2)), np.ones((2, 2)), [1, 0], [0, 0], [0, 1], [0, 1])
    assert sys.dim == 2 and sys.n_inputs == 2
    assert sys.state_names == ("x0", "x1")
    with pytest.raises(DimensionError):
        SwitchedSystem(np.eye(2), np.eye(3), np.ones((2, 2)), np.ones((2, 2)), [1, 0], [0, 0], [0, 1], [0, 1])
    with pytest.raises(DimensionError):
        SwitchedSystem(np.eye(2), np.eye(2), np.ones((2, 1)), np.ones((2, 1)), [1, 0], [0], [0, 1], [0, 1])
    with pytest.raises(ValueError):
        SwitchedSystem(np.full((2, 2), np.inf), np.eye(2), np.ones((2, 2)), np.ones((2, 2)), [1, 0], [0, 0],
                       [0, 1], [0, 1])


def test_ramp_and_scheme_validation():
    r = RampSpec(3.8, 8.2, 4e-4)
    assert r.m_a == pytest.approx(11000.0)
    assert r.h(2e-4) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        RampSpec(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        RampSpec(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ControlScheme("constant_on_time")
    with pytest.raises(ValueError):
        ControlScheme(switch_sense="sideways")


# transfer functions ------------------------------------------------------------------

def test_from_factors():
    tf = TransferFunction.from_factors(2.0, zeros=(10.0,), poles=(100.0,), integrator=1.0)
    s = 3j
    assert tf(s) == pytest.approx(2.0 * (1 + s / 10) / ((s + 1) * (1 + s / 100)))


def test_improper_tf_rejected():
    with pytest.raises(RealizationError):
        tf_to_state_space(TransferFunction((1.0, 0.0, 0.0), (1.0, 1.0)))


def test_constant_tf():
    A, B, C, D = tf_to_state_space(TransferFunction((3.0,), (2.0,)))
    assert A.shape == (0, 0) and D == 1.5


@pytest.mark.parametrize("balance", [False, True])
def test_type3_realization_frequency_response(balance):
    tf = TransferFunction.from_factors(7.78e4, (1.675e4, 3.35e4), (9.425e5, 2.02e5), integrator=1.0)
    A, B, C, D = tf_to_state_space(tf, balance=balance)
    for w in (1.0, 1e3, 1e5, 1e7):
        s = 1j * w
        assert tf_response(A, B, C, D, s) == pytest.approx(tf(s), rel=1e-9)


def test_balancing_evens_out_scales():
    tf = TransferFunction.from_factors(7.78e4, (1.675e4, 3.35e4), (9.425e5, 2.02e5), integrator=1.0)
    _, B0, C0, _ = tf_to_state_space(tf)
    _, B1, C1, _ = tf_to_state_space(tf, balance=True)
    spread = lambda v: np.ptp(np.log10(np.abs(v[np.abs(v) > 0])))
    assert spread(np.concatenate([B1.ravel(), C1.ravel()])) < spread(np.concatenate([B0.ravel(), C0.ravel()]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 10.0), min_size=1, max_size=4), st.data())
def test_tf_state_space_round_trip(den_roots, data):
    den = np.poly(-np.asarray(den_roots))
    m = data.draw(st.integers(0, len(den) - 1))
    num = data.draw(st.lists(st.floats(-5, 5), min_size=m + 1, max_size=m + 1))
    if abs(num[0]) < 1e-3:
        num[0] = 1.0
    tf = TransferFunction(tuple(num), tuple(den))
    back = state_space_to_tf(*tf_to_state_space(tf))
    for s in (0.3j, 1.0 + 2j, 7j):
        assert back(s) == pytest.approx(tf(s), rel=1e-8, abs=1e-10)


# composition and templates -----------------------------------------------------------

def test_compose_adds_compensator_states():
    plant = build_example(1).system
    base = SwitchedSystem(plant.A1[:2, :2], plant.A2[:2, :2], plant.B1[:2], plant.B2[:2],
                          plant.E1[:2], plant.D, plant.E1[:2], plant.E2[:2], state_names=("i_L", "v_C"))
    tf = TransferFunction.from_factors(5.0, (), (1e3,))
    sys = compose_plant_compensator(base, tf_to_state_space(tf))
    assert sys.dim == 3
    assert sys.state_names == ("i_L", "v_C", "z1")
    # E rows ignore compensator states
    assert sys.E1[-1] == 0.0


def test_every_template_builds():
    for name in TEMPLATES:
        model = build_model(name)
        assert model.template == name
        assert model.system.dim >= 2


def test_examples_and_overrides():
    assert sorted(EXAMPLES) == list(range(1, 10))
    m = build_example(1, v_s=25.0)
    assert m.params["v_s"] == 25.0
    assert m.with_params(v_s=26.0).params["v_s"] == 26.0
    with pytest.raises(KeyError):
        build_example(10)
    with pytest.raises(KeyError):
        m.with_params(nonsense=1.0)


def test_ex4_ramp_slope_is_per_second():
    # V_m = 1.5 V at 300 kHz
    assert build_example(3).m_a == pytest.approx(450000.0)


# model files -------------------------------------------------------------------------

@pytest.mark.parametrize("example", range(1, 10))
def test_template_model_file_round_trip(example, tmp_path):
    model = build_example(example)
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    for k in ("A1", "A2", "B1", "B2", "C", "D", "E1", "E2"):
        np.testing.assert_array_equal(getattr(back.system, k), getattr(model.system, k))
    np.testing.assert_array_equal(back.u, model.u)
    assert back.ramp == model.ramp and back.scheme == model.scheme


def test_raw_matrix_model_round_trip():
    model = build_example(9)
    raw = ConverterModel(model.system, model.ramp, model.u, model.scheme, label="raw")
    text = model_io.dumps(raw)
    assert "matrices" in json.loads(text)
    back = loads(text)
    np.testing.assert_array_equal(back.system.A1, raw.system.A1)
    assert back.scheme.on_time == raw.scheme.on_time
    assert back.system.state_names == raw.system.state_names
    assert back.label == "raw"


@pytest.mark.parametrize("text", [
    "{not json",
    "[1, 2]",
    '{"format": "something-else", "template": "buck_pvmc"}',
    '{"label": "nothing"}',
    '{"matrices": {"A1": [[1]]}, "ramp": {"V_l": 0, "V_h": 1, "T": 1}, "input": [1, 0]}',
    '{"template": "buck_pvmc", "params": {"bogus": 1}}',
    '{"template": "no_such_template"}',
])
def test_malformed_model_files(text):
    with pytest.raises(ModelFormatError):
        loads(text)


def test_unreadable_model_file(tmp_path):
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "missing.json")


def test_model_dict_has_format_tag():
    d = model_to_dict(build_example(5))
    assert d["format"] == "bifscope-model" and d["version"] == 1
