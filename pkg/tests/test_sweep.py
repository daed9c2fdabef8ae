import io
import json

import numpy as np
import pytest

from bifscope.converter import build_example
from bifscope.sweep import crossing_monitors, duty_sweep, parameter_for_duty, sweep, worker_count
from bifscope.steady_state import find_operating_points, residual


def test_ex1_pdb_refined():
    res = sweep(build_example(1), "v_s", 20.0, 30.0, n=11)
    kinds = [(b.kind, round(b.value, 1)) for b in res.bifurcations]
    assert kinds == [("PDB", 24.5)]
    pdb = res.bifurcations[0]
    assert pdb.pole.real == pytest.approx(-1.0, abs=1e-3)
    assert res.warnings == []


def test_ex5_fold_and_counts():
    res = sweep(build_example(5), "v_r", 0.40, 0.52, n=13)
    assert res.summary()["operating_point_counts"][:3] == [2, 2, 2]
    assert res.summary()["operating_point_counts"][-1] == 0
    snb = [b for b in res.bifurcations if b.kind == "SNB"]
    assert len(snb) == 1
    assert snb[0].value == pytest.approx(0.4958, abs=2e-3)
    assert snb[0].pole.real == pytest.approx(1.0, abs=1e-3)


def test_ex7_nsb():
    res = sweep(build_example(7), "R_p", 30.0, 45.0, n=16)
    nsb = [b for b in res.bifurcations if b.kind == "NSB"]
    assert len(nsb) == 1
    assert abs(nsb[0].pole) == pytest.approx(1.0, abs=1e-3)
    assert 38.0 < nsb[0].value < 39.5


def test_sweep_csv_long_format():
    res = sweep(build_example(1), "v_s", 24.0, 25.0, n=3, refine=False, with_reports=False)
    buf = io.StringIO()
    res.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "param,branch_id,D,pole_re,pole_im,stable,x0_i_L,x0_v_C"
    # 3 values x 1 branch x 2 poles
    assert len(lines) == 1 + 6
    assert float(lines[1].split(",")[0]) == 24.0


def test_sweep_is_deterministic_across_workers():
    model = build_example(6)
    a = sweep(model, "i_c", 1.0, 1.3, n=9, workers=1)
    b = sweep(model, "i_c", 1.0, 1.3, n=9, workers=3)
    fa, fb = io.StringIO(), io.StringIO()
    a.to_csv(fa)
    b.to_csv(fb)
    assert fa.getvalue() == fb.getvalue()
    assert a.to_json() == b.to_json()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("BIFSCOPE_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("BIFSCOPE_THREADS", "zero")
    assert worker_count() == 1
    monkeypatch.delenv("BIFSCOPE_THREADS")
    assert worker_count() == 1


def test_sweep_rejects_bad_arguments():
    with pytest.raises(KeyError):
        sweep(build_example(1), "nope", 0, 1)
    with pytest.raises(ValueError):
        sweep(build_example(1), "v_s", 20, 30, n=1)


def test_parameter_for_duty_is_exact():
    model = build_example(6)
    ic = parameter_for_duty(model, "i_c", 0.45)
    assert abs(residual(model.with_params(i_c=ic), 0.45)) < 1e-9


def test_parameter_for_duty_rejects_nonaffine():
    with pytest.raises(ValueError):
        parameter_for_duty(build_example(5), "L", 0.6)


def test_ex6_duty_sweep():
    res = duty_sweep(build_example(6), "i_c", 0.45, 0.55, n=41)
    kinds = {b.kind: b for b in res.bifurcations}
    assert set(kinds) == {"SNB", "PDB"}
    assert kinds["SNB"].value == pytest.approx(1.125, abs=1e-3)
    assert kinds["SNB"].D == pytest.approx(0.4998, abs=5e-4)
    assert kinds["PDB"].D == pytest.approx(0.5006, abs=5e-4)
    json.dumps(res.summary())


def test_crossing_monitors():
    Phi = np.diag([1.1, 0.5])
    m = crossing_monitors(Phi, [1.1, 0.5])
    assert m["SNB"] < 0 and m["PDB"] > 0 and np.isnan(m["NSB"])
    R = 1.05 * np.array([[np.cos(1.0), -np.sin(1.0)], [np.sin(1.0), np.cos(1.0)]])
    m = crossing_monitors(R, np.linalg.eigvals(R))
    assert m["NSB"] == pytest.approx(0.05)
