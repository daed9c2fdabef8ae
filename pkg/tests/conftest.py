"""Random switched systems with a genuine operating point, for property tests."""

import numpy as np
import pytest

from bifscope.converter import ControlScheme, ConverterModel, RampSpec, SwitchedSystem
from bifscope.converter.model import CONSTANT_ON_TIME
from bifscope.numerics import expm
from bifscope.simulate import Simulator
from bifscope.steady_state import make_operating_point, orbit_for_timing

U = np.array([1.0, 0.5])


def _random_A(rng, n, T):
    # eigenvalues mostly in the left half plane so e^{AT} is rarely huge
    A = rng.normal(size=(n, n)) / T
    shift = max(0.0, np.max(np.linalg.eigvals(A).real)) + rng.uniform(0.05, 1.5) / T
    return A - shift * np.eye(n)


def random_model(rng, n=None, cotc=False, rho_max=0.99, T=1.0):
    """A model whose orbit at a random duty actually satisfies the switching law.

    The ramp offset V_l is solved for so that y(d) = h(d) (fixed frequency) or
    y(T) = h(T) (constant on-time). Returns ``(model, D)`` or ``None`` when the
    draw is rejected (open-loop spectral radius too large, grazing, poles on
    the unit circle).
    """
    n = n or int(rng.integers(1, 6))
    A1, A2 = _random_A(rng, n, T), _random_A(rng, n, T)
    B1, B2 = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
    C = rng.normal(size=n)
    D_row = np.zeros(2)
    D = float(rng.uniform(0.15, 0.85))
    d = D * T
    if max(abs(np.linalg.eigvals(expm(A2, T - d) @ expm(A1, d)))) >= rho_max:
        return None
    sysm = SwitchedSystem(A1, A2, B1, B2, C, D_row, C, C)
    x0, xd = orbit_for_timing(sysm, U, d, T)
    if cotc:
        slope = A2 @ x0 + B2 @ U
        y_sw, t_sw = float(C @ x0), T
    else:
        slope = A1 @ xd + B1 @ U
        y_sw, t_sw = float(C @ xd), d
    c_slope = float(C @ slope)
    m_a = abs(c_slope) * rng.uniform(0.0, 3.0) + rng.uniform(0.0, 1.0)
    if abs(c_slope - m_a) < 0.05 * (abs(c_slope) + m_a):
        return None
    V_l = y_sw - m_a * t_sw
    ramp = RampSpec(V_l, V_l + m_a * T, T)
    scheme = ControlScheme(CONSTANT_ON_TIME, on_time=d) if cotc else ControlScheme()
    model = ConverterModel(sysm, ramp, U, scheme)
    return model, D


def random_models(seed, count, **kw):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        r = random_model(rng, **kw)
        if r is None:
            continue
        model, D = r
        op = make_operating_point(model, D)
        out.append((model, op))
    return out


def well_posed(model, op, tol=1e-9):
    """True when the switching law itself reproduces the orbit (first crossing at d)."""
    x_next, duty, length = Simulator(model).cycle(op.x0_start, None)
    if length is None:
        return False
    scale = np.max(np.abs(op.x0_start)) + 1e-12
    return abs(duty - op.D) <= tol and np.max(np.abs(x_next - op.x0_start)) <= 1e-7 * scale


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
