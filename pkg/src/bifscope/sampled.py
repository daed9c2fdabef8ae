"""Sampled-data linearization: Phi = Phi0 - Gamma Psi and its poles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .converter.model import ConverterModel, RampSpec, SwitchedSystem, ControlScheme
from .errors import GrazingError
from .numerics import eigenvalues, expm
from .steady_state import OperatingPoint

OUTSIDE_TOL = 1e-9
MARGINAL_BAND = 1e-6


@dataclass(frozen=True)
class SampledDynamics:
    """Cycle-to-cycle small-signal map and its open-loop/feedback factors.

    ``E_on = e^{A1 d}`` and ``E_off = e^{A2 (T - d)}`` are kept so that the
    critical function can be evaluated for either scheme. ``slope`` is the
    state derivative entering the modulator gain: x0'(d-) for fixed frequency,
    x0'(0-) for constant on-time.
    """

    Phi0: np.ndarray
    Gamma: np.ndarray
    Psi: np.ndarray
    Phi: np.ndarray
    modulator_denominator: float
    C: np.ndarray
    slope: np.ndarray
    E_on: np.ndarray
    E_off: np.ndarray
    m_a: float
    period: float
    cotc: bool = False

    @property
    def dim(self) -> int:
        return self.Phi.shape[0]

    @property
    def C_slope(self) -> float:
        return float(self.C @ self.slope)


def _check_denominator(c_slope: float, m_a: float) -> float:
    den = c_slope - m_a
    if abs(den) <= 1e-12 * (abs(c_slope) + abs(m_a) + 1.0):
        raise GrazingError(f"orbit grazes the ramp: C x'(switch) = {c_slope:.6g}, m_a = {m_a:.6g}")
    return den


def _verify_factorization(Phi, Phi0, Gamma, Psi):
    ref = Phi0 - np.outer(Gamma, Psi)
    scale = max(1.0, float(np.max(np.abs(Phi))))
    err = float(np.max(np.abs(Phi - ref)))
    if err > 1e-10 * scale:
        raise AssertionError(f"Phi != Phi0 - Gamma Psi (error {err:.3g})")


def build_fixed_freq(sys: SwitchedSystem, ramp: RampSpec, op: OperatingPoint) -> SampledDynamics:
    """Linearized closed-loop map for trailing-edge fixed-frequency PWM."""
    T, d = op.period, op.d
    E_on = expm(sys.A1, d)
    E_off = expm(sys.A2, T - d)
    m_a = ramp.m_a
    den = _check_denominator(float(sys.C @ op.slope_minus), m_a)
    jump = op.slope_minus - op.slope_plus
    n = sys.dim
    Phi = E_off @ (np.eye(n) - np.outer(jump, sys.C) / den) @ E_on
    Phi0 = E_off @ E_on
    Gamma = E_off @ jump
    Psi = (sys.C @ E_on) / den
    _verify_factorization(Phi, Phi0, Gamma, Psi)
    return SampledDynamics(Phi0, Gamma, Psi, Phi, den, sys.C.copy(), op.slope_minus.copy(),
                           E_on, E_off, m_a, T, cotc=False)


def build_cotc(sys: SwitchedSystem, ramp: RampSpec, op: OperatingPoint) -> SampledDynamics:
    """Linearized map for constant on-time control (switching at the period end)."""
    T, d = op.period, op.d
    E_on = expm(sys.A1, d)
    E_off = expm(sys.A2, T - d)
    m_a = ramp.m_a
    slope = op.slope0_minus
    den = _check_denominator(float(sys.C @ slope), m_a)
    n = sys.dim
    Phi0 = E_off @ E_on
    Phi = (np.eye(n) - np.outer(slope, sys.C) / den) @ Phi0
    Gamma = slope.copy()
    Psi = (sys.C @ Phi0) / den
    _verify_factorization(Phi, Phi0, Gamma, Psi)
    return SampledDynamics(Phi0, Gamma, Psi, Phi, den, sys.C.copy(), slope.copy(),
                           E_on, E_off, m_a, T, cotc=True)


def build(model: ConverterModel, op: OperatingPoint) -> SampledDynamics:
    if model.scheme.is_cotc:
        return build_cotc(model.system, model.ramp, op)
    return build_fixed_freq(model.system, model.ramp, op)


@dataclass(frozen=True)
class PoleReport:
    poles: np.ndarray
    n_outside: int
    stable: bool
    marginal: bool

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.poles))) if self.poles.size else 0.0


def poles_report(poles) -> PoleReport:
    poles = np.asarray(poles, dtype=complex)
    mod = np.abs(poles)
    n_out = int(np.sum(mod > 1 + OUTSIDE_TOL))
    marginal = bool(np.any(np.abs(mod - 1) <= MARGINAL_BAND))
    return PoleReport(poles, n_out, n_out == 0 and not marginal, marginal)


def pole_report(sd: SampledDynamics | np.ndarray) -> PoleReport:
    """Sampled-data poles (eigenvalues of Phi) with stability flags."""
    Phi = sd.Phi if isinstance(sd, SampledDynamics) else np.asarray(sd, dtype=float)
    return poles_report(eigenvalues(Phi))
