"""Periodic operating points of the switched system.

For fixed-frequency control the unknown is the duty cycle D (stage S1 lasts
d = D T). For constant on-time control the on-time is fixed and the unknown is
the period; it is parametrized the same way through D = t_on / period, so one
grid scan serves both schemes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .converter.model import ConverterModel, RampSpec, SwitchedSystem, ControlScheme
from .errors import DegenerateOrbitError
from .numerics import expm_pair, find_bracketed_roots

D_MIN, D_MAX = 0.001, 0.999
MERGE_TOL = 1e-8


@dataclass(frozen=True)
class OperatingPoint:
    """A T-periodic orbit, sampled at the cycle start and the switching instant.

    ``period`` equals the clock period for fixed-frequency control and the
    self-consistent switching period for constant on-time control.
    """

    D: float
    d: float
    period: float
    x0_start: np.ndarray
    x0_switch: np.ndarray
    y_switch: float
    h_switch: float
    slope_minus: np.ndarray
    slope_plus: np.ndarray
    slope0_minus: np.ndarray

    @property
    def on_fraction(self) -> float:
        """Fraction of the period spent in stage S1."""
        return self.D


def _period_map(sys: SwitchedSystem, u, d: float, period: float):
    b1 = sys.B1 @ u
    b2 = sys.B2 @ u
    E1, g1 = expm_pair(sys.A1, d, b1)
    E2, g2 = expm_pair(sys.A2, period - d, b2)
    return E1, g1, E2, g2


def orbit_for_timing(sys: SwitchedSystem, u, d: float, period: float):
    """Periodic pair ``(x0(0), x0(d))`` for switching instant d and period."""
    u = np.asarray(u, dtype=float)
    E1, g1, E2, g2 = _period_map(sys, u, d, period)
    n = sys.dim
    M = np.eye(n) - E2 @ E1
    rhs = E2 @ g1 + g2
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise DegenerateOrbitError(f"periodicity map is singular (condition number {cond:.3g})")
    x0 = np.linalg.solve(M, rhs)
    xd = E1 @ x0 + g1
    return x0, xd


def orbit_for_duty(sys: SwitchedSystem, ramp: RampSpec, u, D: float):
    """Periodic pair ``(x0(0), x0(d))`` at duty D for fixed-frequency control."""
    if not 0.0 < D < 1.0:
        raise ValueError("D must lie in (0, 1)")
    return orbit_for_timing(sys, u, D * ramp.T, ramp.T)


def duty_residual(sys: SwitchedSystem, ramp: RampSpec, u, D: float) -> float:
    """``y0(d) - h(d)`` at duty D; positive when the output is above the ramp."""
    _, xd = orbit_for_duty(sys, ramp, u, D)
    return sys.output(xd, np.asarray(u, dtype=float)) - (ramp.V_l + ramp.V_m * D)


def cotc_residual(sys: SwitchedSystem, ramp: RampSpec, u, t_on: float, period: float) -> float:
    """``y0(T) - h(T)`` for constant on-time control with the given period."""
    u = np.asarray(u, dtype=float)
    x0, _ = orbit_for_timing(sys, u, t_on, period)
    return sys.output(x0, u) - float(ramp.h(period))


def _residual_fn(model: ConverterModel):
    sys, ramp, u, scheme = model.system, model.ramp, model.u, model.scheme
    if scheme.is_cotc:
        t_on = scheme.on_time
        return lambda D: cotc_residual(sys, ramp, u, t_on, t_on / D)
    return lambda D: duty_residual(sys, ramp, u, D)


def residual(model: ConverterModel, D: float) -> float:
    """Switching-condition residual of a model at duty (or on-time fraction) D."""
    return _residual_fn(model)(D)


def make_operating_point(model: ConverterModel, D: float) -> OperatingPoint:
    sys, ramp, u, scheme = model.system, model.ramp, model.u, model.scheme
    if scheme.is_cotc:
        d = scheme.on_time
        period = d / D
    else:
        period = ramp.T
        d = D * period
    x0, xd = orbit_for_timing(sys, u, d, period)
    b1, b2 = sys.B1 @ u, sys.B2 @ u
    y = sys.output(xd, u)
    h = float(ramp.h(period if scheme.is_cotc else d))
    return OperatingPoint(
        D=float(D), d=float(d), period=float(period), x0_start=x0, x0_switch=xd,
        y_switch=y if not scheme.is_cotc else sys.output(x0, u), h_switch=h,
        slope_minus=sys.A1 @ xd + b1, slope_plus=sys.A2 @ xd + b2,
        slope0_minus=sys.A2 @ x0 + b2,
    )


def find_operating_points(model: ConverterModel, grid: int = 200,
                          interval: tuple[float, float] = (D_MIN, D_MAX)) -> list[OperatingPoint]:
    """All interior periodic operating points, sorted by D.

    Roots of the switching residual are bracketed on a uniform grid in D and
    refined; saturated regimes (switch always on/off) are not reported here.
    """
    f = _residual_fn(model)

    def safe(D):
        try:
            return f(D)
        except DegenerateOrbitError:
            return np.nan

    roots = find_bracketed_roots(safe, interval, grid)
    merged: list[float] = []
    for r in roots:
        if merged and abs(r - merged[-1]) <= MERGE_TOL:
            continue
        merged.append(r)
    return [make_operating_point(model, D) for D in merged]


def switch_on_fraction(model: ConverterModel, op: OperatingPoint) -> float:
    """Fraction of the period the power switch conducts.

    Equals D except for templates whose stage S1 is the switch-off stage.
    """
    if model.template in ("buck_pvmc", "buck_pvmc_input_filter"):
        return 1.0 - op.D
    return op.D
