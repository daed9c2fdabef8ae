"""Value types for the two-stage switched model of a PWM converter."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..errors import DimensionError, RealizationError

FIXED_FREQUENCY = "fixed_frequency"
CONSTANT_ON_TIME = "constant_on_time"
SCHEMES = (FIXED_FREQUENCY, CONSTANT_ON_TIME)

# The stage that runs up to the switching event persists while y > h ("y_above")
# or while y < h ("y_below"). That stage is S1 for fixed-frequency control and
# the off stage S2 for constant on-time control.
SENSES = ("y_above", "y_below")


def _mat(x, shape_hint=None) -> np.ndarray:
    a = np.array(x, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SwitchedSystem:
    """``dx/dt = A_i x + B_i u`` in stage S_i, ``y = C x + D u``, ``v_o = E_i x``.

    ``C``, ``D``, ``E1`` and ``E2`` are stored as 1-D rows. ``u`` may carry more
    than the two canonical inputs (source, reference); extra entries are
    constant disturbances such as a constant-current load.
    """

    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    state_names: tuple[str, ...] = ()
    input_names: tuple[str, ...] = ("v_s", "v_r")

    def __post_init__(self):
        A1 = _mat(self.A1)
        A2 = _mat(self.A2)
        n = A1.shape[0] if A1.ndim == 2 else -1
        if n < 1 or A1.shape != (n, n) or A2.shape != (n, n):
            raise DimensionError(f"A1/A2 must be N x N with N >= 1, got {A1.shape}, {A2.shape}")
        B1 = _mat(self.B1)
        B2 = _mat(self.B2)
        if B1.ndim != 2 or B1.shape[0] != n or B1.shape != B2.shape or B1.shape[1] < 2:
            raise DimensionError(f"B1/B2 must be N x m with m >= 2, got {B1.shape}, {B2.shape}")
        m = B1.shape[1]
        C = _mat(self.C).reshape(-1)
        D = _mat(self.D).reshape(-1)
        E1 = _mat(self.E1).reshape(-1)
        E2 = _mat(self.E2).reshape(-1)
        if C.size != n or E1.size != n or E2.size != n:
            raise DimensionError("C, E1, E2 must have N entries")
        if D.size != m:
            raise DimensionError(f"D must have {m} entries")
        for name, a in (("A1", A1), ("A2", A2), ("B1", B1), ("B2", B2), ("C", C), ("D", D), ("E1", E1), ("E2", E2)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite entries")
        names = tuple(self.state_names) or tuple(f"x{i}" for i in range(n))
        if len(names) != n:
            raise DimensionError("state_names length must equal N")
        inputs = tuple(self.input_names)
        if len(inputs) != m:
            inputs = inputs[:m] + tuple(f"u{i}" for i in range(len(inputs), m))
        for k, v in (("A1", A1), ("A2", A2), ("B1", B1), ("B2", B2), ("C", C), ("D", D), ("E1", E1), ("E2", E2),
                     ("state_names", names), ("input_names", inputs)):
            object.__setattr__(self, k, v)

    @property
    def dim(self) -> int:
        return self.A1.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B1.shape[1]

    def stage(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return (self.A1, self.B1) if k == 1 else (self.A2, self.B2)

    def output(self, x, u) -> float:
        return float(self.C @ x + self.D @ u)


@dataclass(frozen=True)
class RampSpec:
    """Sawtooth ``h(t) = V_l + (V_h - V_l) (t/T mod 1)``."""

    V_l: float
    V_h: float
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("ramp period T must be positive")
        if self.V_h < self.V_l:
            raise ValueError("V_h must be >= V_l")

    @property
    def V_m(self) -> float:
        return self.V_h - self.V_l

    @property
    def m_a(self) -> float:
        return (self.V_h - self.V_l) / self.T

    @property
    def f_s(self) -> float:
        return 1.0 / self.T

    @property
    def omega_s(self) -> float:
        return 2 * np.pi / self.T

    def h(self, t):
        """Ramp value at time ``t`` measured from the start of the current cycle."""
        return self.V_l + self.m_a * np.asarray(t)


@dataclass(frozen=True)
class ControlScheme:
    kind: str = FIXED_FREQUENCY
    switch_sense: str = "y_above"
    on_time: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}")
        if self.switch_sense not in SENSES:
            raise ValueError(f"unknown switch sense {self.switch_sense!r}")
        if self.kind == CONSTANT_ON_TIME and not (self.on_time and self.on_time > 0):
            raise ValueError("constant on-time control needs a positive on_time")

    @property
    def is_cotc(self) -> bool:
        return self.kind == CONSTANT_ON_TIME


@dataclass(frozen=True)
class TransferFunction:
    """Rational ``num(s)/den(s)``; coefficients in descending powers of s."""

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(self.den, dtype=float)), "f")
        if den.size == 0:
            raise RealizationError("denominator is zero")
        if num.size == 0:
            num = np.zeros(1)
        object.__setattr__(self, "num", tuple(num.tolist()))
        object.__setattr__(self, "den", tuple(den.tolist()))

    @classmethod
    def from_factors(cls, gain: float, zeros=(), poles=(), integrator: float | None = None):
        """``gain * prod(1 + s/z) / ((s + integrator) * prod(1 + s/p))``.

        ``integrator`` is the small offset that stands in for a pure integrator;
        leave it ``None`` for no integrator factor.
        """
        num = np.array([float(gain)])
        for z in zeros:
            num = np.polymul(num, [1.0 / z, 1.0])
        den = np.array([1.0])
        if integrator is not None:
            den = np.polymul(den, [1.0, float(integrator)])
        for p in poles:
            den = np.polymul(den, [1.0 / p, 1.0])
        return cls(tuple(num), tuple(den))

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def is_proper(self) -> bool:
        return len(self.num) <= len(self.den)

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)


@dataclass(frozen=True)
class ConverterModel:
    """A switched system together with its ramp, inputs and control scheme.

    ``template``/``params`` record how the model was built so it can be rebuilt
    with parameter overrides; both are empty for raw-matrix models.
    """

    system: SwitchedSystem
    ramp: RampSpec
    u: np.ndarray
    scheme: ControlScheme = field(default_factory=ControlScheme)
    template: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        u = _mat(self.u).reshape(-1)
        if u.size != self.system.n_inputs:
            raise DimensionError(f"u has {u.size} entries, system expects {self.system.n_inputs}")
        if not np.all(np.isfinite(u)):
            raise ValueError("u has non-finite entries")
        object.__setattr__(self, "u", u)

    def with_params(self, **overrides) -> "ConverterModel":
        """Rebuild from the template with some parameters replaced."""
        if self.template is None:
            raise ValueError("raw-matrix model has no template parameters to override")
        from .topologies import build_model

        params = dict(self.params)
        unknown = set(overrides) - set(params)
        if unknown:
            raise KeyError(f"unknown parameter(s) for {self.template}: {sorted(unknown)}")
        params.update(overrides)
        return replace(build_model(self.template, params), label=self.label)

    @property
    def m_a(self) -> float:
        return self.ramp.m_a
