"""Topology templates: parameter dict -> :class:`ConverterModel`.

Every template is a plain function of a parameter mapping, so any model built
from a template can be rebuilt with overrides (``ConverterModel.with_params``).
State orderings are given in each docstring. SI units throughout.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .model import (CONSTANT_ON_TIME, FIXED_FREQUENCY, ControlScheme, ConverterModel,
                    RampSpec, SwitchedSystem, TransferFunction)
from .realization import compose_plant_compensator, tf_to_state_space

TEMPLATES: dict[str, Callable[[dict], ConverterModel]] = {}
DEFAULTS: dict[str, dict] = {}


def template(name, **defaults):
    def deco(fn):
        TEMPLATES[name] = fn
        DEFAULTS[name] = defaults
        return fn
    return deco


def build_model(name: str, params: dict | None = None) -> ConverterModel:
    if name not in TEMPLATES:
        raise KeyError(f"unknown topology template {name!r}; known: {sorted(TEMPLATES)}")
    p = dict(DEFAULTS[name])
    if params:
        unknown = set(params) - set(p)
        if unknown:
            raise KeyError(f"unknown parameter(s) for {name}: {sorted(unknown)}")
        p.update(params)
    p = {k: float(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v for k, v in p.items()}
    return TEMPLATES[name](p)


def _period(p) -> float:
    return p["T"] if p.get("T") else 1.0 / p["f_s"]


def _esr_output(R, Rc):
    """Output row for (i_L, v_C) with an ESR branch in parallel with R."""
    k = R / (R + Rc)
    return np.array([k * Rc, k])


def _lc_esr(L, C, R, Rc):
    """A for states (i_L, v_C) of an LC filter with ESR and resistive load."""
    k = R / (R + Rc)
    return np.array([
        [-k * Rc / L, -k / L],
        [k / C, -k / (R * C)],
    ])


@template("buck_pvmc", v_s=24.0, v_r=11.3, T=400e-6, L=20e-3, C=47e-6, R=22.0,
          k_p=8.4, V_l=3.8, V_h=8.2)
def buck_pvmc(p) -> ConverterModel:
    """Buck under proportional voltage-mode control, states (i_L, v_C).

    y = k_p (v_C - v_r). The switch is off while y > h(t) and turns on when the
    ramp overtakes y, so stage S1 is the off stage and the switch on-time
    fraction is 1 - D.
    """
    A = _lc_esr(p["L"], p["C"], p["R"], 0.0)
    on = np.array([[1 / p["L"], 0.0], [0.0, 0.0]])
    off = np.zeros((2, 2))
    E = np.array([0.0, 1.0])
    k = p["k_p"]
    sys = SwitchedSystem(A, A, off, on, k * E, np.array([0.0, -k]), E, E,
                         state_names=("i_L", "v_C"))
    return ConverterModel(sys, RampSpec(p["V_l"], p["V_h"], _period(p)), np.array([p["v_s"], p["v_r"]]),
                          ControlScheme(FIXED_FREQUENCY, "y_above"), "buck_pvmc", p)


@template("buck_pvmc_input_filter", v_s=15.8, v_r=11.3, T=400e-6, L=20e-3, C=47e-6, R=22.0,
          k_p=8.4, V_l=3.8, V_h=8.2, L_f=2.5e-3, C_f=160e-6, R_p=39.0)
def buck_pvmc_input_filter(p) -> ConverterModel:
    """PVMC buck fed through an L_f/C_f input filter damped by a shunt R_p.

    States (i_Lf, v_Cf, i_L, v_C). Same comparator wiring as ``buck_pvmc``.
    """
    L, C, R, Lf, Cf, Rp = p["L"], p["C"], p["R"], p["L_f"], p["C_f"], p["R_p"]

    def A(s):
        return np.array([
            [0.0, -1 / Lf, 0.0, 0.0],
            [1 / Cf, -1 / (Rp * Cf), -s / Cf, 0.0],
            [0.0, s / L, 0.0, -1 / L],
            [0.0, 0.0, 1 / C, -1 / (R * C)],
        ])

    B = np.zeros((4, 2))
    B[0, 0] = 1 / Lf
    E = np.array([0.0, 0.0, 0.0, 1.0])
    k = p["k_p"]
    sys = SwitchedSystem(A(0.0), A(1.0), B, B, k * E, np.array([0.0, -k]), E, E,
                         state_names=("i_Lf", "v_Cf", "i_L", "v_C"))
    return ConverterModel(sys, RampSpec(p["V_l"], p["V_h"], _period(p)), np.array([p["v_s"], p["v_r"]]),
                          ControlScheme(FIXED_FREQUENCY, "y_above"), "buck_pvmc_input_filter", p)


def _buck_plant(p, with_esr=True):
    L, C, R = p["L"], p["C"], p["R"]
    Rc = p.get("R_c", 0.0) if with_esr else 0.0
    A = _lc_esr(L, C, R, Rc)
    on = np.array([[1 / L, 0.0], [0.0, 0.0]])
    E = _esr_output(R, Rc)
    return SwitchedSystem(A, A, on, np.zeros((2, 2)), E, np.zeros(2), E, E, state_names=("i_L", "v_C"))


@template("buck_vmc_type3", v_s=16.0, v_r=3.3, f_s=300e3, T=0.0, L=900e-9, C=990e-6, R=0.4,
          R_c=5e-3, V_l=0.0, V_m=1.5, K_c=7.78e4, z_1=1.675e4, z_2=3.35e4, p_1=9.425e5,
          p_2=2.02e5, delta=1.0)
def buck_vmc_type3(p) -> ConverterModel:
    """Buck with a type-III voltage compensator, states (i_L, v_C, z1, z2, z3).

    G_c(s) = K_c (1 + s/z_1)(1 + s/z_2) / ((s + delta)(1 + s/p_1)(1 + s/p_2)),
    y = G_c (v_r - v_o). Switch on (stage S1) while y > h(t). ``p_1`` is the
    pole also written omega_p.
    """
    plant = _buck_plant(p)
    tf = TransferFunction.from_factors(p["K_c"], (p["z_1"], p["z_2"]), (p["p_1"], p["p_2"]),
                                       integrator=p["delta"])
    sys = compose_plant_compensator(plant, tf_to_state_space(tf, balance=True))
    T = _period(p)
    return ConverterModel(sys, RampSpec(p["V_l"], p["V_l"] + p["V_m"], T), np.array([p["v_s"], p["v_r"]]),
                          ControlScheme(FIXED_FREQUENCY, "y_above"), "buck_vmc_type3", p)


@template("buck_acmc", v_s=14.0, v_r=0.5, f_s=50e3, T=0.0, L=46.1e-6, C=380e-6, R=1.0, R_c=0.02,
          R_s=0.1, V_l=0.0, V_h=1.0, K_c=75506.0, omega_z=0.0, omega_p_ratio=0.15, delta=1.0)
def buck_acmc(p) -> ConverterModel:
    """Buck under average current-mode control, states (i_L, v_C, z1, z2).

    G_c(s) = K_c (1 + s/omega_z) / ((s + delta)(1 + s/omega_p)) acting on
    v_r - R_s i_L, with omega_p = omega_p_ratio * omega_s. ``omega_z = 0``
    means "not resolved" and drops the zero factor.
    """
    plant = _buck_plant(p)
    T = _period(p)
    wp = p["omega_p_ratio"] * 2 * math.pi / T
    zeros = (p["omega_z"],) if p["omega_z"] > 0 else ()
    tf = TransferFunction.from_factors(p["K_c"], zeros, (wp,), integrator=p["delta"])
    sense = np.array([p["R_s"], 0.0])
    sys = compose_plant_compensator(plant, tf_to_state_space(tf, balance=True), sense_row=sense)
    return ConverterModel(sys, RampSpec(p["V_l"], p["V_h"], T), np.array([p["v_s"], p["v_r"]]),
                          ControlScheme(FIXED_FREQUENCY, "y_above"), "buck_acmc", p)


@template("boost_multiloop", v_s=4.0, v_r=0.48, T=2e-6, L=5.24e-6, C=0.2e-6, R=16.0, r_L=0.0,
          k_i=-0.1, k_v=0.01, V_l=0.0, V_h=1.0)
def boost_multiloop(p) -> ConverterModel:
    """Boost with state feedback y = v_r - k_i i_L - k_v v_o, states (i_L, v_C).

    The switch is on (stage S1) while h(t) < y. ``r_L`` is the inductor
    resistance; it only matters for the saturated DC solution.
    """
    L, C, R, rL = p["L"], p["C"], p["R"], p["r_L"]
    A_on = np.array([[-rL / L, 0.0], [0.0, -1 / (R * C)]])
    A_off = np.array([[-rL / L, -1 / L], [1 / C, -1 / (R * C)]])
    B = np.array([[1 / L, 0.0], [0.0, 0.0]])
    E = np.array([0.0, 1.0])
    sys = SwitchedSystem(A_on, A_off, B, B, np.array([-p["k_i"], -p["k_v"]]), np.array([0.0, 1.0]), E, E,
                         state_names=("i_L", "v_C"))
    return ConverterModel(sys, RampSpec(p["V_l"], p["V_h"], _period(p)), np.array([p["v_s"], p["v_r"]]),
                          ControlScheme(FIXED_FREQUENCY, "y_above"), "boost_multiloop", p)


@template("buck_cmc_ccl", v_s=10.0, i_c=1.12, I_o=1.0, f_s=1e6, T=0.0, L=10e-6, C=20e-6, R_c=0.05,
          V_l=0.0, V_h=0.0)
def buck_cmc_ccl(p) -> ConverterModel:
    """Peak current-mode buck with a constant-current load, states (i_L, v_C).

    Inputs are (v_s, i_c, I_o); the load current enters as a third input
    column. y = i_c - i_L and the switch is on (S1) while y > h(t).
    v_o = v_C + R_c (i_L - I_o).
    """
    L, C, Rc = p["L"], p["C"], p["R_c"]
    A = np.array([[-Rc / L, -1 / L], [1 / C, 0.0]])
    B_on = np.array([[1 / L, 0.0, Rc / L], [0.0, 0.0, -1 / C]])
    B_off = np.array([[0.0, 0.0, Rc / L], [0.0, 0.0, -1 / C]])
    E = np.array([Rc, 1.0])
    sys = SwitchedSystem(A, A, B_on, B_off, np.array([-1.0, 0.0]), np.array([0.0, 1.0, 0.0]), E, E,
                         state_names=("i_L", "v_C"), input_names=("v_s", "i_c", "I_o"))
    return ConverterModel(sys, RampSpec(p["V_l"], p["V_h"], _period(p)), np.array([p["v_s"], p["i_c"], p["I_o"]]),
                          ControlScheme(FIXED_FREQUENCY, "y_above"), "buck_cmc_ccl", p)


@template("buck_cmc", v_s=10.0, i_c=1.0, f_s=100e3, T=0.0, L=100e-6, C=100e-6, R=5.0, R_c=0.0,
          V_l=0.0, V_h=0.0)
def buck_cmc(p) -> ConverterModel:
    """Peak current-mode buck with resistive load, states (i_L, v_C).

    y = i_c - i_L; a compensating ramp of slope m_a = (V_h - V_l)/T is
    compared against y.
    """
    plant = _buck_plant(p)
    sys = SwitchedSystem(plant.A1, plant.A2, plant.B1, plant.B2, np.array([-1.0, 0.0]), np.array([0.0, 1.0]),
                         plant.E1, plant.E2, state_names=("i_L", "v_C"), input_names=("v_s", "i_c"))
    return ConverterModel(sys, RampSpec(p["V_l"], p["V_h"], _period(p)), np.array([p["v_s"], p["i_c"]]),
                          ControlScheme(FIXED_FREQUENCY, "y_above"), "buck_cmc", p)


@template("buck_cotc", v_s=5.0, v_r=2.0, T=3e-6, t_on=1.2e-6, L=2e-6, C=20e-6, R=0.5, R_c=0.02,
          V_l=0.0, V_h=0.0, lock_period=0.0)
def buck_cotc(p) -> ConverterModel:
    """Voltage-mode constant on-time buck, states (i_L, v_C).

    The switch is on (S1) for ``t_on``, then off (S2) while y = v_o - v_r
    stays above h(t); the next on-time starts when y falls to h. ``T`` is the
    nominal period used for the ramp slope and as the search scale.

    With ``lock_period`` nonzero, ``v_r`` is replaced by the reference that
    makes the steady-state period exactly ``T``; the reference only enters y,
    so this does not change the orbit.
    """
    plant = _buck_plant(p)
    E = plant.E1
    sys = SwitchedSystem(plant.A1, plant.A2, plant.B1, plant.B2, E, np.array([0.0, -1.0]), E, E,
                         state_names=("i_L", "v_C"))
    ramp = RampSpec(p["V_l"], p["V_h"], p["T"])
    if p["lock_period"]:
        from ..steady_state import orbit_for_timing

        x0, _ = orbit_for_timing(sys, np.array([p["v_s"], 0.0]), p["t_on"], p["T"])
        p = dict(p, v_r=float(E @ x0 - ramp.h(p["T"])))
    return ConverterModel(sys, ramp, np.array([p["v_s"], p["v_r"]]),
                          ControlScheme(CONSTANT_ON_TIME, "y_above", on_time=p["t_on"]), "buck_cotc", p)


# The nine worked configurations. Values are the published parameter lists;
# see the catalog data file for provenance of every number.
EXAMPLES: dict[int, tuple[str, dict]] = {
    1: ("buck_pvmc", {"v_s": 24.0}),
    2: ("buck_acmc", {}),
    3: ("buck_vmc_type3", {"v_s": 16.0}),
    4: ("buck_vmc_type3", {"v_s": 16.0}),
    5: ("boost_multiloop", {}),
    6: ("buck_cmc_ccl", {"i_c": 1.12}),
    7: ("buck_pvmc_input_filter", {"R_p": 39.0}),
    8: ("buck_vmc_type3", {"R_c": 0.427e-3}),
    9: ("buck_cotc", {"lock_period": 1.0}),
}


def build_example(example_id: int, **overrides) -> ConverterModel:
    """Model for one of the nine worked examples, optionally with overrides."""
    if example_id not in EXAMPLES:
        raise KeyError(f"unknown example id {example_id}; valid ids are 1..9")
    name, base = EXAMPLES[example_id]
    params = dict(base)
    params.update(overrides)
    model = build_model(name, params)
    from dataclasses import replace
    return replace(model, label=f"example {example_id}")
