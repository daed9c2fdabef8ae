"""The nine worked examples as executable fixtures.

Expected values (with tolerances and provenance) live in ``data/catalog.json``;
this module only knows how to *measure* each quantity. ``run_entry`` runs the
pipeline steady state -> sampled map -> curves -> simulation and compares.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Any, Callable

import numpy as np

from .converter import build_example
from .converter.model import ConverterModel
from .freqplots import bode_plot, classify, critical_function
from .sampled import build, pole_report
from .simulate import detect_period, simulate
from .steady_state import find_operating_points, make_operating_point, switch_on_fraction
from .sweep import duty_sweep, sweep

PASS, FAIL, SKIP = "pass", "fail", "skip"


@dataclass(frozen=True)
class Expectation:
    key: str
    quantity: str
    kind: str
    value: Any
    citation: str
    tolerance: float = 0.0
    tol_type: str = "abs"

    def __post_init__(self):
        if not self.citation:
            raise ValueError(f"expectation {self.key} has no citation")
        if self.kind in ("scalar", "pole", "complex") and not self.tolerance > 0:
            raise ValueError(f"expectation {self.key} needs a positive tolerance")


@dataclass(frozen=True)
class CatalogEntry:
    id: int
    title: str
    template: str
    params: dict
    complete: bool
    expected: tuple[Expectation, ...]
    notes: str = ""
    skip_reason: str = ""

    def model(self, **overrides) -> ConverterModel:
        return build_example(self.id, **overrides)


@dataclass
class CheckResult:
    entry: int
    key: str
    quantity: str
    expected: Any
    measured: Any
    tolerance: float
    tol_type: str
    status: str
    citation: str
    detail: str = ""

    def line(self) -> str:
        tol = "" if self.kind_exact else f" +-{self.tolerance:g}{'' if self.tol_type == 'abs' else ' rel'}"
        return (f"[{self.status.upper():4}] ex{self.entry} {self.key}: {self.quantity}: "
                f"measured {_show(self.measured)}, expected {_show(self.expected)}{tol}"
                + (f" ({self.detail})" if self.detail else ""))

    @property
    def kind_exact(self) -> bool:
        return self.tolerance == 0.0

    def to_dict(self) -> dict:
        return {
            "entry": self.entry, "key": self.key, "quantity": self.quantity,
            "expected": _jsonable(self.expected), "measured": _jsonable(self.measured),
            "tolerance": self.tolerance, "tol_type": self.tol_type, "status": self.status,
            "citation": self.citation, "detail": self.detail,
        }


@dataclass
class EntryReport:
    entry: CatalogEntry
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    def table(self) -> str:
        head = f"example {self.entry.id}: {self.entry.title}"
        if not self.entry.complete:
            head += f" [partial: {self.entry.skip_reason}]"
        return "\n".join([head, *("  " + c.line() for c in self.checks)])

    def to_dict(self) -> dict:
        return {"id": self.entry.id, "title": self.entry.title, "complete": self.entry.complete,
                "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def _show(v):
    if isinstance(v, complex):
        return f"{v.real:.6g}{v.imag:+.6g}j"
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_show(x) for x in v) + "]"
    return str(v)


def _jsonable(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# loading ------------------------------------------------------------------------

def load_catalog() -> dict[int, CatalogEntry]:
    text = resources.files("bifscope").joinpath("data/catalog.json").read_text()
    data = json.loads(text)
    out = {}
    for e in data["entries"]:
        exps = tuple(Expectation(x["key"], x["quantity"], x["kind"], x["value"], x["citation"],
                                 float(x.get("tolerance", 0.0)), x.get("tol_type", "abs"))
                     for x in e["expected"])
        out[e["id"]] = CatalogEntry(e["id"], e["title"], e["template"], e["params"], e["complete"],
                                    exps, e.get("notes", ""), e.get("skip_reason", ""))
    return out


# comparison ---------------------------------------------------------------------

def compare(exp: Expectation, measured) -> tuple[str, str]:
    """Status and a short detail string for one measured value."""
    if measured is None:
        return FAIL, "not measured"
    if exp.kind == "exact":
        return (PASS if measured == exp.value else FAIL), ""
    if exp.kind == "scalar":
        err = abs(float(measured) - float(exp.value))
        if exp.tol_type == "rel":
            err /= abs(float(exp.value))
        return (PASS if err <= exp.tolerance else FAIL), f"error {err:.3g}"
    if exp.kind == "pole":
        target = complex(*exp.value)
        err = max(abs(measured.real - target.real), abs(abs(measured.imag) - abs(target.imag)))
        return (PASS if err <= exp.tolerance else FAIL), f"error {err:.3g}"
    if exp.kind == "complex":
        target = complex(*exp.value)
        err = abs(measured - target)
        if exp.tol_type == "rel":
            err /= abs(target)
        return (PASS if err <= exp.tolerance else FAIL), f"error {err:.3g}"
    raise ValueError(f"unknown expectation kind {exp.kind!r}")


def nearest_pole(poles, target: complex) -> complex:
    """Pole closest to ``target`` (either conjugate counts)."""
    poles = np.asarray(poles, dtype=complex)
    d = np.minimum(np.abs(poles - target), np.abs(poles - np.conj(target)))
    z = complex(poles[int(np.argmin(d))])
    return complex(z.real, abs(z.imag)) if target.imag >= 0 else complex(z.real, -abs(z.imag))


# measurements ---------------------------------------------------------------------

class _Run:
    """Lazily computed artefacts of one model configuration."""

    def __init__(self, model: ConverterModel):
        self.model = model

    @cached_property
    def ops(self):
        return find_operating_points(self.model)

    def at(self, k=0):
        return self.ops[k]

    def sd(self, k=0):
        return build(self.model, self.at(k))

    def poles(self, k=0):
        return pole_report(self.sd(k)).poles

    def report(self, k=0):
        return classify(self.sd(k))

    def bode(self, k=0):
        return bode_plot(self.sd(k))

    def sim(self, n_cycles, tail, k=0, perturb=0.01, x_init=None):
        x = self.at(k).x0_start * (1 + perturb) if x_init is None else np.asarray(x_init, dtype=float)
        tr = simulate(self.model, x, n_cycles)
        return tr, detect_period(tr, tail)


def _measures_1(entry):
    base = entry.model()
    r24, r25 = _Run(base), _Run(base.with_params(v_s=25.0))
    raised = _Run(base.with_params(v_s=25.0, V_l=3.6856, V_h=8.3056))

    def pdb():
        res = sweep(base, "v_s", 20.0, 30.0, 101, with_reports=False)
        hits = [b.value for b in res.bifurcations if b.kind == "PDB"]
        return hits[0] if hits else None

    def gm_omega():
        pcs = r25.bode().phase_crossings
        return min(pcs, key=lambda c: abs(c.gain_margin_db)).omega if pcs else None

    return {
        "duty_vs24": lambda: switch_on_fraction(r24.model, r24.at()),
        "duty_vs25": lambda: switch_on_fraction(r25.model, r25.at()),
        "pdb_vs": pdb,
        "Fpi_vs25": lambda: r25.report().Fpi,
        "suggested_m_a_vs25": lambda: r25.report().suggested_m_a,
        "raised_ramp_pole": lambda: nearest_pole(raised.poles(), complex(-0.8202, 0.0803)),
        "gm_vs24": lambda: r24.bode().gain_margin_db,
        "gm_vs25": lambda: r25.bode().gain_margin_db,
        "gm_omega_vs25": gm_omega,
        "enc_vs24": lambda: r24.report().encirclements,
        "enc_vs25": lambda: r25.report().encirclements,
        "class_vs25": lambda: r25.report().bif_class,
        "sim_vs24": lambda: str(r24.sim(120, 32, perturb=0.0)[1]),
        "sim_vs25": lambda: str(r25.sim(400, 64)[1]),
    }


def _measures_2(entry):
    base = entry.model()

    def stable(ratio):
        def f():
            run = _Run(base.with_params(omega_p_ratio=ratio))
            return all(pole_report(build(run.model, op)).stable for op in run.ops) if run.ops else None
        return f

    return {"stable_wp015": stable(0.15), "stable_wp049": stable(0.49), "stable_wp081": stable(0.81)}


def _measures_3(entry):
    run = _Run(entry.model())
    return {
        "duty": lambda: run.at().D,
        "pole_m1": lambda: nearest_pole(run.poles(), -1.0),
    }


def _measures_4(entry):
    base = entry.model()
    ws = base.ramp.omega_s
    cache = {}

    def window(model):
        key = model.ramp.m_a
        if key not in cache:
            res = sweep(model, "p_1", 0.1 * ws, 0.6 * ws, 101, with_reports=False)
            cache[key] = res
        res = cache[key]
        unstable = [sp.n_unstable > 0 for sp in res.points]
        pdb = sorted(b.value / ws for b in res.bifurcations if b.kind == "PDB")
        bounded = len(pdb) == 2 and not unstable[0] and not unstable[-1]
        return res, pdb, bounded

    def fixed(target):
        def f():
            res, _, _ = window(base)
            worst = None
            for sp in res.points:
                for bp in sp.points:
                    z = nearest_pole(bp.poles.poles, target)
                    if worst is None or abs(z - target) > abs(worst - target):
                        worst = z
            return worst
        return f

    def resolved():
        out = []
        for V_m in (0.15, 1.5):  # m_a = 45000 and 450000
            model = base.with_params(V_m=V_m)
            if window(model)[2]:
                out.append(round(model.ramp.m_a, 6))
        return out

    return {
        "window_lo": lambda: window(base)[1][0] if window(base)[2] else None,
        "window_hi": lambda: window(base)[1][-1] if window(base)[2] else None,
        "fixed_pole_1": fixed(0.9485),
        "fixed_pole_2": fixed(0.8853),
        "fixed_pole_3": fixed(0.51),
        "m_a_resolved": resolved,
    }


def _measures_5(entry):
    base = entry.model()
    run = _Run(base)
    cache = {}

    def fold():
        if "fold" not in cache:
            res = duty_sweep(base, "v_r", 0.5, 0.8, 61)
            cache["fold"] = next((b for b in res.bifurcations if b.kind == "SNB"), None)
        return cache["fold"]

    def saturation():
        tr = simulate(base, [2.3, 16.2], 40)
        on = tr.duties >= 1.0
        for k in range(on.size):
            if on[k:].all():
                return float(k)
        return None

    return {
        "D_low": lambda: run.at(0).D,
        "D_high": lambda: run.at(1).D,
        "pole_low": lambda: nearest_pole(run.poles(0), complex(0.8045, 0.451)),
        "pole_high_1": lambda: nearest_pole(run.poles(1), 1.5891),
        "pole_high_2": lambda: nearest_pole(run.poles(1), 0.6501),
        "enc_low": lambda: run.report(0).encirclements,
        "enc_high": lambda: run.report(1).encirclements,
        "class_high": lambda: run.report(1).bif_class,
        "snb_vr": lambda: fold().value if fold() else None,
        "snb_D": lambda: fold().D if fold() else None,
        "n_ops_vr050": lambda: len(find_operating_points(base.with_params(v_r=0.50))),
        "saturation_cycle": saturation,
    }


def _measures_6(entry):
    base = entry.model()
    run = _Run(base)
    cache = {}

    def bifs():
        if "b" not in cache:
            cache["b"] = duty_sweep(base, "i_c", 0.3, 0.7, 81).bifurcations
        return cache["b"]

    def first(kind, attr):
        def f():
            b = next((b for b in bifs() if b.kind == kind), None)
            return getattr(b, attr) if b else None
        return f

    def at06():
        m = base.with_params(i_c=float(_param_for_duty(base, "i_c", 0.6)))
        return build(m, make_operating_point(m, 0.6))

    return {
        "D_low": lambda: run.at(0).D,
        "D_high": lambda: run.at(1).D,
        "snb_ic": first("SNB", "value"),
        "snb_D": first("SNB", "D"),
        "pdb_D": first("PDB", "D"),
        "enc_D06": lambda: classify(at06()).encirclements,
        "class_D06": lambda: classify(at06()).bif_class,
        "gm_D06": lambda: bode_plot(at06()).gain_margin_db,
    }


def _param_for_duty(model, name, D):
    from .sweep import parameter_for_duty
    return parameter_for_duty(model, name, D)


def _measures_7(entry):
    base = entry.model()
    run = _Run(base)
    cache = {}

    def nsb():
        if "nsb" not in cache:
            res = sweep(base, "R_p", 1.0, 100.0, 100, with_reports=False)
            cache["nsb"] = next((b for b in res.bifurcations if b.kind == "NSB"), None)
        return cache["nsb"]

    def quasi():
        _, v = run.sim(600, 256)
        return v.period_estimate / base.ramp.T if v.period_estimate else None

    return {
        "nsb_Rp": lambda: nsb().value if nsb() else None,
        "cross_pole": lambda: nearest_pole([nsb().pole], complex(0.8087, 0.5883)) if nsb() else None,
        "fixed_pole": lambda: nearest_pole(run.poles(), complex(-0.5963, 0.5301)),
        "F0629": lambda: complex(critical_function(run.sd(), np.exp(0.629j))),
        "oscillation": lambda: run.report().predicted_oscillation_rad_s,
        "quasi_period": quasi,
        "enc": lambda: run.report().encirclements,
        "class": lambda: run.report().bif_class,
        "bode_crossings": lambda: len(run.bode().interior_phase_crossings),
    }


def _measures_8(entry):
    run = _Run(entry.model())

    def quasi():
        _, v = run.sim(600, 256)
        return v.period_estimate / run.model.ramp.T if v.period_estimate else None

    return {
        "pole_1": lambda: nearest_pole(run.poles(), complex(-0.276, 0.9618)),
        "pole_2": lambda: nearest_pole(run.poles(), 0.9477),
        "pole_3": lambda: nearest_pole(run.poles(), 0.8884),
        "pole_4": lambda: nearest_pole(run.poles(), 0.0259),
        "oscillation": lambda: run.report().predicted_oscillation_rad_s,
        "quasi_period": quasi,
        "enc": lambda: run.report().encirclements,
        "class": lambda: run.report().bif_class,
    }


def _measures_9(entry):
    run = _Run(entry.model())
    return {
        "pole_0": lambda: nearest_pole(run.poles(), 0.0),
        "pole_1": lambda: nearest_pole(run.poles(), -1.1),
        "enc": lambda: run.report().encirclements,
        "nyquist_enc": lambda: run.report().nyquist_encirclements,
        "gm": lambda: run.bode().gain_margin_db,
    }


MEASURES: dict[int, Callable] = {
    1: _measures_1, 2: _measures_2, 3: _measures_3, 4: _measures_4, 5: _measures_5,
    6: _measures_6, 7: _measures_7, 8: _measures_8, 9: _measures_9,
}


def run_entry(entry_id: int, keys=None) -> EntryReport:
    """Measure every expected quantity of one entry and compare.

    Failures (including exceptions inside a measurement) become report
    lines. Entries flagged incomplete are measured but scored as skipped.
    """
    catalog = load_catalog()
    if entry_id not in catalog:
        raise KeyError(f"unknown example id {entry_id}; valid ids are 1..9")
    entry = catalog[entry_id]
    measures = MEASURES[entry_id](entry)
    report = EntryReport(entry)
    for exp in entry.expected:
        if keys is not None and exp.key not in keys:
            continue
        try:
            measured = measures[exp.key]()
            status, detail = compare(exp, measured)
        except Exception as exc:  # report, never raise
            measured, status, detail = None, FAIL, f"{type(exc).__name__}: {exc}"
        if not entry.complete:
            status, detail = SKIP, entry.skip_reason + (f"; {detail}" if detail else "")
        report.checks.append(CheckResult(entry_id, exp.key, exp.quantity, exp.value, measured,
                                         exp.tolerance, exp.tol_type, status, exp.citation, detail))
    return report


def run_all(ids=None) -> list[EntryReport]:
    return [run_entry(i) for i in (ids or sorted(load_catalog()))]
