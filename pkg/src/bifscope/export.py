"""CSV/JSON writers for curves and reports (17 significant digits)."""

from __future__ import annotations

import csv
import json

import numpy as np

from .freqplots import BifurcationReport, BodeCurve
from .numerics import ComplexCurve


def fmt(x) -> str:
    return format(float(x), ".17g")


def _num(x):
    """JSON-safe float that survives a round trip."""
    x = float(x)
    return x if np.isfinite(x) else None


def curve_csv(curve: ComplexCurve, fh, axis: str = "theta"):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([axis, "re", "im"])
    for t, z in zip(curve.thetas, curve.points):
        w.writerow([fmt(t), fmt(z.real), fmt(z.imag)])


def curve_json(curve: ComplexCurve, axis: str = "theta") -> dict:
    return {axis: [_num(t) for t in curve.thetas],
            "re": [_num(z.real) for z in curve.points],
            "im": [_num(z.imag) for z in curve.points]}


def bode_csv(bode: BodeCurve, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["omega", "mag_db", "phase_deg"])
    for o, m, p in zip(bode.omegas, bode.magnitude_db, bode.phase_deg):
        w.writerow([fmt(o), fmt(m), fmt(p)])


def bode_json(bode: BodeCurve) -> dict:
    return {
        "omega": [_num(v) for v in bode.omegas],
        "mag_db": [_num(v) for v in bode.magnitude_db],
        "phase_deg": [_num(v) for v in bode.phase_deg],
        "gain_margin_db": bode.gain_margin_db,
        "phase_margin_deg": bode.phase_margin_deg,
        "phase_crossings": [{"omega": c.omega, "gain_margin_db": c.gain_margin_db, "endpoint": c.endpoint}
                            for c in bode.phase_crossings],
        "gain_crossings": [{"omega": c.omega, "phase_margin_deg": c.phase_margin_deg}
                           for c in bode.gain_crossings],
    }


def report_json(report: BifurcationReport) -> dict:
    d = report.to_dict()
    d["consistent"] = report.consistent
    return d


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_default)


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
