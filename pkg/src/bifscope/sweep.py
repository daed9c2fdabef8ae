"""One-parameter sweeps: operating-point branches, pole trajectories and
bifurcation points refined by bisection.

Two flavours are provided. :func:`sweep` walks a template parameter on a
grid and finds every operating point at each value. :func:`duty_sweep` walks
the duty cycle instead and solves for the parameter, which is possible when
the parameter only shifts the switching residual affinely (a reference
voltage or current); folds then show up as extrema of the parameter.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .converter.model import ConverterModel
from .errors import BifscopeError
from .freqplots import BifurcationReport, classify, pole_class
from .sampled import PoleReport, build, pole_report
from .steady_state import OperatingPoint, find_operating_points, make_operating_point, residual

DEFAULT_N = 101
BRANCH_GAP = 0.1  # max duty jump for two grid points to belong to one branch
FOLD_GAP = 0.05  # merging roots closer than this at a count change make a fold


def worker_count() -> int:
    """Worker cap from ``BIFSCOPE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BIFSCOPE_THREADS", "1")))
    except ValueError:
        return 1


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class BranchPoint:
    branch_id: int
    op: OperatingPoint
    poles: PoleReport
    report: BifurcationReport | None = None


@dataclass
class SweepPoint:
    value: float
    points: list[BranchPoint] = field(default_factory=list)
    error: str | None = None

    @property
    def n_ops(self) -> int:
        return len(self.points)

    @property
    def n_unstable(self) -> int:
        return sum(1 for p in self.points if p.poles.n_outside > 0)


@dataclass(frozen=True)
class Bifurcation:
    """A refined bifurcation point.

    ``kind`` is SNB, PDB, NSB (or a ``+`` combination), or ``saturation`` when
    a branch leaves the admissible duty range. ``pole`` is the critical
    sampled-data pole at the refined point.
    """

    value: float
    kind: str
    D: float | None = None
    pole: complex | None = None
    branch_id: int | None = None
    monitor: str = "poles"

    def to_dict(self) -> dict:
        return {
            "value": self.value, "class": self.kind, "D": self.D, "branch_id": self.branch_id,
            "monitor": self.monitor,
            "pole": None if self.pole is None else [float(np.real(self.pole)), float(np.imag(self.pole))],
        }


@dataclass
class SweepResult:
    param_name: str
    values: np.ndarray
    points: list[SweepPoint]
    bifurcations: list[Bifurcation]
    state_names: tuple[str, ...] = ()
    warnings: list[str] = field(default_factory=list)

    def rows(self):
        """Long-format rows: one per (value, branch, pole)."""
        for sp in self.points:
            for bp in sp.points:
                for z in bp.poles.poles:
                    yield [sp.value, bp.branch_id, bp.op.D, z.real, z.imag,
                           int(bp.poles.n_outside == 0), *bp.op.x0_start]

    def header(self):
        names = self.state_names or tuple(f"x{i + 1}" for i in range(self._dim()))
        return ["param", "branch_id", "D", "pole_re", "pole_im", "stable", *(f"x0_{n}" for n in names)]

    def _dim(self):
        for sp in self.points:
            for bp in sp.points:
                return bp.op.x0_start.size
        return 0

    def to_csv(self, path_or_file):
        own = isinstance(path_or_file, (str, os.PathLike))
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for r in self.rows():
                w.writerow([fmt(r[0]), r[1], fmt(r[2]), fmt(r[3]), fmt(r[4]), r[5], *(fmt(v) for v in r[6:])])
        finally:
            if own:
                fh.close()

    def summary(self) -> dict:
        return {
            "param": self.param_name,
            "lo": float(self.values[0]), "hi": float(self.values[-1]), "n": int(self.values.size),
            "bifurcations": [b.to_dict() for b in self.bifurcations],
            "operating_point_counts": [sp.n_ops for sp in self.points],
            "unstable_counts": [sp.n_unstable for sp in self.points],
            "errors": [{"value": sp.value, "error": sp.error} for sp in self.points if sp.error],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


# evaluation -------------------------------------------------------------------

def _analyse(model: ConverterModel, name: str, value: float, with_reports: bool) -> SweepPoint:
    sp = SweepPoint(float(value))
    try:
        m = model.with_params(**{name: float(value)})
        for op in find_operating_points(m):
            sd = build(m, op)
            rep = None
            if with_reports:
                try:
                    rep = classify(sd)
                except BifscopeError as exc:  # curve not computable, poles still valid
                    sp.error = f"classify: {exc}"
            sp.points.append(BranchPoint(-1, op, pole_report(sd), rep))
    except (BifscopeError, ValueError, np.linalg.LinAlgError) as exc:
        sp.error = str(exc)
    return sp


def _assign_branches(points: list[SweepPoint]):
    next_id = 0
    prev: list[BranchPoint] = []
    for sp in points:
        free = list(prev)
        for bp in sp.points:
            best = min(free, key=lambda q: abs(q.op.D - bp.op.D), default=None)
            if best is not None and abs(best.op.D - bp.op.D) <= BRANCH_GAP:
                bp.branch_id = best.branch_id
                free.remove(best)
            else:
                bp.branch_id = next_id
                next_id += 1
        prev = sp.points if sp.points else prev


def _nearest(ops: list[OperatingPoint], D: float) -> OperatingPoint | None:
    return min(ops, key=lambda o: abs(o.D - D), default=None)


def _rel_width(a, b):
    return abs(b - a) / max(abs(a), abs(b), 1e-300)


class _Probe:
    """Cached operating points and poles of ``model`` with one parameter replaced."""

    def __init__(self, model, name):
        self.model, self.name, self.cache = model, name, {}

    def at(self, value):
        value = float(value)
        if value not in self.cache:
            m = self.model.with_params(**{self.name: value})
            try:
                ops = find_operating_points(m)
            except (BifscopeError, ValueError):
                ops = []
            self.cache[value] = (m, ops)
        return self.cache[value]

    def count(self, value):
        return len(self.at(value)[1])

    def branch(self, value, D):
        m, ops = self.at(value)
        op = _nearest(ops, D)
        if op is None or abs(op.D - D) > BRANCH_GAP:
            return m, None
        return m, op

    def radius(self, value, D):
        m, op = self.branch(value, D)
        if op is None:
            return np.nan
        return pole_report(build(m, op)).spectral_radius


def _refine_count(probe: _Probe, a, b, rtol):
    na = probe.count(a)
    while _rel_width(a, b) > rtol:
        mid = 0.5 * (a + b)
        if probe.count(mid) == na:
            a = mid
        else:
            b = mid
    return a, b


def _fold_duty(model: ConverterModel, Da: float, Db: float) -> float:
    """Duty at the extremum of the switching residual between two close roots."""
    lo, hi = min(Da, Db), max(Da, Db)
    if hi - lo < 1e-12:
        return 0.5 * (lo + hi)
    mid = residual(model, 0.5 * (lo + hi))
    sgn = -1.0 if mid > 0 else 1.0
    res = minimize_scalar(lambda D: sgn * residual(model, D), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def crossing_monitors(Phi: np.ndarray, poles) -> dict[str, float]:
    """Scalar functions that change sign when a pole crosses the unit circle.

    det(I - Phi) flips when a real pole passes +1 (SNB), det(I + Phi) when
    one passes -1 (PDB); the largest modulus of a non-real pole minus one
    tracks Neimark-Sacker crossings (nan when all poles are real).
    """
    n = Phi.shape[0]
    poles = np.asarray(poles, dtype=complex)
    cplx = poles[np.abs(poles.imag) > 1e-9 * np.maximum(1.0, np.abs(poles))]
    return {
        "SNB": float(np.linalg.det(np.eye(n) - Phi)),
        "PDB": float(np.linalg.det(np.eye(n) + Phi)),
        "NSB": float(np.max(np.abs(cplx)) - 1.0) if cplx.size else float("nan"),
    }


def _sign_changed(a, b) -> bool:
    return bool(np.isfinite(a) and np.isfinite(b) and a * b < 0)


def _critical_pole(poles, target=None):
    poles = np.asarray(poles, dtype=complex)
    if target is None:
        return complex(poles[np.argmin(np.abs(np.abs(poles) - 1))])
    return complex(poles[np.argmin(np.abs(poles - target))])


def _count_change(probe: _Probe, a, b, rtol) -> list[Bifurcation]:
    a, b = _refine_count(probe, a, b, rtol)
    (ma, ops_a), (mb, ops_b) = probe.at(a), probe.at(b)
    many, m_many, v_many = (ops_a, ma, a) if len(ops_a) > len(ops_b) else (ops_b, mb, b)
    few = ops_b if many is ops_a else ops_a
    value = 0.5 * (a + b)
    # roots present on the "many" side without a partner on the other side
    lonely = [o for o in many if _nearest(few, o.D) is None or abs(_nearest(few, o.D).D - o.D) > FOLD_GAP]
    lonely.sort(key=lambda o: o.D)
    out = []
    pairs = [(p, q) for p, q in zip(lonely, lonely[1:]) if abs(q.D - p.D) <= FOLD_GAP]
    if pairs:
        for p, q in pairs:
            D = _fold_duty(m_many, p.D, q.D)
            pole = None
            try:
                pole = _critical_pole(pole_report(build(m_many, make_operating_point(m_many, D))).poles, 1.0)
            except BifscopeError:
                pass
            out.append(Bifurcation(value, "SNB", D, pole, monitor="count"))
    else:
        for o in lonely:
            out.append(Bifurcation(value, "saturation", o.D, None, monitor="count"))
    return out


def _stability_changes(probe: _Probe, a, b, Da, Db, rtol) -> list[Bifurcation]:
    def D_at(v):
        w = (v - a) / (b - a) if b != a else 0.0
        return Da + w * (Db - Da)

    def monitors(v):
        m, op = probe.branch(v, D_at(v))
        if op is None:
            return None, None, None
        sd = build(m, op)
        poles = pole_report(sd).poles
        return crossing_monitors(sd.Phi, poles), op, poles

    ma, _, _ = monitors(a)
    mb, _, _ = monitors(b)
    out = []
    if ma is None or mb is None:
        return out
    targets = {"SNB": 1.0, "PDB": -1.0, "NSB": None}
    for kind in ("SNB", "PDB", "NSB"):
        if not _sign_changed(ma[kind], mb[kind]):
            continue

        def g(v, kind=kind):
            mv = monitors(v)[0]
            return np.nan if mv is None else mv[kind]

        try:
            v = brentq(g, a, b, xtol=rtol * 1e-3 * max(abs(a), abs(b), 1e-300), rtol=1e-14)
        except ValueError:
            continue
        _, op, poles = monitors(v)
        if op is None:
            continue
        out.append(Bifurcation(float(v), kind, op.D, _critical_pole(poles, targets[kind])))
    return out


def sweep(model: ConverterModel, name: str, lo: float, hi: float, n: int = DEFAULT_N,
          refine: bool = True, rtol: float = 1e-4, with_reports: bool = True,
          workers: int | None = None) -> SweepResult:
    """Sweep template parameter ``name`` over ``n`` linearly spaced values.

    Per value: all operating points, their poles and (optionally) the full
    bifurcation report. Between neighbouring values three monitors are
    compared: operating-point count, per-branch pole-based stability, and the
    encirclement count. Count changes are refined by bisection, stability
    changes by root finding on the spectral radius, both to ``rtol``.
    Per-point failures are recorded, never raised.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if name not in model.params:
        raise KeyError(f"model has no parameter {name!r}")
    values = np.linspace(lo, hi, n)
    workers = workers or worker_count()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            points = list(pool.map(lambda v: _analyse(model, name, v, with_reports), values))
    else:
        points = [_analyse(model, name, v, with_reports) for v in values]
    _assign_branches(points)
    result = SweepResult(name, values, points, [], tuple(model.system.state_names))
    if not refine:
        return result
    probe = _Probe(model, name)
    for sp, sq in zip(points, points[1:]):
        a, b = sp.value, sq.value
        if sp.n_ops != sq.n_ops:
            result.bifurcations.extend(_count_change(probe, a, b, rtol))
        nxt = {bp.branch_id: bp for bp in sq.points}
        for bp in sp.points:
            bq = nxt.get(bp.branch_id)
            if bq is None:
                continue
            if bp.poles.n_outside != bq.poles.n_outside:
                found = _stability_changes(probe, a, b, bp.op.D, bq.op.D, rtol)
                result.bifurcations.extend(
                    Bifurcation(f.value, f.kind, f.D, f.pole, bp.branch_id) for f in found)
                if not found:
                    result.warnings.append(f"stability change on branch {bp.branch_id} in [{a}, {b}] not refined")
            if bp.report and bq.report:
                de = bq.report.encirclements - bp.report.encirclements
                dn = bq.poles.n_outside - bp.poles.n_outside
                if de != dn:
                    result.warnings.append(
                        f"encirclement change {de} differs from pole count change {dn} "
                        f"on branch {bp.branch_id} in [{a}, {b}]")
    result.bifurcations.sort(key=lambda b: b.value)
    return result


# duty-parametrized sweep ----------------------------------------------------------

def parameter_for_duty(model: ConverterModel, name: str, D: float, step: float | None = None) -> float:
    """Value of ``name`` that makes D a periodic operating point.

    Requires the switching residual to be affine in the parameter (true for
    references that only enter the comparator signal); this is checked.
    """
    p0 = float(model.params[name])
    h = step or 1e-3 * max(abs(p0), 1.0)
    r0 = residual(model, D)
    r1 = residual(model.with_params(**{name: p0 + h}), D)
    slope = (r1 - r0) / h
    if slope == 0 or not math.isfinite(slope):
        raise ValueError(f"parameter {name!r} does not affect the switching residual")
    p = p0 - r0 / slope
    check = residual(model.with_params(**{name: p}), D)
    scale = abs(r0) + abs(r1) + 1e-12
    if abs(check) > 1e-8 * scale:
        raise ValueError(f"switching residual is not affine in {name!r}; use sweep() instead")
    return p


@dataclass
class DutySweepResult:
    param_name: str
    duties: np.ndarray
    values: np.ndarray
    poles: list[np.ndarray]
    bifurcations: list[Bifurcation]

    def summary(self) -> dict:
        return {
            "param": self.param_name,
            "D_lo": float(self.duties[0]), "D_hi": float(self.duties[-1]), "n": int(self.duties.size),
            "bifurcations": [b.to_dict() for b in self.bifurcations],
        }


def duty_sweep(model: ConverterModel, name: str, D_lo: float, D_hi: float, n: int = DEFAULT_N,
               tol: float = 1e-10) -> DutySweepResult:
    """Walk the duty cycle and solve for parameter ``name`` at each duty.

    Folds (SNB) are extrema of the parameter along D; PDB/NSB points are
    where the spectral radius crosses 1. A pole crossing at +1 that coincides
    with a fold is reported once, as the fold.
    """
    Ds = np.linspace(D_lo, D_hi, n)

    def point(D):
        p = parameter_for_duty(model, name, D)
        m = model.with_params(**{name: p})
        sd = build(m, make_operating_point(m, D))
        poles = pole_report(sd).poles
        return p, poles, crossing_monitors(sd.Phi, poles)

    vals, poles, mons = zip(*(point(D) for D in Ds))
    vals = np.array(vals)
    bifs: list[Bifurcation] = []
    dv = np.diff(vals)
    for k in range(1, n - 1):
        if dv[k - 1] * dv[k] < 0:
            sgn = -1.0 if dv[k - 1] > 0 else 1.0
            res = minimize_scalar(lambda D: sgn * parameter_for_duty(model, name, D),
                                  bounds=(Ds[k - 1], Ds[k + 1]), method="bounded", options={"xatol": tol})
            D = float(res.x)
            p, pl, _ = point(D)
            bifs.append(Bifurcation(p, "SNB", D, _critical_pole(pl, 1.0), monitor="fold"))
    targets = {"SNB": 1.0, "PDB": -1.0, "NSB": None}
    for kind in ("SNB", "PDB", "NSB"):
        for k in range(n - 1):
            if not _sign_changed(mons[k][kind], mons[k + 1][kind]):
                continue
            D = brentq(lambda D: point(D)[2][kind], Ds[k], Ds[k + 1], xtol=tol)
            if kind == "SNB" and any(b.kind == "SNB" and abs(b.D - D) < 1e-3 for b in bifs):
                continue
            p, pl, _ = point(D)
            bifs.append(Bifurcation(p, kind, float(D), _critical_pole(pl, targets[kind])))
    bifs.sort(key=lambda b: b.D)
    return DutySweepResult(name, Ds, vals, list(poles), bifs)
