"""Event-driven time-domain simulation of the switched system.

Each stage is affine, so segments are propagated exactly with matrix
exponentials; only the switching instants are found numerically. The trace
is the independent oracle against which the small-signal verdicts are checked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .converter.model import ConverterModel
from .errors import InsufficientDataError
from .numerics import expm_pair

DIVERGENCE_NORM = 1e12
CROSSING_XTOL = 1e-15  # relative to the period
MAX_OFF_PERIODS = 50


@dataclass
class SimTrace:
    """Samples of a simulated trajectory plus per-cycle bookkeeping.

    ``stage`` is 1 or 2. ``events`` holds ``(time, direction, used)`` where
    direction is +1 when y - h goes up through zero and ``used`` tells whether
    the crossing switched the stage (only the first per cycle does).
    ``strobe_times``/``strobe_states`` are the cycle starts (clock edges, or
    turn-on instants for constant on-time control). ``duties`` is the fraction
    of each cycle spent in stage S1.
    """

    times: np.ndarray
    states: np.ndarray
    y_vals: np.ndarray
    h_vals: np.ndarray
    stage: np.ndarray
    events: list = field(default_factory=list)
    strobe_times: np.ndarray = None
    strobe_states: np.ndarray = None
    duties: np.ndarray = None
    period: float = 0.0
    diverged: bool = False
    saturated_off: bool = False

    @property
    def n_cycles(self) -> int:
        return len(self.duties)

    def to_csv(self, path_or_file, state_names=None, every: int = 1):
        """Write ``t, states..., y, h, stage`` rows; ``every`` downsamples."""
        if hasattr(path_or_file, "write"):
            self._write_csv(path_or_file, state_names, every)
        else:
            with open(path_or_file, "w", newline="") as fh:
                self._write_csv(fh, state_names, every)

    def _write_csv(self, fh, state_names, every):
        n = self.states.shape[1]
        names = list(state_names) if state_names else [f"x{i + 1}" for i in range(n)]
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names, "y", "h", "stage"])
        for i in range(0, len(self.times), max(1, int(every))):
            w.writerow([repr(float(self.times[i])), *(repr(float(v)) for v in self.states[i]),
                        repr(float(self.y_vals[i])), repr(float(self.h_vals[i])), int(self.stage[i])])


class Simulator:
    """Exact stepping of one converter model.

    Step propagators for the uniform sub-grid are cached; segments that do not
    align with the grid get their own exponential.
    """

    def __init__(self, model: ConverterModel, samples_per_cycle: int = 32):
        self.model = model
        sys = model.system
        self.sys = sys
        self.u = np.asarray(model.u, dtype=float)
        self.ramp = model.ramp
        self.T = model.ramp.T
        self.K = int(samples_per_cycle)
        if self.K < 2:
            raise ValueError("samples_per_cycle must be at least 2")
        self.dt = self.T / self.K
        self.b = {1: sys.B1 @ self.u, 2: sys.B2 @ self.u}
        self.A = {1: sys.A1, 2: sys.A2}
        self.step = {k: expm_pair(self.A[k], self.dt, self.b[k]) for k in (1, 2)}
        self.sense = 1.0 if model.scheme.switch_sense == "y_above" else -1.0
        self.cotc = model.scheme.is_cotc
        self.t_on = model.scheme.on_time if self.cotc else None

    def propagate(self, stage: int, x, tau: float):
        if tau == 0.0:
            return np.array(x, dtype=float)
        E, g = expm_pair(self.A[stage], tau, self.b[stage])
        return E @ x + g

    def _grid_step(self, stage: int, x):
        E, g = self.step[stage]
        return E @ x + g

    def margin(self, x, t_in_cycle: float) -> float:
        """Signed distance ``sense * (y - h)``; the pre-switch stage holds while positive."""
        return self.sense * (self.sys.output(x, self.u) - float(self.ramp.h(t_in_cycle)))

    def _crossing(self, stage, x_a, t_a, span):
        """First root of the margin in (t_a, t_a + span], x_a being the state at t_a."""
        def g(tau):
            return self.margin(self.propagate(stage, x_a, tau), t_a + tau)
        tau = brentq(g, 0.0, span, xtol=CROSSING_XTOL * self.T, rtol=4 * np.finfo(float).eps)
        return tau, self.propagate(stage, x_a, tau)

    # one cycle -------------------------------------------------------------

    def cycle(self, x, record=None):
        """Advance one cycle from its start; returns ``(x_next, duty, cycle_length)``.

        ``record(t_local, x, stage)`` is called at sub-grid samples and events;
        event logging goes through ``record.event`` when present.
        """
        if self.cotc:
            return self._cycle_cotc(x, record)
        return self._cycle_fixed(x, record)

    def _cycle_fixed(self, x, record):
        T, dt = self.T, self.dt
        rec = record or _null_record
        stage = 1 if self.margin(x, 0.0) > 0 else 2
        rec(0.0, x, stage)
        d = 0.0 if stage == 2 else T
        t = 0.0
        k = 0
        while k < self.K:
            x_next = self._grid_step(stage, x)
            t_next = (k + 1) * dt
            if stage == 1 and self.margin(x_next, t_next if k + 1 < self.K else T) <= 0:
                tau, xd = self._crossing(1, x, t, dt)
                d = t + tau
                rec.event(d, -self.sense, True)
                stage = 2
                rec(d, xd, stage)
                x_next = self.propagate(2, xd, t_next - d)
            elif stage == 2 and d > 0 and rec.wants_events:
                m0, m1 = self.margin(x, t), self.margin(x_next, t_next)
                if (m0 > 0) != (m1 > 0) and t > d:
                    rec.event(t_next, 1 if m1 > m0 else -1, False)
            x, t, k = x_next, t_next, k + 1
            if k < self.K:
                rec(t, x, stage)
        return x, d / T, T

    def _cycle_cotc(self, x, record):
        dt, t_on = self.dt, self.t_on
        rec = record or _null_record
        rec(0.0, x, 1)
        n_on = int(t_on // dt)
        t = 0.0
        for _ in range(n_on):
            x = self._grid_step(1, x)
            t += dt
            rec(t, x, 1)
        x = self.propagate(1, x, t_on - t)
        t = t_on
        rec.event(t, 0, True)
        rec(t, x, 2)
        if self.margin(x, t) <= 0:
            rec.event(t, -self.sense, True)
            return x, 1.0, t
        t_max = t_on + MAX_OFF_PERIODS * self.T
        while t < t_max:
            x_next = self._grid_step(2, x)
            if self.margin(x_next, t + dt) <= 0:
                tau, xs = self._crossing(2, x, t, dt)
                rec.event(t + tau, -self.sense, True)
                return xs, t_on / (t + tau), t + tau
            x, t = x_next, t + dt
            rec(t, x, 2)
        return x, t_on / t, None

    def cycle_map(self, x):
        """State at the start of the next cycle (no recording)."""
        x_next, _, length = self.cycle(np.asarray(x, dtype=float))
        return x_next


class _NullRecord:
    wants_events = False

    def __call__(self, t, x, stage):
        pass

    def event(self, t, direction, used):
        pass


_null_record = _NullRecord()


class _Recorder:
    wants_events = True

    def __init__(self, sim: Simulator):
        self.sim = sim
        self.t0 = 0.0
        self.times, self.states, self.stages, self.events = [], [], [], []

    def __call__(self, t, x, stage):
        self.times.append(self.t0 + t)
        self.states.append(np.array(x, dtype=float))
        self.stages.append(stage)

    def event(self, t, direction, used):
        self.events.append((self.t0 + t, int(direction), bool(used)))


def simulate(model: ConverterModel, x_init, n_cycles: int, samples_per_cycle: int = 32) -> SimTrace:
    """Simulate ``n_cycles`` switching cycles from ``x_init``.

    Fixed frequency: stage S1 from each clock edge until the first crossing
    of y - h against the switching sense, then S2 to the cycle end; no
    crossing means the cycle is saturated. Constant on-time: S1 for the on
    time, then S2 until the trigger crossing. Blow-up past the divergence
    guard or a missing trigger ends the trace with a flag.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be at least 1")
    sim = Simulator(model, samples_per_cycle)
    x = np.asarray(x_init, dtype=float).reshape(-1)
    if x.size != model.system.dim:
        raise ValueError(f"x_init has {x.size} entries, model has {model.system.dim} states")
    rec = _Recorder(sim)
    strobe_t, strobe_x, duties = [], [], []
    diverged = saturated_off = False
    t0 = 0.0
    for _ in range(n_cycles):
        strobe_t.append(t0)
        strobe_x.append(x.copy())
        rec.t0 = t0
        x, duty, length = sim.cycle(x, rec)
        duties.append(duty)
        if length is None:
            saturated_off = True
            break
        t0 += length
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_NORM:
            diverged = True
            break
    if not diverged and not saturated_off:
        rec.t0 = t0
        rec(0.0, x, 1 if sim.cotc or sim.margin(x, 0.0) > 0 else 2)
    times = np.asarray(rec.times)
    states = np.asarray(rec.states)
    # collapse repeated time stamps (event samples on grid points) keeping the later stage
    keep = np.ones(len(times), dtype=bool)
    keep[:-1] = np.diff(times) > 0
    times, states = times[keep], states[keep]
    stages = np.asarray(rec.stages)[keep]
    y = states @ model.system.C + float(model.system.D @ model.u)
    local = _local_times(times, np.asarray(strobe_t + [t0]))
    return SimTrace(times, states, y, np.asarray(model.ramp.h(local), dtype=float), stages,
                    rec.events, np.asarray(strobe_t), np.asarray(strobe_x), np.asarray(duties),
                    sim.T, diverged, saturated_off)


def _local_times(times, starts):
    idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(starts) - 1)
    return times - starts[idx]


# period detection ------------------------------------------------------------

@dataclass(frozen=True)
class PeriodVerdict:
    """``kind`` is one of P1, P2, Pk, QuasiPeriodic, Divergent, Saturated."""

    kind: str
    k: int | None = None
    period_estimate: float | None = None

    def __str__(self):
        if self.kind == "Pk":
            return f"P{self.k}"
        if self.kind == "QuasiPeriodic":
            return f"QuasiPeriodic({self.period_estimate:.6g} s)"
        return self.kind


def _matches(X, lag, rtol):
    a, b = X[lag:], X[:-lag]
    scale = np.maximum(np.linalg.norm(b, axis=1), 1e-300)
    return bool(np.all(np.linalg.norm(a - b, axis=1) <= rtol * scale))


def dominant_angle(seq) -> float:
    """Dominant normalized angular frequency (rad/sample) of a scalar sequence.

    Peak of the periodogram (the Fourier transform of the autocorrelation)
    of the mean-removed sequence, refined by parabolic interpolation on a
    zero-padded grid. Non-integer periods are resolved this way.
    """
    s = np.asarray(seq, dtype=float)
    s = (s - s.mean()) * np.hanning(s.size)
    nfft = 1 << int(np.ceil(np.log2(16 * s.size)))
    p = np.abs(np.fft.rfft(s, nfft)) ** 2
    p[0] = 0.0
    i = int(np.argmax(p))
    if 0 < i < p.size - 1:
        a, b, c = np.log(p[i - 1:i + 2] + 1e-300)
        den = a - 2 * b + c
        off = 0.5 * (a - c) / den if den != 0 else 0.0
    else:
        off = 0.0
    return 2 * np.pi * (i + off) / nfft


def detect_period(trace: SimTrace, tail_cycles: int = 64, rtol: float = 1e-6, max_k: int = 8) -> PeriodVerdict:
    """Classify the asymptotic behaviour from the stroboscopic samples of the tail."""
    if trace.diverged:
        return PeriodVerdict("Divergent")
    if trace.saturated_off:
        return PeriodVerdict("Saturated")
    if trace.n_cycles < tail_cycles + 8:
        raise InsufficientDataError(
            f"trace has {trace.n_cycles} cycles, need at least {tail_cycles + 8}")
    duties = trace.duties[-tail_cycles:]
    if np.all(duties >= 1.0) or np.all(duties <= 0.0):
        return PeriodVerdict("Saturated")
    X = trace.strobe_states[-tail_cycles:]
    for k in range(1, max_k + 1):
        if _matches(X, k, rtol):
            if k == 1:
                return PeriodVerdict("P1", 1, trace.period)
            if k == 2:
                return PeriodVerdict("P2", 2, 2 * trace.period)
            return PeriodVerdict("Pk", k, k * trace.period)
    # scalar sequence: projection on the direction of largest variance
    Xc = X - X.mean(axis=0)
    scale = np.std(X, axis=0)
    scale[scale == 0] = 1.0
    _, _, vt = np.linalg.svd(Xc / scale, full_matrices=False)
    seq = (Xc / scale) @ vt[0]
    theta = dominant_angle(seq)
    mean_cycle = float(np.mean(np.diff(trace.strobe_times[-tail_cycles:])))
    return PeriodVerdict("QuasiPeriodic", None, 2 * np.pi / theta * mean_cycle)


# finite-difference monodromy --------------------------------------------------

def finite_difference_jacobian(model: ConverterModel, x0, eps: float | None = None,
                               n_steps: int = 5) -> np.ndarray:
    """Central-difference Jacobian of the one-cycle map at ``x0``.

    Each column is estimated on the step ladder ``eps, eps/10, ...``
    (default ``eps = 1e-6 (1 + |x0|)``) and the estimate where consecutive
    steps agree best is kept; badly scaled realizations make the map visibly
    nonlinear at the default step. Selection is per entry because entries of
    one column can sit at very different scales.
    """
    sim = Simulator(model)
    x0 = np.asarray(x0, dtype=float)
    if eps is None:
        eps = 1e-6 * (1.0 + np.linalg.norm(x0))
    n = x0.size

    def column(j, h):
        e = np.zeros(n)
        e[j] = h
        return (sim.cycle_map(x0 + e) - sim.cycle_map(x0 - e)) / (2 * h)

    J = np.empty((n, n))
    for j in range(n):
        cols = np.array([column(j, eps * 10.0 ** -k) for k in range(n_steps)])
        if n_steps == 1:
            J[:, j] = cols[0]
            continue
        # per entry: the larger step of the best-agreeing consecutive pair
        best = np.argmin(np.abs(np.diff(cols, axis=0)), axis=0)
        J[:, j] = cols[best, np.arange(n)]
    return J
