"""Loop gain, critical function, F-plot / Nyquist / Bode curves and classification.

Sign conventions: ``encirclements`` are counted clockwise, as for the
discrete-time Nyquist criterion, so with a stable open loop the count equals
the number of sampled-data poles outside the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import IndentationRequiredError, LoopGainPoleError, OnBoundaryError
from .numerics import ComplexCurve, eigenvalues, sample_adaptive, winding_number
from .sampled import MARGINAL_BAND, SampledDynamics, pole_report

UNIT_CIRCLE_TOL = 1e-9
THETA_TOL = 0.05
_CHUNK = 4096


def _resolvent_apply(M: np.ndarray, z: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(z I - M)^{-1} v`` for every z in a 1-D array; returns (len(z), N)."""
    n = M.shape[0]
    out = np.empty((z.size, n), dtype=complex)
    eye = np.eye(n)
    for k in range(0, z.size, _CHUNK):
        zz = z[k:k + _CHUNK]
        mats = zz[:, None, None] * eye[None] - M[None]
        out[k:k + _CHUNK] = np.linalg.solve(mats, np.broadcast_to(v.astype(complex), (zz.size, n))[..., None])[..., 0]
    return out


def _check_off_spectrum(sd: SampledDynamics, z: np.ndarray):
    ev = np.linalg.eigvals(sd.Phi0)
    if ev.size and z.size:
        dist = np.min(np.abs(z[:, None] - ev[None, :]))
        if dist <= 1e-12 * max(1.0, float(np.max(np.abs(ev)))):
            raise LoopGainPoleError("z coincides with an eigenvalue of the open-loop transition")


def loop_gain(sd: SampledDynamics, z):
    """``N(z) = Psi (z I - Phi0)^{-1} Gamma``; scalar or array input."""
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    _check_off_spectrum(sd, zs)
    vals = _resolvent_apply(sd.Phi0, zs, sd.Gamma) @ sd.Psi
    return vals if np.ndim(z) else complex(vals[0])


def critical_function(sd: SampledDynamics, z):
    """Left side of the critical condition M(z) = m_a.

    Fixed frequency: ``C x'(d-) + C e^{A1 d} (z I - Phi0)^{-1} Gamma``.
    Constant on-time: ``C (I - z^{-1} Phi0)^{-1} x'(0-)`` with
    ``Phi0 = e^{A2 (T-d)} e^{A1 d}``. This is the product order of the
    monodromy; the reversed product gives the same roots only when A1 and A2
    commute (as in the buck).
    """
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    _check_off_spectrum(sd, zs)
    if sd.cotc:
        # (I - z^-1 Phi0)^-1 v = z (z I - Phi0)^-1 v
        vals = zs * (_resolvent_apply(sd.Phi0, zs, sd.slope) @ sd.C)
    else:
        vals = sd.C_slope + _resolvent_apply(sd.Phi0, zs, sd.Gamma) @ (sd.C @ sd.E_on)
    return vals if np.ndim(z) else complex(vals[0])


def _require_off_circle(sd: SampledDynamics):
    ev = np.linalg.eigvals(sd.Phi0)
    gap = np.min(np.abs(np.abs(ev) - 1.0)) if ev.size else np.inf
    if gap <= UNIT_CIRCLE_TOL:
        raise IndentationRequiredError(
            "open-loop transition has an eigenvalue on the unit circle; "
            "replace the pure integrator by a small pole (raise delta)")
    return ev


def _curve(sd: SampledDynamics, func, point: complex, half: bool, n0: int) -> ComplexCurve:
    ev = _require_off_circle(sd)
    extra = [abs(np.angle(e)) for e in ev]

    def f(theta):
        return func(sd, np.exp(1j * np.asarray(theta)))

    c = sample_adaptive(f, 0.0, np.pi, point, n0=n0, extra=extra)
    pts = c.points.copy()
    # values at theta = 0 and pi are real for a real system
    pts[0] = pts[0].real
    pts[-1] = pts[-1].real
    if half:
        return ComplexCurve(c.thetas, pts)
    th = np.concatenate([-c.thetas[:0:-1], c.thetas])
    full = np.concatenate([np.conj(pts[:0:-1]), pts])
    return ComplexCurve(th, full)


def f_plot(sd: SampledDynamics, half: bool = True, n0: int = 1024) -> ComplexCurve:
    """F(theta) = M(e^{i theta}); half plot on [0, pi] or full on [-pi, pi]."""
    return _curve(sd, critical_function, complex(sd.m_a), half, n0)


def nyquist_plot(sd: SampledDynamics, half: bool = True, n0: int = 1024) -> ComplexCurve:
    """N(e^{i theta}), theta = omega T, half or full (conjugate-completed)."""
    return _curve(sd, loop_gain, -1.0 + 0j, half, n0)


def encirclements(curve: ComplexCurve, point: complex) -> int:
    """Clockwise encirclements of ``point`` by a full closed curve."""
    return -winding_number(curve, point)


@dataclass(frozen=True)
class PhaseCrossing:
    """A -180 degree crossing of the loop gain; ``endpoint`` marks omega_s/2,
    where a real negative N counts as a crossing without a sign change."""

    omega: float
    gain_margin_db: float
    endpoint: bool = False


@dataclass(frozen=True)
class GainCrossing:
    omega: float
    phase_margin_deg: float


@dataclass(frozen=True)
class BodeCurve:
    omegas: np.ndarray
    magnitude_db: np.ndarray
    phase_deg: np.ndarray
    phase_crossings: tuple[PhaseCrossing, ...] = ()
    gain_crossings: tuple[GainCrossing, ...] = ()

    @property
    def gain_margin_db(self) -> float | None:
        """Margin at the -180 degree crossing closest to 0 dB, if any."""
        if not self.phase_crossings:
            return None
        return min(self.phase_crossings, key=lambda c: abs(c.gain_margin_db)).gain_margin_db

    @property
    def interior_phase_crossings(self) -> tuple[PhaseCrossing, ...]:
        return tuple(c for c in self.phase_crossings if not c.endpoint)

    @property
    def phase_margin_deg(self) -> float | None:
        if not self.gain_crossings:
            return None
        return min(self.gain_crossings, key=lambda c: abs(c.phase_margin_deg)).phase_margin_deg


def _wrap180(deg):
    return (np.asarray(deg) + 180.0) % 360.0 - 180.0


def bode_plot(sd: SampledDynamics, n_points: int = 2048, decades: float = 4.0) -> BodeCurve:
    """Magnitude and phase of N(e^{j omega T}) on log-spaced omega up to omega_s/2."""
    T = sd.period
    ws = 2 * np.pi / T
    omegas = np.logspace(np.log10(ws / 2) - decades + np.log10(2), np.log10(ws / 2), n_points)
    omegas[-1] = ws / 2
    N = loop_gain(sd, np.exp(1j * omegas * T))
    N[-1] = N[-1].real
    mag = 20 * np.log10(np.abs(N))
    ph = np.degrees(np.unwrap(np.angle(N)))

    def gain_at(w):
        return complex(loop_gain(sd, np.exp(1j * w * T)))

    crossings = []
    im = N.imag
    for k in range(n_points - 1):
        if im[k] == 0.0 or np.sign(im[k]) == np.sign(im[k + 1]) or im[k + 1] == 0.0:
            continue
        w = brentq(lambda w: gain_at(w).imag, omegas[k], omegas[k + 1], xtol=1e-12 * omegas[k + 1])
        g = gain_at(w)
        if g.real < 0:
            crossings.append(PhaseCrossing(w, -20 * np.log10(abs(g))))
    if N[-1].real < 0:
        crossings.append(PhaseCrossing(float(omegas[-1]), float(-20 * np.log10(abs(N[-1]))), True))
    gains = []
    lm = np.log(np.abs(N))
    for k in range(n_points - 1):
        if np.sign(lm[k]) != np.sign(lm[k + 1]) and lm[k] != 0.0:
            w = brentq(lambda w: np.log(abs(gain_at(w))), omegas[k], omegas[k + 1], xtol=1e-12 * omegas[k + 1])
            gains.append(GainCrossing(w, float(_wrap180(np.degrees(np.angle(gain_at(w))) + 180.0))))
    return BodeCurve(omegas, mag, ph, tuple(crossings), tuple(gains))


def pole_class(poles, theta_tol: float = THETA_TOL) -> str | None:
    """Bifurcation type from the location of critical poles."""
    kinds = set()
    for z in np.atleast_1d(poles):
        th = abs(np.angle(z))
        if th <= theta_tol:
            kinds.add("SNB")
        elif th >= np.pi - theta_tol:
            kinds.add("PDB")
        else:
            kinds.add("NSB")
    if not kinds:
        return None
    order = ["SNB", "PDB", "NSB"]
    return "+".join(k for k in order if k in kinds)


def theta_class(theta: float, theta_tol: float = THETA_TOL) -> str:
    th = abs(theta)
    if th <= theta_tol:
        return "SNB"
    if th >= np.pi - theta_tol:
        return "PDB"
    return "NSB"


@dataclass(frozen=True)
class BifurcationReport:
    """Stability verdict and bifurcation type of one operating point.

    ``bif_class`` comes from the poles outside the unit circle (authoritative,
    ``None`` when stable). ``near_class`` is the type of the largest-modulus
    pole whether or not it has crossed. ``curve_class`` is the advisory type
    read off the F-plot: the angle where F comes closest to the m_a point.
    """

    stable: bool
    encirclements: int
    nyquist_encirclements: int
    n_outside: int
    bif_class: str | None
    near_class: str | None
    curve_class: str
    theta_critical: float
    distance_to_critical: float
    predicted_oscillation_rad_s: float | None
    poles: np.ndarray = field(repr=False)
    F0: float = 0.0
    Fpi: float = 0.0
    m_a: float = 0.0
    on_boundary: bool = False

    @property
    def consistent(self) -> bool:
        return self.encirclements == self.n_outside == self.nyquist_encirclements

    @property
    def suggested_m_a(self) -> float | None:
        """Ramp slope that stops a period doubling: max(m_a, F(pi))."""
        if self.bif_class and "PDB" in self.bif_class:
            return max(self.m_a, self.Fpi)
        return None

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "class": self.bif_class,
            "near_class": self.near_class,
            "curve_class": self.curve_class,
            "encirclements": self.encirclements,
            "nyquist_encirclements": self.nyquist_encirclements,
            "n_outside": self.n_outside,
            "theta_critical": self.theta_critical,
            "distance_to_critical": self.distance_to_critical,
            "predicted_oscillation_rad_s": self.predicted_oscillation_rad_s,
            "F0": self.F0,
            "Fpi": self.Fpi,
            "m_a": self.m_a,
            "suggested_m_a": self.suggested_m_a,
            "on_boundary": self.on_boundary,
            "poles": [[float(z.real), float(z.imag)] for z in self.poles],
        }


def classify(sd: SampledDynamics, n0: int = 1024) -> BifurcationReport:
    """Encirclement count of the full F-plot plus pole-based bifurcation type."""
    pr = pole_report(sd)
    m_a = complex(sd.m_a)
    half = f_plot(sd, half=True, n0=n0)
    dist = np.abs(half.points - m_a)
    k = int(np.argmin(dist))
    theta = float(half.thetas[k])
    full = ComplexCurve(np.concatenate([-half.thetas[:0:-1], half.thetas]),
                        np.concatenate([np.conj(half.points[:0:-1]), half.points]))
    on_boundary = False
    try:
        n_f = encirclements(full, m_a)
    except OnBoundaryError:
        on_boundary, n_f = True, pr.n_outside
    nyq = nyquist_plot(sd, half=False, n0=n0)
    try:
        n_n = encirclements(nyq, -1.0)
    except OnBoundaryError:
        on_boundary, n_n = True, pr.n_outside
    outside = pr.poles[np.abs(pr.poles) > 1 + 1e-9]
    cls = pole_class(outside)
    top = pr.poles[np.argmax(np.abs(pr.poles))] if pr.poles.size else None
    near = pole_class([top]) if top is not None else None
    nsb = (cls and "NSB" in cls) or (near == "NSB" and abs(abs(top) - 1) <= 1e-3)
    osc = theta / sd.period if nsb else None
    return BifurcationReport(
        stable=pr.n_outside == 0, encirclements=n_f, nyquist_encirclements=n_n, n_outside=pr.n_outside,
        bif_class=cls, near_class=near, curve_class=theta_class(theta), theta_critical=theta,
        distance_to_critical=float(dist[k]), predicted_oscillation_rad_s=osc, poles=pr.poles,
        F0=float(half.points[0].real), Fpi=float(half.points[-1].real), m_a=sd.m_a, on_boundary=on_boundary,
    )
