"""Dense linear algebra and complex-curve kernels.

All matrices here are small (at most 16 x 16), so every routine works on plain
dense numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from .errors import DimensionError, OnBoundaryError, ResolutionError

MAX_DIM = 16

# winding-number sampling policy
INITIAL_POINTS = 1024
MAX_POINTS = 2**20
BOUNDARY_RTOL = 1e-9


def _as_square(A, name="A") -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if A.shape[0] > MAX_DIM:
        raise DimensionError(f"{name} is {A.shape[0]}x{A.shape[0]}; at most {MAX_DIM} supported")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def expm(A, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{A t}``.

    Scaling-and-squaring with a Pade approximant (scipy); never uses an
    eigendecomposition, so defective matrices are fine.
    """
    A = _as_square(A)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return scipy.linalg.expm(A * t)


def expm_pair(A, t: float, B) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(e^{At}, int_0^t e^{A s} ds B)`` from one augmented exponential.

    The integral is the top-right block of ``exp([[A, B], [0, 0]] t)``, which
    needs no inverse of A, so integrators (zero eigenvalues) are handled exactly.
    """
    A = _as_square(A)
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 1
    B2 = B.reshape(-1, 1) if vector else B
    if B2.ndim != 2 or B2.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B2.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    n, m = A.shape[0], B2.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B2
    E = scipy.linalg.expm(M * t)
    G = E[:n, n:]
    return E[:n, :n], (G[:, 0] if vector else G)


def expm_integral(A, t: float, B) -> np.ndarray:
    """``int_0^t e^{A s} ds B`` computed without inverting A."""
    return expm_pair(A, t, B)[1]


def eigenvalues(M) -> np.ndarray:
    """All eigenvalues of a real square matrix, conjugate pairs adjacent.

    Ordering: descending modulus, then for a conjugate pair the member with
    positive imaginary part first. Pairs are symmetrized exactly.
    """
    M = _as_square(M, "M")
    if M.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    ev = np.linalg.eigvals(M).astype(complex)
    return pair_conjugates(ev)


def pair_conjugates(values, tol: float = 1e-9) -> np.ndarray:
    values = list(np.asarray(values, dtype=complex))
    out = []
    while values:
        # largest modulus first; ties resolved by real part for determinism
        k = max(range(len(values)), key=lambda i: (round(abs(values[i]), 12), values[i].real, values[i].imag))
        v = values.pop(k)
        scale = max(1.0, abs(v))
        if abs(v.imag) <= tol * scale:
            out.append(complex(v.real, 0.0))
            continue
        j = min(range(len(values)), key=lambda i: abs(values[i] - v.conjugate())) if values else None
        if j is not None and abs(values[j] - v.conjugate()) <= 1e-6 * scale:
            w = values.pop(j)
            re = 0.5 * (v.real + w.real)
            im = 0.5 * (abs(v.imag) + abs(w.imag))
            out.extend([complex(re, im), complex(re, -im)])
        else:
            out.append(v)
    return np.array(out, dtype=complex)


@dataclass(frozen=True)
class ComplexCurve:
    """Ordered samples ``points[k] = f(thetas[k])`` of a complex-valued curve."""

    thetas: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=float)
        pts = np.asarray(self.points, dtype=complex)
        if th.shape != pts.shape or th.ndim != 1:
            raise DimensionError("thetas and points must be 1-D and of equal length")
        if th.size > 1 and np.any(np.diff(th) <= 0):
            raise ValueError("thetas must be strictly increasing")
        if not np.all(np.isfinite(pts)):
            raise ValueError("curve has non-finite points")
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.thetas.size

    def is_closed(self, rtol: float = 1e-9) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.points))))
        return abs(self.points[0] - self.points[-1]) <= rtol * scale


def _boundary_tol(points: np.ndarray, point: complex) -> float:
    # Scale by the typical distance of the curve from the point rather than its
    # diameter: a near-integrator spike at one end can make the diameter many
    # orders larger than the part of the curve that passes the point.
    typical = float(np.median(np.abs(points - point)))
    return BOUNDARY_RTOL * max(typical, abs(point), 1e-300)


def winding_number(curve, point: complex = 0.0, refine: Callable | None = None,
                   max_points: int = MAX_POINTS) -> int:
    """Signed number of counter-clockwise turns of a closed curve about ``point``.

    ``curve`` is a :class:`ComplexCurve` or a sequence of complex samples whose
    first and last entries coincide. When two consecutive samples differ in
    argument by more than pi/2 and ``refine`` (theta -> value) is supplied, the
    gap is bisected until resolved; without ``refine`` a
    :class:`ResolutionError` is raised instead.

    Raises :class:`OnBoundaryError` when the point lies on the curve.
    """
    if isinstance(curve, ComplexCurve):
        thetas, pts = curve.thetas, curve.points
    else:
        pts = np.asarray(curve, dtype=complex)
        thetas = np.arange(pts.size, dtype=float)
        if refine is not None:
            raise ValueError("refine needs a ComplexCurve carrying its parameter values")
    if pts.size < 3:
        raise ValueError("need at least three samples")
    scale = max(1.0, float(np.max(np.abs(pts))))
    if abs(pts[0] - pts[-1]) > 1e-6 * scale:
        raise ValueError("curve is not closed")
    if refine is not None:
        thetas, pts = refine_for_point(refine, thetas, pts, point, max_points=max_points)
    rel = pts - point
    tol = _boundary_tol(pts, point)
    hit = np.flatnonzero(np.abs(rel) <= tol)
    if hit.size:
        raise OnBoundaryError(f"point {point} lies on the curve", index=int(hit[0]))
    steps = np.angle(rel[1:] / rel[:-1])
    if np.max(np.abs(steps)) > np.pi / 2:
        raise ResolutionError("argument step exceeds pi/2; curve too coarse")
    return int(np.rint(steps.sum() / (2 * np.pi)))


def _unsafe(rel: np.ndarray) -> np.ndarray:
    """Flag segments whose chord is long relative to their distance from the point."""
    a, b = rel[:-1], rel[1:]
    step = np.abs(np.angle(b / a))
    near = np.minimum(np.abs(a), np.abs(b))
    return (step > np.pi / 8) | (np.abs(b - a) > 0.5 * near)


def refine_for_point(func: Callable, thetas, pts, point: complex,
                     max_points: int = MAX_POINTS, min_width: float = 1e-13):
    """Bisect curve segments until each one is safely resolved around ``point``.

    ``func`` maps an array of parameter values to curve values.
    """
    thetas = np.asarray(thetas, dtype=float)
    pts = np.asarray(pts, dtype=complex)
    while True:
        rel = pts - point
        bad = _unsafe(rel)
        tol = _boundary_tol(pts, point)
        # a segment whose endpoint sits on the point cannot be resolved further
        bad &= (np.abs(rel[:-1]) > tol) & (np.abs(rel[1:]) > tol)
        bad &= np.diff(thetas) > min_width * max(1.0, float(np.max(np.abs(thetas))))
        idx = np.flatnonzero(bad)
        if idx.size == 0:
            return thetas, pts
        if thetas.size + idx.size > max_points:
            raise ResolutionError(f"refinement exceeded {max_points} points")
        mids = 0.5 * (thetas[idx] + thetas[idx + 1])
        vals = np.asarray(func(mids), dtype=complex)
        thetas = np.insert(thetas, idx + 1, mids)
        pts = np.insert(pts, idx + 1, vals)


def sample_adaptive(func: Callable, lo: float, hi: float, point: complex,
                    n0: int = INITIAL_POINTS, max_points: int = MAX_POINTS,
                    extra: Sequence[float] = ()) -> ComplexCurve:
    """Sample ``func`` on [lo, hi], refined until safe for encirclement counting."""
    th = np.linspace(lo, hi, n0 + 1)
    if len(extra):
        th = np.unique(np.concatenate([th, [x for x in extra if lo < x < hi]]))
    pts = np.asarray(func(th), dtype=complex)
    th, pts = refine_for_point(func, th, pts, point, max_points=max_points)
    return ComplexCurve(th, pts)


def find_bracketed_roots(f: Callable[[float], float], interval: tuple[float, float],
                         grid: int = 200, tol: float = 1e-10) -> list[float]:
    """All roots of ``f`` in ``interval`` detectable by sign changes on a grid.

    Each bracket is solved by Brent's method and then polished with secant
    steps. Returns sorted roots; empty when there is no sign change.
    """
    lo, hi = interval
    if grid < 2:
        raise ValueError("grid must be >= 2")
    xs = np.linspace(lo, hi, grid)
    fs = np.array([f(x) for x in xs], dtype=float)
    scale = max(1.0, float(np.max(np.abs(fs[np.isfinite(fs)]))) if np.any(np.isfinite(fs)) else 1.0)
    roots = []
    for i in range(grid):
        if fs[i] == 0.0:
            roots.append(float(xs[i]))
    for i in range(grid - 1):
        a, b, fa, fb = xs[i], xs[i + 1], fs[i], fs[i + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or fa == 0.0 or fb == 0.0:
            continue
        if np.sign(fa) != np.sign(fb):
            r = brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            roots.append(_polish(f, r, a, b, tol * scale))
    return sorted(roots)


def _polish(f, x, a, b, atol):
    fx = f(x)
    h = 1e-7 * max(1.0, abs(b - a))
    for _ in range(4):
        if abs(fx) <= atol:
            break
        slope = (f(x + h) - f(x - h)) / (2 * h)
        if slope == 0:
            break
        xn = x - fx / slope
        if not (a <= xn <= b):
            break
        fn = f(xn)
        if abs(fn) >= abs(fx):
            break
        x, fx, h = xn, fn, h * 0.1
    return float(x)
