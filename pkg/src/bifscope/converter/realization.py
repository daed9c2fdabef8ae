"""State-space realization of compensators and plant/compensator composition."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import DimensionError, RealizationError
from .model import SwitchedSystem, TransferFunction


def tf_to_state_space(tf: TransferFunction, balance: bool = False):
    """Controllable-canonical realization ``(A, B, C, D)`` of a proper ``tf``.

    ``B`` is a column (n x 1), ``C`` a row (1 x n), ``D`` a float. A constant
    transfer function yields empty (0 x 0) state matrices. With ``balance`` a
    diagonal similarity is applied to tame wide coefficient ranges; the
    transfer function is unchanged.
    """
    if not tf.is_proper:
        raise RealizationError(f"improper transfer function (num degree {len(tf.num) - 1} > den degree {tf.order})")
    den = np.asarray(tf.den, dtype=float)
    num = np.asarray(tf.num, dtype=float)
    lead = den[0]
    den = den / lead
    num = num / lead
    n = den.size - 1
    num = np.concatenate([np.zeros(n + 1 - num.size), num])
    D = float(num[0])
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), D
    # strictly proper remainder: num - D * den
    rem = num[1:] - D * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem.reshape(1, n).copy()
    if balance:
        # balance the whole system matrix [[A, B], [C, 0]] so states, input and
        # output rows end up on comparable scales; x = S z  =>  A' = S^-1 A S,
        # B' = S^-1 B, C' = C S
        M = np.zeros((n + 1, n + 1))
        M[:n, :n], M[:n, n:], M[n:, :n] = A, B, C
        _, (S, _) = scipy.linalg.matrix_balance(M, permute=False, separate=True)
        S = S[:n] / S[n]
        A = A * S[None, :] / S[:, None]
        B = B / S[:, None]
        C = C * S[None, :]
    return A, B, C, D


def state_space_to_tf(A, B, C, D) -> TransferFunction:
    """Transfer function of a SISO realization (characteristic-polynomial method)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0] if A.size else 0
    if n == 0:
        return TransferFunction((float(D),), (1.0,))
    B = np.asarray(B, dtype=float).reshape(n, 1)
    C = np.asarray(C, dtype=float).reshape(1, n)
    den = np.poly(A)
    # det(sI - A + B C) = det(sI - A) (1 + C (sI - A)^-1 B)
    num = np.poly(A - B @ C) - den + float(D) * den
    return TransferFunction(tuple(num), tuple(den))


def compose_plant_compensator(plant: SwitchedSystem, realization, sense_row=None,
                              reference_index: int = 1, comp_state_names=None) -> SwitchedSystem:
    """Close the compensator around the plant: ``y = G_c (u[ref] - sense x_plant)``.

    The plant's own ``C``/``D`` are ignored; the returned system has the
    compensator states appended after the plant states. ``sense_row`` defaults
    to the plant output row ``E1`` (which must equal ``E2``).
    """
    Ac, Bc, Cc, Dc = realization
    Ac = np.atleast_2d(np.asarray(Ac, dtype=float))
    nc = Ac.shape[0] if Ac.size else 0
    Ac = Ac.reshape(nc, nc)
    Bc = np.asarray(Bc, dtype=float).reshape(nc, 1)
    Cc = np.asarray(Cc, dtype=float).reshape(1, nc)
    Dc = float(Dc)
    n = plant.dim
    m = plant.n_inputs
    if sense_row is None:
        if not np.allclose(plant.E1, plant.E2):
            raise DimensionError("plant output row differs between stages; pass sense_row explicitly")
        sense_row = plant.E1
    sense = np.asarray(sense_row, dtype=float).reshape(-1)
    if sense.size != n:
        raise DimensionError(f"sense_row has {sense.size} entries, plant has {n} states")
    if not 0 <= reference_index < m:
        raise DimensionError("reference_index out of range")
    ref = np.zeros(m)
    ref[reference_index] = 1.0

    def aug(Ap, Bp):
        A = np.zeros((n + nc, n + nc))
        A[:n, :n] = Ap
        A[n:, :n] = -Bc @ sense[None, :]
        A[n:, n:] = Ac
        B = np.zeros((n + nc, m))
        B[:n] = Bp
        B[n:] = Bc @ ref[None, :]
        return A, B

    A1, B1 = aug(plant.A1, plant.B1)
    A2, B2 = aug(plant.A2, plant.B2)
    C = np.concatenate([-Dc * sense, Cc.reshape(-1)])
    D = Dc * ref
    pad = np.zeros(nc)
    names = tuple(comp_state_names or (f"z{i + 1}" for i in range(nc)))
    return SwitchedSystem(A1, A2, B1, B2, C, D,
                          np.concatenate([plant.E1, pad]), np.concatenate([plant.E2, pad]),
                          state_names=tuple(plant.state_names) + names,
                          input_names=plant.input_names)
