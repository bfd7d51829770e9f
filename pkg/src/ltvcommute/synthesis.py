"""Commutative partners of a second-order system and their auxiliary terms.

Given ``A: a2 y'' + a1 y' + a0 y = x`` and constants ``(k2, k1, k0)``, the
partner ``B`` has::

    b2 = k2*a2
    b1 = k2*a1 + k1*sqrt(a2)
    b0 = k2*a0 + k1*f_A + k0,      f_A = (2*a1 - a2') / (4*sqrt(a2))

and the pair commutes (relaxed) iff ``k1 = 0`` or
``gamma = a0 - f_A^2 - sqrt(a2)*f_A'`` is constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .expr import Const, DomainError, sqrt
from .model import CommutativityConstants, LtvSystem, Piece, PiecewiseCoefficient, refine

__all__ = [
    "AuxQuantities",
    "aux_quantities",
    "compute_f_A",
    "compute_f_A_dot",
    "compute_gamma",
    "synth_second_order",
    "synth_first_order",
    "synth_scalar",
    "synthesize_partner",
    "feedback_gains",
    "FeedbackGains",
    "fit_constants",
]


def _require_second_order(A: LtvSystem):
    if A.order != 2:
        raise ValueError(f"system A must be second order, got order {A.order}")


@dataclass(frozen=True)
class AuxQuantities:
    """f_A, its derivative and gamma as piecewise expressions on A's refinement."""

    f_A: PiecewiseCoefficient
    f_A_dot: PiecewiseCoefficient
    gamma: PiecewiseCoefficient


def aux_quantities(A: LtvSystem) -> AuxQuantities:
    _require_second_order(A)
    return _aux(A.coefficients)


@lru_cache(maxsize=256)
def _aux(coefficients) -> AuxQuantities:
    f_pieces, fd_pieces, g_pieces = [], [], []
    for start, end, (a2, a1, a0) in refine(coefficients):
        root = sqrt(a2)
        f = (2.0 * a1 - a2.diff()) / (4.0 * root)
        fd = f.diff()
        gamma = a0 - f * f - root * fd
        f_pieces.append(Piece(start, end, f))
        fd_pieces.append(Piece(start, end, fd))
        g_pieces.append(Piece(start, end, gamma))
    return AuxQuantities(
        PiecewiseCoefficient(tuple(f_pieces)),
        PiecewiseCoefficient(tuple(fd_pieces)),
        PiecewiseCoefficient(tuple(g_pieces)),
    )


def _check_positive_leading(A: LtvSystem, t, side):
    a2 = A.coefficients[0].value(t, 0, side)
    if not a2 > 0:
        raise DomainError(f"a2({t}) = {a2:g}; the partner formulas need a2 > 0")


def compute_f_A(A: LtvSystem, t: float, side: str = "right") -> float:
    """f_A(t) = (2 a1 - a2') / (4 sqrt(a2)), using the piece that owns ``t``."""
    _require_second_order(A)
    _check_positive_leading(A, t, side)
    return aux_quantities(A).f_A.value(t, 0, side)


def compute_f_A_dot(A: LtvSystem, t: float, side: str = "right") -> float:
    _require_second_order(A)
    _check_positive_leading(A, t, side)
    return aux_quantities(A).f_A_dot.value(t, 0, side)


def compute_gamma(A: LtvSystem, t: float, side: str = "right") -> float:
    """gamma(t) = a0 - f_A^2 - sqrt(a2) f_A'; constant (= A0) for a commuting family."""
    _require_second_order(A)
    _check_positive_leading(A, t, side)
    return aux_quantities(A).gamma.value(t, 0, side)


def _synth(A: LtvSystem, k2, k1, k0, name):
    rows = [[] for _ in range(3)]
    for start, end, (a2, a1, a0) in refine(A.coefficients):
        root = sqrt(a2)
        f = (2.0 * a1 - a2.diff()) / (4.0 * root)
        exprs = (a2 * k2, a1 * k2 + root * k1, a0 * k2 + f * k1 + Const(k0))
        for row, e in zip(rows, exprs):
            row.append(Piece(start, end, e))
    coeffs = [PiecewiseCoefficient(tuple(r)) for r in rows]
    if k2 == 0:
        coeffs = coeffs[1:]
    return LtvSystem(tuple(coeffs), A.domain_start, name)


def synth_second_order(A: LtvSystem, k: CommutativityConstants, name="B") -> LtvSystem:
    """Second-order partner ``B`` of ``A`` for constants with ``k2 != 0``.

    ``k1 = 0`` gives the feedback conjugate of A.
    """
    _require_second_order(A)
    k2, k1, k0 = k
    if k2 == 0:
        raise ValueError("k2 = 0 gives a first-order partner; use synth_first_order")
    return _synth(A, k2, k1, k0, name)


def synth_first_order(A: LtvSystem, k1: float, k0: float, name="B") -> LtvSystem:
    """First-order partner ``b1 = k1 sqrt(a2)``, ``b0 = k1 f_A + k0``."""
    _require_second_order(A)
    if k1 == 0:
        raise ValueError("k1 = 0 gives a scalar partner; use synth_scalar")
    return _synth(A, 0.0, float(k1), float(k0), name)


def synth_scalar(k0: float, name="B") -> LtvSystem:
    """Constant-gain partner ``b0 y = x``; ``k0 = 1`` is the identity."""
    if k0 == 0:
        raise ValueError("a scalar partner needs k0 != 0 (b0 y = x must be invertible)")
    return LtvSystem.scalar(Const(float(k0)), name)


def synthesize_partner(A: LtvSystem, k: CommutativityConstants, name="B") -> LtvSystem:
    """Dispatch on the partner order selected by ``k``."""
    k = CommutativityConstants(*k)
    if k.partner_order == 2:
        return synth_second_order(A, k, name)
    if k.partner_order == 1:
        return synth_first_order(A, k.k1, k.k0, name)
    return synth_scalar(k.k0, name)


class FeedbackGains(NamedTuple):
    alpha: float
    sigma: float
    unity: bool  # 1/alpha + sigma == 1: arbitrary equal ICs are admissible


def feedback_gains(k: CommutativityConstants, tol: float = 1e-12) -> FeedbackGains:
    """Feedforward/feedback gains of the ``k1 = 0`` conjugate: ``alpha = 1/k2``, ``sigma = k0``."""
    k2, k1, k0 = k
    if k1 != 0:
        raise ValueError("feedback conjugates have k1 = 0")
    if k2 == 0:
        raise ValueError("k2 must be nonzero for a feedback conjugate")
    return FeedbackGains(1.0 / k2, k0, math.isclose(k2 + k0, 1.0, rel_tol=0.0, abs_tol=tol))


def fit_constants(A: LtvSystem, B: LtvSystem, ts) -> tuple[CommutativityConstants, float]:
    """Least-squares ``(k2, k1, k0)`` that best express ``B`` through ``A``.

    Returns the constants and the max absolute coefficient residual over the
    sample times ``ts``; a residual above rounding level means B is not in
    A's commuting family. Constants below 1e-10 (relative) are set to 0.
    """
    _require_second_order(A)
    ts = np.asarray(ts, dtype=float)
    aux = aux_quantities(A)
    a2, a1, a0 = (c.values(ts) for c in A.coefficients)
    f = aux.f_A.values(ts)
    zero, one = np.zeros_like(ts), np.ones_like(ts)
    padded = [None] * (3 - len(B.coefficients)) + list(B.coefficients)
    rows, rhs = [], []
    # b2 = a2 k2; b1 = a1 k2 + sqrt(a2) k1; b0 = a0 k2 + f k1 + k0
    for coeff, cols in zip(padded, [(a2, zero, zero), (a1, np.sqrt(a2), zero), (a0, f, one)]):
        rows.append(np.column_stack(cols))
        rhs.append(zero if coeff is None else coeff.values(ts))
    M, y = np.vstack(rows), np.concatenate(rhs)
    sol, *_ = np.linalg.lstsq(M, y, rcond=None)
    residual = float(np.max(np.abs(M @ sol - y)))
    # exact zeros select the theorem case, so snap rounding noise
    sol[np.abs(sol) < 1e-10 * max(1.0, np.max(np.abs(sol)))] = 0.0
    return CommutativityConstants(*sol), residual
