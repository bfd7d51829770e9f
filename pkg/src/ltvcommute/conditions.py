"""Explicit commutativity conditions for a second-order system A and its partner.

Relaxed (zero initial conditions): B must come from A through ``(k2, k1, k0)``
and, when ``k1 != 0``, ``gamma`` must be a constant ``A0``.

Non-relaxed: in addition the common initial vector ``Y = (y(t0), y'(t0))``
must lie in the null space of the 2x2 condition matrix ``M(t0)``; a nonzero
``Y`` exists only if ``delta = det M`` vanishes.

Switched coefficients are handled piece by piece. A breakpoint where ``f_A``
jumps (``a2``, ``a1`` or ``a2'`` jump) makes ``f_A'`` unbounded there, and a
breakpoint where ``gamma`` changes value breaks constancy; both are listed
as violated breakpoints.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import CommutativityConstants, LtvSystem
from .synthesis import aux_quantities, compute_f_A, compute_f_A_dot, compute_gamma, synthesize_partner

__all__ = [
    "TheoremCase",
    "RelaxedCheck",
    "ConditionReport",
    "Tolerances",
    "check_relaxed",
    "delta_determinant",
    "condition_matrix",
    "required_ic_ray",
    "block_matrices",
    "first_order_block_matrices",
    "nonrelaxed_residual",
    "classify_pair",
    "partner_mismatch",
    "coefficient_gap",
]

GRID_POINTS = 512


class TheoremCase(enum.Enum):
    SECOND_ORDER_GENERAL = "SecondOrderGeneral"  # k2 != 0, k1 != 0
    FEEDBACK = "Feedback"  # k2 != 0, k1 == 0
    FIRST_ORDER_PARTNER = "FirstOrderPartner"  # k2 == 0, k1 != 0
    SCALAR_PARTNER = "ScalarPartner"  # k2 == k1 == 0

    @classmethod
    def from_constants(cls, k: CommutativityConstants) -> "TheoremCase":
        k2, k1, _ = k
        if k2 != 0:
            return cls.SECOND_ORDER_GENERAL if k1 != 0 else cls.FEEDBACK
        return cls.FIRST_ORDER_PARTNER if k1 != 0 else cls.SCALAR_PARTNER

    @property
    def theorem(self) -> int:
        return list(TheoremCase).index(self) + 1


@dataclass(frozen=True)
class Tolerances:
    gamma: float = 1e-8
    delta: float = 1e-9
    residual: float = 1e-9


@dataclass(frozen=True)
class RelaxedCheck:
    ok: bool
    A0: float
    max_dev: float
    violated_breakpoints: tuple[float, ...]
    piece_A0: tuple[float, ...] = ()
    piece_dev: tuple[float, ...] = ()
    piece_starts: tuple[float, ...] = ()
    tol: float = 1e-8

    @property
    def holds_until(self) -> float:
        """End of the initial stretch on which gamma stays constant and unbroken."""
        until = self.violated_breakpoints[0] if self.violated_breakpoints else math.inf
        for start, dev in zip(self.piece_starts, self.piece_dev):
            if dev > self.tol:
                return min(until, start)
        return until


def _window_pieces(A: LtvSystem, window):
    lo, hi = window
    gamma = aux_quantities(A).gamma
    return [p for p in gamma.restricted(lo, hi).pieces]


def check_relaxed(A: LtvSystem, k: CommutativityConstants, window, tol: float = 1e-8,
                  n_grid: int = GRID_POINTS) -> RelaxedCheck:
    """Check constancy of gamma on ``window`` by sampling every smooth piece.

    ``ok`` is vacuously true for ``k1 = 0``. Otherwise ``ok`` requires every
    piece to be constant within ``tol`` and all pieces to share the same
    ``A0``. Violated breakpoints are reported separately and do not affect
    ``ok``: between switches the conditions can hold exactly.
    """
    k = CommutativityConstants(*k)
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"empty window {window}")
    A.check_leading(lo, hi)
    pieces = _window_pieces(A, window)
    t_ref = pieces[0].start
    A0 = pieces[0].expr.evaluate(t_ref)
    piece_A0, piece_dev, max_dev = [], [], 0.0
    for p in pieces:
        ts = np.linspace(p.start, p.end, n_grid)
        g = p.expr.evaluate(ts)
        piece_A0.append(float(g[0]))
        piece_dev.append(float(np.max(np.abs(g - g[0]))))
        max_dev = max(max_dev, float(np.max(np.abs(g - A0))))
    ok = k.k1 == 0 or max_dev <= tol
    violated = []
    if k.k1 != 0:
        aux = aux_quantities(A)
        scale = max(1.0, abs(A0))
        for b in A.breakpoints:
            if not lo < b < hi:
                continue
            f_jump = abs(aux.f_A.jump(b))
            g_jump = abs(aux.gamma.jump(b))
            a_jump = max(abs(A.coefficients[0].jump(b)), abs(A.coefficients[1].jump(b)))
            if f_jump > tol or g_jump > tol * scale or a_jump > 0:
                violated.append(b)
    if k.k1 == 0:
        piece_dev = [0.0] * len(pieces)
    return RelaxedCheck(ok, float(A0), max_dev, tuple(violated), tuple(piece_A0), tuple(piece_dev),
                        tuple(p.start for p in pieces), tol)


def delta_determinant(A: LtvSystem, k: CommutativityConstants, t0: float) -> float:
    """delta = (k2 + k0 - 1)^2 - k1^2 + k1^2 gamma(t0)."""
    k2, k1, k0 = k
    c = k2 + k0 - 1.0
    return c * c - k1 * k1 + k1 * k1 * compute_gamma(A, t0)


def condition_matrix(A: LtvSystem, k: CommutativityConstants, t0: float) -> np.ndarray:
    """2x2 matrix whose null space holds the admissible ``(y(t0), y'(t0))``."""
    k2, k1, k0 = k
    c = k2 + k0 - 1.0
    a2 = A.coefficients[0].value(t0)
    a0 = A.coefficients[2].value(t0)
    f = compute_f_A(A, t0)
    fd = compute_f_A_dot(A, t0)
    r = math.sqrt(a2)
    return np.array([
        [c + k1 * f, r * k1],
        [k1 / r * (1.0 - a0 + r * fd), c - k1 * f],
    ])


def required_ic_ray(A: LtvSystem, k: CommutativityConstants, t0: float) -> float:
    """Slope ``s`` of the admissible initial conditions ``(y, s*y)``.

    Solves the first row of the condition matrix for ``y'(t0)``. The ray is
    admissible only if ``delta_determinant`` vanishes at ``t0``; otherwise
    only the zero initial state commutes, which the caller must check.
    """
    k2, k1, k0 = k
    if k1 == 0:
        raise ValueError("k1 = 0: no ray; admissible ICs are all (k2+k0=1) or only zero")
    a2 = A.coefficients[0].value(t0)
    a1 = A.coefficients[1].value(t0)
    da2 = A.coefficients[0].value(t0, 1)
    return -((k2 + k0 - 1.0) / k1 / math.sqrt(a2) + (2.0 * a1 - da2) / (4.0 * a2))


def _values(S: LtvSystem, t):
    """Coefficients and first derivatives at ``t``, lowest power first, padded with zeros."""
    vals = [(c.value(t), c.value(t, 1)) for c in reversed(S.coefficients)]
    return vals + [(0.0, 0.0)] * (3 - len(vals))


def block_matrices(S: LtvSystem, t: float):
    """``(M1, M2)`` blocks of a second-order system at ``t``.

    ``M1 = [[s0, s1], [s0', s1' + s0]]``, ``M2 = [[s2, 0], [s2' + s1, s2]]``.
    """
    if S.order != 2:
        raise ValueError("block_matrices needs a second-order system")
    (s0, ds0), (s1, ds1), (s2, ds2) = _values(S, t)
    M1 = np.array([[s0, s1], [ds0, ds1 + s0]])
    M2 = np.array([[s2, 0.0], [ds2 + s1, s2]])
    return M1, M2


def first_order_block_matrices(A: LtvSystem, B: LtvSystem, t: float):
    """Blocks ``(A1, A2, B1, B2)`` for a second-order A and first-order B."""
    if A.order != 2 or B.order != 1:
        raise ValueError("need a second-order A and a first-order B")
    (a0, _), (a1, _), (a2, _) = _values(A, t)
    (b0, db0), (b1, db1), _ = _values(B, t)
    A1 = np.array([[a0, a1]])
    A2 = np.array([[a2]])
    B1 = np.array([[b0], [db0]])
    B2 = np.array([[b1, 0.0], [db1 + b0, b1]])
    return A1, A2, B1, B2


def nonrelaxed_residual(A: LtvSystem, B: LtvSystem, Y, t0: float) -> float:
    """Infinity norm of the second-set condition applied to the common IC ``Y``.

    Order-2 partner: ``B2 [A2^-1 (I - A1) - B2^-1 (I - B1)] Y`` from the block
    matrices. Order-1 partner: the 3x3 system on ``(y_A, y_A', y_B)`` with
    ``y_B = y_A``, rows 2-3 pre-multiplied by ``B2``. Scalar partner:
    ``(1 - b0) Y``. With the ``B2`` scaling the order-1/2 residuals equal
    ``|M Y|`` for the condition matrix ``M``.
    """
    y0, dy0 = (float(v) for v in Y)
    Yv = np.array([y0, dy0])
    if A.order != 2:
        raise ValueError("system A must be second order")
    if B.order == 2:
        A1, A2 = block_matrices(A, t0)
        B1, B2 = block_matrices(B, t0)
        eye = np.eye(2)
        E = _solve(A2, eye - A1) - _solve(B2, eye - B1)
        return float(np.max(np.abs(B2 @ E @ Yv)))
    if B.order == 1:
        (a0, _), (a1, _), (a2, _) = _values(A, t0)
        (b0, db0), (b1, db1), _ = _values(B, t0)
        if a2 == 0 or b1 == 0:
            raise np.linalg.LinAlgError(f"singular leading coefficient at t0={t0}")
        g = (db1 + b0) / b1**2
        N = np.array([
            [1.0, 0.0, -1.0],
            [-1.0 / b1, 1.0, b0 / b1],
            [-a0 / a2 + g, -a1 / a2 - 1.0 / b1, 1.0 / a2 - g * b0 + db0 / b1],
        ])
        r = N @ np.array([y0, dy0, y0])
        _, _, _, B2 = first_order_block_matrices(A, B, t0)
        return float(np.max(np.abs(np.concatenate([r[:1], B2 @ r[1:]]))))
    b0 = B.coefficients[0].value(t0)
    return float(np.max(np.abs((1.0 - b0) * Yv)))


PARTNER_TOL = 1e-9


def coefficient_gap(c, ref, window, samples: int = 64) -> float:
    """Max of ``|c - ref| / (1 + |ref|)`` over ``window``, sampled per common piece."""
    lo, hi = window
    edges = sorted({lo, hi, *(b for b in c.breakpoints + ref.breakpoints if lo < b < hi)})
    gap = 0.0
    for a, b in zip(edges, edges[1:]):
        ts = np.linspace(a, b, samples)
        probe = 0.5 * (a + b)
        vc = c.piece_at(probe).expr.evaluate(ts)
        vr = ref.piece_at(probe).expr.evaluate(ts)
        gap = max(gap, float(np.max(np.abs(vc - vr) / (1.0 + np.abs(vr)))))
    return gap


def partner_mismatch(B: LtvSystem, reference: LtvSystem, window, samples: int = 64) -> float:
    """Largest `coefficient_gap` between two systems (inf if their orders differ)."""
    if B.order != reference.order:
        return math.inf
    return max(coefficient_gap(c, r, window, samples) for c, r in zip(B.coefficients, reference.coefficients))


def _solve(M, rhs):
    if abs(np.linalg.det(M)) == 0:
        raise np.linalg.LinAlgError("singular block matrix")
    return np.linalg.solve(M, rhs)


@dataclass
class ConditionReport:
    """Verdict of the explicit conditions plus every intermediate quantity."""

    theorem_case: TheoremCase
    constants: CommutativityConstants
    ic_mode: str
    t0: float
    window: tuple[float, float]
    Y: tuple[float, float]
    gamma_constant: bool
    A0: float
    gamma_max_dev: float
    delta: float
    matrix_M: np.ndarray
    ic_slope: Optional[float]
    relaxed_ok: bool
    nonrelaxed_ok: bool
    violated_breakpoints: tuple[float, ...]
    residual: float = 0.0
    relaxed_until: float = math.inf
    nonrelaxed_until: float = math.inf
    notes: list[str] = field(default_factory=list)

    @property
    def holds_until(self) -> float:
        """Time up to which every condition of the selected IC mode holds."""
        return self.nonrelaxed_until if self.ic_mode == "nonrelaxed" else self.relaxed_until

    @property
    def commutative(self) -> bool:
        return self.holds_until >= self.window[1]

    @property
    def verdict(self) -> str:
        if self.commutative:
            return "commutative"
        if self.holds_until > self.t0:
            return f"commutative until t={self.holds_until:g}"
        return "not commutative"

    def as_dict(self) -> dict:
        return {
            "theorem_case": self.theorem_case.value,
            "theorem": self.theorem_case.theorem,
            "ic_mode": self.ic_mode,
            "t0": self.t0,
            "k2": self.constants.k2,
            "k1": self.constants.k1,
            "k0": self.constants.k0,
            "relaxed_ok": self.relaxed_ok,
            "nonrelaxed_ok": self.nonrelaxed_ok,
            "A0": self.A0,
            "gamma_max_dev": self.gamma_max_dev,
            "delta": self.delta,
            "ic_slope": self.ic_slope,
            "residual": self.residual,
            "violated_breakpoints": list(self.violated_breakpoints),
            "holds_until": self.holds_until,
            "verdict": self.verdict,
        }

    def to_dump(self) -> str:
        """Flat ``key=value`` lines."""
        lines = []
        for key, value in self.as_dict().items():
            if isinstance(value, list):
                value = ",".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            elif value is None:
                value = "none"
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        k = self.constants
        M = self.matrix_M
        lines = [
            f"Theorem {self.theorem_case.theorem} ({self.theorem_case.value}), "
            f"k = ({k.k2:.12g}, {k.k1:.12g}, {k.k0:.12g})",
            f"  gamma constant: {'yes' if self.gamma_constant else 'no'} "
            f"(A0 = {self.A0:.12g}, max deviation {self.gamma_max_dev:.3g})",
        ]
        if self.relaxed_until >= self.window[1]:
            lines.append("  relaxed conditions: hold")
        elif self.relaxed_until > self.t0:
            lines.append(f"  relaxed conditions: hold until t={self.relaxed_until:g}")
        else:
            lines.append("  relaxed conditions: fail")
        if self.violated_breakpoints:
            bps = ", ".join(f"{b:g}" for b in self.violated_breakpoints)
            lines.append(f"  violated at switching instants: {bps}")
        lines += [
            f"  delta(t0={self.t0:g}) = {self.delta:.12g}",
            f"  M(t0) = [[{M[0, 0]:.9g}, {M[0, 1]:.9g}], [{M[1, 0]:.9g}, {M[1, 1]:.9g}]]",
        ]
        if self.ic_slope is not None:
            lines.append(f"  admissible ICs: y'(t0) = {self.ic_slope:.12g} * y(t0)")
        if self.ic_mode == "nonrelaxed":
            if self.nonrelaxed_until >= self.window[1]:
                state = "hold"
            elif self.nonrelaxed_until > self.t0:
                state = f"hold until t={self.nonrelaxed_until:g}"
            else:
                state = "fail"
            lines.append(
                f"  Y = ({self.Y[0]:.12g}, {self.Y[1]:.12g}), residual {self.residual:.3g}; "
                f"non-relaxed conditions: {state}"
            )
        lines.append(f"  verdict: {self.verdict}")
        lines += [f"  note: {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def classify_pair(A: LtvSystem, k: CommutativityConstants, ic_mode: str = "relaxed", Y=None,
                  t0: float = 0.0, window=None, tol: Tolerances = Tolerances(),
                  B: Optional[LtvSystem] = None) -> ConditionReport:
    """Classify ``A`` and its partner for ``k`` under the four theorem cases.

    ``window`` defaults to ``(t0, t0 + 10)``. ``B`` defaults to the
    synthesized partner; pass it to check a partner built elsewhere.
    """
    if ic_mode not in ("relaxed", "nonrelaxed"):
        raise ValueError(f"ic_mode must be 'relaxed' or 'nonrelaxed', got {ic_mode!r}")
    k = CommutativityConstants(*k)
    case = TheoremCase.from_constants(k)
    window = (t0, t0 + 10.0) if window is None else tuple(window)
    Y = (0.0, 0.0) if Y is None or ic_mode == "relaxed" else tuple(float(v) for v in Y)
    notes = []
    in_family = True
    synthesized = synthesize_partner(A, k)
    if B is None:
        B = synthesized
    else:
        gap = partner_mismatch(B, synthesized, window)
        if gap > PARTNER_TOL:
            in_family = False
            notes.append(f"B is not the partner generated by k (max coefficient gap {gap:.3g})")
    # a partner whose leading coefficient vanishes is not a system at all
    B.check_leading(*window)

    relaxed = check_relaxed(A, k, window, tol.gamma)
    gamma_constant = relaxed.max_dev <= tol.gamma
    delta = delta_determinant(A, k, t0)
    M = condition_matrix(A, k, t0)
    slope = required_ic_ray(A, k, t0) if k.k1 != 0 else None
    residual = nonrelaxed_residual(A, B, Y, t0)
    zero_ic = Y == (0.0, 0.0)

    if case in (TheoremCase.SECOND_ORDER_GENERAL, TheoremCase.FIRST_ORDER_PARTNER):
        relaxed_ok = relaxed.ok
        if abs(delta) > tol.delta:
            notes.append("delta != 0 at t0: only the zero initial state is admissible")
        at_t0 = zero_ic or (abs(delta) <= tol.delta and residual <= tol.residual)
        nonrelaxed_ok = relaxed_ok and at_t0
    elif case is TheoremCase.FEEDBACK:
        relaxed_ok = True
        unity = math.isclose(k.k2 + k.k0, 1.0, abs_tol=tol.delta)
        if not unity:
            notes.append("k2 + k0 != 1: feedback conjugates commute only from the zero state")
        nonrelaxed_ok = at_t0 = zero_ic or unity
    else:
        relaxed_ok = True
        identity = math.isclose(k.k0, 1.0, abs_tol=tol.delta)
        if not identity:
            notes.append("b0 != 1: a scalar partner commutes with nonzero ICs only as the identity")
        nonrelaxed_ok = at_t0 = zero_ic or identity
    if not in_family:
        relaxed_ok = nonrelaxed_ok = False
    relaxed_until = relaxed.holds_until if in_family else float(t0)
    nonrelaxed_until = relaxed_until if at_t0 else float(t0)

    return ConditionReport(
        theorem_case=case,
        constants=k,
        ic_mode=ic_mode,
        t0=float(t0),
        window=window,
        Y=Y,
        gamma_constant=gamma_constant,
        A0=relaxed.A0,
        gamma_max_dev=relaxed.max_dev,
        delta=delta,
        matrix_M=M,
        ic_slope=slope,
        relaxed_ok=relaxed_ok,
        nonrelaxed_ok=nonrelaxed_ok,
        violated_breakpoints=relaxed.violated_breakpoints,
        residual=residual,
        relaxed_until=relaxed_until,
        nonrelaxed_until=nonrelaxed_until,
        notes=notes,
    )
