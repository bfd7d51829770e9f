"""Second-order (and lower) linear time-varying systems with switched coefficients.

A system of order n is stored by its coefficient list, highest derivative
first::

    order 2:  a2(t) y'' + a1(t) y' + a0(t) y = x
    order 1:  b1(t) y'  + b0(t) y  = x
    order 0:  b0 y = x

Each coefficient is a `PiecewiseCoefficient`: contiguous half-open pieces
``[t_start, t_end)``, each carrying a smooth `Expression`.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .expr import Const, DomainError, Expression, as_expr

__all__ = [
    "Piece",
    "PiecewiseCoefficient",
    "SwitchingSignal",
    "LtvSystem",
    "InitialState",
    "CommutativityConstants",
    "coefficient_at",
    "apply_switching",
    "breakpoints",
    "refine",
]

LEADING_EPS = 1e-12
LEADING_SAMPLES = 1000


@dataclass(frozen=True)
class Piece:
    start: float
    end: float
    expr: Expression

    @cached_property
    def derivatives(self):
        d1 = self.expr.diff()
        return (self.expr, d1, d1.diff())


def _check_contiguous(intervals, what):
    if not intervals:
        raise ValueError(f"{what} needs at least one piece")
    for (s0, e0), (s1, e1) in zip(intervals, intervals[1:]):
        if e0 != s1:
            raise ValueError(f"{what} pieces must be contiguous: {e0} != {s1}")
    for s, e in intervals:
        if not s < e:
            raise ValueError(f"{what} piece [{s}, {e}) is empty")


@dataclass(frozen=True)
class PiecewiseCoefficient:
    """Piecewise-smooth coefficient; breakpoints are the switching instants.

    At a breakpoint the right-hand piece owns the point unless the left side
    is requested explicitly. Derivatives are taken of the owning piece only;
    jumps contribute nothing.
    """

    pieces: tuple[Piece, ...]

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        _check_contiguous([(p.start, p.end) for p in self.pieces], "coefficient")

    @classmethod
    def smooth(cls, expr, start=-math.inf, end=math.inf):
        return cls((Piece(float(start), float(end), as_expr(expr)),))

    @classmethod
    def from_pieces(cls, pieces):
        """Build from ``(start, end, expr)`` triples."""
        return cls(tuple(Piece(float(s), float(e), as_expr(x)) for s, e, x in pieces))

    @property
    def start(self):
        return self.pieces[0].start

    @property
    def end(self):
        return self.pieces[-1].end

    @cached_property
    def breakpoints(self):
        return tuple(p.start for p in self.pieces[1:])

    @property
    def is_smooth(self):
        return len(self.pieces) == 1

    def piece_index(self, t, side="right"):
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        if t < self.start or t > self.end or (t == self.end and side == "right"):
            raise ValueError(f"t={t} outside coefficient horizon [{self.start}, {self.end})")
        bps = self.breakpoints
        if side == "right":
            return bisect.bisect_right(bps, t)
        return bisect.bisect_left(bps, t)

    def piece_at(self, t, side="right") -> Piece:
        return self.pieces[self.piece_index(t, side)]

    def value(self, t, order=0, side="right"):
        """Evaluate the ``order``-th derivative at scalar ``t``."""
        return self.piece_at(t, side).derivatives[order].evaluate(t)

    def values(self, ts, order=0, side="right"):
        """Vectorized `value` over an array of times."""
        ts = np.asarray(ts, dtype=float)
        out = np.empty_like(ts)
        if ts.size == 0:
            return out
        if ts.min() < self.start or ts.max() > self.end:
            raise ValueError(f"times outside coefficient horizon [{self.start}, {self.end})")
        idx = np.searchsorted(np.asarray(self.breakpoints), ts, side=side)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = self.pieces[i].derivatives[order].evaluate(ts[mask])
        return out

    def jump(self, t_break, order=0):
        """Right limit minus left limit of the ``order``-th derivative at a breakpoint."""
        return self.value(t_break, order, "right") - self.value(t_break, order, "left")

    def restricted(self, start, end) -> "PiecewiseCoefficient":
        pieces = [
            Piece(max(p.start, start), min(p.end, end), p.expr)
            for p in self.pieces
            if p.end > start and p.start < end
        ]
        return PiecewiseCoefficient(tuple(pieces))

    def map(self, fn) -> "PiecewiseCoefficient":
        return PiecewiseCoefficient(tuple(Piece(p.start, p.end, fn(p.expr)) for p in self.pieces))

    def __str__(self):
        if self.is_smooth:
            return str(self.pieces[0].expr)
        return "; ".join(f"[{p.start:g}, {p.end:g}): {p.expr}" for p in self.pieces)


def coefficient_at(c: PiecewiseCoefficient, t: float, order: int = 0, side: str = "right") -> float:
    return c.value(t, order, side)


@dataclass(frozen=True)
class SwitchingSignal:
    """Piecewise-constant switching signal sigma(t) as ``(start, end, level)`` rows."""

    levels: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        rows = tuple((float(s), float(e), float(v)) for s, e, v in self.levels)
        object.__setattr__(self, "levels", rows)
        _check_contiguous([(s, e) for s, e, _ in rows], "switching signal")

    @classmethod
    def from_starts(cls, starts: Sequence[float], values: Sequence[float], end=math.inf):
        """Levels that hold from each start time until the next one."""
        order = np.argsort(starts)
        starts = [float(starts[i]) for i in order]
        values = [float(values[i]) for i in order]
        ends = starts[1:] + [float(end)]
        return cls(tuple(zip(starts, ends, values)))

    def __call__(self, t):
        for s, e, v in self.levels:
            if s <= t < e:
                return v
        raise ValueError(f"t={t} outside switching signal horizon")


def apply_switching(template, signal: SwitchingSignal) -> PiecewiseCoefficient:
    """Coefficient ``base + gain*sigma(t)`` from a ``(base, gain)`` template."""
    base, gain = (float(x) for x in template)
    if gain == 0:
        return PiecewiseCoefficient.smooth(Const(base), signal.levels[0][0], signal.levels[-1][1])
    return PiecewiseCoefficient(tuple(Piece(s, e, Const(base + gain * v)) for s, e, v in signal.levels))


def _as_coefficient(c):
    if isinstance(c, PiecewiseCoefficient):
        return c
    return PiecewiseCoefficient.smooth(as_expr(c))


def refine(coefficients: Sequence[PiecewiseCoefficient]):
    """Common refinement of several coefficients.

    Returns ``(start, end, exprs)`` triples on which every coefficient is a
    single smooth expression.
    """
    start = max(c.start for c in coefficients)
    end = min(c.end for c in coefficients)
    cuts = sorted({b for c in coefficients for b in c.breakpoints if start < b < end})
    edges = [start, *cuts, end]
    out = []
    for s, e in zip(edges, edges[1:]):
        if math.isinf(s):
            probe = e - 1.0 if math.isfinite(e) else 0.0
        elif math.isinf(e):
            probe = s
        else:
            probe = 0.5 * (s + e)
        out.append((s, e, tuple(c.piece_at(probe).expr for c in coefficients)))
    return out


@dataclass(frozen=True)
class LtvSystem:
    """Linear time-varying system of order 0, 1 or 2.

    ``coefficients`` are ordered highest derivative first: ``(a2, a1, a0)``,
    ``(b1, b0)`` or ``(b0,)``. Plain expressions, numbers and grammar strings
    are accepted and promoted to smooth coefficients.
    """

    coefficients: tuple[PiecewiseCoefficient, ...]
    domain_start: float = -math.inf
    name: str = field(default="", compare=False)

    def __post_init__(self):
        coeffs = tuple(_as_coefficient(c) for c in self.coefficients)
        if len(coeffs) not in (1, 2, 3):
            raise ValueError("a system needs 1, 2 or 3 coefficients (order 0, 1 or 2)")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "domain_start", float(self.domain_start))

    @classmethod
    def second_order(cls, a2, a1, a0, domain_start=-math.inf, name=""):
        return cls((a2, a1, a0), domain_start, name)

    @classmethod
    def first_order(cls, b1, b0, domain_start=-math.inf, name=""):
        return cls((b1, b0), domain_start, name)

    @classmethod
    def scalar(cls, b0, name=""):
        return cls((b0,), -math.inf, name)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self) -> PiecewiseCoefficient:
        return self.coefficients[0]

    def coefficient(self, power: int) -> PiecewiseCoefficient:
        """Coefficient multiplying the ``power``-th derivative of the output."""
        return self.coefficients[self.order - power]

    @property
    def horizon(self):
        start = max([self.domain_start] + [c.start for c in self.coefficients])
        end = min(c.end for c in self.coefficients)
        return start, end

    @property
    def breakpoints(self):
        return tuple(sorted({b for c in self.coefficients for b in c.breakpoints}))

    def check_leading(self, t_start, t_end, eps=LEADING_EPS, samples=LEADING_SAMPLES):
        """Raise `DomainError` if the leading coefficient vanishes on ``[t_start, t_end]``.

        Sampled (uniform grid per piece plus piece endpoints), not proved.
        """
        lo, hi = self.horizon
        if t_start < lo or t_end > hi:
            raise DomainError(f"window [{t_start}, {t_end}] leaves the system horizon [{lo}, {hi})")
        if self.order == 0 and self.leading.is_smooth and self.leading.pieces[0].expr.is_constant:
            if abs(self.leading.pieces[0].expr.value) <= eps:
                raise DomainError("scalar gain b0 must be nonzero")
            return
        for p in self.leading.restricted(t_start, t_end).pieces:
            ts = np.linspace(p.start, p.end, samples)
            vals = p.expr.evaluate(ts)
            if np.any(np.abs(vals) <= eps):
                bad = ts[np.argmin(np.abs(vals))]
                raise DomainError(f"leading coefficient vanishes near t={bad:g}")
            # a sign change between samples hides a zero the grid stepped over
            flips = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
            if flips.size:
                bad = 0.5 * (ts[flips[0]] + ts[flips[0] + 1])
                raise DomainError(f"leading coefficient changes sign (vanishes) near t={bad:g}")
            # touching zeros (t^2 at 0) do not flip sign; refine each dip
            mag = np.abs(vals)
            mid, left, right = mag[1:-1], mag[:-2], mag[2:]
            dips = np.nonzero((mid <= left) & (mid <= right) & ((mid < left) | (mid < right)))[0] + 1
            for i in dips:
                t_min, v_min = _refine_min(p.expr, ts[i - 1], ts[i + 1])
                if v_min <= eps:
                    raise DomainError(f"leading coefficient vanishes near t={t_min:g}")

    def __str__(self):
        if self.order == 2:
            names = ("a2", "a1", "a0") if not self.name.upper().startswith("B") else ("b2", "b1", "b0")
        else:
            names = ("b1", "b0")[-len(self.coefficients):]
        return ", ".join(f"{n} = {c}" for n, c in zip(names, self.coefficients))


def _refine_min(expr, lo, hi, iters=80):
    """Golden-section search for the minimum of ``|expr|`` on ``[lo, hi]``."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    f = lambda t: abs(float(expr.evaluate(t)))
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def breakpoints(s: LtvSystem, window) -> list[float]:
    lo, hi = window
    return [b for b in s.breakpoints if lo < b < hi]


@dataclass(frozen=True)
class InitialState:
    t0: float
    y0: float = 0.0
    dy0: float = 0.0

    @property
    def is_zero(self):
        return self.y0 == 0 and self.dy0 == 0

    def vector(self, order):
        return [self.y0, self.dy0][:order]


@dataclass(frozen=True)
class CommutativityConstants:
    k2: float
    k1: float
    k0: float

    def __post_init__(self):
        for name in ("k2", "k1", "k0"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def partner_order(self) -> int:
        if self.k2 != 0:
            return 2
        return 1 if self.k1 != 0 else 0

    def __iter__(self):
        return iter((self.k2, self.k1, self.k0))
