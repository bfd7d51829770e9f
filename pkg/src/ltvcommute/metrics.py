"""Deviation metrics between the AB and BA responses and scenario verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conditions import ConditionReport
from .simulate import Trajectory, sim_tolerance

__all__ = ["DeviationSummary", "GridMismatchError", "deviation", "ScenarioReport", "scenario_report", "DEBOUNCE", "FLOOR_RATIO"]

DEBOUNCE = 10
FLOOR_RATIO = 1e-3


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class DeviationSummary:
    max_abs: float
    l2: float
    onset_time: Optional[float]
    threshold: float
    detect_time: Optional[float] = None
    t: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    abs_dev: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def max_abs_before(self, t_limit: float) -> float:
        """Largest deviation over samples strictly before ``t_limit``."""
        n = int(np.searchsorted(self.t, t_limit, side="left"))
        return float(self.abs_dev[:n].max()) if n else 0.0


def _first_sustained(above: np.ndarray, run: int) -> Optional[int]:
    if above.size < run:
        return None
    # windowed count of samples above threshold
    counts = np.convolve(above.astype(int), np.ones(run, dtype=int), mode="valid")
    hits = np.nonzero(counts == run)[0]
    return int(hits[0]) if hits.size else None


def deviation(tA: Trajectory, tB: Trajectory, threshold: Optional[float] = None,
              debounce: int = DEBOUNCE, floor_ratio: float = FLOOR_RATIO) -> DeviationSummary:
    """Compare two trajectories sampled on the same grid.

    The divergence is detected when ``|y_A - y_B|`` exceeds ``threshold`` for
    ``debounce`` consecutive samples (``detect_time``). ``onset_time`` walks
    back from there to the last sample still at the noise floor
    (``floor_ratio * threshold``), i.e. where the excursion began; growth
    after a switch is polynomial, so the threshold crossing itself lags the
    true onset by ``sqrt(threshold / curvature)`` regardless of the step.
    ``threshold`` defaults to `sim_tolerance` of the pair.
    """
    if tA.t.shape != tB.t.shape or not np.array_equal(tA.t, tB.t):
        raise GridMismatchError("trajectories are sampled on different grids")
    if threshold is None:
        threshold = sim_tolerance(tA, tB)
    e = np.abs(tA.y_out - tB.y_out)
    t = tA.t
    max_abs = float(e.max()) if e.size else 0.0
    l2 = float(math.sqrt(np.sum(e[:-1] ** 2 * np.diff(t)))) if e.size > 1 else 0.0
    onset = detect = None
    i = _first_sustained(e > threshold, debounce)
    if i is not None:
        detect = float(t[i])
        floor = floor_ratio * threshold
        j = i
        while j > 0 and e[j - 1] > floor:
            j -= 1
        onset = float(t[j - 1]) if j > 0 else float(t[0])
    return DeviationSummary(max_abs, l2, onset, float(threshold), detect, t, e)


@dataclass
class ScenarioReport:
    name: str
    verdict: str
    agreement: bool
    forced: Optional[DeviationSummary]
    ic: Optional[DeviationSummary]
    reasons: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        def val(d, attr):
            return None if d is None else getattr(d, attr)

        return {
            "verdict": self.verdict,
            "max_abs_forced": val(self.forced, "max_abs"),
            "max_abs_ic": val(self.ic, "max_abs"),
            "onset_forced": val(self.forced, "onset_time"),
            "onset_ic": val(self.ic, "onset_time"),
            "threshold_forced": val(self.forced, "threshold"),
            "threshold_ic": val(self.ic, "threshold"),
            "agreement": "AGREEMENT" if self.agreement else "CONTRADICTION",
        }

    def to_dump(self) -> str:
        out = []
        for key, value in self.as_dict().items():
            out.append(f"{key}={'none' if value is None else (repr(value) if isinstance(value, float) else value)}")
        return "\n".join(out) + "\n"

    def to_text(self) -> str:
        lines = [f"scenario {self.name}: {self.verdict}"]
        for label, d in (("forced", self.forced), ("initial-condition", self.ic)):
            if d is None:
                continue
            onset = "none" if d.onset_time is None else f"{d.onset_time:g}"
            lines.append(
                f"  {label} responses: max |AB-BA| = {d.max_abs:.3e} "
                f"(threshold {d.threshold:.3e}), onset {onset}"
            )
        lines += [f"  {r}" for r in self.reasons]
        lines += [f"  note: {n}" for n in self.notes]
        lines.append("  AGREEMENT" if self.agreement else "  CONTRADICTION")
        return "\n".join(lines) + "\n"


def _judge(label, holds_until, t0, t_end, d: Optional[DeviationSummary], h, trivial):
    """Does the simulated pair behave as the algebra predicts?"""
    if d is None:
        return True, None
    if trivial:
        return True, f"{label}: zero responses, trivially equal"
    slack = 2.0 * h
    if holds_until >= t_end:
        ok = d.max_abs <= d.threshold
        return ok, f"{label}: expected equal responses, max deviation {d.max_abs:.3g}"
    if holds_until > t0:
        before = d.max_abs_before(holds_until - slack)
        ok = before <= d.threshold
        return ok, (f"{label}: expected equal responses before t={holds_until:g}, "
                    f"max deviation there {before:.3g}")
    ok = d.max_abs > d.threshold
    return ok, f"{label}: expected different responses, max deviation {d.max_abs:.3g}"


def scenario_report(cond: ConditionReport, forced: Optional[DeviationSummary] = None,
                    ic: Optional[DeviationSummary] = None, h: float = 0.0, name: str = "",
                    trivial_forced: bool = False, trivial_ic: bool = False) -> ScenarioReport:
    """Cross-check the algebraic verdict against simulated evidence.

    Forced responses are judged against the relaxed conditions and
    initial-condition responses against the non-relaxed ones. Where the
    conditions hold only until a switching instant, the responses must agree
    before it; what happens after is not predicted. Mark a pair ``trivial``
    when both responses are identically zero (zero input, zero state).
    """
    t0, t_end = cond.window
    reasons = []
    ok_f, why_f = _judge("forced", cond.relaxed_until, t0, t_end, forced, h, trivial_forced)
    nonrelaxed_until = cond.nonrelaxed_until if cond.ic_mode == "nonrelaxed" else cond.relaxed_until
    ok_i, why_i = _judge("initial-condition", nonrelaxed_until, t0, t_end, ic, h, trivial_ic)
    reasons += [w for w in (why_f, why_i) if w]
    return ScenarioReport(name, cond.verdict, ok_f and ok_i, forced, ic, reasons, list(cond.notes))
