"""Fixed-step RK4 simulation of single systems and cascades.

The step grid is split at every switching instant of the simulated systems,
so each breakpoint is a grid point and each step sees a single smooth piece
of every coefficient. The state is carried across a breakpoint unchanged.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .expr import DomainError
from .model import InitialState, LtvSystem

__all__ = [
    "InputSignal",
    "Trajectory",
    "SimulationError",
    "to_state_space",
    "simulate_chain",
    "simulate_cascade",
    "simulate_single",
    "superposition_check",
    "sim_tolerance",
    "step_grid",
]

logger = logging.getLogger(__name__)

SIM_REL_TOL = 1e-5
LEADING_EPS = 1e-12


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class InputSignal:
    """``amplitude * sin(2 pi frequency t + phase)``, or identically zero."""

    kind: str = "zero"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "sine"):
            raise ValueError(f"unknown input kind {self.kind!r}")

    @classmethod
    def sine(cls, amplitude, frequency, phase=0.0):
        return cls("sine", float(amplitude), float(frequency), float(phase))

    @classmethod
    def zero(cls):
        return cls()

    def __call__(self, t):
        if self.kind == "zero":
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        return self.amplitude * np.sin(2.0 * np.pi * self.frequency * np.asarray(t, dtype=float) + self.phase)


@dataclass
class Trajectory:
    """Sampled response: ``y_out`` is the cascade output, ``y_mid`` the first stage output."""

    t: np.ndarray
    y_out: np.ndarray
    y_mid: np.ndarray
    h: float
    ordering: str = ""
    scenario: str = ""
    diagnostic: Optional[str] = None
    states: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def truncated(self):
        return self.diagnostic is not None

    def to_csv(self, path_or_buf=None) -> str:
        """Write ``t,y_out,y_mid`` rows with 17 significant digits."""
        buf = io.StringIO()
        buf.write("t,y_out,y_mid\n")
        for row in zip(self.t, self.y_out, self.y_mid):
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path, h=math.nan, ordering="", scenario=""):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], h, ordering, scenario)


def sim_tolerance(*trajectories: Trajectory, rel: float = SIM_REL_TOL) -> float:
    """Equality threshold ``rel * (1 + max |y_out|)`` over the given runs."""
    peak = max((float(np.max(np.abs(tr.y_out))) for tr in trajectories if tr.y_out.size), default=0.0)
    return rel * (1.0 + peak)


def to_state_space(S: LtvSystem, t: float, side: str = "right"):
    """Companion form at ``t``.

    Order 2 gives ``A = [[0, 1], [-a0/a2, -a1/a2]]``, ``b = [0, 1/a2]`` for the
    state ``(y, y')``; order 1 gives ``[[-b0/b1]]``, ``[1/b1]``; order 0 has
    no state and returns empty arrays (the output is ``u/b0``).
    """
    vals = [c.value(t, 0, side) for c in S.coefficients]
    lead = vals[0]
    if abs(lead) <= LEADING_EPS:
        raise DomainError(f"leading coefficient vanishes at t={t}")
    if S.order == 2:
        a2, a1, a0 = vals
        return np.array([[0.0, 1.0], [-a0 / a2, -a1 / a2]]), np.array([0.0, 1.0 / a2])
    if S.order == 1:
        b1, b0 = vals
        return np.array([[-b0 / b1]]), np.array([1.0 / b1])
    return np.zeros((0, 0)), np.zeros(0)


def step_grid(t0: float, t_end: float, h: float, breakpoints: Sequence[float] = ()):
    """Segments ``[(a, b, n_steps)]`` covering ``[t0, t_end]`` with breakpoints as edges.

    Each segment uses ``n = ceil((b - a)/h)`` equal steps, so the step never
    exceeds ``h``.
    """
    if not t0 < t_end:
        raise ValueError(f"need t0 < t_end, got {t0}, {t_end}")
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    cuts = sorted({float(b) for b in breakpoints if t0 < b < t_end})
    edges = [float(t0), *cuts, float(t_end)]
    segs = []
    for a, b in zip(edges, edges[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        segs.append((a, b, n))
    return segs


def _stage_arrays(S: LtvSystem, ts: np.ndarray, probe: float):
    """Companion matrices of ``S`` at ``ts``, all from the piece that owns ``probe``."""
    K = ts.size
    vals = [c.piece_at(probe).expr.evaluate(ts) if ts.size else np.zeros(0) for c in S.coefficients]
    vals = [np.broadcast_to(v, (K,)) for v in vals]
    lead = vals[0]
    if np.any(np.abs(lead) <= LEADING_EPS):
        bad = ts[np.argmin(np.abs(lead))]
        raise SimulationError(f"leading coefficient of {S.name or 'system'} vanishes near t={bad:g}")
    n = S.order
    A = np.zeros((K, n, n))
    B = np.zeros((K, n))
    D = np.zeros(K)
    if n == 2:
        a2, a1, a0 = vals
        A[:, 0, 1] = 1.0
        A[:, 1, 0] = -a0 / a2
        A[:, 1, 1] = -a1 / a2
        B[:, 1] = 1.0 / a2
    elif n == 1:
        b1, b0 = vals
        A[:, 0, 0] = -b0 / b1
        B[:, 0] = 1.0 / b1
    else:
        D = 1.0 / vals[0]
    return A, B, D


def _chain_arrays(stages, ts, probe):
    """Stacked ``x' = M x + N u``, ``y_k = C_k x + D_k u`` for a series chain."""
    K = ts.size
    n = sum(s.order for s in stages)
    M = np.zeros((K, n, n))
    N = np.zeros((K, n))
    # output of the chain so far, as (C, D) on the stacked state / input
    C = np.zeros((K, n))
    D = np.ones(K)
    outputs = []
    offset = 0
    for s in stages:
        A, B, Ds = _stage_arrays(s, ts, probe)
        m = s.order
        sl = slice(offset, offset + m)
        if m:
            M[:, sl, sl] = A
            # stage input is the previous output C x + D u
            M[:, sl, :] += B[:, :, None] * C[:, None, :]
            N[:, sl] = B * D[:, None]
            C = np.zeros((K, n))
            C[:, offset] = 1.0
            D = np.zeros(K)
        else:
            C = C * Ds[:, None]
            D = D * Ds
        outputs.append((C.copy(), D.copy()))
        offset += m
    return M, N, outputs


def _rk4(M0, Mh, g0, gh, x, xs, hs, n):
    """Classic RK4 over one segment; stops at the first non-finite state.

    Returns the final state, the stored states and the number of completed steps.
    """
    for i in range(n):
        k1 = M0[i] @ x + g0[i]
        k2 = Mh[i] @ (x + 0.5 * hs * k1) + gh[i]
        k3 = Mh[i] @ (x + 0.5 * hs * k2) + gh[i]
        k4 = M0[i + 1] @ (x + hs * k3) + g0[i + 1]
        x_new = x + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_new)):
            return x, xs, i
        x = x_new
        xs[i + 1] = x
    return x, xs, n


def simulate_chain(stages: Sequence[LtvSystem], u: InputSignal, ics: Sequence[InitialState],
                   t0: float, t_end: float, h: float, ordering: str = "", scenario: str = "") -> Trajectory:
    """Simulate systems connected in series, first stage driven by ``u``.

    ``y_out`` is the last stage output; ``y_mid`` is the first stage output
    (the input itself for a single stage).
    """
    stages = list(stages)
    if len(ics) != len(stages):
        raise ValueError("need one initial state per stage")
    for s in stages:
        s.check_leading(t0, t_end)
    x = np.concatenate([np.asarray(ic.vector(s.order), dtype=float) for s, ic in zip(stages, ics)])
    bps = sorted({b for s in stages for b in s.breakpoints})
    segments = step_grid(t0, t_end, h, bps)

    t_all, y_out, y_mid, states = [], [], [], []
    diagnostic = None
    for seg_index, (a, b, n) in enumerate(segments):
        hs = (b - a) / n
        nodes = a + hs * np.arange(n + 1)
        nodes[-1] = b
        mids = nodes[:-1] + 0.5 * hs
        probe = 0.5 * (a + b)
        M0, N0, out0 = _chain_arrays(stages, nodes, probe)
        Mh, Nh, _ = _chain_arrays(stages, mids, probe)
        u0 = u(nodes)
        uh = u(mids)
        g0 = N0 * u0[:, None]
        gh = Nh * uh[:, None]
        xs = np.empty((n + 1, x.size))
        xs[0] = x
        with np.errstate(over="ignore", invalid="ignore"):
            x, xs, n_done = _rk4(M0, Mh, g0, gh, x, xs, hs, n)
        if n_done < n:
            diagnostic = f"non-finite state at t={nodes[n_done + 1]:g}; trajectory truncated"
            logger.warning(diagnostic)
            xs = xs[: n_done + 1]
            nodes = nodes[: n_done + 1]
            u0 = u0[: n_done + 1]
            out0 = [(C[: n_done + 1], D[: n_done + 1]) for C, D in out0]
        (Cm, Dm), (Co, Do) = out0[0], out0[-1]
        keep = slice(0 if seg_index == 0 else 1, None)
        t_all.append(nodes[keep])
        y_out.append((np.einsum("kn,kn->k", Co, xs) + Do * u0)[keep])
        if len(stages) > 1:
            y_mid.append((np.einsum("kn,kn->k", Cm, xs) + Dm * u0)[keep])
        else:
            y_mid.append(u0[keep])
        states.append(xs[keep])
        if diagnostic:
            break
    return Trajectory(
        np.concatenate(t_all), np.concatenate(y_out), np.concatenate(y_mid), h, ordering, scenario,
        diagnostic, np.concatenate(states),
    )


def simulate_cascade(first: LtvSystem, second: LtvSystem, u: InputSignal, ic_first: InitialState,
                     ic_second: InitialState, t0: float, t_end: float, h: float,
                     ordering: str = "", scenario: str = "") -> Trajectory:
    """Series connection ``first -> second`` integrated with fixed-step RK4."""
    return simulate_chain([first, second], u, [ic_first, ic_second], t0, t_end, h, ordering, scenario)


def simulate_single(S: LtvSystem, u: InputSignal, ic: InitialState, t0: float, t_end: float,
                    h: float, scenario: str = "") -> Trajectory:
    return simulate_chain([S], u, [ic], t0, t_end, h, S.name, scenario)


@dataclass(frozen=True)
class SuperpositionReport:
    max_dev: float
    scale: float
    ok: bool


def superposition_check(first: LtvSystem, second: LtvSystem, u: InputSignal, Y, t0: float,
                        t_end: float, h: float, rel: float = 1e-6) -> SuperpositionReport:
    """Complete response must equal forced plus initial-condition response.

    Equal ICs ``Y`` are applied to both stages.
    """
    ic = InitialState(t0, *Y)
    zero = InitialState(t0)
    full = simulate_cascade(first, second, u, ic, ic, t0, t_end, h)
    forced = simulate_cascade(first, second, u, zero, zero, t0, t_end, h)
    free = simulate_cascade(first, second, InputSignal.zero(), ic, ic, t0, t_end, h)
    dev = float(np.max(np.abs(full.y_out - (forced.y_out + free.y_out))))
    scale = 1.0 + float(np.max(np.abs(full.y_out)))
    return SuperpositionReport(dev, scale, dev <= rel * scale)
