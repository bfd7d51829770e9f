"""Scenario files and the check / simulate / run pipeline.

A scenario is an INI-style file::

    [scenario]
    name = example2
    [system_a]
    a2 = 1
    a1 = base:-1 gain:1        # base + gain*sigma(t), sigma from [switching]
    a0 = base:-2 gain:2
    [switching]
    0 = 0                      # start time = level, held until the next start
    1 = 10
    [constants]                # or [system_b] with b2/b1/b0 (or b1/b0, or b0)
    k2 = 1
    k1 = -2
    k0 = 4
    [initial]
    mode = nonrelaxed
    y0 = 0.6
    dy0 = auto                 # slope of the admissible IC ray times y0
    [input]
    kind = sine
    amplitude = -10
    frequency = 0.5
    [simulation]
    t0 = 0
    t_end = 6
    h = 1e-3

Optional sections: ``[tolerances]`` (gamma, delta, residual, sim_rel) and
``[expected_b]``, a reference partner that is compared with the synthesized
one and reported, never used for simulation.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .conditions import ConditionReport, Tolerances, classify_pair, coefficient_gap, required_ic_ray
from .expr import Const, DomainError, ExprSyntaxError, parse_expr
from .metrics import DeviationSummary, ScenarioReport, deviation, scenario_report
from .model import (
    CommutativityConstants,
    InitialState,
    LtvSystem,
    PiecewiseCoefficient,
    SwitchingSignal,
    apply_switching,
)
from .simulate import SIM_REL_TOL, InputSignal, Trajectory, sim_tolerance, simulate_cascade
from .synthesis import fit_constants, synthesize_partner

__all__ = [
    "Scenario",
    "ScenarioError",
    "RunResult",
    "load_scenario",
    "loads_scenario",
    "save_scenario",
    "dumps_scenario",
    "list_builtins",
    "load_builtin",
    "resolve_scenario",
    "check",
    "simulate",
    "run",
    "write_artifacts",
    "read_dump",
]

A_KEYS = ("a2", "a1", "a0")
B_KEYS = ("b2", "b1", "b0")
K_KEYS = ("k2", "k1", "k0")
TRAJECTORY_KEYS = ("ab_forced", "ba_forced", "ab_ic", "ba_ic")

_SWITCHED = re.compile(r"^\s*base\s*:\s*(?P<base>\S+)\s+gain\s*:\s*(?P<gain>\S+)\s*$")


class ScenarioError(ValueError):
    """Invalid scenario file; ``line`` is 1-based when known."""

    def __init__(self, message, source="<scenario>", line=None, position=None):
        where = source if line is None else f"{source}:{line}"
        if position is not None:
            where += f":{position + 1}"
        super().__init__(f"{where}: {message}")
        self.source = source
        self.line = line
        self.position = position


@dataclass(frozen=True)
class Scenario:
    """Validated scenario; coefficient and constant fields keep their source text."""

    name: str
    a: tuple[str, str, str]
    t0: float
    t_end: float
    h: float
    constants: Optional[tuple[str, str, str]] = None
    b: Optional[tuple[str, ...]] = None
    switching: tuple[tuple[float, float], ...] = ()
    ic_mode: str = "relaxed"
    y0: float = 0.0
    dy0: Optional[float] = 0.0  # None means "auto"
    input: InputSignal = InputSignal.zero()
    tolerances: Tolerances = Tolerances()
    sim_rel: float = SIM_REL_TOL
    expected_b: Optional[tuple[str, ...]] = None
    description: str = ""
    domain_start: float = -math.inf

    # -- derived objects -------------------------------------------------

    @property
    def window(self):
        return (self.t0, self.t_end)

    @property
    def signal(self) -> Optional[SwitchingSignal]:
        if not self.switching:
            return None
        starts, levels = zip(*self.switching)
        return SwitchingSignal.from_starts(starts, levels)

    def _coefficient(self, spec: str) -> PiecewiseCoefficient:
        m = _SWITCHED.match(spec)
        if m:
            if self.signal is None:
                raise ScenarioError(f"{spec!r} needs a [switching] table", self.name)
            return apply_switching((_number(m["base"]), _number(m["gain"])), self.signal)
        return PiecewiseCoefficient.smooth(parse_expr(spec))

    def system_a(self) -> LtvSystem:
        return LtvSystem(tuple(self._coefficient(s) for s in self.a), self.domain_start, "A")

    def k(self) -> CommutativityConstants:
        if self.constants is not None:
            return CommutativityConstants(*(_constant(s) for s in self.constants))
        k, _ = self._fit()
        return k

    def _fit(self):
        ts = np.linspace(self.t0, self.t_end, 257)
        return fit_constants(self.system_a(), self._explicit_b(), ts)

    def _explicit_b(self) -> LtvSystem:
        return LtvSystem(tuple(self._coefficient(s) for s in self.b), self.domain_start, "B")

    def system_b(self) -> LtvSystem:
        if self.b is not None:
            return self._explicit_b()
        return synthesize_partner(self.system_a(), self.k())

    def expected_system_b(self) -> Optional[LtvSystem]:
        if self.expected_b is None:
            return None
        return LtvSystem(tuple(self._coefficient(s) for s in self.expected_b), self.domain_start, "B")

    def Y(self) -> tuple[float, float]:
        if self.ic_mode == "relaxed":
            return (0.0, 0.0)
        if self.dy0 is None:
            return (self.y0, required_ic_ray(self.system_a(), self.k(), self.t0) * self.y0)
        return (self.y0, self.dy0)

    # -- overrides -------------------------------------------------------

    def with_overrides(self, *, t0=None, t_end=None, h=None, sim_rel=None, k2=None, k1=None,
                       k0=None) -> "Scenario":
        """Copy with CLI-style overrides applied; the result is validated again."""
        changes = {}
        for key, value in (("t0", t0), ("t_end", t_end), ("h", h), ("sim_rel", sim_rel)):
            if value is not None:
                changes[key] = float(value)
        ks = {"k2": k2, "k1": k1, "k0": k0}
        if any(v is not None for v in ks.values()):
            base = [repr(v) for v in self.k()]
            for i, key in enumerate(K_KEYS):
                if ks[key] is not None:
                    base[i] = repr(float(ks[key]))
            # an explicit partner would contradict the new constants
            changes.update(constants=tuple(base), b=None, expected_b=None)
        out = dataclasses.replace(self, **changes)
        validate(out)
        return out


def _number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return _constant(text)


def _constant(text: str) -> float:
    e = parse_expr(text)
    d = e.diff()
    if not (isinstance(d, Const) and d.value == 0.0):
        raise ValueError(f"{text!r} must be a constant (it depends on t)")
    return float(e.evaluate(0.0))


def validate(sc: Scenario) -> None:
    """Raise `ScenarioError` unless the scenario is runnable."""
    if sc.ic_mode not in ("relaxed", "nonrelaxed"):
        raise ScenarioError(f"initial mode must be relaxed or nonrelaxed, got {sc.ic_mode!r}", sc.name)
    if not sc.t0 < sc.t_end:
        raise ScenarioError(f"need t0 < t_end, got [{sc.t0}, {sc.t_end}]", sc.name)
    if not sc.h > 0:
        raise ScenarioError(f"step h must be positive, got {sc.h}", sc.name)
    if sc.constants is None and sc.b is None:
        raise ScenarioError("need [constants] or [system_b]", sc.name)
    try:
        A = sc.system_a()
        A.check_leading(sc.t0, sc.t_end)
        probe = np.linspace(sc.t0, sc.t_end, 1001)
        if np.any(A.leading.values(probe) <= 0):
            raise DomainError("a2 must be positive on the window (multiply the equation by -1)")
        if sc.b is not None:
            B = sc._explicit_b()
            if B.order not in (0, 1, 2):
                raise ScenarioError("system_b must have 1 to 3 coefficients", sc.name)
            if sc.constants is None:
                _, residual = sc._fit()
                if residual > 1e-8:
                    raise ScenarioError(
                        f"system_b is not of the form generated by constants k (fit residual {residual:.3g}); "
                        "give [constants] explicitly to check it anyway",
                        sc.name,
                    )
        k = sc.k()
        if sc.dy0 is None and sc.ic_mode == "nonrelaxed" and k.k1 == 0:
            raise ScenarioError("dy0 = auto needs k1 != 0 (the IC ray is undefined otherwise)", sc.name)
        sc.system_b().check_leading(sc.t0, sc.t_end)
    except (DomainError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc), sc.name) from exc


# -- file format ---------------------------------------------------------


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    current = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if key is None and current == section:
                return n
        elif current == section and key is not None:
            name = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            if name == key:
                return n
    return None


def loads_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse scenario text; errors carry the file line (and column for formulas)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ScenarioError(str(exc).splitlines()[0], source, line) from exc

    def err(msg, section, key=None, position=None):
        return ScenarioError(msg, source, _line_of(text, section, key), position)

    def get(section, key, default=None, required=False):
        if cp.has_option(section, key):
            return cp.get(section, key).strip()
        if required:
            raise err(f"missing key {key!r} in [{section}]", section)
        return default

    def num(section, key, default=None, required=False):
        raw = get(section, key, None, required)
        if raw is None:
            return default
        try:
            return _number(raw)
        except (ValueError, ExprSyntaxError) as exc:
            raise err(f"[{section}] {key}: {exc}", section, key) from exc

    def formula(section, key):
        raw = get(section, key, required=True)
        if not _SWITCHED.match(raw):
            try:
                parse_expr(raw)
            except ExprSyntaxError as exc:
                raise err(f"[{section}] {key}: {exc}", section, key) from exc
        return raw

    for section in ("system_a", "simulation"):
        if not cp.has_section(section):
            raise ScenarioError(f"missing section [{section}]", source)

    name = get("scenario", "name", Path(source).stem if source != "<scenario>" else "scenario")
    a = tuple(formula("system_a", key) for key in A_KEYS)

    constants = None
    if cp.has_section("constants"):
        constants = tuple(get("constants", key, required=True) for key in K_KEYS)
        for key, raw in zip(K_KEYS, constants):
            try:
                _constant(raw)
            except (ValueError, ExprSyntaxError) as exc:
                raise err(f"[constants] {key}: {exc}", "constants", key) from exc

    def partner(section):
        if not cp.has_section(section):
            return None
        keys = [key for key in B_KEYS if cp.has_option(section, key)]
        if not keys or keys != list(B_KEYS[3 - len(keys):]):
            raise err(f"[{section}] needs b2, b1, b0 or b1, b0 or b0", section)
        return tuple(formula(section, key) for key in keys)

    b = partner("system_b")
    expected_b = partner("expected_b")

    switching = ()
    if cp.has_section("switching"):
        rows = []
        for key, value in cp.items("switching"):
            try:
                rows.append((_number(key), _number(value)))
            except (ValueError, ExprSyntaxError) as exc:
                raise err(f"[switching] {key}: {exc}", "switching", key) from exc
        switching = tuple(sorted(rows))

    mode = get("initial", "mode", "relaxed").lower()
    dy0_raw = get("initial", "dy0", "0")
    dy0 = None if dy0_raw.lower() == "auto" else num("initial", "dy0", 0.0)

    kind = get("input", "kind", "zero").lower()
    try:
        signal = InputSignal(kind, num("input", "amplitude", 0.0), num("input", "frequency", 0.0),
                             num("input", "phase", 0.0))
    except ValueError as exc:
        raise err(str(exc), "input", "kind") from exc

    defaults = Tolerances()
    tol = Tolerances(
        num("tolerances", "gamma", defaults.gamma),
        num("tolerances", "delta", defaults.delta),
        num("tolerances", "residual", defaults.residual),
    )

    sc = Scenario(
        name=name,
        a=a,
        t0=num("simulation", "t0", required=True),
        t_end=num("simulation", "t_end", required=True),
        h=num("simulation", "h", required=True),
        constants=constants,
        b=b,
        switching=switching,
        ic_mode=mode,
        y0=num("initial", "y0", 0.0),
        dy0=dy0,
        input=signal,
        tolerances=tol,
        sim_rel=num("tolerances", "sim_rel", SIM_REL_TOL),
        expected_b=expected_b,
        description=get("scenario", "description", ""),
        domain_start=num("system_a", "domain_start", -math.inf),
    )
    validate(sc)
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", str(path)) from exc
    return loads_scenario(text, str(path))


def dumps_scenario(sc: Scenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"name": sc.name}
    if sc.description:
        cp["scenario"]["description"] = sc.description
    cp["system_a"] = dict(zip(A_KEYS, sc.a))
    if sc.domain_start != -math.inf:
        cp["system_a"]["domain_start"] = repr(sc.domain_start)
    if sc.switching:
        cp["switching"] = {repr(t): repr(v) for t, v in sc.switching}
    if sc.constants is not None:
        cp["constants"] = dict(zip(K_KEYS, sc.constants))
    if sc.b is not None:
        cp["system_b"] = dict(zip(B_KEYS[3 - len(sc.b):], sc.b))
    if sc.expected_b is not None:
        cp["expected_b"] = dict(zip(B_KEYS[3 - len(sc.expected_b):], sc.expected_b))
    cp["initial"] = {
        "mode": sc.ic_mode,
        "y0": repr(sc.y0),
        "dy0": "auto" if sc.dy0 is None else repr(sc.dy0),
    }
    u = sc.input
    cp["input"] = {"kind": u.kind, "amplitude": repr(u.amplitude), "frequency": repr(u.frequency),
                   "phase": repr(u.phase)}
    cp["simulation"] = {"t0": repr(sc.t0), "t_end": repr(sc.t_end), "h": repr(sc.h)}
    tol = sc.tolerances
    cp["tolerances"] = {"gamma": repr(tol.gamma), "delta": repr(tol.delta),
                        "residual": repr(tol.residual), "sim_rel": repr(sc.sim_rel)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(sc))


# -- built-ins -----------------------------------------------------------


def _builtin_dir():
    return resources.files("ltvcommute") / "scenarios"


def list_builtins() -> list[str]:
    return sorted(p.name[:-4] for p in _builtin_dir().iterdir() if p.name.endswith(".ini"))


def load_builtin(name: str) -> Scenario:
    ref = _builtin_dir() / f"{name}.ini"
    if not ref.is_file():
        raise ScenarioError(f"no built-in scenario {name!r}; try one of {', '.join(list_builtins())}", name)
    return loads_scenario(ref.read_text(), f"{name}.ini")


def resolve_scenario(spec: str) -> Scenario:
    """A path to a scenario file, or the name of a built-in."""
    if Path(spec).is_file():
        return load_scenario(spec)
    if spec.endswith(".ini") or "/" in spec:
        raise ScenarioError("scenario file not found", spec)
    return load_builtin(spec)


# -- pipeline ------------------------------------------------------------


def check(sc: Scenario) -> ConditionReport:
    """Algebraic verdict for the scenario, with a note on any ``[expected_b]`` mismatch."""
    A = sc.system_a()
    B = sc.system_b()
    report = classify_pair(A, sc.k(), sc.ic_mode, sc.Y(), sc.t0, sc.window, sc.tolerances,
                           B if sc.b is not None else None)
    expected = sc.expected_system_b()
    if expected is not None:
        if expected.order != B.order:
            report.notes.append(f"expected partner has order {expected.order}, synthesized has {B.order}")
        else:
            names = B_KEYS[3 - len(B.coefficients):]
            for name, cb, ce in zip(names, B.coefficients, expected.coefficients):
                gap = coefficient_gap(ce, cb, sc.window)
                if gap > 1e-9:
                    report.notes.append(
                        f"expected {name} = {ce} differs from synthesized {name} = {cb} "
                        f"(max relative gap {gap:.3g}); the synthesized partner is used"
                    )
    return report


def simulate(sc: Scenario) -> dict[str, Trajectory]:
    """Forced (input, zero state) and IC (zero input, state Y) responses of AB and BA."""
    A, B = sc.system_a(), sc.system_b()
    zero = InitialState(sc.t0)
    ic = InitialState(sc.t0, *sc.Y())
    run_ = dict(t0=sc.t0, t_end=sc.t_end, h=sc.h)
    free = InputSignal.zero()
    return {
        "ab_forced": simulate_cascade(A, B, sc.input, zero, zero, ordering="AB", scenario=sc.name, **run_),
        "ba_forced": simulate_cascade(B, A, sc.input, zero, zero, ordering="BA", scenario=sc.name, **run_),
        "ab_ic": simulate_cascade(A, B, free, ic, ic, ordering="AB", scenario=sc.name, **run_),
        "ba_ic": simulate_cascade(B, A, free, ic, ic, ordering="BA", scenario=sc.name, **run_),
    }


def _trivial(a: Trajectory, b: Trajectory) -> bool:
    return not np.any(a.y_out) and not np.any(b.y_out)


@dataclass
class RunResult:
    scenario: Scenario
    condition: ConditionReport
    trajectories: dict[str, Trajectory]
    forced: DeviationSummary
    ic: DeviationSummary
    report: ScenarioReport
    artifacts: list[Path] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if self.report.agreement else 1


def run(sc: Scenario) -> RunResult:
    """Check, simulate and cross-examine one scenario."""
    cond = check(sc)
    trajs = simulate(sc)
    devs = {}
    for kind in ("forced", "ic"):
        a, b = trajs[f"ab_{kind}"], trajs[f"ba_{kind}"]
        devs[kind] = deviation(a, b, sim_tolerance(a, b, rel=sc.sim_rel))
    rep = scenario_report(
        cond, devs["forced"], devs["ic"], sc.h, sc.name,
        trivial_forced=_trivial(trajs["ab_forced"], trajs["ba_forced"]),
        trivial_ic=_trivial(trajs["ab_ic"], trajs["ba_ic"]),
    )
    for key, tr in trajs.items():
        if tr.truncated:
            rep.notes.append(f"{key}: {tr.diagnostic}")
    return RunResult(sc, cond, trajs, devs["forced"], devs["ic"], rep)


DUMP_MARK = "[dump]"


def _report_file(path: Path, text: str, dump: str) -> Path:
    path.write_text(f"{text}\n{DUMP_MARK}\n{dump}")
    return path


def write_artifacts(out_dir, cond: Optional[ConditionReport] = None,
                    trajectories: Optional[dict] = None, report: Optional[ScenarioReport] = None) -> list[Path]:
    """Write whatever is given: trajectory CSVs, condition and scenario reports."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for key, tr in (trajectories or {}).items():
        path = out / f"{key}.csv"
        tr.to_csv(path)
        written.append(path)
    if cond is not None:
        written.append(_report_file(out / "condition_report.txt", cond.to_text(), cond.to_dump()))
    if report is not None:
        written.append(_report_file(out / "scenario_report.txt", report.to_text(), report.to_dump()))
    return written


def read_dump(path) -> dict[str, str]:
    """key=value pairs from the dump section of a report file."""
    text = Path(path).read_text()
    if DUMP_MARK in text:
        text = text.split(DUMP_MARK, 1)[1]
    pairs = {}
    for line in text.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs
