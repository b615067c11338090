"""Scenario runner: fixture + timed disturbances -> MAPE-K run -> trace.

A run configuration is a JSON object::

    {
      "plan": "arrivals.csv",            # optional; the bundled table otherwise
      "separation": {"default": 1, "pairs": {"H-L": 3}},
      "opposite": {"1": 2, "3": 7},    # optional; replaces the fixture's pairs
      "thresholds": {"max_delay": 15},
      "period": 1,
      "budget": 200,
      "policy": "first",               # or "random" (uses the seed)
      "seed": 0,
      "events": [{"at": 0, "kind": "delay", "aircraft": 5, "ts": "10:16"}]
    }

Relative paths are resolved against the configuration file's directory.
Events are disturbances of the managed system: they are written straight
into the encoded net at the start of their step, before the move.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import emulator as em
from . import hlpn
from .aircraft import net as arrival
from .aircraft.case import ArrivalCase, view_of
from .aircraft.model import (
    DEFAULT_SEPARATION,
    PHASE_OF_KIND,
    Aircraft,
    Fixture,
    Runway,
    SeparationTable,
    Violation,
    default_fixture,
    plan_safety,
    read_plan,
    write_plan,
)
from .mapek import LoopState, run_cycle, move_step
from .values import Multiset, Time

EVENT_KINDS = ("aircraft-arrival", "delay", "wind-change", "resource-state")
TRACE_VERSION = 1


class ScenarioError(ValueError):
    """Malformed configuration or event."""


@dataclass(frozen=True)
class ScenarioEvent:
    at: int
    kind: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioError(f"unknown event kind {self.kind!r}")
        if not isinstance(self.at, int) or self.at < 0:
            raise ScenarioError(f"event step must be a non-negative integer, got {self.at!r}")

    @classmethod
    def from_json(cls, data: Mapping) -> "ScenarioEvent":
        data = dict(data)
        try:
            at = data.pop("at", 0)
            kind = data.pop("kind")
        except KeyError as exc:
            raise ScenarioError(f"event lacks {exc}") from exc
        return cls(at, kind, data)

    def to_json(self) -> dict:
        return {"at": self.at, "kind": self.kind, **self.payload}


@dataclass(frozen=True)
class RunConfig:
    fixture: Fixture
    events: tuple[ScenarioEvent, ...] = ()
    max_delay: int = 15
    period: int = 1
    budget: int = 200
    policy: str = "first"
    seed: int = 0
    source: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.period < 1:
            raise ScenarioError("loop period must be at least one step")
        if self.budget < 0:
            raise ScenarioError("budget must be non-negative")
        ordered = tuple(sorted(self.events, key=lambda ev: ev.at))
        object.__setattr__(self, "events", ordered)

    @classmethod
    def from_json(cls, data: Mapping, base: Path | None = None, seed: int | None = None) -> "RunConfig":
        base = base or Path(".")
        if "plan" in data:
            path = Path(data["plan"])
            path = path if path.is_absolute() else base / path
            try:
                plan = read_plan(path.read_text())
            except OSError as exc:
                raise ScenarioError(f"cannot read planning table {path}: {exc}") from exc
        else:
            plan = None
        sep = SeparationTable.from_json(data["separation"]) if "separation" in data else DEFAULT_SEPARATION
        fixture = default_fixture(plan, sep)
        if "opposite" in data:
            fixture = with_opposites(fixture, {int(k): int(v) for k, v in data["opposite"].items()})
        thresholds = data.get("thresholds", {})
        return cls(
            fixture=fixture,
            events=tuple(ScenarioEvent.from_json(ev) for ev in data.get("events", [])),
            max_delay=int(thresholds.get("max_delay", 15)),
            period=int(data.get("period", 1)),
            budget=int(data.get("budget", 200)),
            policy=str(data.get("policy", "first")),
            seed=int(data.get("seed", 0) if seed is None else seed),
            source=dict(data),
        )

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot load configuration {path}: {exc}") from exc
        return cls.from_json(data, path.parent, seed)

    def header(self) -> dict:
        return {
            "kind": "header",
            "version": TRACE_VERSION,
            "seed": self.seed,
            "policy": self.policy,
            "period": self.period,
            "budget": self.budget,
            "max_delay": self.max_delay,
            "separation": self.fixture.separation.to_json(),
            "events": [ev.to_json() for ev in self.events],
        }


def with_opposites(fixture: Fixture, pairs: Mapping[int, int]) -> Fixture:
    full = dict(pairs)
    full.update({b: a for a, b in pairs.items()})
    runways = tuple(replace(rw, er=full.get(rw.r)) for rw in fixture.runways)
    return replace(fixture, runways=runways)


# -- events ------------------------------------------------------------------------------------------


def _aircraft_token(e: em.EncodedNet, aid: int) -> tuple:
    for tok in em.get_tokens(e, "Planning").distinct():
        if tok[0] == aid:
            return tok
    raise ScenarioError(f"event names unknown aircraft {aid}")


def _time(value) -> Time:
    if isinstance(value, Time):
        return value
    try:
        return Time.parse(value) if isinstance(value, str) else Time(int(value))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad time {value!r}") from exc


def apply_event(state: LoopState, case: ArrivalCase, event: ScenarioEvent) -> None:
    """Write one disturbance into the managed net and the loop's clock."""
    required = {"delay": ("aircraft", "ts"), "aircraft-arrival": ("aircraft",), "resource-state": ("resource", "id", "state")}
    missing = [k for k in required.get(event.kind, ()) if k not in event.payload]
    if missing:
        raise ScenarioError(f"{event.kind} event lacks {', '.join(missing)}")
    kb, e, p = state.kb, state.encoded, event.payload
    kb.memory["epoch"] = len(kb.adaptations)
    if event.kind == "delay":
        tok = _aircraft_token(e, int(p["aircraft"]))
        a = Aircraft.from_value(tok)
        view = view_of(e)
        if case.frozen(kb, view, a, "landing"):
            raise ScenarioError(f"aircraft {a.id} has already landed")
        new_ts = _time(p["ts"])
        try:
            moved = a.shifted(new_ts.minutes - a.ts.minutes)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from exc
        e = em.remove_token(e, "Planning", tok)
        e = em.add_token(e, "Planning", moved.to_value())
        e = em.add_token(e, "Approach", a.id)
        kb.memory["now"] = max(kb.memory["now"], new_ts)
    elif event.kind == "aircraft-arrival":
        a = Aircraft.from_value(_aircraft_token(e, int(p["aircraft"])))
        e = em.add_token(e, "Approach", a.id)
        kb.memory["now"] = max(kb.memory["now"], a.ts)
    elif event.kind == "wind-change":
        current = next(iter(em.get_tokens(e, "Wind").distinct()), "forward")
        wind = p.get("wind") or ("reverse" if current == "forward" else "forward")
        if wind not in arrival.ORIENTATIONS:
            raise ScenarioError(f"wind must be one of {arrival.ORIENTATIONS}")
        e = em.set_tokens(e, "Wind", Multiset([wind]))
    else:
        e = _resource_state(state, case, e, p)
    if "now" in p:
        kb.memory["now"] = max(kb.memory["now"], _time(p["now"]))
    state.encoded = e
    state.emit("run", "event", event.to_json())


def _resource_state(state: LoopState, case: ArrivalCase, e: em.EncodedNet, p: Mapping) -> em.EncodedNet:
    kind, rid, new_state = p.get("resource"), p.get("id"), p.get("state")
    if kind not in PHASE_OF_KIND:
        raise ScenarioError(f"resource must be one of {sorted(PHASE_OF_KIND)}")
    rid = tuple(rid) if isinstance(rid, list) else rid
    place = {"runway": "Runways", "gateway": "Gateways", "gate": "Gates"}[kind]
    for tok in em.get_tokens(e, place).distinct():
        if tok[0] == rid:
            break
    else:
        raise ScenarioError(f"unknown {kind} {rid!r}")
    new_tok = (tok[0], new_state) + tuple(tok[2:])
    try:
        if kind == "runway":
            Runway(tok[0], new_state)
        e = em.set_tokens(e, place, em.get_tokens(e, place) - Multiset([tok]) + Multiset([new_tok]))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    phase = PHASE_OF_KIND[kind]
    view = view_of(e)
    for a in view.plan:
        if a.resource(phase) == rid and not case.frozen(state.kb, view, a, phase):
            state.kb.memory["watch"].add(a.id)
    return e


# -- run -----------------------------------------------------------------------------------------------


@dataclass
class RunReport:
    config: RunConfig
    records: list[dict]
    initial_plan: list[Aircraft]
    final_plan: list[Aircraft]
    adaptations: list[dict]
    cycles: list
    touched: list[int]
    violations: list[Violation]
    preexisting: list[Violation]
    unresolved: bool
    steps: int
    final: em.EncodedNet

    @property
    def adapted_violations(self) -> list[Violation]:
        return [v for v in self.violations if any(v.involves(a) for a in self.touched)]

    @property
    def exit_code(self) -> int:
        return 1 if (self.unresolved or self.adapted_violations) else 0


def run_scenario(config: RunConfig, events: Sequence[ScenarioEvent] | None = None) -> RunReport:
    events = tuple(sorted(config.events if events is None else events, key=lambda ev: ev.at))
    fixture = config.fixture
    case = ArrivalCase(fixture.separation, fixture.opposite(), len(fixture.aircraft), config.max_delay)
    encoded = em.encode(arrival.build_arrival_net(fixture))
    state = LoopState(
        encoded=encoded,
        kb=case.knowledge(),
        period=config.period,
        policy=hlpn.make_policy(config.policy, config.seed),
        on_adaptation=case.on_adaptation,
    )
    initial_plan = list(fixture.aircraft)
    pending = list(events)
    last_unresolved = False
    for _ in range(config.budget):
        while pending and pending[0].at <= state.step:
            apply_event(state, case, pending.pop(0))
        moved = move_step(state)
        report = run_cycle(state) if state.step % state.period == 0 else None
        last_unresolved = bool(report and report.unresolved)
        if moved is None and not pending and (report is None or not report.adapted):
            break
    final_plan = view_of(state.encoded).plan
    violations = plan_safety(final_plan, fixture.separation)
    before = {(v.phase, v.resource, v.leader, v.follower) for v in plan_safety(initial_plan, fixture.separation)}
    preexisting = [v for v in violations if (v.phase, v.resource, v.leader, v.follower) in before]
    touched = sorted(state.kb.memory["touched"])
    summary = {
        "adaptations": len(state.kb.adaptations),
        "touched": touched,
        "unresolved": last_unresolved,
        "violations": [v.to_json() for v in violations],
        "preexisting": [v.to_json() for v in preexisting],
        "steps": state.step,
    }
    state.emit("run", "summary", summary)
    return RunReport(
        config,
        state.log,
        initial_plan,
        final_plan,
        list(state.kb.adaptations),
        state.cycles,
        touched,
        violations,
        preexisting,
        last_unresolved,
        state.step,
        state.encoded,
    )


# -- output ----------------------------------------------------------------------------------------------


def trace_lines(report: RunReport) -> list[str]:
    lines = [json.dumps(report.config.header(), sort_keys=True)]
    lines.extend(json.dumps(rec, sort_keys=True) for rec in report.records)
    return lines


def export_trace(report: RunReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``trace.ndjson`` and ``plan.csv`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        trace_path = out / "trace.ndjson"
        plan_path = out / "plan.csv"
        trace_path.write_text("\n".join(trace_lines(report)) + "\n")
        plan_path.write_text(write_plan(report.final_plan))
    except OSError as exc:
        raise ScenarioError(f"cannot write outputs to {out}: {exc}") from exc
    return trace_path, plan_path


def delay_scenario_config(**overrides) -> RunConfig:
    """The bundled table with aircraft 5 arriving at 10:16 instead of 9:16."""
    params = dict(fixture=default_fixture(), events=(ScenarioEvent(0, "delay", {"aircraft": 5, "ts": "10:16"}),))
    params.update(overrides)
    return RunConfig(**params)
