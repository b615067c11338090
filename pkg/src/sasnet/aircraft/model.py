"""Arrival planning domain: aircraft tuples, resources, separation and safety.

Times are :class:`~sasnet.values.Time` (minutes since midnight) and durations
are :class:`~sasnet.values.Duration`. Every aircraft passes three phases, each
holding one resource:

=========  ==========  ===========  ==========================================
phase      resource    entry time   safe successor on the same resource
=========  ==========  ===========  ==========================================
landing    runway r    tr           tr(next) - tr(prev) > S(c(prev), c(next))
taxi       gateway g   tg           tg(next) - tg(prev) > S(c(prev), c(next))
gate       (k, d)      tk           tk(next) > tf(prev)
=========  ==========  ===========  ==========================================

Aircraft sharing a resource are ordered by (entry time, id).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Iterable, Mapping, Sequence

from ..values import Duration, Time

CATEGORIES = ("H", "M", "L")
RESOURCE_STATES = ("free", "occupied", "inoperative")
PHASES = ("landing", "taxi", "gate")
RESOURCE_KIND = {"landing": "runway", "taxi": "gateway", "gate": "gate"}
PHASE_OF_KIND = {v: k for k, v in RESOURCE_KIND.items()}

TABLE_COLUMNS = ("Aircraft", "c", "r", "g", "(k,d)", "ts", "t", "tr", "tg", "tp", "tk", "tf")


class FixtureError(ValueError):
    """Referential or format error in a planning fixture."""


@dataclass(frozen=True)
class Aircraft:
    id: int
    c: str
    r: int
    g: int
    gate: tuple[int, int]
    ts: Time
    t: Duration
    tr: Time
    tg: Time
    tp: Duration
    tk: Time
    tf: Time

    def __post_init__(self):
        if self.c not in CATEGORIES:
            raise ValueError(f"aircraft {self.id}: unknown category {self.c!r}")
        if not (isinstance(self.gate, tuple) and len(self.gate) == 2):
            raise ValueError(f"aircraft {self.id}: gate must be a (terminal, gate) pair")
        if not self.ts <= self.tr <= self.tg <= self.tk <= self.tf:
            raise ValueError(f"aircraft {self.id}: times must satisfy ts <= tr <= tg <= tk <= tf")

    # -- phase accessors

    def resource(self, phase: str):
        return {"landing": self.r, "taxi": self.g, "gate": self.gate}[phase]

    def entry(self, phase: str) -> Time:
        return {"landing": self.tr, "taxi": self.tg, "gate": self.tk}[phase]

    def with_resource(self, phase: str, resource) -> "Aircraft":
        key = {"landing": "r", "taxi": "g", "gate": "gate"}[phase]
        return replace(self, **{key: resource})

    def shifted(self, delta: int) -> "Aircraft":
        """All five clock times moved by ``delta`` minutes."""
        try:
            return replace(
                self,
                ts=Time(self.ts.minutes + delta),
                tr=Time(self.tr.minutes + delta),
                tg=Time(self.tg.minutes + delta),
                tk=Time(self.tk.minutes + delta),
                tf=Time(self.tf.minutes + delta),
            )
        except ValueError as exc:
            raise ValueError(f"aircraft {self.id}: shift by {delta} min gives {exc}") from exc

    # -- token form used inside the net

    def to_value(self) -> tuple:
        return (self.id, self.c, self.r, self.g, self.gate, self.ts, self.t, self.tr, self.tg, self.tp, self.tk, self.tf)

    @classmethod
    def from_value(cls, value: tuple) -> "Aircraft":
        return cls(*value)


AIRCRAFT_SHAPE = ("int", "sym", "int", "int", ("int", "int"), "time", "dur", "time", "time", "dur", "time", "time")


@dataclass(frozen=True)
class Runway:
    r: int
    rs: str = "free"
    er: int | None = None

    def __post_init__(self):
        if self.rs not in RESOURCE_STATES:
            raise ValueError(f"runway {self.r}: unknown state {self.rs!r}")

    @property
    def operational(self) -> bool:
        return self.rs != "inoperative"


@dataclass(frozen=True)
class Gateway:
    g: int
    gs: str = "free"

    def __post_init__(self):
        if self.gs not in RESOURCE_STATES:
            raise ValueError(f"gateway {self.g}: unknown state {self.gs!r}")

    @property
    def operational(self) -> bool:
        return self.gs != "inoperative"


@dataclass(frozen=True)
class Gate:
    gate: tuple[int, int]
    state: str = "free"

    def __post_init__(self):
        if self.state not in RESOURCE_STATES:
            raise ValueError(f"gate {self.gate}: unknown state {self.state!r}")

    @property
    def operational(self) -> bool:
        return self.state != "inoperative"


@dataclass(frozen=True)
class SeparationTable:
    """Required gap (minutes) between a leader and a follower, by category pair."""

    entries: Mapping[tuple[str, str], int] = field(default_factory=dict)
    default: int = 1

    def __post_init__(self):
        if self.default < 1:
            raise ValueError("default separation must be at least one minute")
        for pair, value in self.entries.items():
            if value < self.default:
                raise ValueError(f"separation for {pair} is below the default")

    def __call__(self, leader: str, follower: str) -> int:
        return int(self.entries.get((leader, follower), self.default))

    @classmethod
    def from_json(cls, data: Mapping) -> "SeparationTable":
        entries = {}
        for key, value in dict(data.get("pairs", {})).items():
            leader, follower = key.split("-") if "-" in key else tuple(key)
            entries[(leader, follower)] = int(value)
        return cls(entries, int(data.get("default", 1)))

    def to_json(self) -> dict:
        return {"default": self.default, "pairs": {f"{a}-{b}": v for (a, b), v in sorted(self.entries.items())}}


DEFAULT_SEPARATION = SeparationTable()


@dataclass(frozen=True)
class Fixture:
    aircraft: tuple[Aircraft, ...]
    runways: tuple[Runway, ...]
    gateways: tuple[Gateway, ...]
    gates: tuple[Gate, ...]
    separation: SeparationTable = DEFAULT_SEPARATION

    def __post_init__(self):
        runway_ids = {r.r for r in self.runways}
        if len(runway_ids) != len(self.runways):
            raise FixtureError("duplicate runway id")
        for rw in self.runways:
            if rw.er is not None:
                if rw.er not in runway_ids:
                    raise FixtureError(f"runway {rw.r}: opposite runway {rw.er} is not declared")
                if self.runway(rw.er).er != rw.r:
                    raise FixtureError(f"runway {rw.r}: opposite map is not symmetric")
        gateway_ids = {g.g for g in self.gateways}
        gate_ids = {g.gate for g in self.gates}
        seen = set()
        for a in self.aircraft:
            if a.id in seen:
                raise FixtureError(f"duplicate aircraft {a.id}")
            seen.add(a.id)
            if a.r not in runway_ids:
                raise FixtureError(f"aircraft {a.id} names unknown runway {a.r}")
            if a.g not in gateway_ids:
                raise FixtureError(f"aircraft {a.id} names unknown gateway {a.g}")
            if a.gate not in gate_ids:
                raise FixtureError(f"aircraft {a.id} names unknown gate {a.gate}")

    def runway(self, r: int) -> Runway:
        for rw in self.runways:
            if rw.r == r:
                return rw
        raise KeyError(r)

    def opposite(self) -> dict[int, int]:
        return {rw.r: rw.er for rw in self.runways if rw.er is not None}

    def with_aircraft(self, aircraft: Iterable[Aircraft]) -> "Fixture":
        return replace(self, aircraft=tuple(aircraft))


# -- planning tables -----------------------------------------------------------------------


def _parse_gate(text: str) -> tuple[int, int]:
    k, d = text.strip().strip("()").split(",")
    return int(k), int(d)


def read_plan(source: str | io.TextIOBase) -> list[Aircraft]:
    """Parse a delimited planning table with the bundled columns."""
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.DictReader(stream)
    missing = [c for c in TABLE_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise FixtureError(f"planning table lacks columns {missing}")
    plan = []
    for row in reader:
        try:
            plan.append(
                Aircraft(
                    id=int(row["Aircraft"]),
                    c=row["c"].strip(),
                    r=int(row["r"]),
                    g=int(row["g"]),
                    gate=_parse_gate(row["(k,d)"]),
                    ts=Time.parse(row["ts"]),
                    t=Duration(int(row["t"])),
                    tr=Time.parse(row["tr"]),
                    tg=Time.parse(row["tg"]),
                    tp=Duration(int(row["tp"])),
                    tk=Time.parse(row["tk"]),
                    tf=Time.parse(row["tf"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise FixtureError(f"bad planning row {row}: {exc}") from exc
    return plan


def write_plan(plan: Iterable[Aircraft]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for a in sorted(plan, key=lambda a: a.id):
        writer.writerow(
            [a.id, a.c, a.r, a.g, f"({a.gate[0]},{a.gate[1]})", a.ts, a.t.minutes, a.tr, a.tg, a.tp.minutes, a.tk, a.tf]
        )
    return out.getvalue()


def bundled_plan() -> list[Aircraft]:
    """The nine-aircraft arrival plan shipped with the package."""
    text = resources.files("sasnet.aircraft").joinpath("data/arrivals.csv").read_text()
    return read_plan(text)


def default_runways() -> tuple[Runway, ...]:
    """Runways 1, 2, 3, 7 in service (pairs 1/2 and 3/7); 4/5 and 6/8 out of service."""
    pairs = [(1, 2), (3, 7), (4, 5), (6, 8)]
    down = {4, 5, 6, 8}
    out = []
    for a, b in pairs:
        out.append(Runway(a, "inoperative" if a in down else "free", b))
        out.append(Runway(b, "inoperative" if b in down else "free", a))
    return tuple(sorted(out, key=lambda rw: rw.r))


def default_fixture(plan: Sequence[Aircraft] | None = None, separation: SeparationTable = DEFAULT_SEPARATION) -> Fixture:
    plan = bundled_plan() if plan is None else list(plan)
    return Fixture(
        tuple(plan),
        default_runways(),
        tuple(Gateway(g) for g in (5, 7, 9)),
        tuple(Gate(gate) for gate in ((1, 7), (3, 2), (6, 8))),
        separation,
    )


# -- pairwise checks ------------------------------------------------------------------------


def check_landing_safety(prev: Aircraft, nxt: Aircraft, sep: SeparationTable = DEFAULT_SEPARATION) -> bool:
    return nxt.tr.minutes - prev.tr.minutes > sep(prev.c, nxt.c)


def check_taxi_safety(prev: Aircraft, nxt: Aircraft, sep: SeparationTable = DEFAULT_SEPARATION) -> bool:
    return nxt.tg.minutes - prev.tg.minutes > sep(prev.c, nxt.c)


def check_gate_safety(prev: Aircraft, nxt: Aircraft) -> bool:
    return nxt.tk > prev.tf


def margin(phase: str, prev: Aircraft, nxt: Aircraft, sep: SeparationTable = DEFAULT_SEPARATION) -> int:
    """Slack of the pair in minutes; the pair is safe iff the margin is positive."""
    if phase == "gate":
        return nxt.tk.minutes - prev.tf.minutes
    gap = nxt.entry(phase).minutes - prev.entry(phase).minutes
    return gap - sep(prev.c, nxt.c)


def _order_key(phase: str):
    return lambda a: (a.entry(phase), a.id)


def occupants(plan: Iterable[Aircraft], phase: str, resource) -> list[Aircraft]:
    """Aircraft holding ``resource`` in ``phase``, in usage order."""
    return sorted((a for a in plan if a.resource(phase) == resource), key=_order_key(phase))


def neighbours(plan: Sequence[Aircraft], phase: str, a: Aircraft) -> tuple[Aircraft | None, Aircraft | None]:
    """Predecessor and successor of ``a`` on its own resource for ``phase``."""
    seq = occupants([b for b in plan if b.id != a.id] + [a], phase, a.resource(phase))
    i = next(i for i, b in enumerate(seq) if b.id == a.id)
    return (seq[i - 1] if i > 0 else None, seq[i + 1] if i + 1 < len(seq) else None)


# -- release times and selection ------------------------------------------------------------------


def last_in(plan: Iterable[Aircraft], phase: str, resource, incoming: Aircraft) -> Aircraft | None:
    """The aircraft using ``resource`` immediately before ``incoming`` would."""
    key = _order_key(phase)
    before = [a for a in plan if a.id != incoming.id and a.resource(phase) == resource and key(a) < key(incoming)]
    return max(before, key=key) if before else None


def last_in_record(plan: Sequence[Aircraft], phase: str, resource_ids: Iterable, incoming: Aircraft) -> dict:
    """Per-resource last occupant relative to ``incoming`` (absent resources omitted)."""
    record = {}
    for rid in resource_ids:
        probe = incoming.with_resource(phase, rid)
        last = last_in(plan, phase, rid, probe)
        if last is not None:
            record[rid] = last
    return record


def release_time(phase: str, last: Aircraft | None, incoming: Aircraft, sep: SeparationTable = DEFAULT_SEPARATION) -> Time:
    if last is None:
        return Time(0)
    if phase == "gate":
        return last.tf
    return Time(last.entry(phase).minutes + sep(last.c, incoming.c))


def compute_release(rw: int, last: Mapping[int, Aircraft], sep: SeparationTable, incoming: Aircraft) -> Time:
    """Runway release time ``f = tr(last) + s``; a runway never used is free from 0:00."""
    return release_time("landing", last.get(rw), incoming, sep)


def earliest_entry(phase: str, a: Aircraft) -> Time:
    """Lower bound the release time must be beaten by.

    For landing this is ``min(ts + t, tr)``: the selection rule is stated on
    ``ts + t`` while safety is judged on the planned ``tr``, and the planning
    table does not always keep the two equal.
    """
    if phase == "landing":
        return min(Time(a.ts.minutes + a.t.minutes), a.tr)
    return a.entry(phase)


def select_resource(
    phase: str,
    incoming: Aircraft,
    resources_: Iterable,
    last: Mapping,
    sep: SeparationTable = DEFAULT_SEPARATION,
    accept: Callable[[object], bool] | None = None,
):
    """Operational resource with the smallest release time beaten by ``incoming``.

    Ties go to the smaller id. ``accept`` optionally filters the candidates
    further (the adaptation loop uses it to avoid conflicts with successors).
    """
    bound = earliest_entry(phase, incoming)
    best = None
    for res in resources_:
        if not res.operational:
            continue
        rid = resource_id(res)
        f = release_time(phase, last.get(rid), incoming, sep)
        if not bound > f:
            continue
        if accept is not None and not accept(rid):
            continue
        if best is None or (f, rid) < best:
            best = (f, rid)
    return None if best is None else best[1]


def resource_id(res):
    if isinstance(res, Runway):
        return res.r
    if isinstance(res, Gateway):
        return res.g
    return res.gate


def select_runway(incoming, runways, last, sep=DEFAULT_SEPARATION, accept=None):
    return select_resource("landing", incoming, runways, last, sep, accept)


def select_gateway(incoming, gateways, last, sep=DEFAULT_SEPARATION, accept=None):
    return select_resource("taxi", incoming, gateways, last, sep, accept)


def select_gate(incoming, gates, last, sep=DEFAULT_SEPARATION, accept=None):
    return select_resource("gate", incoming, gates, last, sep, accept)


# -- plan transformations ------------------------------------------------------------------------


def apply_reassignment(a: Aircraft, phase: str, resource, not_before: Time | None = None) -> Aircraft:
    """Move ``a`` to ``resource`` for ``phase``.

    The tabulated offsets between the aircraft's times are kept. When
    ``not_before`` is later than the phase's entry time, every time is shifted
    by the same amount so the entry lands exactly on ``not_before``.
    """
    moved = a.with_resource(phase, resource)
    if not_before is not None and moved.entry(phase) < not_before:
        moved = moved.shifted(not_before.minutes - moved.entry(phase).minutes)
    return moved


def wind_change(
    plan: Sequence[Aircraft], not_yet_landed: Callable[[Aircraft], bool], opposite: Mapping[int, int]
) -> list[Aircraft]:
    """Swap every pending landing to the opposite runway; times are untouched."""
    out = []
    for a in plan:
        if not_yet_landed(a):
            if a.r not in opposite:
                raise KeyError(f"runway {a.r} has no declared opposite")
            a = replace(a, r=opposite[a.r])
        out.append(a)
    return out


# -- whole-plan checker -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    phase: str
    resource: object
    leader: int
    follower: int
    gap: int
    required: int

    def involves(self, aircraft_id: int) -> bool:
        return aircraft_id in (self.leader, self.follower)

    def to_json(self) -> dict:
        res = list(self.resource) if isinstance(self.resource, tuple) else self.resource
        return {
            "phase": self.phase,
            "resource": res,
            "leader": self.leader,
            "follower": self.follower,
            "gap": self.gap,
            "required": self.required,
        }


def pair_violation(phase: str, prev: Aircraft, nxt: Aircraft, sep: SeparationTable = DEFAULT_SEPARATION) -> Violation | None:
    if phase == "landing":
        ok = check_landing_safety(prev, nxt, sep)
    elif phase == "taxi":
        ok = check_taxi_safety(prev, nxt, sep)
    else:
        ok = check_gate_safety(prev, nxt)
    if ok:
        return None
    if phase == "gate":
        return Violation(phase, nxt.gate, prev.id, nxt.id, nxt.tk.minutes - prev.tf.minutes, 1)
    gap = nxt.entry(phase).minutes - prev.entry(phase).minutes
    return Violation(phase, nxt.resource(phase), prev.id, nxt.id, gap, sep(prev.c, nxt.c))


def plan_safety(plan: Iterable[Aircraft], sep: SeparationTable = DEFAULT_SEPARATION) -> list[Violation]:
    """Every consecutive same-resource pair of every phase, checked."""
    plan = list(plan)
    out = []
    for phase in PHASES:
        for resource in sorted({a.resource(phase) for a in plan}):
            seq = occupants(plan, phase, resource)
            for prev, nxt in zip(seq, seq[1:]):
                v = pair_violation(phase, prev, nxt, sep)
                if v is not None:
                    out.append(v)
    return out
