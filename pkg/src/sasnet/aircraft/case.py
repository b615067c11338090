"""MAPE-K instantiation for the arrival procedure.

Monitored qualities (one record per cycle, subject = the aircraft to replan):

* ``landing_margin`` / ``taxi_margin`` / ``gate_margin``: smallest slack, in
  minutes, between the target aircraft and its neighbours on the resource it
  holds in that phase. Safe iff ``> 0``.
* ``wind_alignment``: whether the runway orientation matches the wind.

Planned-only qualities (scored from side effects, never measured):

* ``delay``: minutes the plan pushes the landing back. Must be ``<= max_delay``.
* ``resource_available``: whether the plan found a resource at all.

The watched set is every aircraft that reached ``Sequenced``, every aircraft
the loop has already reassigned, and aircraft flagged by events. When a pair
on a shared resource is unsafe, the follower is replanned unless it is already
past that phase, in which case the leader is. One aircraft is handled per
cycle. A successor knocked out by a reassignment is picked up in a later
cycle, up to fleet-size adaptations per external event.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Sequence

from .. import emulator as em
from .. import expr as ex
from ..emulator import EncodedNet
from ..mapek import InfluentialElement, Invocation, KnowledgeBase, LoopState, Plan, Quantifier, QualityRecord, Threshold
from ..ppn import StateOfInformation
from ..values import Multiset, Time
from . import net as arrival
from .model import (
    PHASES,
    RESOURCE_KIND,
    Aircraft,
    SeparationTable,
    apply_reassignment,
    last_in_record,
    margin,
    neighbours,
    pair_violation,
    release_time,
    resource_id,
    select_resource,
    wind_change,
)

MARGIN_CAP = 240
MARGIN_GRID = (-MARGIN_CAP - 0.5, MARGIN_CAP + 0.5, 2 * MARGIN_CAP + 1)
DELAY_GRID = (-0.5, MARGIN_CAP + 0.5, MARGIN_CAP + 1)
FLAG_GRID = (-0.5, 1.5, 2)

MARGIN_QUALITY = {"landing": "landing_margin", "taxi": "taxi_margin", "gate": "gate_margin"}
PHASE_OF_QUALITY = {v: k for k, v in MARGIN_QUALITY.items()}
PAST_PHASE = {
    "landing": ("Landed", "Taxied", "Parked"),
    "taxi": ("Taxied", "Parked"),
    "gate": ("Parked",),
}


def default_thresholds(max_delay: int = 15) -> dict[str, Threshold]:
    return {
        "landing_margin": Threshold(">", 0),
        "taxi_margin": Threshold(">", 0),
        "gate_margin": Threshold(">", 0),
        "wind_alignment": Threshold("=", True),
        "delay": Threshold("<=", max_delay),
        "resource_available": Threshold("=", True),
    }


def _clamp(x: int) -> int:
    return max(-MARGIN_CAP, min(MARGIN_CAP, x))


def near_dirac(grid: tuple, at: float) -> StateOfInformation:
    lo, hi, bins = grid
    return StateOfInformation.dirac(lo, hi, bins, at)


# -- snapshot views ------------------------------------------------------------------------------


@dataclass(frozen=True)
class View:
    plan: list[Aircraft]
    runways: list
    gateways: list
    gates: list
    positions: dict[str, frozenset]
    wind: str | None
    orientation: str | None

    def by_id(self, aid: int) -> Aircraft:
        for a in self.plan:
            if a.id == aid:
                return a
        raise KeyError(aid)

    def resources(self, phase: str) -> list:
        return {"landing": self.runways, "taxi": self.gateways, "gate": self.gates}[phase]

    def operational(self, phase: str, rid) -> bool:
        for res in self.resources(phase):
            if resource_id(res) == rid:
                return res.operational
        return False


def _single(tokens: Multiset):
    items = list(tokens.distinct())
    return items[0] if items else None


def view_of(e: EncodedNet) -> View:
    get = lambda place: em.get_tokens(e, place)  # noqa: E731
    return View(
        arrival.plan_from_tokens(get("Planning")),
        arrival.runways_from_tokens(get("Runways")),
        arrival.gateways_from_tokens(get("Gateways")),
        arrival.gates_from_tokens(get("Gates")),
        {p: frozenset(get(p).distinct()) for p in arrival.PHASE_PLACES},
        _single(get("Wind")),
        _single(get("Orientation")),
    )


# -- the case -----------------------------------------------------------------------------------------


@dataclass
class Target:
    aircraft: Aircraft
    margins: dict[str, int]  # phase -> slack, only for phases not yet passed


class ArrivalCase:
    """Quantifiers, attribution and plan library for the arrival procedure."""

    def __init__(self, separation: SeparationTable, opposite: dict[int, int], fleet: int, max_delay: int = 15):
        self.sep = separation
        self.opposite = dict(opposite)
        self.fleet = fleet
        self.max_delay = max_delay

    # -- knowledge

    def knowledge(self) -> KnowledgeBase:
        kb = KnowledgeBase(
            thresholds=default_thresholds(self.max_delay),
            plans=self.plans(),
            quantifiers=self.quantifiers(),
            sys_places=arrival.SYSTEM_PLACES,
            env_places=arrival.ENVIRONMENT_PLACES,
        )
        kb.memory.update(now=Time(0), watch=set(), touched=set(), epoch=0)
        return kb

    # -- analysis helpers

    def frozen(self, kb: KnowledgeBase, view: View, a: Aircraft, phase: str) -> bool:
        """Past ``phase`` already: by the clock or by its position in the net."""
        if a.entry(phase) < kb.memory["now"]:
            return True
        return any(a.id in view.positions[p] for p in PAST_PHASE[phase])

    def watched(self, kb: KnowledgeBase, view: View) -> list[int]:
        ids = set(view.positions["Sequenced"]) | kb.memory["touched"] | kb.memory["watch"]
        known = {a.id for a in view.plan}
        return sorted(ids & known)

    def conflicts(self, kb: KnowledgeBase, view: View) -> list[tuple[str, Aircraft | None, Aircraft]]:
        """(phase, leader, follower) for every unsafe pair touching a watched aircraft.

        A missing leader marks an aircraft whose own resource is out of service.
        """
        found = []
        for aid in self.watched(kb, view):
            a = view.by_id(aid)
            for phase in PHASES:
                if not view.operational(phase, a.resource(phase)) and not self.frozen(kb, view, a, phase):
                    found.append((phase, None, a))
                prev, nxt = neighbours(view.plan, phase, a)
                for lead, follow in ((prev, a), (a, nxt)):
                    if lead is not None and follow is not None and pair_violation(phase, lead, follow, self.sep):
                        found.append((phase, lead, follow))
        return found

    def target(self, kb: KnowledgeBase, view: View) -> Target | None:
        candidates = []
        for phase, lead, follow in self.conflicts(kb, view):
            if not self.frozen(kb, view, follow, phase):
                pick = follow
            elif lead is not None and not self.frozen(kb, view, lead, phase):
                pick = lead
            else:
                continue
            candidates.append((pick.entry(phase), pick.id, PHASES.index(phase), pick))
        if not candidates:
            return None
        chosen = min(candidates, key=lambda c: c[:3])[3]
        return Target(chosen, self.own_margins(kb, view, chosen, both_sides=True))

    def own_margins(self, kb, view: View, a: Aircraft, both_sides: bool, plan: Sequence[Aircraft] | None = None) -> dict[str, int]:
        plan = view.plan if plan is None else plan
        out = {}
        for phase in PHASES:
            if self.frozen(kb, view, a, phase):
                continue
            if not view.operational(phase, a.resource(phase)):
                out[phase] = -MARGIN_CAP
                continue
            prev, nxt = neighbours(list(plan), phase, a)
            slack = MARGIN_CAP
            if prev is not None:
                slack = min(slack, margin(phase, prev, a, self.sep))
            if both_sides and nxt is not None:
                slack = min(slack, margin(phase, a, nxt, self.sep))
            out[phase] = _clamp(slack)
        return out

    # -- monitor side

    def quantifiers(self) -> list[Quantifier]:
        qs = [
            Quantifier(MARGIN_QUALITY[phase], self._margin_measure(phase), self._margin_attribution(phase))
            for phase in PHASES
        ]
        qs.append(Quantifier("wind_alignment", self._wind_measure, self._wind_attribution))
        return qs

    def _margin_measure(self, phase: str):
        def measure(e: EncodedNet, kb: KnowledgeBase):
            target = self.target(kb, view_of(e))
            if target is None or phase not in target.margins:
                return {}
            return {target.aircraft.id: target.margins[phase]}

        return measure

    def _margin_attribution(self, phase: str):
        def attribute(record: QualityRecord, e: EncodedNet, kb: KnowledgeBase):
            a = view_of(e).by_id(record.subject)
            return [InfluentialElement("resource", (RESOURCE_KIND[phase], a.resource(phase)), a.id, record.name)]

        return attribute

    def _wind_measure(self, e: EncodedNet, kb: KnowledgeBase):
        view = view_of(e)
        return view.wind == view.orientation

    def _wind_attribution(self, record: QualityRecord, e: EncodedNet, kb: KnowledgeBase):
        return [InfluentialElement("environment", ("wind", view_of(e).wind), None, record.name)]

    # -- plan library

    def plans(self) -> list[Plan]:
        e = ex.var("e")
        kind = ex.field(e, 0, "kind")
        ref_type = ex.field(ex.field(e, 1, "reference"), 0)
        resource = ex.eq(kind, "resource")
        return [
            Plan("p1-min-release", resource, refine=self._refine_min_release),
            Plan("p2-emergency-runway", ex.conj(resource, ex.eq(ref_type, "runway")), refine=self._refine_emergency),
            Plan("p3-wait", resource, refine=self._refine_wait),
            Plan("p4-wind-swap", ex.conj(ex.eq(kind, "environment"), ex.eq(ref_type, "wind")), refine=self._refine_wind),
        ]

    def _budget_left(self, kb: KnowledgeBase) -> bool:
        return len(kb.adaptations) - kb.memory["epoch"] < self.fleet

    def _target_phases(self, kb: KnowledgeBase, aid: int) -> list[str]:
        phases = {
            PHASE_OF_QUALITY[el.quality]
            for el in kb.zones["A.influential"]
            if el.kind == "resource" and el.subject == aid and el.quality in PHASE_OF_QUALITY
        }
        return [p for p in PHASES if p in phases]

    def _reselect(self, kb, view: View, a: Aircraft, phase: str) -> Aircraft | None:
        others = [b for b in view.plan if b.id != a.id]
        ids = [resource_id(res) for res in view.resources(phase)]
        last = last_in_record(others, phase, ids, a)

        def no_successor_clash(rid) -> bool:
            probe = a.with_resource(phase, rid)
            _, nxt = neighbours(others + [probe], phase, probe)
            return nxt is None or pair_violation(phase, probe, nxt, self.sep) is None

        rid = select_resource(phase, a, view.resources(phase), last, self.sep, no_successor_clash)
        if rid is None:
            rid = select_resource(phase, a, view.resources(phase), last, self.sep)
        return None if rid is None else apply_reassignment(a, phase, rid)

    def _reassign_plan(self, plan: Plan, kb, view: View, a: Aircraft, fixed: Aircraft | None, extra: dict) -> Plan:
        available = fixed is not None
        predicted = fixed if available else a
        others = [b for b in view.plan if b.id != a.id]
        margins = self.own_margins(kb, view, predicted, both_sides=False, plan=others + [predicted])
        delay = max(0, predicted.tr.minutes - a.tr.minutes)
        side = {
            MARGIN_QUALITY[p]: near_dirac(MARGIN_GRID, margins.get(p, MARGIN_CAP)) for p in PHASES
        }
        side["delay"] = near_dirac(DELAY_GRID, min(delay, MARGIN_CAP))
        side["resource_available"] = near_dirac(FLAG_GRID, 1.0 if available else 0.0)
        side["wind_alignment"] = near_dirac(FLAG_GRID, 1.0 if view.wind == view.orientation else 0.0)
        actions = self._write_aircraft(kb, predicted) if available else ()
        note = {"target": a.id, "before": _brief(a), "after": _brief(predicted), **extra}
        return replace(plan, actions=actions, side_effect=side, subject=a.id, note=note)

    def _write_aircraft(self, kb: KnowledgeBase, new: Aircraft) -> tuple[Invocation, ...]:
        """``setTokens`` calls replacing the target's planning tuple and changed assignments."""
        props = kb.sys_props
        old = next(Aircraft.from_value(v) for v in props["Planning"].distinct() if v[0] == new.id)
        current = arrival.planning_tokens(Aircraft.from_value(v) for v in props["Planning"])
        acts = []
        for place, before, after in (
            ("Planning", old.to_value(), new.to_value()),
            ("planedRw", (old.id, old.r), (new.id, new.r)),
            ("planedGw", (old.id, old.g), (new.id, new.g)),
            ("planedG", (old.id, old.gate), (new.id, new.gate)),
        ):
            if before != after:
                tokens = current[place] - Multiset([before]) + Multiset([after])
                acts.append(Invocation("setTokens", (place, tokens)))
        return tuple(acts)

    def _target_of(self, kb, snapshot, matching) -> tuple[View, Aircraft] | None:
        if not self._budget_left(kb):
            return None
        view = view_of(snapshot)
        subjects = sorted({el.subject for el in matching if el.subject is not None})
        if not subjects:
            return None
        return view, view.by_id(subjects[0])

    def _refine_min_release(self, plan: Plan, kb, snapshot, matching):
        found = self._target_of(kb, snapshot, matching)
        if found is None:
            return None
        view, a = found
        new = a
        for phase in self._target_phases(kb, a.id):
            new = self._reselect(kb, view, new, phase)
            if new is None:
                break
        return self._reassign_plan(plan, kb, view, a, new, {})

    def _refine_emergency(self, plan: Plan, kb, snapshot, matching):
        found = self._target_of(kb, snapshot, matching)
        if found is None:
            return None
        view, a = found
        er = self.opposite.get(a.r)
        new: Aircraft | None = None
        if er is not None and view.operational("landing", er):
            others = [b for b in view.plan if b.id != a.id]
            last = last_in_record(others, "landing", [er], a.with_resource("landing", er))
            f = release_time("landing", last.get(er), a, self.sep)
            if min(Time(a.ts.minutes + a.t.minutes), a.tr) > f:
                new = apply_reassignment(a, "landing", er)
        if new is not None:
            for phase in self._target_phases(kb, a.id):
                if phase == "landing":
                    continue
                new = self._reselect(kb, view, new, phase)
                if new is None:
                    break
        return self._reassign_plan(plan, kb, view, a, new, {})

    def _refine_wait(self, plan: Plan, kb, snapshot, matching):
        found = self._target_of(kb, snapshot, matching)
        if found is None:
            return None
        view, a = found
        others = [b for b in view.plan if b.id != a.id]
        new: Aircraft | None = a
        if not all(view.operational(p, a.resource(p)) for p in PHASES if not self.frozen(kb, view, a, p)):
            new = None
        else:
            for _ in range(len(view.plan) * len(PHASES) + 1):
                shift = 0
                for phase in PHASES:
                    if self.frozen(kb, view, a, phase):
                        continue
                    prev, _ = neighbours(others + [new], phase, new)
                    if prev is not None and margin(phase, prev, new, self.sep) <= 0:
                        shift = max(shift, 1 - margin(phase, prev, new, self.sep))
                if shift == 0:
                    break
                new = new.shifted(shift)
        return self._reassign_plan(plan, kb, view, a, new, {})

    def _refine_wind(self, plan: Plan, kb, snapshot, matching):
        if not self._budget_left(kb):
            return None
        view = view_of(snapshot)
        pending = lambda a: not self.frozen(kb, view, a, "landing")  # noqa: E731
        swapped = wind_change(view.plan, pending, self.opposite)
        side = {q: near_dirac(MARGIN_GRID, MARGIN_CAP) for q in MARGIN_QUALITY.values()}
        side["delay"] = near_dirac(DELAY_GRID, 0)
        side["resource_available"] = near_dirac(FLAG_GRID, 1.0)
        side["wind_alignment"] = near_dirac(FLAG_GRID, 1.0)
        tokens = arrival.planning_tokens(swapped)
        actions = (
            Invocation("setTokens", ("Planning", tokens["Planning"])),
            Invocation("setTokens", ("planedRw", tokens["planedRw"])),
            Invocation("setTokens", ("Orientation", Multiset([view.wind]))),
        )
        moved = [a.id for a, b in zip(view.plan, swapped) if a.r != b.r]
        return replace(plan, actions=actions, side_effect=side, subject=None, note={"swapped": moved, "orientation": view.wind})

    # -- loop hook

    def on_adaptation(self, state: LoopState, plan: Plan) -> None:
        kb = state.kb
        target = plan.note.get("target")
        if target is None:
            return
        kb.memory["touched"].add(target)
        hop = len(kb.adaptations) - kb.memory["epoch"]
        if hop > 1:
            state.emit("E", "cascade", {"hop": hop, "aircraft": target})


def _brief(a: Aircraft) -> dict[str, Any]:
    return {
        "r": a.r,
        "g": a.g,
        "gate": list(a.gate),
        "tr": str(a.tr),
        "tg": str(a.tg),
        "tk": str(a.tk),
        "tf": str(a.tf),
    }
