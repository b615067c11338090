"""Single-loop MAPE-K managing system over an emulated managed net.

The loop owns the encoding and the knowledge base. Each cycle:

1. **Monitor** reads system/environment properties through ``getTokens`` and
   turns marking snapshots into quality records (zone M).
2. ``startA`` moves the quality tokens into zone A, where **verification**
   compares them with thresholds, **determineInfluentialElem** attributes the
   violations and **selectCandPlans** filters the plan library.
3. ``startP`` hands the candidates to the **Planner**, which scores every
   candidate by the probability its predicted side effects satisfy all
   thresholds and keeps the most plausible one.
4. ``startE`` passes that plan to the **Executor**, which applies its actions
   through the write primitives, atomically.

Zone places hold plain Python objects; cross-zone transitions move, never copy.
"""

from __future__ import annotations

import logging
import numbers
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

from . import emulator as em
from . import expr as ex
from . import hlpn
from .emulator import EncodedNet, ExecutorPolicy
from .ppn import StateOfInformation
from .values import is_value, same_value, value_key, value_to_json

log = logging.getLogger(__name__)

ZONE_PLACES = (
    "M.initM",
    "M.quality",
    "A.quality",
    "A.verdicts",
    "A.influential",
    "A.candidates",
    "P.candidates",
    "P.scored",
    "P.plausiblePlan",
    "E.plausiblePlan",
)

CROSS_ZONE = {
    "startA": ("M.quality", "A.quality"),
    "startP": ("A.candidates", "P.candidates"),
    "startE": ("P.plausiblePlan", "E.plausiblePlan"),
}


class MissingThreshold(KeyError):
    pass


class PlanRejected(Exception):
    """Plan execution failed; the encoding was left untouched."""


@dataclass(frozen=True)
class Threshold:
    """Requirement ``value <op> bound``."""

    op: str
    bound: Any

    def satisfied(self, value: Any) -> bool:
        if _is_number(value) and _is_number(self.bound):
            v, b = float(value), float(self.bound)
            return {
                "<": v < b,
                "<=": v <= b,
                ">": v > b,
                ">=": v >= b,
                "=": v == b,
                "!=": v != b,
            }[self.op]
        return ex._compare(self.op, value, self.bound)

    def to_json(self):
        return [self.op, _jsonable(self.bound)]


def _is_number(x) -> bool:
    return isinstance(x, numbers.Real) and not isinstance(x, bool)


@dataclass(frozen=True)
class QualityRecord:
    name: str
    value: Any
    timestamp: int
    subject: Any = None
    stale: bool = False


@dataclass(frozen=True)
class InfluentialElement:
    kind: str
    reference: Any
    subject: Any = None
    quality: str = ""

    def as_value(self) -> tuple:
        return (self.kind, self.reference, self.subject)


@dataclass
class Quantifier:
    """Maps a snapshot to a quality value, or to ``{subject: value}``.

    ``attribute`` is the declared read-set: it names the context elements a
    violated record depends on.
    """

    name: str
    measure: Callable[[EncodedNet, "KnowledgeBase"], Any]
    attribute: Callable[[QualityRecord, EncodedNet, "KnowledgeBase"], list[InfluentialElement]] | None = None


@dataclass(frozen=True)
class Invocation:
    primitive: str
    args: tuple = ()


@dataclass(frozen=True)
class Plan:
    """Condition/action rule with predicted side effects.

    The condition is evaluated with ``e`` bound to ``(kind, reference, subject)``
    of an influential element. ``refine`` (optional) instantiates a
    context-dependent plan from the knowledge and the current snapshot.
    """

    id: str
    condition: ex.Expr = ex.TRUE
    actions: tuple[Invocation, ...] = ()
    side_effect: Mapping[str, StateOfInformation] = field(default_factory=dict, compare=False)
    subject: Any = None
    refine: Callable[..., "Plan | None"] | None = field(default=None, compare=False, repr=False)
    note: Mapping[str, Any] = field(default_factory=dict, compare=False)


@dataclass
class KnowledgeBase:
    thresholds: dict[str, Threshold] = field(default_factory=dict)
    plans: list[Plan] = field(default_factory=list)
    quantifiers: list[Quantifier] = field(default_factory=list)
    sys_places: tuple[str, ...] = ()
    env_places: tuple[str, ...] = ()
    sys_props: dict[str, Any] = field(default_factory=dict)
    env_props: dict[str, Any] = field(default_factory=dict)
    zones: dict[str, list] = field(default_factory=lambda: {z: [] for z in ZONE_PLACES})
    adaptations: list[dict] = field(default_factory=list)
    memory: dict[str, Any] = field(default_factory=dict)
    last_records: dict[tuple, QualityRecord] = field(default_factory=dict)

    def quantifier(self, name: str) -> Quantifier | None:
        for q in self.quantifiers:
            if q.name == name:
                return q
        return None


def cross_zone(kb: KnowledgeBase, name: str) -> None:
    """Fire a cross-zone transition: the target place is overwritten by the source tokens."""
    src, dst = CROSS_ZONE[name]
    kb.zones[dst] = kb.zones[src]
    kb.zones[src] = []


# -- Monitor ------------------------------------------------------------------------------


def monitor(
    kb: KnowledgeBase,
    e: EncodedNet,
    quantifiers: Sequence[Quantifier] | None = None,
    timestamp: int = 0,
    events: list | None = None,
) -> KnowledgeBase:
    for name in kb.sys_places:
        kb.sys_props[name] = em.get_tokens(e, name)
    for name in kb.env_places:
        kb.env_props[name] = em.get_tokens(e, name)
    records: list[QualityRecord] = []
    for q in kb.quantifiers if quantifiers is None else quantifiers:
        try:
            measured = q.measure(e, kb)
        except Exception as exc:  # quantifier failure keeps the loop alive
            log.warning("quantifier %s failed: %s", q.name, exc)
            if events is not None:
                events.append(("M", "quantifier-failure", {"quality": q.name, "error": str(exc)}))
            stale = [r for (n, _), r in kb.last_records.items() if n == q.name]
            records.extend(replace(r, timestamp=timestamp, stale=True) for r in stale)
            continue
        if isinstance(measured, dict):
            for subject in sorted(measured, key=_subject_key):
                records.append(QualityRecord(q.name, measured[subject], timestamp, subject))
        else:
            records.append(QualityRecord(q.name, measured, timestamp))
    for r in records:
        kb.last_records[(r.name, _subject_key(r.subject))] = r
    kb.zones["M.quality"] = records
    return kb


def _subject_key(subject):
    if subject is None or is_value(subject):
        return value_key(subject)
    return (99, repr(subject))


# -- Analyzer --------------------------------------------------------------------------------


def verification(kb: KnowledgeBase) -> list[tuple[QualityRecord, bool]] | None:
    records = kb.zones["A.quality"]
    if not records:
        kb.zones["A.verdicts"] = []
        return None
    verdicts = []
    for r in records:
        if r.name not in kb.thresholds:
            raise MissingThreshold(r.name)
        verdicts.append((r, not kb.thresholds[r.name].satisfied(r.value)))
    kb.zones["A.verdicts"] = verdicts
    return verdicts


def adaptation_required(verdicts) -> bool:
    return bool(verdicts) and any(v for _, v in verdicts)


def determine_influential_elem(
    kb: KnowledgeBase, verdicts: Sequence[tuple[QualityRecord, bool]], snapshot: EncodedNet | None = None
) -> list[InfluentialElement]:
    violated = [r for r, bad in verdicts if bad]
    if not violated:
        raise ValueError("no violation to attribute")
    violated.sort(key=lambda r: (r.name, _subject_key(r.subject)))
    elements: list[InfluentialElement] = []
    for r in violated:
        q = kb.quantifier(r.name)
        found = q.attribute(r, snapshot, kb) if q is not None and q.attribute is not None else None
        if not found:
            found = [InfluentialElement("unknown", r.name, r.subject, r.name)]
        for el in found:
            if el not in elements:
                elements.append(el)
    kb.zones["A.influential"] = elements
    return elements


def condition_holds(plan: Plan, element: InfluentialElement, functions=None) -> bool:
    try:
        return ex.evaluate(plan.condition, {"e": element.as_value()}, functions) is True
    except ex.EvalError:
        return False


def select_cand_plans(
    kb: KnowledgeBase, elements: Sequence[InfluentialElement], snapshot: EncodedNet | None = None
) -> list[Plan]:
    cands = []
    for plan in kb.plans:
        matching = [el for el in elements if condition_holds(plan, el, snapshot.functions if snapshot else None)]
        if not matching:
            continue
        if plan.refine is not None:
            plan = plan.refine(plan, kb, snapshot, matching)
            if plan is None:
                continue
        cands.append(plan)
    cands.sort(key=lambda p: p.id)
    if not cands:
        log.warning("no applicable plan for %s", [el.as_value() for el in elements])
    kb.zones["A.candidates"] = cands
    return cands


# -- Planner ---------------------------------------------------------------------------------------


def satisfaction(soi: StateOfInformation, threshold: Threshold) -> float:
    """Probability mass of ``soi`` on the satisfying side of ``threshold``."""
    if soi.impossible:
        return 0.0
    bound = threshold.bound
    if isinstance(bound, bool):
        bound = 1.0 if bound else 0.0
    if not _is_number(bound):
        raise TypeError(f"threshold {threshold!r} is not numeric; cannot score a distribution against it")
    return min(1.0, max(0.0, soi.satisfying_mass(threshold.op, float(bound))))


def calculate_plans_plausibility(
    cands: Sequence[Plan], kb: KnowledgeBase, flags: list | None = None
) -> list[tuple[Plan, float]]:
    scored = []
    for plan in cands:
        score = 1.0
        for quality in sorted(kb.thresholds):
            soi = plan.side_effect.get(quality)
            if soi is None:
                if flags is not None:
                    flags.append((plan.id, quality))
                continue
            score *= satisfaction(soi, kb.thresholds[quality])
        scored.append((plan, score))
    kb.zones["P.scored"] = scored
    return scored


def select_plausible_plan(scored: Sequence[tuple[Plan, float]]) -> Plan:
    if not scored:
        raise ValueError("no scored plans")
    best = min(scored, key=lambda ps: (-ps[1], ps[0].id))
    return best[0]


# -- Executor ---------------------------------------------------------------------------------------


def execute(plan: Plan, e: EncodedNet, policy: ExecutorPolicy = em.FORBID_STRUCTURE) -> EncodedNet:
    """Apply the plan's actions in order; any failure leaves ``e`` unchanged."""
    current = e
    for inv in plan.actions:
        try:
            if inv.primitive in em.WRITE_PRIMITIVES:
                current = em.WRITE_PRIMITIVES[inv.primitive](current, *inv.args)
            elif inv.primitive in em.STRUCTURAL_PRIMITIVES:
                current = em.STRUCTURAL_PRIMITIVES[inv.primitive](current, *inv.args, policy=policy)
            else:
                raise PlanRejected(f"unknown primitive {inv.primitive!r}")
        except PlanRejected:
            raise
        except Exception as exc:
            raise PlanRejected(f"plan {plan.id}: {inv.primitive} failed: {exc}") from exc
    return current


# -- the loop --------------------------------------------------------------------------------------


@dataclass
class CycleReport:
    cycle: int
    step: int
    verdicts: list = field(default_factory=list)
    elements: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    chosen: str | None = None
    adapted: bool = False
    unresolved: bool = False


@dataclass
class LoopState:
    encoded: EncodedNet
    kb: KnowledgeBase
    period: int = 1
    policy: Any = None
    executor_policy: ExecutorPolicy = em.FORBID_STRUCTURE
    step: int = 0
    cycle: int = 0
    planner_invocations: int = 0
    log: list[dict] = field(default_factory=list)
    cycles: list[CycleReport] = field(default_factory=list)
    on_adaptation: Callable[["LoopState", Plan], None] | None = None

    def emit(self, zone: str, kind: str, payload: Any) -> None:
        self.log.append({"cycle": self.cycle, "zone": zone, "kind": kind, "payload": _jsonable(payload)})


def run_cycle(state: LoopState) -> CycleReport:
    state.cycle += 1
    kb = state.kb
    report = CycleReport(state.cycle, state.step)
    snapshot = state.encoded
    failures: list = []
    monitor(kb, snapshot, timestamp=state.step, events=failures)
    for zone, kind, payload in failures:
        state.emit(zone, kind, payload)
    cross_zone(kb, "startA")
    verdicts = verification(kb) or []
    report.verdicts = [(r.name, r.subject, r.value, bad) for r, bad in verdicts]
    if not adaptation_required(verdicts):
        state.cycles.append(report)
        return report
    state.emit(
        "A",
        "violation",
        [
            {"quality": r.name, "subject": r.subject, "value": r.value, "threshold": kb.thresholds[r.name].to_json()}
            for r, bad in verdicts
            if bad
        ],
    )
    elements = determine_influential_elem(kb, verdicts, snapshot)
    report.elements = [el.as_value() for el in elements]
    state.emit("A", "influential", [{"kind": el.kind, "reference": el.reference, "subject": el.subject} for el in elements])
    cands = select_cand_plans(kb, elements, snapshot)
    report.candidates = [p.id for p in cands]
    cross_zone(kb, "startP")
    state.planner_invocations += 1
    if not cands:
        state.emit("P", "no-candidate", {"elements": report.elements})
        report.unresolved = True
        state.cycles.append(report)
        return report
    flags: list = []
    scored = calculate_plans_plausibility(kb.zones["P.candidates"], kb, flags)
    report.scores = [(p.id, s) for p, s in scored]
    state.emit("P", "scores", [{"plan": p.id, "subject": p.subject, "score": s} for p, s in scored])
    for plan_id, quality in flags:
        state.emit("P", "missing-side-effect", {"plan": plan_id, "quality": quality})
    best = select_plausible_plan(scored)
    best_score = dict((p.id, s) for p, s in scored)[best.id]
    if best_score <= 0.0:
        state.emit("P", "no-plausible-plan", {"best": best.id, "score": best_score})
        report.unresolved = True
        state.cycles.append(report)
        return report
    kb.zones["P.plausiblePlan"] = [best]
    cross_zone(kb, "startE")
    try:
        state.encoded = execute(best, state.encoded, state.executor_policy)
    except PlanRejected as exc:
        state.emit("E", "rejected", {"plan": best.id, "reason": str(exc)})
        report.unresolved = True
        state.cycles.append(report)
        return report
    finally:
        kb.zones["E.plausiblePlan"] = []
    report.chosen = best.id
    report.adapted = True
    kb.adaptations.append({"cycle": state.cycle, "step": state.step, "plan": best.id, "subject": best.subject})
    state.emit(
        "E",
        "adaptation",
        {
            "plan": best.id,
            "subject": best.subject,
            "score": best_score,
            "actions": [_invocation_json(inv) for inv in best.actions],
            **{k: v for k, v in best.note.items()},
        },
    )
    if state.on_adaptation is not None:
        state.on_adaptation(state, best)
    state.cycles.append(report)
    return report


def iterate(state: LoopState, budget: int) -> LoopState:
    """Run ``budget`` move-steps, analysing every ``period`` steps."""
    for _ in range(budget):
        move_step(state)
        if state.step % state.period == 0:
            run_cycle(state)
    return state


def move_step(state: LoopState) -> em.MoveEvent | None:
    state.encoded, event = em.move(state.encoded, state.policy, state.step)
    state.step += 1
    if event is not None:
        # move -> initM
        state.kb.zones["M.initM"] = [event]
        state.emit("emulator", "move", {"transition": event.transition, "binding": hlpn.binding_to_json(event.binding), "step": event.step})
    return event


# -- JSON helpers -------------------------------------------------------------------------------------


def _invocation_json(inv: Invocation):
    return {"primitive": inv.primitive, "args": [_jsonable(a) for a in inv.args]}


def _jsonable(obj):
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_jsonable(v) for v in obj]
    if is_value(obj):
        return value_to_json(obj)
    if isinstance(obj, tuple):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "to_json"):
        return obj.to_json()
    if isinstance(obj, ex.Expr):
        return ex.expr_to_json(obj)
    return repr(obj)
