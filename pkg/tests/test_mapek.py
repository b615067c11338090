import logging

import pytest
from hypothesis import given, settings, strategies as st

from sasnet import emulator as em
from sasnet import expr as ex
from sasnet import mapek
from sasnet.hlpn import build
from sasnet.mapek import (
    InfluentialElement,
    Invocation,
    KnowledgeBase,
    LoopState,
    Plan,
    PlanRejected,
    Quantifier,
    QualityRecord,
    Threshold,
)
from sasnet.ppn import SoI
from sasnet.values import Multiset

LEVEL_GRID = (-0.5, 20.5, 21)


def dirac(at):
    return SoI.dirac(*LEVEL_GRID, at)


def drifting_net(start=5):
    x = ex.var("x")
    return build(
        [("level", "int")],
        [("drift", ex.lt(x, 10))],
        [("level", "drift", "in", x), ("level", "drift", "out", ex.add(x, 1))],
        {"level": [start]},
    )


def level_of(e, kb):
    return next(iter(em.get_tokens(e, "level")))


def attribute_level(record, e, kb):
    return [InfluentialElement("resource", ("level", record.value), None, record.name)]


RESET = Plan(
    "reset",
    ex.eq(ex.field(ex.var("e"), 0), "resource"),
    (Invocation("setTokens", ("level", Multiset([0]))),),
    {"level": dirac(0)},
)


def toy_kb(plans=(RESET,)):
    return KnowledgeBase(
        thresholds={"level": Threshold("<=", 6)},
        plans=list(plans),
        quantifiers=[Quantifier("level", level_of, attribute_level)],
        sys_places=("level",),
    )


def test_threshold_directions():
    assert Threshold(">=", 1).satisfied(0.5) is False
    assert Threshold(">", 0).satisfied(1)
    assert Threshold("=", True).satisfied(True)
    assert not Threshold("=", True).satisfied(False)


def test_monitor_writes_one_record_per_quantifier():
    kb = toy_kb()
    mapek.monitor(kb, em.encode(drifting_net()), timestamp=3)
    assert kb.zones["M.quality"] == [QualityRecord("level", 5, 3)]
    assert kb.sys_props["level"] == Multiset([5])


def test_zero_quantifiers_leave_quality_empty():
    kb = toy_kb()
    mapek.monitor(kb, em.encode(drifting_net()), quantifiers=[], timestamp=1)
    assert kb.zones["M.quality"] == []


def test_quantifier_failure_keeps_stale_record():
    kb = toy_kb()
    e = em.encode(drifting_net())
    mapek.monitor(kb, e, timestamp=1)

    def broken(e, kb):
        raise RuntimeError("sensor down")

    events = []
    mapek.monitor(kb, e, quantifiers=[Quantifier("level", broken)], timestamp=2, events=events)
    (rec,) = kb.zones["M.quality"]
    assert rec.stale and rec.timestamp == 2 and rec.value == 5
    assert events and events[0][1] == "quantifier-failure"


def test_verification():
    kb = toy_kb()
    kb.zones["A.quality"] = [QualityRecord("level", 7, 0)]
    assert mapek.verification(kb) == [(QualityRecord("level", 7, 0), True)]
    kb.zones["A.quality"] = [QualityRecord("level", 2, 0)]
    verdicts = mapek.verification(kb)
    assert not mapek.adaptation_required(verdicts)
    kb.zones["A.quality"] = [QualityRecord("unknown", 2, 0)]
    with pytest.raises(mapek.MissingThreshold):
        mapek.verification(kb)
    kb.zones["A.quality"] = []
    assert mapek.verification(kb) is None


def test_influential_elements():
    kb = toy_kb()
    kb.thresholds["zeta"] = Threshold(">", 0)
    verdicts = [(QualityRecord("zeta", -1, 0), True), (QualityRecord("level", 9, 0), True)]
    elems = mapek.determine_influential_elem(kb, verdicts)
    assert [el.quality for el in elems] == ["level", "zeta"]
    assert elems[1].kind == "unknown"
    with pytest.raises(ValueError):
        mapek.determine_influential_elem(kb, [(QualityRecord("level", 1, 0), False)])


def test_candidate_selection(caplog):
    kb = toy_kb()
    res = InfluentialElement("resource", ("level", 9))
    env = InfluentialElement("environment", ("wind", "reverse"))
    assert mapek.select_cand_plans(kb, [res]) == [RESET]
    with caplog.at_level(logging.WARNING):
        assert mapek.select_cand_plans(kb, [env]) == []
    assert "no applicable plan" in caplog.text


def test_candidates_sorted_and_refined():
    drop = Plan("a-drop", ex.TRUE, refine=lambda p, kb, snap, els: None)
    keep = Plan("b-keep", ex.TRUE, refine=lambda p, kb, snap, els: Plan("b-keep", ex.TRUE, note={"n": len(els)}))
    kb = toy_kb([RESET, keep, drop])
    cands = mapek.select_cand_plans(kb, [InfluentialElement("resource", ("x",))])
    assert [p.id for p in cands] == ["b-keep", "reset"]
    assert cands[0].note == {"n": 1}


def test_plausibility_scores():
    kb = KnowledgeBase(thresholds={"q": Threshold(">", 0)})
    grid = (-0.5, 1.5, 2)  # centres 0 and 1
    good = Plan("good", side_effect={"q": SoI(*grid[:2], [0.1, 0.9])})
    poor = Plan("poor", side_effect={"q": SoI(*grid[:2], [0.6, 0.4])})
    scores = dict((p.id, s) for p, s in mapek.calculate_plans_plausibility([good, poor], kb))
    assert scores["good"] == pytest.approx(0.9)
    assert scores["poor"] == pytest.approx(0.4)


def test_missing_side_effect_defaults_to_one_and_is_flagged():
    kb = KnowledgeBase(thresholds={"q": Threshold(">", 0), "r": Threshold(">", 0)})
    plan = Plan("p", side_effect={"q": SoI(-0.5, 1.5, [0, 1])})
    flags = []
    [(_, score)] = mapek.calculate_plans_plausibility([plan], kb, flags)
    assert score == 1.0
    assert flags == [("p", "r")]


def test_select_plausible_plan():
    a, b = Plan("a"), Plan("b")
    assert mapek.select_plausible_plan([(a, 0.9), (b, 0.4)]) is a
    assert mapek.select_plausible_plan([(b, 0.5), (a, 0.5)]) is a
    with pytest.raises(ValueError):
        mapek.select_plausible_plan([])


def test_execute_applies_actions():
    e = em.encode(drifting_net())
    assert em.get_tokens(mapek.execute(RESET, e), "level") == Multiset([0])


def test_execute_is_atomic_on_policy_violation():
    e = em.encode(drifting_net())
    bad = Plan(
        "bad",
        actions=(Invocation("setTokens", ("level", Multiset([0]))), Invocation("addPlace", ("extra", "int"))),
    )
    with pytest.raises(PlanRejected):
        mapek.execute(bad, e)
    with pytest.raises(PlanRejected):
        mapek.execute(Plan("typo", actions=(Invocation("frobnicate"),)), e)
    assert em.get_tokens(e, "level") == Multiset([5])


def test_rejected_plan_leaves_loop_encoding_unchanged():
    bad = Plan(
        "bad",
        ex.TRUE,
        (Invocation("setTokens", ("level", Multiset([0]))), Invocation("addPlace", ("extra", "int"))),
        {"level": dirac(0)},
    )
    state = LoopState(em.encode(drifting_net(8)), toy_kb([bad]))
    before = state.encoded
    report = mapek.run_cycle(state)
    assert state.encoded == before
    assert report.unresolved and not report.adapted
    assert state.log[-1]["kind"] == "rejected"


def test_iterate_budget_zero_is_identity():
    state = LoopState(em.encode(drifting_net()), toy_kb())
    before = state.encoded
    mapek.iterate(state, 0)
    assert state.encoded == before and state.step == 0 and state.log == []


def test_no_violation_means_no_planner():
    state = LoopState(em.encode(drifting_net(0)), toy_kb())
    mapek.iterate(state, 5)
    assert state.planner_invocations == 0
    assert all(not c.adapted for c in state.cycles)


def test_loop_adapts_once_threshold_is_crossed():
    state = LoopState(em.encode(drifting_net(5)), toy_kb())
    mapek.iterate(state, 2)  # 5 -> 6 fine, 6 -> 7 violates and is reset
    assert state.planner_invocations == 1
    assert [a["plan"] for a in state.kb.adaptations] == ["reset"]
    assert em.get_tokens(state.encoded, "level") == Multiset([0])
    kinds = [r["kind"] for r in state.log]
    assert kinds.index("violation") < kinds.index("adaptation")


def test_zone_exclusivity_after_cycle():
    state = LoopState(em.encode(drifting_net(5)), toy_kb())
    mapek.iterate(state, 3)
    zones = state.kb.zones
    assert zones["M.quality"] == []
    assert zones["P.plausiblePlan"] == [] and zones["E.plausiblePlan"] == []
    for rec in zones["A.quality"]:
        assert all(rec not in zones[z] for z in zones if z != "A.quality")


def test_period_controls_analysis_frequency():
    state = LoopState(em.encode(drifting_net(0)), toy_kb(), period=3)
    mapek.iterate(state, 7)
    assert state.cycle == 2


def _plans_with_masses(ms):
    grid = (-0.5, 1.5)
    return [(Plan(f"p{i}", side_effect={"q": SoI(*grid, [1 - m, m]) if 0 < m < 1 else SoI(*grid, [0, 1] if m else [1, 0])}), m) for i, m in enumerate(ms)]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.floats(0.01, 100))
def test_argmax_invariant_under_scaling(scores, factor):
    plans = [(Plan(f"p{i}"), s) for i, s in enumerate(scores)]
    scaled = [(p, s * factor) for p, s in plans]
    assert mapek.select_plausible_plan(plans) is mapek.select_plausible_plan(scaled)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_scores_bounded(ms):
    kb = KnowledgeBase(thresholds={"q": Threshold(">", 0)})
    for _, s in mapek.calculate_plans_plausibility([p for p, _ in _plans_with_masses(ms)], kb):
        assert 0.0 <= s <= 1.0
