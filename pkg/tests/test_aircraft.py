import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from sasnet.aircraft import model as m
from sasnet.aircraft.model import (
    Aircraft,
    FixtureError,
    Gateway,
    Runway,
    SeparationTable,
    Time,
    apply_reassignment,
    check_gate_safety,
    check_landing_safety,
    check_taxi_safety,
    compute_release,
    default_fixture,
    last_in_record,
    plan_safety,
    read_plan,
    select_gateway,
    select_runway,
    bundled_plan,
    wind_change,
    write_plan,
)
from sasnet.aircraft.net import build_arrival_net
from sasnet.values import Duration

T = Time.parse
SEP = SeparationTable()
OPPOSITE = {1: 2, 2: 1, 3: 7, 7: 3}


def by_id(plan, i):
    return next(a for a in plan if a.id == i)


def delayed_a5():
    plan = bundled_plan()
    a5 = by_id(plan, 5).shifted(60)
    return [a5 if a.id == 5 else a for a in plan], a5


def mk(i, c="M", r=1, tr=600, g=1, gate=(1, 1), dwell=20):
    return Aircraft(i, c, r, g, gate, Time(tr - 3), Duration(3), Time(tr), Time(tr + 3), Duration(2), Time(tr + 5), Time(tr + 5 + dwell))


# -- fixture ---------------------------------------------------------------------------


def test_bundled_plan_loads_nine_aircraft():
    plan = bundled_plan()
    assert [a.id for a in plan] == list(range(1, 10))
    a5 = by_id(plan, 5)
    assert (a5.c, a5.r, a5.g, a5.gate, str(a5.ts), a5.t.minutes) == ("M", 1, 7, (3, 2), "9:16", 3)


def test_plan_csv_round_trip():
    plan = bundled_plan()
    assert read_plan(write_plan(plan)) == plan


def test_bad_rows_and_references():
    with pytest.raises(FixtureError):
        read_plan("Aircraft,c\n1,M\n")
    bad = dataclasses.replace(by_id(bundled_plan(), 1), r=42)
    with pytest.raises(FixtureError):
        default_fixture([bad])


def test_aircraft_time_order_invariant():
    with pytest.raises(ValueError):
        Aircraft(1, "M", 1, 1, (1, 1), T("10:00"), Duration(1), T("9:00"), T("10:05"), Duration(1), T("10:06"), T("10:07"))
    with pytest.raises(ValueError):
        mk(1, c="X")


def test_opposite_runways_must_be_symmetric():
    with pytest.raises(FixtureError):
        m.Fixture((), (Runway(1, "free", 2), Runway(2, "free", 3), Runway(3, "free", 1)), (), ())


def test_arrival_net_markings():
    net = build_arrival_net(default_fixture())
    assert len(net.tokens("Planning")) == 9
    assert (5, 1) in net.tokens("planedRw")
    empty = build_arrival_net(None)
    assert all(len(tokens) == 0 for tokens in empty.marking.values())
    assert {"Approached", "Sequenced", "Landed", "Taxied", "Parked"} <= set(empty.marking)


# -- pairwise checks -----------------------------------------------------------------------


def test_landing_safety_strict_boundary():
    a, b = mk(1, tr=600), mk(2, tr=601)
    assert not check_landing_safety(a, b, SEP)  # gap 1, S 1
    assert check_landing_safety(a, mk(2, tr=602), SEP)  # gap S + 1
    assert check_landing_safety(a, mk(2, tr=600 + 600), SEP)


def test_taxi_safety():
    a = mk(1, tr=600)
    assert not check_taxi_safety(a, mk(2, tr=600), SEP)
    assert check_taxi_safety(a, mk(2, tr=602), SEP)
    plan = bundled_plan()
    # bundled table: tg(1) = 10:21, tg(7) = 9:48 -> gap 33 min against S = 1
    assert check_taxi_safety(by_id(plan, 7), by_id(plan, 1), SEP)


def test_gate_safety():
    plan = bundled_plan()
    assert check_gate_safety(by_id(plan, 4), by_id(plan, 2))  # 10:45 > 6:40
    prev = mk(1, tr=600, dwell=20)  # tf = 10:25
    assert not check_gate_safety(prev, mk(2, tr=620))  # tk = 10:25
    assert check_gate_safety(prev, mk(2, tr=621))


def test_separation_table_lookup():
    sep = SeparationTable({("H", "L"): 3})
    assert sep("H", "L") == 3 and sep("L", "H") == 1
    with pytest.raises(ValueError):
        SeparationTable({("H", "L"): 0})
    assert SeparationTable.from_json(sep.to_json()) == sep


# -- release and selection -------------------------------------------------------------------


def test_last_in_record_per_runway():
    plan, a5 = delayed_a5()
    record = last_in_record(plan, "landing", [1, 2, 3, 7], a5)
    assert {r: a.id for r, a in record.items()} == {1: 1, 2: 9, 3: 7, 7: 4}


def test_compute_release_values():
    plan, a5 = delayed_a5()
    record = last_in_record(plan, "landing", [1, 2, 3, 7, 4], a5)
    assert compute_release(2, record, SEP, a5) == T("3:24")
    assert compute_release(1, record, SEP, a5) == T("10:19")
    assert compute_release(4, record, SEP, a5) == T("0:00")


def test_select_runway_for_delayed_a5():
    plan, a5 = delayed_a5()
    fixture = default_fixture()
    record = last_in_record(plan, "landing", [rw.r for rw in fixture.runways], a5)
    assert select_runway(a5, fixture.runways, record, SEP) == 2


def test_select_runway_edge_cases():
    a = mk(9, tr=600)
    down = [Runway(1, "inoperative"), Runway(2, "inoperative")]
    assert select_runway(a, down, {}, SEP) is None
    assert select_runway(a, [Runway(3), Runway(2)], {}, SEP) == 2
    blocked = {1: mk(1, tr=599)}
    assert select_runway(a, [Runway(1)], blocked, SEP) is None


def test_select_gateway_matches_exhaustive_minimum():
    plan, a5 = delayed_a5()
    gateways = default_fixture().gateways
    record = last_in_record(plan, "taxi", [g.g for g in gateways], a5)
    # Oracle: every gateway's release time, keep those beaten by tg = 10:22, take the minimum.
    releases = {}
    for gw in gateways:
        before = [a for a in plan if a.g == gw.g and a.id != 5 and (a.tg, a.id) < (a5.tg, a5.id)]
        last = max(before, key=lambda a: (a.tg, a.id)) if before else None
        releases[gw.g] = Time(last.tg.minutes + 1) if last else Time(0)
    assert releases == {5: T("9:49"), 7: T("10:22"), 9: T("3:28")}
    ok = {g: f for g, f in releases.items() if a5.tg > f}
    assert select_gateway(a5, gateways, record, SEP) == min(ok, key=lambda g: (ok[g], g)) == 9


runway_fixtures = st.lists(
    st.tuples(st.booleans(), st.one_of(st.none(), st.integers(0, 900)), st.sampled_from("HML")),
    min_size=1,
    max_size=8,
)


@settings(max_examples=300, deadline=None)
@given(runway_fixtures, st.integers(10, 900), st.sampled_from("HML"))
def test_select_runway_is_filtered_argmin(layout, tr, cat):
    runways = [Runway(i + 1, "free" if up else "inoperative") for i, (up, _, _) in enumerate(layout)]
    last = {
        i + 1: mk(100 + i, c=c, r=i + 1, tr=t + 3)
        for i, (_, t, c) in enumerate(layout)
        if t is not None
    }
    incoming = mk(1, c=cat, tr=tr)
    sep = SeparationTable({("H", "L"): 3, ("H", "M"): 2})
    chosen = select_runway(incoming, runways, last, sep)
    options = []
    for rw in runways:
        f = last[rw.r].tr.minutes + sep(last[rw.r].c, cat) if rw.r in last else 0
        if rw.operational and min(incoming.ts.minutes + incoming.t.minutes, tr) > f:
            options.append((f, rw.r))
    assert chosen == (min(options)[1] if options else None)
    if chosen is not None:
        f = compute_release(chosen, last, sep, incoming)
        assert Time(incoming.ts.minutes + incoming.t.minutes) > f


# -- reassignment -------------------------------------------------------------------------------


def test_apply_reassignment_reproduces_updated_tuple():
    _, a5 = delayed_a5()
    moved = apply_reassignment(a5, "landing", 2)
    assert (moved.r, str(moved.tr), str(moved.tg), str(moved.tk), str(moved.tf)) == (2, "10:19", "10:22", "10:26", "10:50")


def test_apply_reassignment_identity_and_wait():
    a1 = by_id(bundled_plan(), 1)
    assert apply_reassignment(a1, "landing", a1.r) == a1
    later = apply_reassignment(a1, "landing", 2, not_before=T("10:30"))
    assert later.tr == T("10:30") and later.tf == T("10:57")


def test_negative_shift_is_an_error():
    with pytest.raises(ValueError):
        by_id(bundled_plan(), 9).shifted(-300)


# -- wind ------------------------------------------------------------------------------------------


def test_wind_change_on_bundled_plan():
    plan = bundled_plan()
    swapped = wind_change(plan, lambda a: True, OPPOSITE)
    assert [a.r for a in swapped] == [2, 7, 1, 3, 2, 1, 7, 3, 1]
    for r in (1, 2, 3, 7):
        before = [a.id for a in sorted(plan, key=lambda a: a.tr) if a.r == r]
        after = [a.id for a in sorted(swapped, key=lambda a: a.tr) if a.r == OPPOSITE[r]]
        assert before == after


def test_wind_change_skips_landed_and_needs_opposites():
    plan = bundled_plan()
    assert wind_change(plan, lambda a: False, OPPOSITE) == plan
    with pytest.raises(KeyError):
        wind_change(plan, lambda a: True, {1: 2})


random_plans = st.lists(
    st.tuples(st.sampled_from([1, 2, 3, 7]), st.integers(0, 1200), st.booleans()), min_size=0, max_size=12
)


@settings(max_examples=200, deadline=None)
@given(random_plans)
def test_wind_change_involution(rows):
    plan = [mk(i, r=r, tr=tr + 5) for i, (r, tr, _) in enumerate(rows)]
    landed = {i for i, (_, _, flag) in enumerate(rows) if flag}
    pending = lambda a: a.id not in landed  # noqa: E731
    once = wind_change(plan, pending, OPPOSITE)
    assert wind_change(once, pending, OPPOSITE) == plan
    assert all(a == b for a, b in zip(plan, once) if a.id in landed)


# -- whole-plan safety ---------------------------------------------------------------------------


def brute_force_violations(plan, sep=SEP):
    """Oracle: a pair is consecutive when nobody on the same resource sits strictly between."""
    found = set()
    for phase, res, entry in (("landing", "r", "tr"), ("taxi", "g", "tg"), ("gate", "gate", "tk")):
        for x in plan:
            for y in plan:
                if x.id == y.id or getattr(x, res) != getattr(y, res):
                    continue
                kx, ky = (getattr(x, entry), x.id), (getattr(y, entry), y.id)
                if not kx < ky:
                    continue
                if any(getattr(z, res) == getattr(x, res) and kx < (getattr(z, entry), z.id) < ky for z in plan):
                    continue
                if phase == "gate":
                    bad = not y.tk > x.tf
                else:
                    bad = not (getattr(y, entry).minutes - getattr(x, entry).minutes > sep(x.c, y.c))
                if bad:
                    found.add((phase, x.id, y.id))
    return found


def as_set(violations):
    return {(v.phase, v.leader, v.follower) for v in violations}


def test_bundled_plan_safety_on_time():
    # Landing and taxi are clean; the gate column itself holds two overlaps.
    assert as_set(plan_safety(bundled_plan())) == {("gate", 5, 7), ("gate", 3, 8)}
    assert as_set(plan_safety(bundled_plan())) == brute_force_violations(bundled_plan())


def test_delayed_a5_keeping_runway_1():
    plan, _ = delayed_a5()
    landing = [v for v in plan_safety(plan) if v.phase == "landing"]
    assert [(v.leader, v.follower, v.gap, v.required) for v in landing] == [(1, 5, 1, 1)]


def test_empty_plan_is_safe():
    assert plan_safety([]) == []


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_plan_safety_matches_brute_force(seed):
    rng = random.Random(seed)
    plan = [
        mk(i, c=rng.choice("HML"), r=rng.choice([1, 2]), tr=rng.randint(10, 200), g=rng.choice([1, 2]), gate=(1, rng.choice([1, 2])), dwell=rng.randint(0, 30))
        for i in range(rng.randint(0, 8))
    ]
    sep = SeparationTable({("H", "L"): 4})
    assert as_set(plan_safety(plan, sep)) == brute_force_violations(plan, sep)
