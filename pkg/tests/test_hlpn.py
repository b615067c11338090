import random

import pytest
from hypothesis import given, settings, strategies as st

import netgen
from sasnet import expr as ex
from sasnet import hlpn
from sasnet.hlpn import NetError, NotEnabled, PlaceTypeError, build
from sasnet.values import Multiset


def counter_net(tokens=(1, 2)):
    return build(
        [("p", "int"), ("q", "int")],
        [("t", ex.lt(ex.var("x"), 3))],
        [("p", "t", "in", ex.var("x")), ("q", "t", "out", ex.add(ex.var("x"), 10))],
        {"p": tokens},
    )


def test_enabled_bindings_are_canonical():
    net = counter_net((2, 1, 5))
    assert hlpn.find_enabled_bindings(net, "t") == [{"x": 1}, {"x": 2}]


def test_fire_moves_tokens_and_evaluates_outputs():
    net = hlpn.fire(counter_net(), "t", {"x": 2})
    assert net.tokens("p") == Multiset([1])
    assert net.tokens("q") == Multiset([12])


def test_fire_rejects_disabled_binding():
    with pytest.raises(NotEnabled):
        hlpn.fire(counter_net(), "t", {"x": 7})


def test_non_boolean_guard_raises():
    net = build([("p", "int")], [("t", ex.var("x"))], [("p", "t", "in", ex.var("x"))], {"p": [1]})
    with pytest.raises(ex.TypeMismatch):
        hlpn.find_enabled_bindings(net, "t")


def test_shared_variable_unifies_across_arcs():
    net = build(
        [("a", "int"), ("b", ("int", "int")), ("c", "int")],
        ["t"],
        [
            ("a", "t", "in", ex.var("i")),
            ("b", "t", "in", ex.tup(ex.var("i"), ex.var("r"))),
            ("c", "t", "out", ex.var("r")),
        ],
        {"a": [5], "b": [(5, 2), (4, 1)]},
    )
    assert hlpn.find_enabled_bindings(net, "t") == [{"i": 5, "r": 2}]


def test_bag_annotation_needs_multiplicity():
    net = build([("p", "int")], ["t"], [("p", "t", "in", ex.bag((ex.var("x"), 2)))], {"p": [1, 2, 2]})
    assert hlpn.find_enabled_bindings(net, "t") == [{"x": 2}]


def test_validation_errors():
    with pytest.raises(NetError):
        build([("p", "int"), ("p", "int")], [], [])
    with pytest.raises(NetError):
        build([("p", "int")], ["t"], [("q", "t", "in", ex.var("x"))])
    with pytest.raises(NetError):  # output variable with no input pattern
        build([("p", "int")], ["t"], [("p", "t", "out", ex.var("y"))])
    with pytest.raises(PlaceTypeError):
        build([("p", "int")], [], [], {"p": ["x"]})


def test_output_type_checked_at_fire_time():
    net = build([("p", "int"), ("q", "sym")], ["t"], [("p", "t", "in", ex.var("x")), ("q", "t", "out", ex.var("x"))], {"p": [1]})
    with pytest.raises(PlaceTypeError):
        hlpn.fire(net, "t", {"x": 1})


def test_policies():
    net = counter_net((1, 2))
    assert hlpn.FirstEnabled().choose(net) == ("t", {"x": 1})
    assert hlpn.FixedChoice(1).choose(net) == ("t", {"x": 2})
    assert hlpn.FixedChoice(5).choose(net) is None
    a = [hlpn.SeededRandom(3).choose(net) for _ in range(1)]
    b = [hlpn.SeededRandom(3).choose(net) for _ in range(1)]
    assert a == b


def test_run_and_reachability():
    net, fired = hlpn.run(counter_net((1, 2)), 10)
    assert [b["x"] for _, b in fired] == [1, 2]
    assert net.tokens("q") == Multiset([11, 12])
    # {1,2} -> {2},{1} -> {} : four markings
    assert len(hlpn.reachable_markings(counter_net((1, 2)))) == 4


def test_net_json_round_trip():
    net = counter_net()
    assert hlpn.loads(hlpn.dumps(net)) == net


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_binding_search_matches_brute_force(seed):
    net = netgen.random_net(random.Random(seed), arithmetic=True)
    for t in net.transitions:
        got = {netgen.freeze(b) for b in hlpn.find_enabled_bindings(net, t.name)}
        assert got == netgen.brute_force_bindings(net, t.name)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_firing_conserves_declared_token_counts(seed):
    net = netgen.random_net(random.Random(seed))
    for name, binding in hlpn.enabled_moves(net):
        after = hlpn.fire(net, name, binding)
        consumed = sum(len(b) for b in hlpn.demands(net, name, binding).values())
        produced = sum(len(ex.evaluate_bag(a.annotation, binding)) for a in net.arcs_of(name, "out"))
        before_total = sum(len(m) for m in net.marking.values())
        after_total = sum(len(m) for m in after.marking.values())
        assert after_total == before_total - consumed + produced
