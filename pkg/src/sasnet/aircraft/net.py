"""The managed arrival-procedure net.

Aircraft move through Approach -> Approached -> Sequenced -> Landed -> Taxied ->
Parked. Resource assignments live in ``planedRw``, ``planedGw`` and ``planedG``
and are what the managing loop rewrites. Resource places keep their tokens
(read arcs): a phase transition takes the resource token and puts it back.
"""

from __future__ import annotations

from typing import Iterable

from .. import expr as ex
from ..expr import field, tup, var
from ..hlpn import HLPN, build
from ..values import Multiset
from .model import AIRCRAFT_SHAPE, Aircraft, Fixture, Gate, Gateway, Runway

ORIENTATIONS = ("forward", "reverse")

PLACES = (
    ("Approach", "int"),
    ("Planning", AIRCRAFT_SHAPE),
    ("Counter", "int"),
    ("Approached", "int"),
    ("sequenceNbr", ("int", "int")),
    ("Sequenced", "int"),
    ("planedRw", ("int", "int")),
    ("Landed", "int"),
    ("planedGw", ("int", "int")),
    ("Taxied", "int"),
    ("planedG", ("int", ("int", "int"))),
    ("Parked", "int"),
    ("Runways", ("int", "sym", "int")),
    ("Gateways", ("int", "sym")),
    ("Gates", (("int", "int"), "sym")),
    ("Wind", "sym"),
    ("Orientation", "sym"),
)

PHASE_PLACES = ("Approached", "Sequenced", "Landed", "Taxied", "Parked")
SYSTEM_PLACES = ("Planning", "Sequenced", "Landed", "Taxied", "Parked", "Runways", "Gateways", "Gates")
ENVIRONMENT_PLACES = ("Wind", "Orientation")

NO_OPPOSITE = 0


def _not_down(state_var: str):
    return ex.ne(var(state_var), "inoperative")


def _transitions():
    i, a, n = var("i"), var("a"), var("n")
    return [
        ("checkAircraft", ex.eq(field(a, 0, "id"), i)),
        ("sequence", ex.TRUE),
        ("land", _not_down("s")),
        ("taxi", _not_down("s")),
        ("park", _not_down("s")),
    ]


def _arcs():
    i, a, n, r, s, e, g, k = (var(x) for x in "ianrsegk")
    return [
        ("Approach", "checkAircraft", "in", i),
        ("Planning", "checkAircraft", "in", a),
        ("Counter", "checkAircraft", "in", n),
        ("Approached", "checkAircraft", "out", i),
        ("Planning", "checkAircraft", "out", a),
        ("sequenceNbr", "checkAircraft", "out", tup(i, n)),
        ("Counter", "checkAircraft", "out", ex.add(n, 1)),
        ("Approached", "sequence", "in", i),
        ("Sequenced", "sequence", "out", i),
        ("Sequenced", "land", "in", i),
        ("planedRw", "land", "in", tup(i, r)),
        ("Runways", "land", "in", tup(r, s, e)),
        ("Landed", "land", "out", i),
        ("planedRw", "land", "out", tup(i, r)),
        ("Runways", "land", "out", tup(r, s, e)),
        ("Landed", "taxi", "in", i),
        ("planedGw", "taxi", "in", tup(i, g)),
        ("Gateways", "taxi", "in", tup(g, s)),
        ("Taxied", "taxi", "out", i),
        ("planedGw", "taxi", "out", tup(i, g)),
        ("Gateways", "taxi", "out", tup(g, s)),
        ("Taxied", "park", "in", i),
        ("planedG", "park", "in", tup(i, k)),
        ("Gates", "park", "in", tup(k, s)),
        ("Parked", "park", "out", i),
        ("planedG", "park", "out", tup(i, k)),
        ("Gates", "park", "out", tup(k, s)),
    ]


def runway_token(rw: Runway) -> tuple:
    return (rw.r, rw.rs, NO_OPPOSITE if rw.er is None else rw.er)


def gateway_token(gw: Gateway) -> tuple:
    return (gw.g, gw.gs)


def gate_token(gate: Gate) -> tuple:
    return (gate.gate, gate.state)


def runways_from_tokens(tokens: Iterable) -> list[Runway]:
    return sorted((Runway(r, s, None if e == NO_OPPOSITE else e) for r, s, e in tokens), key=lambda rw: rw.r)


def gateways_from_tokens(tokens: Iterable) -> list[Gateway]:
    return sorted((Gateway(g, s) for g, s in tokens), key=lambda gw: gw.g)


def gates_from_tokens(tokens: Iterable) -> list[Gate]:
    return sorted((Gate(k, s) for k, s in tokens), key=lambda gt: gt.gate)


def planning_tokens(plan: Iterable[Aircraft]) -> dict[str, Multiset]:
    plan = list(plan)
    return {
        "Planning": Multiset(a.to_value() for a in plan),
        "planedRw": Multiset((a.id, a.r) for a in plan),
        "planedGw": Multiset((a.id, a.g) for a in plan),
        "planedG": Multiset((a.id, a.gate) for a in plan),
    }


def build_arrival_net(fixture: Fixture | None = None, wind: str = "forward") -> HLPN:
    """Arrival net for ``fixture``; ``None`` gives the bare structure with an empty marking."""
    if wind not in ORIENTATIONS:
        raise ValueError(f"wind must be one of {ORIENTATIONS}")
    marking = {}
    if fixture is not None:
        marking.update(planning_tokens(fixture.aircraft))
        marking["Counter"] = [1]
        marking["Runways"] = [runway_token(rw) for rw in fixture.runways]
        marking["Gateways"] = [gateway_token(gw) for gw in fixture.gateways]
        marking["Gates"] = [gate_token(gt) for gt in fixture.gates]
        marking["Wind"] = [wind]
        marking["Orientation"] = [wind]
    return build(PLACES, _transitions(), _arcs(), marking)


def plan_from_tokens(tokens: Iterable) -> list[Aircraft]:
    return sorted((Aircraft.from_value(v) for v in tokens), key=lambda a: a.id)
