"""Emulator: a managed net reified as the marking of a four-place meta-net.

The meta-net places are

* ``places``       - tokens ``(index, name, shape, marking)``
* ``transitions``  - tokens ``(index, name, guard)``
* ``inputArcs``    - tokens ``(index, place, transition, annotation)``
* ``outputArcs``   - tokens ``(index, transition, place, annotation)``

and its single transition ``move`` fires one transition of the encoded net.
The declaration index keeps decoding exact, including order.

Sensors and actuators go through the read/write primitives below. Every
primitive returns a new :class:`EncodedNet` or raises; a failed call never
leaves a partially updated encoding behind.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from . import expr as ex
from . import hlpn
from .hlpn import HLPN, IN, OUT, Arc, Binding, Place, PlaceTypeError, Transition
from .values import EMPTY, Multiset, Shape, check_shape, conforms, shape_from_json, shape_to_json

META_PLACES = ("places", "transitions", "inputArcs", "outputArcs")


class UnknownPlace(KeyError):
    pass


class ArcNotFound(KeyError):
    pass


class PolicyViolation(Exception):
    """A structural change was attempted while the executor policy forbids it."""


@dataclass(frozen=True)
class ExecutorPolicy:
    allow_structural: bool = False


FORBID_STRUCTURE = ExecutorPolicy(False)


@dataclass(frozen=True)
class EncodedNet:
    places: Multiset
    transitions: Multiset
    input_arcs: Multiset
    output_arcs: Multiset
    functions: Mapping[str, Callable[..., Any]] = field(default_factory=dict, compare=False, repr=False)

    def meta_marking(self) -> dict[str, Multiset]:
        return dict(zip(META_PLACES, (self.places, self.transitions, self.input_arcs, self.output_arcs)))

    def __hash__(self):
        return hash((self.places, self.transitions, self.input_arcs, self.output_arcs))


@dataclass(frozen=True)
class MoveEvent:
    transition: str
    binding: Binding
    step: int


# -- encode / decode -------------------------------------------------------------------


def encode(net: HLPN) -> EncodedNet:
    arcs_in = []
    arcs_out = []
    for i, a in enumerate(net.arcs):
        if a.direction == IN:
            arcs_in.append((i, a.place, a.transition, a.annotation))
        else:
            arcs_out.append((i, a.transition, a.place, a.annotation))
    return EncodedNet(
        Multiset((i, p.name, p.shape, net.marking[p.name]) for i, p in enumerate(net.places)),
        Multiset((i, t.name, t.guard) for i, t in enumerate(net.transitions)),
        Multiset(arcs_in),
        Multiset(arcs_out),
        dict(net.functions),
    )


def decode(e: EncodedNet) -> HLPN:
    places = sorted(e.places, key=lambda tok: tok[0])
    transitions = sorted(e.transitions, key=lambda tok: tok[0])
    arcs = [(i, Arc(p, t, IN, ann)) for i, p, t, ann in e.input_arcs]
    arcs += [(i, Arc(p, t, OUT, ann)) for i, t, p, ann in e.output_arcs]
    arcs.sort(key=lambda item: item[0])
    return HLPN(
        tuple(Place(name, shape) for _, name, shape, _ in places),
        tuple(Transition(name, guard) for _, name, guard in transitions),
        tuple(a for _, a in arcs),
        {name: marking for _, name, _, marking in places},
        dict(e.functions),
    )


# -- the move transition -------------------------------------------------------------------


def enabled_moves(e: EncodedNet) -> list[tuple[str, Binding]]:
    return hlpn.enabled_moves(decode(e))


def move(e: EncodedNet, policy=None, step: int = 0) -> tuple[EncodedNet, MoveEvent | None]:
    """Fire one transition of the emulated net."""
    net = decode(e)
    fired_net, choice = hlpn.step(net, policy)
    if choice is None:
        return e, None
    name, binding = choice
    return encode(fired_net), MoveEvent(name, binding, step)


def reachable_encodings(e: EncodedNet, limit: int = 100_000) -> set[EncodedNet]:
    """Breadth-first closure under ``move``, one successor per enabled move."""
    from collections import deque

    seen = {e}
    queue = deque([e])
    while queue:
        current = queue.popleft()
        for i in range(len(enabled_moves(current))):
            nxt, event = move(current, hlpn.FixedChoice(i))
            if event is not None and nxt not in seen:
                if len(seen) >= limit:
                    raise RuntimeError("state space exceeds limit")
                seen.add(nxt)
                queue.append(nxt)
    return seen


# -- read primitives ----------------------------------------------------------------------


def _place_token(e: EncodedNet, place: str):
    for tok in e.places.unordered():
        if tok[1] == place:
            return tok
    raise UnknownPlace(place)


def get_tokens(e: EncodedNet, place: str) -> Multiset:
    return _place_token(e, place)[3]


def get_marking(e: EncodedNet) -> dict[str, Multiset]:
    return {tok[1]: tok[3] for tok in sorted(e.places, key=lambda tok: tok[0])}


def get_arcs(e: EncodedNet) -> list[Arc]:
    return list(decode(e).arcs)


def place_names(e: EncodedNet) -> list[str]:
    return [tok[1] for tok in sorted(e.places, key=lambda tok: tok[0])]


def transition_names(e: EncodedNet) -> list[str]:
    return [tok[1] for tok in sorted(e.transitions, key=lambda tok: tok[0])]


# -- write primitives -----------------------------------------------------------------------


def _replace_place(e: EncodedNet, old, new) -> EncodedNet:
    places = e.places - Multiset((old,)) + Multiset((new,))
    return EncodedNet(places, e.transitions, e.input_arcs, e.output_arcs, e.functions)


def set_tokens(e: EncodedNet, place: str, tokens) -> EncodedNet:
    tok = _place_token(e, place)
    tokens = tokens if isinstance(tokens, Multiset) else Multiset(tokens)
    for t in tokens.distinct():
        if not conforms(t, tok[2]):
            raise PlaceTypeError(f"token {t!r} does not conform to place {place!r}")
    return _replace_place(e, tok, (tok[0], tok[1], tok[2], tokens))


def add_token(e: EncodedNet, place: str, token, count: int = 1) -> EncodedNet:
    current = get_tokens(e, place)
    return set_tokens(e, place, current + Multiset.from_counts([(token, count)]))


def remove_token(e: EncodedNet, place: str, token, count: int = 1) -> EncodedNet:
    current = get_tokens(e, place)
    if current.count(token) < count:
        raise ValueError(f"place {place!r} holds fewer than {count} of {token!r}")
    return set_tokens(e, place, current - Multiset.from_counts([(token, count)]))


def set_arc_annotation(
    e: EncodedNet, place: str, transition: str, direction: str, annotation: ex.Expr
) -> EncodedNet:
    bag = e.input_arcs if direction == IN else e.output_arcs
    for tok in bag.distinct():
        if direction == IN:
            i, p, t, _ = tok
            new = (i, p, t, annotation)
        else:
            i, t, p, _ = tok
            new = (i, t, p, annotation)
        if p == place and t == transition:
            break
    else:
        raise ArcNotFound((place, transition, direction))
    updated = bag - Multiset((tok,)) + Multiset((new,))
    candidate = (
        EncodedNet(e.places, e.transitions, updated, e.output_arcs, e.functions)
        if direction == IN
        else EncodedNet(e.places, e.transitions, e.input_arcs, updated, e.functions)
    )
    # Re-validate: the new annotation must still be closed over the input patterns.
    decode(candidate)
    return candidate


# -- structural primitives (gated) ------------------------------------------------------------


def _require_structural(policy: ExecutorPolicy) -> None:
    if not policy.allow_structural:
        raise PolicyViolation("structural changes to the managed net are forbidden by the executor policy")


def add_place(e: EncodedNet, name: str, shape: Shape = "any", policy: ExecutorPolicy = FORBID_STRUCTURE) -> EncodedNet:
    _require_structural(policy)
    net = decode(e)
    return encode(HLPN(net.places + (Place(name, check_shape(shape)),), net.transitions, net.arcs, net.marking, net.functions))


def add_transition(
    e: EncodedNet, name: str, guard: ex.Expr = ex.TRUE, policy: ExecutorPolicy = FORBID_STRUCTURE
) -> EncodedNet:
    _require_structural(policy)
    net = decode(e)
    return encode(HLPN(net.places, net.transitions + (Transition(name, guard),), net.arcs, net.marking, net.functions))


def add_arc(
    e: EncodedNet,
    place: str,
    transition: str,
    direction: str,
    annotation: ex.Expr,
    policy: ExecutorPolicy = FORBID_STRUCTURE,
) -> EncodedNet:
    _require_structural(policy)
    net = decode(e)
    arc = Arc(place, transition, direction, annotation)
    return encode(HLPN(net.places, net.transitions, net.arcs + (arc,), net.marking, net.functions))


READ_PRIMITIVES = {
    "getTokens": get_tokens,
    "getMarking": get_marking,
    "getArcs": get_arcs,
}

WRITE_PRIMITIVES = {
    "setTokens": set_tokens,
    "addToken": add_token,
    "removeToken": remove_token,
    "setArcAnnotation": set_arc_annotation,
}

STRUCTURAL_PRIMITIVES = {
    "addPlace": add_place,
    "addTransition": add_transition,
    "addArc": add_arc,
}


# -- serialization --------------------------------------------------------------------------


def to_json(e: EncodedNet) -> dict:
    return {
        "places": [
            [i, name, shape_to_json(shape), marking.to_json()]
            for i, name, shape, marking in sorted(e.places, key=lambda tok: tok[0])
        ],
        "transitions": [
            [i, name, ex.expr_to_json(guard)] for i, name, guard in sorted(e.transitions, key=lambda tok: tok[0])
        ],
        "inputArcs": [
            [i, p, t, ex.expr_to_json(ann)] for i, p, t, ann in sorted(e.input_arcs, key=lambda tok: tok[0])
        ],
        "outputArcs": [
            [i, t, p, ex.expr_to_json(ann)] for i, t, p, ann in sorted(e.output_arcs, key=lambda tok: tok[0])
        ],
    }


def from_json(data: Mapping, functions: Mapping[str, Callable] | None = None) -> EncodedNet:
    return EncodedNet(
        Multiset((i, name, shape_from_json(shape), Multiset.from_json(m)) for i, name, shape, m in data["places"]),
        Multiset((i, name, ex.expr_from_json(g)) for i, name, g in data["transitions"]),
        Multiset((i, p, t, ex.expr_from_json(a)) for i, p, t, a in data["inputArcs"]),
        Multiset((i, t, p, ex.expr_from_json(a)) for i, t, p, a in data["outputArcs"]),
        dict(functions or {}),
    )


def dumps(e: EncodedNet) -> str:
    return json.dumps(to_json(e), sort_keys=True, indent=1)
