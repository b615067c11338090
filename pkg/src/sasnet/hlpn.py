"""High-level Petri nets: typed places, guarded transitions, annotated arcs.

A net value is immutable; :func:`fire` and :func:`step` return new nets.
Execution uses interleaving semantics: one (transition, binding) per step.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

from . import expr as ex
from .values import (
    EMPTY,
    Multiset,
    Shape,
    check_shape,
    conforms,
    identity_key,
    shape_from_json,
    shape_to_json,
    value_from_json,
    value_key,
    value_to_json,
)

Binding = dict[str, Any]

IN, OUT = "in", "out"


class NetError(Exception):
    """Malformed net definition."""


class NotEnabled(Exception):
    """A transition was fired under a binding that does not enable it."""


class PlaceTypeError(Exception):
    """A token does not conform to its place's shape."""


@dataclass(frozen=True)
class Place:
    name: str
    shape: Shape = "any"

    def __post_init__(self):
        object.__setattr__(self, "shape", check_shape(self.shape))


@dataclass(frozen=True)
class Transition:
    name: str
    guard: ex.Expr = ex.TRUE


@dataclass(frozen=True)
class Arc:
    place: str
    transition: str
    direction: str
    annotation: ex.Expr

    def __post_init__(self):
        if self.direction not in (IN, OUT):
            raise NetError(f"arc direction must be 'in' or 'out', got {self.direction!r}")


@dataclass(frozen=True)
class HLPN:
    places: tuple[Place, ...]
    transitions: tuple[Transition, ...]
    arcs: tuple[Arc, ...]
    marking: Mapping[str, Multiset] = field(default_factory=dict)
    functions: Mapping[str, Callable[..., Any]] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "places", tuple(self.places))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        _validate_structure(self)
        marking = {p.name: EMPTY for p in self.places}
        for name, tokens in dict(self.marking).items():
            if name not in marking:
                raise NetError(f"marking names undeclared place {name!r}")
            if not isinstance(tokens, Multiset):
                tokens = Multiset(tokens)
            marking[name] = tokens
        object.__setattr__(self, "marking", marking)
        for p in self.places:
            _check_tokens(p, marking[p.name])

    def place(self, name: str) -> Place:
        for p in self.places:
            if p.name == name:
                return p
        raise KeyError(name)

    def transition(self, name: str) -> Transition:
        for t in self.transitions:
            if t.name == name:
                return t
        raise KeyError(name)

    def arcs_of(self, transition: str, direction: str) -> list[Arc]:
        return [a for a in self.arcs if a.transition == transition and a.direction == direction]

    def tokens(self, place: str) -> Multiset:
        if place not in self.marking:
            raise KeyError(place)
        return self.marking[place]

    def with_marking(self, marking: Mapping[str, Multiset]) -> "HLPN":
        return replace(self, marking=marking)

    def marking_key(self) -> tuple[Multiset, ...]:
        """Hashable snapshot of the marking in place-declaration order."""
        return tuple(self.marking[p.name] for p in self.places)


def _validate_structure(net: HLPN) -> None:
    pnames = [p.name for p in net.places]
    tnames = [t.name for t in net.transitions]
    if len(set(pnames)) != len(pnames):
        raise NetError("duplicate place names")
    if len(set(tnames)) != len(tnames):
        raise NetError("duplicate transition names")
    pset, tset = set(pnames), set(tnames)
    seen = set()
    for a in net.arcs:
        if a.place not in pset:
            raise NetError(f"arc references unknown place {a.place!r}")
        if a.transition not in tset:
            raise NetError(f"arc references unknown transition {a.transition!r}")
        key = (a.place, a.transition, a.direction)
        if key in seen:
            raise NetError(f"duplicate arc {key}")
        seen.add(key)
    for t in net.transitions:
        bound: set[str] = set()
        for a in net.arcs_of(t.name, IN):
            for e in _bag_items(a.annotation):
                if ex.is_pattern(e):
                    bound |= ex.free_vars(e)
        needed = set(ex.free_vars(t.guard))
        for a in net.arcs:
            if a.transition == t.name:
                needed |= ex.free_vars(a.annotation)
        missing = needed - bound
        if missing:
            raise NetError(
                f"transition {t.name!r}: variables {sorted(missing)} are not bound by any input-arc pattern"
            )


def _check_tokens(place: Place, tokens: Multiset) -> None:
    for token in tokens.distinct():
        if not conforms(token, place.shape):
            raise PlaceTypeError(f"token {token!r} does not conform to place {place.name!r} shape {place.shape!r}")


def _bag_items(annotation: ex.Expr) -> list[ex.Expr]:
    if isinstance(annotation, ex.Bag):
        return [e for e, _ in annotation.items]
    return [annotation]


# -- binding search -------------------------------------------------------------


def binding_key(binding: Mapping[str, Any]):
    """Canonical order: variable names lexicographically, then values."""
    return tuple((name, value_key(binding[name])) for name in sorted(binding))


def _binding_identity(binding: Mapping[str, Any]):
    return tuple((name, identity_key(binding[name])) for name in sorted(binding))


def demands(net: HLPN, transition: str, binding: Mapping[str, Any]) -> dict[str, Multiset]:
    """Tokens each input place must supply under ``binding``."""
    out: dict[str, Multiset] = {}
    for a in net.arcs_of(transition, IN):
        bag = ex.evaluate_bag(a.annotation, binding, net.functions)
        out[a.place] = out.get(a.place, EMPTY) + bag
    return out


def is_enabled(net: HLPN, transition: str, binding: Mapping[str, Any]) -> bool:
    try:
        need = demands(net, transition, binding)
    except ex.UnboundVariable:
        return False
    for place, bag in need.items():
        if not bag <= net.marking[place]:
            return False
    verdict = ex.evaluate(net.transition(transition).guard, binding, net.functions)
    if not isinstance(verdict, bool):
        raise ex.TypeMismatch(f"guard of {transition} evaluated to {verdict!r}")
    return verdict


def find_enabled_bindings(net: HLPN, transition: str) -> list[Binding]:
    """Every binding that enables ``transition``, in canonical order.

    Variables are bound by unifying input-arc patterns with the distinct tokens
    of their places; the demand multiset and the guard are then checked.
    """
    t = net.transition(transition)
    slots = []
    for a in net.arcs_of(transition, IN):
        for e in _bag_items(a.annotation):
            if ex.is_pattern(e) and ex.free_vars(e):
                slots.append((e, net.marking[a.place].distinct()))
    # Most selective slots first keeps the search small.
    slots.sort(key=lambda s: len(s[1]))
    found: dict[Any, Binding] = {}

    def search(i: int, binding: dict[str, Any]) -> None:
        if i == len(slots):
            if is_enabled(net, t.name, binding):
                found.setdefault(_binding_identity(binding), dict(binding))
            return
        pattern, tokens = slots[i]
        for token in tokens:
            extended = ex.match(pattern, token, binding)
            if extended is not None:
                search(i + 1, extended)

    search(0, {})
    return sorted(found.values(), key=binding_key)


# -- firing -----------------------------------------------------------------------


def fire(net: HLPN, transition: str, binding: Mapping[str, Any]) -> HLPN:
    net.transition(transition)
    if not is_enabled(net, transition, binding):
        raise NotEnabled(f"{transition} is not enabled under {dict(binding)!r}")
    marking = dict(net.marking)
    for place, bag in demands(net, transition, binding).items():
        marking[place] = marking[place] - bag
    for a in net.arcs_of(transition, OUT):
        produced = ex.evaluate_bag(a.annotation, binding, net.functions)
        _check_tokens(net.place(a.place), produced)
        marking[a.place] = marking[a.place] + produced
    return net.with_marking(marking)


def enabled_moves(net: HLPN) -> list[tuple[str, Binding]]:
    """All (transition, binding) pairs: declaration order, then canonical binding order."""
    return [(t.name, b) for t in net.transitions for b in find_enabled_bindings(net, t.name)]


class FirstEnabled:
    """Default policy: first transition in declaration order, first canonical binding."""

    def choose(self, net: HLPN) -> tuple[str, Binding] | None:
        for t in net.transitions:
            bindings = find_enabled_bindings(net, t.name)
            if bindings:
                return t.name, bindings[0]
        return None


class SeededRandom:
    """Uniform choice over all enabled moves, reproducible from the seed."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)

    def choose(self, net: HLPN) -> tuple[str, Binding] | None:
        moves = enabled_moves(net)
        if not moves:
            return None
        return moves[self.rng.randrange(len(moves))]


class FixedChoice:
    """Pick the ``index``-th enabled move (used to enumerate successors)."""

    def __init__(self, index: int):
        self.index = index

    def choose(self, net: HLPN) -> tuple[str, Binding] | None:
        moves = enabled_moves(net)
        return moves[self.index] if self.index < len(moves) else None


def make_policy(name: str = "first", seed: int = 0):
    if name == "first":
        return FirstEnabled()
    if name == "random":
        return SeededRandom(seed)
    raise ValueError(f"unknown firing policy {name!r}")


def step(net: HLPN, policy=None) -> tuple[HLPN, tuple[str, Binding] | None]:
    choice = (policy or FirstEnabled()).choose(net)
    if choice is None:
        return net, None
    name, binding = choice
    return fire(net, name, binding), choice


def run(net: HLPN, steps: int, policy=None) -> tuple[HLPN, list[tuple[str, Binding]]]:
    fired = []
    for _ in range(steps):
        net, move = step(net, policy)
        if move is None:
            break
        fired.append(move)
    return net, fired


def reachable_markings(net: HLPN, limit: int = 100_000) -> set[tuple[Multiset, ...]]:
    """Breadth-first set of reachable markings (direct firing)."""
    from collections import deque

    seen = {net.marking_key()}
    queue = deque([net])
    while queue:
        current = queue.popleft()
        for name, binding in enabled_moves(current):
            nxt = fire(current, name, binding)
            key = nxt.marking_key()
            if key not in seen:
                if len(seen) >= limit:
                    raise RuntimeError("state space exceeds limit")
                seen.add(key)
                queue.append(nxt)
    return seen


# -- JSON -----------------------------------------------------------------------------


def net_to_json(net: HLPN) -> dict:
    return {
        "places": [{"name": p.name, "shape": shape_to_json(p.shape)} for p in net.places],
        "transitions": [{"name": t.name, "guard": ex.expr_to_json(t.guard)} for t in net.transitions],
        "arcs": [
            {
                "place": a.place,
                "transition": a.transition,
                "direction": a.direction,
                "annotation": ex.expr_to_json(a.annotation),
            }
            for a in net.arcs
        ],
        "marking": {p.name: net.marking[p.name].to_json() for p in net.places if net.marking[p.name]},
    }


def net_from_json(data: Mapping, functions: Mapping[str, Callable] | None = None) -> HLPN:
    return HLPN(
        places=tuple(Place(p["name"], shape_from_json(p.get("shape", "any"))) for p in data.get("places", [])),
        transitions=tuple(
            Transition(t["name"], ex.expr_from_json(t["guard"]) if "guard" in t else ex.TRUE)
            for t in data.get("transitions", [])
        ),
        arcs=tuple(
            Arc(a["place"], a["transition"], a["direction"], ex.expr_from_json(a["annotation"]))
            for a in data.get("arcs", [])
        ),
        marking={name: Multiset.from_json(m) for name, m in data.get("marking", {}).items()},
        functions=dict(functions or {}),
    )


def dumps(net: HLPN) -> str:
    return json.dumps(net_to_json(net), sort_keys=True, indent=1)


def loads(text: str, functions: Mapping[str, Callable] | None = None) -> HLPN:
    return net_from_json(json.loads(text), functions)


def binding_to_json(binding: Mapping[str, Any]) -> dict:
    return {k: value_to_json(binding[k]) for k in sorted(binding)}


def binding_from_json(data: Mapping) -> Binding:
    return {k: value_from_json(v) for k, v in data.items()}


def build(
    places: Iterable[tuple[str, Shape] | Place],
    transitions: Iterable[tuple[str, ex.Expr] | str | Transition],
    arcs: Sequence[tuple[str, str, str, Any] | Arc],
    marking: Mapping[str, Iterable[Any]] | None = None,
    functions: Mapping[str, Callable] | None = None,
) -> HLPN:
    """Terse constructor: ``build([("p", "int")], ["t"], [("p", "t", "in", var("x"))], {"p": [1]})``."""
    ps = tuple(p if isinstance(p, Place) else Place(*p) for p in places)
    ts = []
    for t in transitions:
        if isinstance(t, Transition):
            ts.append(t)
        elif isinstance(t, str):
            ts.append(Transition(t))
        else:
            ts.append(Transition(*t))
    arc_objs = []
    for a in arcs:
        if isinstance(a, Arc):
            arc_objs.append(a)
        else:
            place, trans, direction, annotation = a
            arc_objs.append(Arc(place, trans, direction, ex._coerce(annotation)))
    m = {k: v if isinstance(v, Multiset) else Multiset(v) for k, v in (marking or {}).items()}
    return HLPN(ps, tuple(ts), tuple(arc_objs), m, dict(functions or {}))
