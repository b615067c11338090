"""Random small nets and an exhaustive binding oracle for the test suite.

Generated nets keep the state space finite: every output token is an input
variable or a literal from a small domain, and no transition produces more
tokens than it consumes.
"""

from __future__ import annotations

import itertools
import random

from sasnet import expr as ex
from sasnet.hlpn import HLPN, IN, Arc, Place, Transition
from sasnet.values import Multiset

DOMAIN = (0, 1, 2)


def random_net(rng: random.Random, max_places=5, max_transitions=5, max_tokens=6, arithmetic=False) -> HLPN:
    n_places = rng.randint(1, max_places)
    places = []
    for i in range(n_places):
        shape = "int" if rng.random() < 0.7 else ("int", "int")
        places.append(Place(f"p{i}", shape))
    marking = {p.name: [] for p in places}
    for _ in range(rng.randint(0, max_tokens)):
        p = rng.choice(places)
        tok = rng.choice(DOMAIN) if p.shape == "int" else (rng.choice(DOMAIN), rng.choice(DOMAIN))
        marking[p.name].append(tok)

    transitions, arcs = [], []
    for j in range(rng.randint(1, max_transitions)):
        name = f"t{j}"
        used = rng.sample(places, rng.randint(1, min(2, len(places))))
        bound: list[str] = []
        pairs: list[str] = []
        consumed = 0
        fresh = iter(f"x{j}_{k}" for k in range(100))
        for p in used:
            items = []
            for _ in range(rng.choice((1, 1, 2))):
                pat = _pattern(rng, p.shape, bound, pairs, fresh)
                items.append((pat, rng.choice((1, 1, 2))))
            consumed += sum(n for _, n in items)
            ann = items[0][0] if len(items) == 1 and items[0][1] == 1 else ex.Bag(tuple(_merge(items)))
            arcs.append(Arc(p.name, name, IN, ann))
        guard = _guard(rng, bound)
        budget = consumed
        outs = rng.sample(places, rng.randint(0, min(2, len(places))))
        for p in outs:
            if budget == 0:
                break
            n = rng.randint(1, min(2, budget))
            budget -= n
            e = _output(rng, p.shape, bound, pairs, arithmetic)
            arcs.append(Arc(p.name, name, "out", e if n == 1 else ex.Bag(((e, n),))))
        transitions.append(Transition(name, guard))
    return HLPN(tuple(places), tuple(transitions), tuple(arcs), {k: Multiset(v) for k, v in marking.items()})


def _merge(items):
    merged = {}
    for e, n in items:
        merged[e] = merged.get(e, 0) + n
    return list(merged.items())


def _scalar_pattern(rng, bound, fresh):
    roll = rng.random()
    if roll < 0.2:
        return ex.lit(rng.choice(DOMAIN))
    if roll < 0.4 and bound:
        return ex.var(rng.choice(bound))
    name = next(fresh)
    bound.append(name)
    return ex.var(name)


def _pattern(rng, shape, bound, pairs, fresh):
    if shape == "int":
        return _scalar_pattern(rng, bound, fresh)
    if rng.random() < 0.2:
        name = next(fresh)
        pairs.append(name)
        return ex.var(name)
    return ex.tup(_scalar_pattern(rng, bound, fresh), _scalar_pattern(rng, bound, fresh))


def _guard(rng, bound):
    ints = list(bound)
    if not ints or rng.random() < 0.4:
        return ex.TRUE
    op = rng.choice(ex.CMP_OPS)
    right = ex.var(rng.choice(ints)) if rng.random() < 0.5 else ex.lit(rng.choice(DOMAIN))
    return ex.cmp(op, ex.var(rng.choice(ints)), right)


def _scalar_out(rng, bound, arithmetic):
    if bound and rng.random() < 0.7:
        v = ex.var(rng.choice(bound))
        if arithmetic and rng.random() < 0.3:
            return ex.add(v, 1)
        return v
    return ex.lit(rng.choice(DOMAIN))


def _output(rng, shape, bound, pairs, arithmetic):
    if shape == "int":
        return _scalar_out(rng, bound, arithmetic)
    if pairs and rng.random() < 0.3:
        return ex.var(rng.choice(pairs))
    return ex.tup(_scalar_out(rng, bound, arithmetic), _scalar_out(rng, bound, arithmetic))


# -- oracle --------------------------------------------------------------------------------


def _subvalues(value):
    yield value
    if isinstance(value, tuple):
        for v in value:
            yield from _subvalues(v)


def brute_force_bindings(net: HLPN, transition: str) -> set:
    """Try every assignment of the transition's variables over all values in the marking."""
    ins = [a for a in net.arcs if a.transition == transition and a.direction == IN]
    names = sorted(set().union(*(ex.free_vars(a.annotation) for a in ins)) if ins else set())
    universe = sorted(
        {v for a in ins for tok in net.marking[a.place] for v in _subvalues(tok)},
        key=repr,
    )
    guard = net.transition(transition).guard
    found = set()
    for combo in itertools.product(universe, repeat=len(names)):
        binding = dict(zip(names, combo))
        need: dict[str, Multiset] = {}
        try:
            for a in ins:
                need[a.place] = need.get(a.place, Multiset()) + ex.evaluate_bag(a.annotation, binding)
            verdict = ex.evaluate(guard, binding)
        except ex.EvalError:
            continue
        if verdict is True and all(bag <= net.marking[p] for p, bag in need.items()):
            found.add(freeze(binding))
    return found


def freeze(binding) -> tuple:
    return tuple(sorted((k, (type(v).__name__, v)) for k, v in binding.items()))
