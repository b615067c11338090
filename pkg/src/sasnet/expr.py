"""Guard and arc-annotation expressions.

Expressions are a small closed AST; evaluation is pure. Host functions are
looked up by name in a registry passed to :func:`evaluate`, so a net stays
serializable while still calling out to Python for domain arithmetic.

Arc annotations may be a :class:`Bag`, which evaluates to a multiset; any other
expression used as an annotation produces a single token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .values import (
    Duration,
    Multiset,
    NotAValue,
    Time,
    check_value,
    same_value,
    tag_of,
    value_from_json,
    value_key,
    value_to_json,
)


class EvalError(Exception):
    """Raised when an expression cannot be evaluated."""


class UnboundVariable(EvalError):
    pass


class TypeMismatch(EvalError):
    pass


class UnknownFunction(EvalError):
    pass


class Expr:
    """Base class for AST nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Lit(Expr):
    value: Any

    def __post_init__(self):
        check_value(self.value)


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Tup(Expr):
    items: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Proj(Expr):
    """Tuple component ``expr[index]``; ``label`` only documents the field."""

    expr: Expr
    index: int
    label: str | None = None


ARITH_OPS = ("+", "-", "min")


@dataclass(frozen=True)
class Arith(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in ARITH_OPS:
            raise ValueError(f"unknown arithmetic operator {self.op!r}")


CMP_OPS = ("<", "<=", "=", "!=", ">", ">=")


@dataclass(frozen=True)
class Cmp(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And(Expr):
    items: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Or(Expr):
    items: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))


@dataclass(frozen=True)
class Not(Expr):
    expr: Expr


@dataclass(frozen=True)
class Call(Expr):
    name: str
    args: tuple[Expr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))


@dataclass(frozen=True)
class Bag(Expr):
    """Multiset annotation: each item is ``(expression, multiplicity)``."""

    items: tuple[tuple[Expr, int], ...]

    def __post_init__(self):
        items = tuple((e, int(n)) for e, n in self.items)
        for _, n in items:
            if n < 1:
                raise ValueError("bag multiplicities must be positive")
        object.__setattr__(self, "items", items)


TRUE = Lit(True)


# -- convenience builders ------------------------------------------------------


def lit(v) -> Lit:
    return Lit(v)


def var(name: str) -> Var:
    return Var(name)


def tup(*items) -> Tup:
    return Tup(tuple(_coerce(i) for i in items))


def field(expr, index: int, label: str | None = None) -> Proj:
    return Proj(_coerce(expr), index, label)


def add(a, b) -> Arith:
    return Arith("+", _coerce(a), _coerce(b))


def sub(a, b) -> Arith:
    return Arith("-", _coerce(a), _coerce(b))


def emin(a, b) -> Arith:
    return Arith("min", _coerce(a), _coerce(b))


def cmp(op: str, a, b) -> Cmp:
    return Cmp(op, _coerce(a), _coerce(b))


def eq(a, b) -> Cmp:
    return cmp("=", a, b)


def ne(a, b) -> Cmp:
    return cmp("!=", a, b)


def lt(a, b) -> Cmp:
    return cmp("<", a, b)


def conj(*items) -> And:
    return And(tuple(_coerce(i) for i in items))


def disj(*items) -> Or:
    return Or(tuple(_coerce(i) for i in items))


def neg(e) -> Not:
    return Not(_coerce(e))


def call(name: str, *args) -> Call:
    return Call(name, tuple(_coerce(a) for a in args))


def bag(*items) -> Bag:
    """``bag(e1, (e2, 3))`` - bare expressions count once."""
    out = []
    for item in items:
        if isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], int) and not isinstance(item[0], int):
            out.append((_coerce(item[0]), item[1]))
        else:
            out.append((_coerce(item), 1))
    return Bag(tuple(out))


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Lit(x)


# -- analysis ----------------------------------------------------------------


def free_vars(expr: Expr) -> frozenset[str]:
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Lit):
        return frozenset()
    out: set[str] = set()
    for child in children(expr):
        out |= free_vars(child)
    return frozenset(out)


def children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, (Tup, And, Or)):
        return expr.items
    if isinstance(expr, Proj):
        return (expr.expr,)
    if isinstance(expr, (Arith, Cmp)):
        return (expr.left, expr.right)
    if isinstance(expr, Not):
        return (expr.expr,)
    if isinstance(expr, Call):
        return expr.args
    if isinstance(expr, Bag):
        return tuple(e for e, _ in expr.items)
    return ()


def is_pattern(expr: Expr) -> bool:
    """Patterns (variables, literals, tuples of patterns) can be matched against tokens."""
    if isinstance(expr, (Var, Lit)):
        return True
    if isinstance(expr, Tup):
        return all(is_pattern(e) for e in expr.items)
    return False


def match(pattern: Expr, token: Any, binding: Mapping[str, Any]) -> dict[str, Any] | None:
    """Unify a pattern with a token, extending ``binding``; ``None`` on failure."""
    if isinstance(pattern, Var):
        if pattern.name in binding:
            return dict(binding) if same_value(binding[pattern.name], token) else None
        out = dict(binding)
        out[pattern.name] = token
        return out
    if isinstance(pattern, Lit):
        return dict(binding) if same_value(pattern.value, token) else None
    if isinstance(pattern, Tup):
        if not isinstance(token, tuple) or len(token) != len(pattern.items):
            return None
        out: dict[str, Any] | None = dict(binding)
        for p, t in zip(pattern.items, token):
            out = match(p, t, out)
            if out is None:
                return None
        return out
    raise ValueError(f"not a pattern: {pattern!r}")


# -- evaluation ----------------------------------------------------------------

HostFunctions = Mapping[str, Callable[..., Any]]


def evaluate(expr: Expr, binding: Mapping[str, Any], functions: HostFunctions | None = None) -> Any:
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Var):
        try:
            return binding[expr.name]
        except KeyError:
            raise UnboundVariable(expr.name) from None
    if isinstance(expr, Tup):
        return tuple(evaluate(e, binding, functions) for e in expr.items)
    if isinstance(expr, Proj):
        base = evaluate(expr.expr, binding, functions)
        if not isinstance(base, tuple):
            raise TypeMismatch(f"projection on non-tuple {base!r}")
        if not 0 <= expr.index < len(base):
            raise TypeMismatch(f"index {expr.index} out of range for arity {len(base)}")
        return base[expr.index]
    if isinstance(expr, Arith):
        return _arith(expr.op, evaluate(expr.left, binding, functions), evaluate(expr.right, binding, functions))
    if isinstance(expr, Cmp):
        return _compare(expr.op, evaluate(expr.left, binding, functions), evaluate(expr.right, binding, functions))
    if isinstance(expr, And):
        for item in expr.items:
            if not _truth(evaluate(item, binding, functions)):
                return False
        return True
    if isinstance(expr, Or):
        for item in expr.items:
            if _truth(evaluate(item, binding, functions)):
                return True
        return False
    if isinstance(expr, Not):
        return not _truth(evaluate(expr.expr, binding, functions))
    if isinstance(expr, Call):
        fn = (functions or {}).get(expr.name) or BUILTINS.get(expr.name)
        if fn is None:
            raise UnknownFunction(expr.name)
        result = fn(*(evaluate(a, binding, functions) for a in expr.args))
        try:
            return check_value(result)
        except NotAValue as exc:
            raise TypeMismatch(f"host function {expr.name} returned {result!r}") from exc
    if isinstance(expr, Bag):
        raise TypeMismatch("a bag is only valid as a whole arc annotation")
    raise TypeError(f"not an expression: {expr!r}")


def evaluate_bag(annotation: Expr, binding: Mapping[str, Any], functions: HostFunctions | None = None) -> Multiset:
    if isinstance(annotation, Bag):
        return Multiset.from_counts((evaluate(e, binding, functions), n) for e, n in annotation.items)
    return Multiset((evaluate(annotation, binding, functions),))


def _truth(v) -> bool:
    if not isinstance(v, bool):
        raise TypeMismatch(f"expected boolean, got {v!r}")
    return v


def _arith(op: str, a, b):
    ta, tb = tag_of(a), tag_of(b)
    try:
        if op == "min":
            if ta != tb or ta not in ("int", "time", "duration", "symbol"):
                raise TypeMismatch(f"min of {ta} and {tb}")
            return a if value_key(a) <= value_key(b) else b
        if op == "+":
            if ta == tb == "int":
                return a + b
            if (ta, tb) == ("time", "duration"):
                return Time(a.minutes + b.minutes)
            if (ta, tb) == ("duration", "time"):
                return Time(a.minutes + b.minutes)
            if ta == tb == "duration":
                return Duration(a.minutes + b.minutes)
        if op == "-":
            if ta == tb == "int":
                return a - b
            if (ta, tb) == ("time", "duration"):
                return Time(a.minutes - b.minutes)
            if ta == tb == "time":
                return Duration(a.minutes - b.minutes)
            if ta == tb == "duration":
                return Duration(a.minutes - b.minutes)
    except ValueError as exc:
        raise EvalError(f"{a!r} {op} {b!r}: {exc}") from None
    raise TypeMismatch(f"cannot apply {op} to {ta} and {tb}")


_ORDERED = ("int", "time", "duration", "symbol")


def _compare(op: str, a, b) -> bool:
    ta, tb = tag_of(a), tag_of(b)
    if op in ("=", "!="):
        if ta != tb and "absent" not in (ta, tb):
            raise TypeMismatch(f"cannot compare {ta} with {tb}")
        result = same_value(a, b)
        return result if op == "=" else not result
    if ta != tb or ta not in _ORDERED:
        raise TypeMismatch(f"cannot order {ta} and {tb}")
    ka, kb = value_key(a), value_key(b)
    return {"<": ka < kb, "<=": ka <= kb, ">": ka > kb, ">=": ka >= kb}[op]


def _host_min(*args):
    if not args:
        raise EvalError("min of nothing")
    items = args[0] if len(args) == 1 and isinstance(args[0], tuple) else args
    best = items[0]
    for item in items[1:]:
        best = _arith("min", best, item)
    return best


def _minutes(v):
    return Duration(v.minutes) if isinstance(v, Time) else Duration(v)


BUILTINS: dict[str, Callable[..., Any]] = {
    "min": _host_min,
    "minutes": _minutes,
}


# -- JSON ----------------------------------------------------------------------


def expr_to_json(expr: Expr):
    if isinstance(expr, Lit):
        return {"lit": value_to_json(expr.value)}
    if isinstance(expr, Var):
        return {"var": expr.name}
    if isinstance(expr, Tup):
        return {"tuple": [expr_to_json(e) for e in expr.items]}
    if isinstance(expr, Proj):
        out = {"proj": expr_to_json(expr.expr), "index": expr.index}
        if expr.label is not None:
            out["label"] = expr.label
        return out
    if isinstance(expr, Arith):
        return {"op": expr.op, "args": [expr_to_json(expr.left), expr_to_json(expr.right)]}
    if isinstance(expr, Cmp):
        return {"cmp": expr.op, "args": [expr_to_json(expr.left), expr_to_json(expr.right)]}
    if isinstance(expr, And):
        return {"and": [expr_to_json(e) for e in expr.items]}
    if isinstance(expr, Or):
        return {"or": [expr_to_json(e) for e in expr.items]}
    if isinstance(expr, Not):
        return {"not": expr_to_json(expr.expr)}
    if isinstance(expr, Call):
        return {"call": expr.name, "args": [expr_to_json(a) for a in expr.args]}
    if isinstance(expr, Bag):
        return {"bag": [[expr_to_json(e), n] for e, n in expr.items]}
    raise TypeError(f"not an expression: {expr!r}")


def expr_from_json(data) -> Expr:
    if not isinstance(data, dict):
        raise ValueError(f"expression must be an object, got {data!r}")
    if "lit" in data:
        return Lit(value_from_json(data["lit"]))
    if "var" in data:
        return Var(data["var"])
    if "tuple" in data:
        return Tup(tuple(expr_from_json(e) for e in data["tuple"]))
    if "proj" in data:
        return Proj(expr_from_json(data["proj"]), int(data["index"]), data.get("label"))
    if "op" in data:
        left, right = data["args"]
        return Arith(data["op"], expr_from_json(left), expr_from_json(right))
    if "cmp" in data:
        left, right = data["args"]
        return Cmp(data["cmp"], expr_from_json(left), expr_from_json(right))
    if "and" in data:
        return And(tuple(expr_from_json(e) for e in data["and"]))
    if "or" in data:
        return Or(tuple(expr_from_json(e) for e in data["or"]))
    if "not" in data:
        return Not(expr_from_json(data["not"]))
    if "call" in data:
        return Call(data["call"], tuple(expr_from_json(a) for a in data.get("args", [])))
    if "bag" in data:
        return Bag(tuple((expr_from_json(e), int(n)) for e, n in data["bag"]))
    raise ValueError(f"unknown expression node {data!r}")
