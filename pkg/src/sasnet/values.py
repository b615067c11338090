"""Token values, place shapes and token multisets.

Token payloads are plain Python objects:

========  ==========================
tag       Python representation
========  ==========================
absent    ``None``
bool      ``bool``
int       ``int``
time      :class:`Time` (minutes since midnight)
duration  :class:`Duration` (minutes)
symbol    ``str``
tuple     ``tuple`` of values
========  ==========================

Every value has a canonical total order (tag rank first, then payload) so that
binding enumeration and serialization are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping


class NotAValue(TypeError):
    """A Python object is not a valid token value."""


@dataclass(frozen=True, order=True)
class Time:
    minutes: int

    def __post_init__(self):
        if not isinstance(self.minutes, int) or isinstance(self.minutes, bool):
            raise NotAValue(f"time must be integer minutes, got {self.minutes!r}")
        if self.minutes < 0:
            raise ValueError(f"negative time {self.minutes}")

    @classmethod
    def parse(cls, text: str) -> "Time":
        return cls(parse_hhmm(text))

    def __str__(self):
        return format_hhmm(self.minutes)

    def __repr__(self):
        return f"Time({format_hhmm(self.minutes)})"


@dataclass(frozen=True, order=True)
class Duration:
    minutes: int

    def __post_init__(self):
        if not isinstance(self.minutes, int) or isinstance(self.minutes, bool):
            raise NotAValue(f"duration must be integer minutes, got {self.minutes!r}")
        if self.minutes < 0:
            raise ValueError(f"negative duration {self.minutes}")

    def __str__(self):
        return f"{self.minutes}min"


def parse_hhmm(text: str) -> int:
    """``"10:18"`` -> 618."""
    hours, _, minutes = str(text).strip().partition(":")
    if not minutes:
        raise ValueError(f"expected HH:MM, got {text!r}")
    h, m = int(hours), int(minutes)
    if h < 0 or not 0 <= m < 60:
        raise ValueError(f"bad clock time {text!r}")
    return h * 60 + m


def format_hhmm(minutes: int) -> str:
    return f"{minutes // 60}:{minutes % 60:02d}"


# -- tags and ordering ------------------------------------------------------

_TAG_RANK = {"absent": 0, "bool": 1, "int": 2, "time": 3, "duration": 4, "symbol": 5, "tuple": 6}


def tag_of(value: Any) -> str:
    if value is None:
        return "absent"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, Time):
        return "time"
    if isinstance(value, Duration):
        return "duration"
    if isinstance(value, str):
        return "symbol"
    if isinstance(value, tuple):
        return "tuple"
    raise NotAValue(f"not a token value: {value!r}")


def is_value(obj: Any) -> bool:
    try:
        check_value(obj)
    except NotAValue:
        return False
    return True


def check_value(obj: Any) -> Any:
    if tag_of(obj) == "tuple":
        for item in obj:
            check_value(item)
    return obj


def value_key(value: Any):
    """Sort key realising the canonical value order."""
    tag = tag_of(value)
    rank = _TAG_RANK[tag]
    if tag == "absent":
        return (rank,)
    if tag in ("time", "duration"):
        return (rank, value.minutes)
    if tag == "tuple":
        return (rank, len(value), tuple(value_key(v) for v in value))
    return (rank, value)


def sort_key(obj: Any):
    """Like :func:`value_key` but tolerant of non-value objects.

    Emulator tokens carry expressions and shapes; those sort after all values,
    tuples are compared element-wise.
    """
    if isinstance(obj, tuple):
        return (6, len(obj), tuple(sort_key(v) for v in obj))
    if isinstance(obj, Multiset):
        return (7, tuple((sort_key(v), n) for v, n in obj.items()))
    try:
        return value_key(obj)
    except NotAValue:
        return (8, type(obj).__name__, repr(obj))


# -- shapes -----------------------------------------------------------------

SCALAR_SHAPES = frozenset({"int", "time", "dur", "bool", "sym", "none", "any"})
_SHAPE_TAG = {"int": "int", "time": "time", "dur": "duration", "bool": "bool", "sym": "symbol", "none": "absent"}

Shape = Any  # str leaf or tuple of shapes


def check_shape(shape: Shape) -> Shape:
    if isinstance(shape, str):
        if shape not in SCALAR_SHAPES:
            raise ValueError(f"unknown shape tag {shape!r}")
        return shape
    if isinstance(shape, (tuple, list)):
        return tuple(check_shape(s) for s in shape)
    raise ValueError(f"bad shape {shape!r}")


def conforms(value: Any, shape: Shape) -> bool:
    if isinstance(shape, str):
        if shape == "any":
            return is_value(value)
        try:
            return tag_of(value) == _SHAPE_TAG[shape]
        except NotAValue:
            return False
    if not isinstance(value, tuple) or len(value) != len(shape):
        return False
    return all(conforms(v, s) for v, s in zip(value, shape))


def shape_to_json(shape: Shape):
    return shape if isinstance(shape, str) else [shape_to_json(s) for s in shape]


def shape_from_json(data) -> Shape:
    return check_shape(data)


# -- JSON codec ---------------------------------------------------------------


def value_to_json(value: Any):
    tag = tag_of(value)
    if tag == "time":
        return {"time": format_hhmm(value.minutes)}
    if tag == "duration":
        return {"dur": value.minutes}
    if tag == "tuple":
        return [value_to_json(v) for v in value]
    return value


def value_from_json(data) -> Any:
    if isinstance(data, list):
        return tuple(value_from_json(v) for v in data)
    if isinstance(data, dict):
        if "time" in data:
            return Time.parse(data["time"])
        if "dur" in data:
            return Duration(int(data["dur"]))
        raise ValueError(f"unknown value object {data!r}")
    if isinstance(data, float):
        raise ValueError(f"non-integer number {data!r}")
    return check_value(data)


# -- multisets ----------------------------------------------------------------


class _Bool:
    __slots__ = ("v",)

    def __init__(self, v):
        self.v = v

    def __eq__(self, other):
        return isinstance(other, _Bool) and other.v == self.v

    def __hash__(self):
        return hash(("bool", self.v))


def identity_key(obj: Any):
    """Hashable key under which ``True`` and ``1`` stay distinct."""
    if isinstance(obj, bool):
        return _Bool(obj)
    if isinstance(obj, tuple):
        return tuple(identity_key(v) for v in obj)
    return obj


def same_value(a: Any, b: Any) -> bool:
    return identity_key(a) == identity_key(b)


class Multiset:
    """Immutable bag of hashable tokens.

    Iteration yields every token with repetition, in canonical order.
    """

    __slots__ = ("_counts", "_hash", "_sorted")

    def __init__(self, tokens: Iterable[Any] = ()):
        # identity key -> [token, multiplicity]
        self._counts: dict[Any, list] = {}
        self._hash = None
        self._sorted = None
        for t in tokens:
            self._bump(t, 1)

    def _bump(self, token, n):
        k = identity_key(token)
        entry = self._counts.get(k)
        if entry is None:
            self._counts[k] = [token, n]
        else:
            entry[1] += n

    @classmethod
    def from_counts(cls, counts: Mapping[Any, int] | Iterable[tuple[Any, int]]) -> "Multiset":
        items = counts.items() if isinstance(counts, Mapping) else counts
        ms = cls()
        for token, n in items:
            if not isinstance(n, int) or isinstance(n, bool) or n < 0:
                raise ValueError(f"bad multiplicity {n!r} for {token!r}")
            if n:
                ms._bump(token, n)
        return ms

    def count(self, token: Any) -> int:
        entry = self._counts.get(identity_key(token))
        return entry[1] if entry else 0

    def items(self) -> list[tuple[Any, int]]:
        # The bag never changes after construction, so the canonical order is cached.
        if self._sorted is None:
            self._sorted = sorted(((t, n) for t, n in self._counts.values()), key=lambda kv: sort_key(kv[0]))
        return list(self._sorted)

    def unordered(self) -> Iterator[Any]:
        """Distinct tokens in storage order; cheaper than :meth:`distinct` for lookups."""
        return (t for t, _ in self._counts.values())

    def distinct(self) -> list[Any]:
        return [t for t, _ in self.items()]

    def total(self) -> int:
        return sum(n for _, n in self._counts.values())

    def __len__(self):
        return self.total()

    def __bool__(self):
        return bool(self._counts)

    def __iter__(self) -> Iterator[Any]:
        for token, n in self.items():
            for _ in range(n):
                yield token

    def __contains__(self, token):
        return identity_key(token) in self._counts

    def __le__(self, other: "Multiset") -> bool:
        return all(other._counts.get(k, (None, 0))[1] >= n for k, (_, n) in self._counts.items())

    def __add__(self, other: "Multiset") -> "Multiset":
        ms = Multiset.from_counts((t, n) for t, n in self._counts.values())
        for t, n in other._counts.values():
            ms._bump(t, n)
        return ms

    def __sub__(self, other: "Multiset") -> "Multiset":
        if not other <= self:
            raise ValueError("multiset difference would go negative")
        return Multiset.from_counts(
            (t, n - other._counts.get(k, (None, 0))[1]) for k, (t, n) in self._counts.items()
        )

    def __eq__(self, other):
        if not isinstance(other, Multiset):
            return NotImplemented
        return {k: e[1] for k, e in self._counts.items()} == {k: e[1] for k, e in other._counts.items()}

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset((k, e[1]) for k, e in self._counts.items()))
        return self._hash

    def __repr__(self):
        inner = ", ".join(repr(t) if n == 1 else f"{t!r}*{n}" for t, n in self.items())
        return "{" + inner + "}"

    def to_json(self):
        return [[value_to_json(t), n] for t, n in self.items()]

    @classmethod
    def from_json(cls, data) -> "Multiset":
        return cls.from_counts((value_from_json(t), int(n)) for t, n in data)


EMPTY = Multiset()
