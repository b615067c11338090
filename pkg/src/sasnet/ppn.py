"""Plausible Petri net layer: states of information on a fixed grid.

A state of information is a piecewise-constant density on ``[lo, hi)`` split
into equal bins, stored as per-bin probability mass. Conjunction is taken with
respect to the uniform reference measure on the domain::

    (a ^ b)_i  ∝  a_i * b_i
    possibility(a, b) = bins * sum_i a_i * b_i  ==  ∫ a(x) b(x) / u(x) dx

``possibility`` is 1 whenever either side is uniform and at least 1 for
``possibility(a, a)``, so thresholds are independent of the grid resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from . import expr as ex

DEFAULT_EPS = 1e-6


class ImpossibleConjunction(Exception):
    """The combined information has (numerically) no support."""


class GridError(ValueError):
    pass


class StateOfInformation:
    """Discrete PDF over ``[lo, hi)``; immutable."""

    __slots__ = ("lo", "hi", "mass", "impossible")

    def __init__(self, lo: float, hi: float, mass: Sequence[float] | np.ndarray, impossible: bool = False):
        lo, hi = float(lo), float(hi)
        if not lo < hi:
            raise GridError(f"empty domain [{lo}, {hi})")
        arr = np.array(mass, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise GridError("mass must be a non-empty vector")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("bin masses must be finite and non-negative")
        if impossible:
            arr = np.zeros_like(arr)
        else:
            total = arr.sum()
            if total <= 0:
                raise ValueError("state of information has no mass; use impossible()")
            arr = arr / total
        arr.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "mass", arr)
        object.__setattr__(self, "impossible", bool(impossible))

    def __setattr__(self, name, value):
        raise AttributeError("StateOfInformation is immutable")

    # -- constructors

    @classmethod
    def uniform(cls, lo: float, hi: float, bins: int) -> "StateOfInformation":
        return cls(lo, hi, np.ones(int(bins)))

    @classmethod
    def dirac(cls, lo: float, hi: float, bins: int, at: float) -> "StateOfInformation":
        """All mass in the bin containing ``at`` (clamped to the domain)."""
        mass = np.zeros(int(bins))
        mass[_bin_index(lo, hi, int(bins), at)] = 1.0
        return cls(lo, hi, mass)

    @classmethod
    def from_density(cls, lo: float, hi: float, bins: int, density) -> "StateOfInformation":
        """Bin masses from a density evaluated at bin centres."""
        centres = lo + (np.arange(bins) + 0.5) * (hi - lo) / bins
        return cls(lo, hi, np.array([density(c) for c in centres], dtype=float))

    @classmethod
    def impossible_state(cls, lo: float, hi: float, bins: int) -> "StateOfInformation":
        return cls(lo, hi, np.zeros(int(bins)), impossible=True)

    # -- grid

    @property
    def bins(self) -> int:
        return int(self.mass.size)

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def centres(self) -> np.ndarray:
        return self.lo + (np.arange(self.bins) + 0.5) * self.width

    def same_grid(self, other: "StateOfInformation") -> bool:
        return self.lo == other.lo and self.hi == other.hi and self.bins == other.bins

    # -- queries

    def total(self) -> float:
        return float(self.mass.sum())

    def mean(self) -> float:
        if self.impossible:
            return math.nan
        return float(self.mass @ self.centres)

    def mass_where(self, predicate) -> float:
        """Probability of the bins whose centre satisfies ``predicate``."""
        keep = np.array([bool(predicate(c)) for c in self.centres])
        return float(self.mass[keep].sum()) if keep.any() else 0.0

    def satisfying_mass(self, op: str, threshold: float) -> float:
        """Mass on the satisfying side of ``centre <op> threshold``."""
        c = self.centres
        keep = {
            "<": c < threshold,
            "<=": c <= threshold,
            ">": c > threshold,
            ">=": c >= threshold,
            "=": np.isclose(c, threshold),
            "!=": ~np.isclose(c, threshold),
        }[op]
        return float(self.mass[keep].sum())

    def __eq__(self, other):
        if not isinstance(other, StateOfInformation):
            return NotImplemented
        return (
            self.same_grid(other)
            and self.impossible == other.impossible
            and bool(np.array_equal(self.mass, other.mass))
        )

    def __hash__(self):
        return hash((self.lo, self.hi, self.impossible, self.mass.tobytes()))

    def __repr__(self):
        state = "impossible" if self.impossible else f"mean={self.mean():.4g}"
        return f"SoI([{self.lo}, {self.hi}), bins={self.bins}, {state})"

    def to_json(self) -> dict:
        out = {"lo": self.lo, "hi": self.hi, "bins": self.bins, "mass": [float(m) for m in self.mass]}
        if self.impossible:
            out["impossible"] = True
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "StateOfInformation":
        mass = list(data["mass"])
        if len(mass) != int(data["bins"]):
            raise GridError("bin count does not match mass vector")
        return cls(data["lo"], data["hi"], mass, impossible=bool(data.get("impossible", False)))


SoI = StateOfInformation


def _bin_index(lo: float, hi: float, bins: int, x: float) -> int:
    i = int(math.floor((x - lo) / (hi - lo) * bins))
    return min(max(i, 0), bins - 1)


def l1(a: SoI, b: SoI) -> float:
    if not a.same_grid(b):
        raise GridError("L1 distance needs a common grid")
    return float(np.abs(a.mass - b.mass).sum())


# -- grid alignment ---------------------------------------------------------------


def resample(s: SoI, lo: float, hi: float, bins: int) -> SoI:
    """Reapportion mass onto a new grid by bin-overlap fractions."""
    if s.impossible:
        return SoI.impossible_state(lo, hi, bins)
    if s.lo == lo and s.hi == hi and s.bins == bins:
        return s
    target = np.linspace(lo, hi, int(bins) + 1)
    cdf = np.concatenate(([0.0], np.cumsum(s.mass)))
    # Piecewise-linear CDF of a piecewise-constant density.
    at = np.interp(target, s.edges, cdf, left=0.0, right=1.0)
    mass = np.clip(np.diff(at), 0.0, None)
    if mass.sum() <= 0:
        raise GridError(f"target domain [{lo}, {hi}) does not overlap the support of {s!r}")
    return SoI(lo, hi, mass)


def common_grid(states: Sequence[SoI]) -> tuple[float, float, int]:
    first = states[0]
    if all(first.same_grid(s) for s in states[1:]):
        return first.lo, first.hi, first.bins
    lo = min(s.lo for s in states)
    hi = max(s.hi for s in states)
    width = min(s.width for s in states)
    return lo, hi, max(1, int(math.ceil((hi - lo) / width - 1e-9)))


def align(states: Sequence[SoI]) -> list[SoI]:
    lo, hi, bins = common_grid(states)
    return [resample(s, lo, hi, bins) for s in states]


# -- algebra ------------------------------------------------------------------------


def possibility(a: SoI, b: SoI) -> float:
    """Unnormalized product mass against the uniform reference measure."""
    a, b = align([a, b])
    if a.impossible or b.impossible:
        return 0.0
    return float(a.bins * np.dot(a.mass, b.mass))


def is_possible(a: SoI, b: SoI, eps: float = DEFAULT_EPS) -> bool:
    return possibility(a, b) >= eps


def conjunction(a: SoI, b: SoI, eps: float = DEFAULT_EPS) -> SoI:
    """Normalized pointwise product; the impossible state when product mass < eps."""
    a, b = align([a, b])
    if a.impossible or b.impossible or possibility(a, b) < eps:
        return SoI.impossible_state(a.lo, a.hi, a.bins)
    return SoI(a.lo, a.hi, a.mass * b.mass)


def disjunction(parts: Sequence[tuple[SoI, float]]) -> SoI:
    """Weighted mixture, renormalized. Impossible parts contribute nothing."""
    if not parts:
        raise ValueError("disjunction of nothing")
    for _, w in parts:
        if not w > 0:
            raise ValueError(f"mixture weights must be positive, got {w}")
    if len(parts) == 1:
        return parts[0][0]
    states = align([s for s, _ in parts])
    live = [(s, w) for s, (_, w) in zip(states, parts) if not s.impossible]
    grid = states[0]
    if not live:
        return SoI.impossible_state(grid.lo, grid.hi, grid.bins)
    total_w = sum(w for _, w in live)
    mix = sum((w / total_w) * s.mass for s, w in live)
    return SoI(grid.lo, grid.hi, mix)


# -- places and transitions -------------------------------------------------------------


@dataclass(frozen=True)
class NumericalPlace:
    name: str
    soi: SoI | None = None


@dataclass(frozen=True)
class PlausibleTransition:
    name: str
    soi: SoI
    kind: str = "numerical"
    guard: ex.Expr = ex.TRUE
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.kind not in ("numerical", "mixed"):
            raise ValueError(f"transition kind must be numerical or mixed, got {self.kind!r}")
        if not self.eps > 0:
            raise ValueError("possibility threshold must be positive")


def running_conjunction(t: PlausibleTransition, inputs: Sequence[NumericalPlace]) -> SoI:
    """Conjunction of the transition's own state with every input state.

    Raises :class:`ImpossibleConjunction` at the first impossible step.
    """
    psi = t.soi
    for place in inputs:
        if place.soi is None:
            raise ImpossibleConjunction(f"input place {place.name!r} holds no information")
        if not is_possible(psi, place.soi, t.eps):
            raise ImpossibleConjunction(f"{t.name}: conjunction with {place.name!r} is not possible")
        psi = conjunction(psi, place.soi, t.eps)
    return psi


def is_enabled(
    t: PlausibleTransition,
    inputs: Sequence[NumericalPlace],
    binding: Mapping[str, Any] | None = None,
    functions: ex.HostFunctions | None = None,
) -> bool:
    if t.kind == "mixed" and ex.evaluate(t.guard, binding or {}, functions) is not True:
        return False
    try:
        running_conjunction(t, inputs)
    except ImpossibleConjunction:
        return False
    return True


def fire_numerical(
    t: PlausibleTransition,
    inputs: Sequence[NumericalPlace],
    output: NumericalPlace,
    binding: Mapping[str, Any] | None = None,
    weights: tuple[float, float] = (1.0, 1.0),
    functions: ex.HostFunctions | None = None,
) -> NumericalPlace:
    """Fire a numerical or mixed transition and return the updated output place.

    Input places keep their states: information is read, not consumed.
    """
    if t.kind == "mixed" and ex.evaluate(t.guard, binding or {}, functions) is not True:
        raise ImpossibleConjunction(f"{t.name}: symbolic guard is false")
    psi = running_conjunction(t, inputs)
    if output.soi is None:
        return NumericalPlace(output.name, psi)
    w_old, w_new = weights
    return NumericalPlace(output.name, disjunction([(output.soi, w_old), (psi, w_new)]))
