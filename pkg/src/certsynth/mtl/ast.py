"""Formula tree for MTL over linear predicates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import NonNormalizedPredicate

NORM_TOL = 1e-9


@dataclass(frozen=True)
class PiecewiseExpOffset:
    """delta_i * exp(-rate_i (t - start_i)) on the i-th segment [start_i, start_i+1)."""

    starts: tuple[float, ...]
    deltas: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.starts) == len(self.deltas) == len(self.rates)) or not self.starts:
            raise ValueError("offset segments must have matching, non-empty lengths")
        if any(d < 0 for d in self.deltas):
            raise ValueError("offsets must be non-negative")
        if any(b < a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError("segment starts must be non-decreasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        starts = np.asarray(self.starts)
        idx = np.searchsorted(starts, t + 1e-9, side="right") - 1
        idx = np.clip(idx, 0, len(starts) - 1)
        d = np.asarray(self.deltas)[idx]
        r = np.asarray(self.rates)[idx]
        return d * np.exp(-r * (t - starts[idx]))

    @property
    def is_zero(self) -> bool:
        return all(d == 0.0 for d in self.deltas)


@dataclass(frozen=True)
class LinearPredicate:
    """Half-space a.x + c.u <= b - offset(t), with a unit-norm state normal."""

    a: tuple[float, ...]
    c: tuple[float, ...]
    b: float
    label: str = field(default="", compare=False)
    offset: PiecewiseExpOffset | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        object.__setattr__(self, "b", float(self.b))
        norm = math.sqrt(sum(v * v for v in self.a))
        if abs(norm - 1.0) > NORM_TOL:
            raise NonNormalizedPredicate(f"state normal has norm {norm:.12g}, expected 1")

    @property
    def a_vec(self) -> np.ndarray:
        return np.array(self.a)

    @property
    def c_vec(self) -> np.ndarray:
        return np.array(self.c)

    def bound(self, t):
        if self.offset is None:
            return np.full(np.shape(t), self.b, dtype=float)
        return self.b - self.offset(t)

    def margins(self, times, states, inputs) -> np.ndarray:
        m = self.bound(times) - np.asarray(states) @ self.a_vec
        if any(self.c):
            m = m - np.asarray(inputs) @ self.c_vec
        return m

    def with_offset(self, offset: PiecewiseExpOffset | None) -> "LinearPredicate":
        return replace(self, offset=offset)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or hi < lo:
            raise ValueError(f"invalid interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


class Formula:
    """Base class of all formula nodes."""

    def __and__(self, other: "Formula") -> "And":
        return And((self, other))

    def __or__(self, other: "Formula") -> "Or":
        return Or((self, other))

    def __invert__(self) -> "Not":
        return Not(self)


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class Pred(Formula):
    pred: LinearPredicate


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    children: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 1:
            raise ValueError("And needs at least one child")


@dataclass(frozen=True)
class Or(Formula):
    children: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 1:
            raise ValueError("Or needs at least one child")


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula
    interval: Interval


@dataclass(frozen=True)
class Always(Formula):
    child: Formula
    interval: Interval


@dataclass(frozen=True)
class Eventually(Formula):
    child: Formula
    interval: Interval


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (TrueF, Pred)):
        return ()
    if isinstance(f, (Not, Always, Eventually)):
        return (f.child,)
    if isinstance(f, (And, Or)):
        return f.children
    if isinstance(f, Until):
        return (f.left, f.right)
    raise TypeError(f"unknown formula node {type(f).__name__}")


def depth(f: Formula) -> int:
    kids = children(f)
    return 1 + (max(depth(k) for k in kids) if kids else 0)


def predicates(f: Formula) -> list[LinearPredicate]:
    if isinstance(f, Pred):
        return [f.pred]
    out: list[LinearPredicate] = []
    for k in children(f):
        out.extend(predicates(k))
    return out


def make_predicate(a, c, b, label: str = "", normalize: bool = True) -> LinearPredicate:
    """Build a predicate, rescaling (a, c, b) so that |a| = 1 when allowed."""
    a = np.asarray(a, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        raise NonNormalizedPredicate("predicate has no state dependence")
    if abs(norm - 1.0) > NORM_TOL:
        if not normalize:
            raise NonNormalizedPredicate(f"state normal has norm {norm:.12g}, expected 1")
        a, c, b = a / norm, c / norm, float(b) / norm
    return LinearPredicate(tuple(a), tuple(c), float(b), label)
