"""Quantitative semantics of formulas over sampled traces.

Every node is evaluated to a full signal over the trace samples together
with a validity mask (its time domain).  Temporal windows [t + lo, t + hi]
are snapped outward to the sample grid.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import EmptyDomain, OutOfDomain
from ..trace import SignalTrace
from .ast import Always, And, Eventually, Formula, Interval, Not, Or, Pred, TrueF, Until

_SNAP = 1e-9


def window_offsets(interval: Interval, dt: float) -> tuple[int, int]:
    """Sample offsets (lo, hi) covering [interval.lo, interval.hi], snapped outward."""
    lo = int(math.floor(interval.lo / dt + _SNAP))
    hi = int(math.ceil(interval.hi / dt - _SNAP))
    return lo, max(hi, lo)


def _window_valid(mask: np.ndarray, lo: int, hi: int) -> np.ndarray:
    k = len(mask)
    out = np.zeros(k, dtype=bool)
    if hi >= k:
        return out
    ok = np.ones(k - hi, dtype=bool)
    for o in range(lo, hi + 1):
        ok &= mask[o:o + k - hi]
    out[:k - hi] = ok
    return out


def _eval(f: Formula, tr: SignalTrace, cache: dict) -> tuple[np.ndarray, np.ndarray]:
    key = id(f)
    if key in cache:
        return cache[key][1]
    k = len(tr)
    if isinstance(f, TrueF):
        res = (np.full(k, np.inf), np.ones(k, dtype=bool))
    elif isinstance(f, Pred):
        res = (f.pred.margins(tr.times, tr.states, tr.inputs), np.ones(k, dtype=bool))
    elif isinstance(f, Not):
        v, m = _eval(f.child, tr, cache)
        res = (-v, m.copy())
    elif isinstance(f, (And, Or)):
        parts = [_eval(c, tr, cache) for c in f.children]
        vals = np.vstack([p[0] for p in parts])
        mask = np.logical_and.reduce([p[1] for p in parts])
        res = (vals.min(axis=0) if isinstance(f, And) else vals.max(axis=0), mask)
    elif isinstance(f, (Always, Eventually)):
        v, m = _eval(f.child, tr, cache)
        lo, hi = window_offsets(f.interval, tr.dt)
        mask = _window_valid(m, lo, hi)
        out = np.full(k, np.nan)
        if hi < k:
            span = k - hi
            red = np.minimum if isinstance(f, Always) else np.maximum
            acc = v[lo:lo + span].copy()
            for o in range(lo + 1, hi + 1):
                acc = red(acc, v[o:o + span])
            out[:span] = acc
        out[~mask] = np.nan
        res = (out, mask)
    elif isinstance(f, Until):
        v1, m1 = _eval(f.left, tr, cache)
        v2, m2 = _eval(f.right, tr, cache)
        lo, hi = window_offsets(f.interval, tr.dt)
        mask = _window_valid(m1 & m2, lo, hi)
        out = np.full(k, np.nan)
        if hi < k:
            span = k - hi
            run = np.full(span, np.inf)  # min of left over [j, j + o)
            best = np.full(span, -np.inf)
            for o in range(0, hi + 1):
                if o >= lo:
                    best = np.maximum(best, np.minimum(v2[o:o + span], run))
                run = np.minimum(run, v1[o:o + span])
            out[:span] = best
        out[~mask] = np.nan
        res = (out, mask)
    else:
        raise TypeError(f"unknown formula node {type(f).__name__}")
    cache[key] = (f, res)  # keep f alive so id() stays unique
    return res


def robustness_signal(formula: Formula, trace: SignalTrace) -> tuple[np.ndarray, np.ndarray]:
    """Robustness at every sample and the boolean time-domain mask."""
    return _eval(formula, trace, {})


def _mask_to_intervals(mask: np.ndarray, times: np.ndarray) -> list[tuple[float, float]]:
    out = []
    j = 0
    k = len(mask)
    while j < k:
        if mask[j]:
            s = j
            while j + 1 < k and mask[j + 1]:
                j += 1
            out.append((float(times[s]), float(times[j])))
        j += 1
    return out


def time_domain(formula: Formula, trace: SignalTrace) -> list[tuple[float, float]]:
    """Time domain as a list of closed intervals of sample times."""
    _, mask = robustness_signal(formula, trace)
    ivs = _mask_to_intervals(mask, trace.times)
    if not ivs:
        raise EmptyDomain("trace horizon is too short for the formula")
    return ivs


def robustness(formula: Formula, trace: SignalTrace, t: float = 0.0) -> float:
    vals, mask = robustness_signal(formula, trace)
    try:
        j = trace.index_of(t)
    except ValueError as exc:
        raise OutOfDomain(str(exc)) from None
    if not mask[j]:
        raise OutOfDomain(f"time {t} lies outside the formula's time domain")
    return float(vals[j])


def satisfied(formula: Formula, trace: SignalTrace, t: float = 0.0) -> bool:
    """Boolean evaluation by direct recursion (independent of the signal code)."""
    j = trace.index_of(t)
    return _bool(formula, trace, j)


def _bool(f: Formula, tr: SignalTrace, j: int) -> bool:
    k = len(tr)
    if isinstance(f, TrueF):
        return True
    if isinstance(f, Pred):
        p = f.pred
        lhs = float(np.dot(p.a, tr.states[j])) + (float(np.dot(p.c, tr.inputs[j])) if p.c else 0.0)
        return lhs <= float(p.bound(tr.times[j]))
    if isinstance(f, Not):
        return not _bool(f.child, tr, j)
    if isinstance(f, And):
        return all(_bool(c, tr, j) for c in f.children)
    if isinstance(f, Or):
        return any(_bool(c, tr, j) for c in f.children)
    lo, hi = window_offsets(f.interval, tr.dt)
    if j + hi >= k:
        raise OutOfDomain("window exceeds trace")
    if isinstance(f, Always):
        return all(_bool(f.child, tr, j + o) for o in range(lo, hi + 1))
    if isinstance(f, Eventually):
        return any(_bool(f.child, tr, j + o) for o in range(lo, hi + 1))
    if isinstance(f, Until):
        for o in range(lo, hi + 1):
            if _bool(f.right, tr, j + o) and all(_bool(f.left, tr, j + m) for m in range(0, o)):
                return True
        return False
    raise TypeError(type(f).__name__)
