"""The synthesis fragment: conjunctions of G[tau_k, T_end] over predicate conjunctions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FragmentViolation, MissingOffset
from .ast import Always, And, Formula, Interval, LinearPredicate, PiecewiseExpOffset, Pred


@dataclass(frozen=True)
class FragmentTerm:
    tau: float
    t_end: float
    preds: tuple[LinearPredicate, ...]


def _pred_list(f: Formula) -> list[LinearPredicate]:
    if isinstance(f, Pred):
        return [f.pred]
    if isinstance(f, And):
        out = []
        for c in f.children:
            out.extend(_pred_list(c))
        return out
    raise FragmentViolation(f"expected a conjunction of predicates, found {type(f).__name__}")


def fragment_terms(formula: Formula) -> list[FragmentTerm]:
    """Split a fragment formula into its G-conjuncts (k order is left to right)."""
    tops = formula.children if isinstance(formula, And) else (formula,)
    terms = []
    for g in tops:
        if isinstance(g, And):
            terms.extend(fragment_terms(g))
            continue
        if not isinstance(g, Always):
            raise FragmentViolation(f"top-level conjunct must be G[..], found {type(g).__name__}")
        terms.append(FragmentTerm(g.interval.lo, g.interval.hi, tuple(_pred_list(g.child))))
    if not terms:
        raise FragmentViolation("empty fragment")
    t_end = terms[0].t_end
    if any(abs(t.t_end - t_end) > 1e-12 for t in terms):
        raise FragmentViolation("all conjuncts must share the same end time")
    return terms


def build_fragment(terms: list[FragmentTerm]) -> Formula:
    gs = []
    for t in terms:
        body = Pred(t.preds[0]) if len(t.preds) == 1 else And(tuple(Pred(p) for p in t.preds))
        gs.append(Always(body, Interval(t.tau, t.t_end)))
    return gs[0] if len(gs) == 1 else And(tuple(gs))


def _polytope_contained(inner: tuple[LinearPredicate, ...], outer: tuple[LinearPredicate, ...]) -> bool:
    from ..lp import LinearProgram, solve_lp

    g = np.array([np.concatenate([p.a, p.c]) for p in inner])
    h = np.array([p.b for p in inner])
    for q in outer:
        obj = -np.concatenate([q.a, q.c])
        res = solve_lp(LinearProgram(c=obj, G=g, h=h))
        if res.status == "infeasible":
            return True
        if res.status != "optimal" or -res.objective > q.b + 1e-9:
            return False
    return True


def validate_fragment(formula: Formula, strict: bool = False) -> list[FragmentTerm]:
    """Check the fragment shape; with strict, also tau ordering and set nesting."""
    terms = fragment_terms(formula)
    if strict:
        taus = [t.tau for t in terms]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise FragmentViolation("start times must be strictly increasing")
        if taus[-1] > terms[0].t_end:
            raise FragmentViolation("start time exceeds end time")
        for prev, cur in zip(terms, terms[1:]):
            if not _polytope_contained(cur.preds, prev.preds):
                raise FragmentViolation("predicate sets are not nested")
    return terms


@dataclass(frozen=True)
class RobustModification:
    """Offsets delta[(k, nu)][i] per schedule segment i with decay rates mu_i / 2."""

    deltas: dict = field(hash=False)
    mus: tuple[float, ...]
    starts: tuple[float, ...]

    def offset(self, k: int, nu: int) -> PiecewiseExpOffset:
        if (k, nu) not in self.deltas:
            raise MissingOffset(f"no offset for predicate ({k}, {nu})")
        d = tuple(float(v) for v in self.deltas[(k, nu)])
        if len(d) != len(self.starts):
            raise MissingOffset(f"predicate ({k}, {nu}) lacks offsets for some segments")
        return PiecewiseExpOffset(self.starts, d, tuple(0.5 * m for m in self.mus))


def robustify(formula: Formula, mod: RobustModification) -> Formula:
    """Tighten every predicate bound by its time-varying offset."""
    terms = fragment_terms(formula)
    out = []
    for k, t in enumerate(terms):
        preds = []
        for nu, p in enumerate(t.preds):
            off = mod.offset(k, nu)
            preds.append(p.with_offset(None if off.is_zero else off))
        out.append(FragmentTerm(t.tau, t.t_end, tuple(preds)))
    return build_fragment(out)
