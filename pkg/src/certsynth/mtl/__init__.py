"""Metric temporal logic over linear predicates."""

from .ast import (
    Always, And, Eventually, Formula, Interval, LinearPredicate, Not, Or,
    PiecewiseExpOffset, Pred, TrueF, Until, depth, make_predicate, predicates,
)
from .fragment import (
    FragmentTerm, RobustModification, build_fragment, fragment_terms, robustify,
    validate_fragment,
)
from .parser import Variable, VariableTable, format_formula, parse_formula
from .semantics import robustness, robustness_signal, satisfied, time_domain, window_offsets
from ..trace import SignalTrace

__all__ = [
    "Always", "And", "Eventually", "Formula", "FragmentTerm", "Interval",
    "LinearPredicate", "Not", "Or", "PiecewiseExpOffset", "Pred",
    "RobustModification", "SignalTrace", "TrueF", "Until", "Variable",
    "VariableTable", "build_fragment", "depth", "format_formula",
    "fragment_terms", "make_predicate", "parse_formula", "predicates",
    "robustify", "robustness", "robustness_signal", "satisfied",
    "time_domain", "validate_fragment", "window_offsets",
]
