import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from certsynth.errors import (
    EmptyDomain, FormulaSyntaxError, FragmentViolation, MissingOffset, NonNormalizedPredicate,
    OutOfDomain, UnknownVariable,
)
from certsynth.mtl import (
    Always, And, Interval, Not, RobustModification, SignalTrace, VariableTable,
    format_formula, fragment_terms, make_predicate, parse_formula, predicates, robustify,
    robustness, robustness_signal, satisfied, time_domain, validate_fragment,
)
from generators import random_formula, random_trace
from oracles import horizon_needed, rob_brute


@pytest.fixture
def table():
    t = VariableTable(("x1", "x2"), ("u",))
    t.add("df", [1.0, 0.0], None)
    return t


def const_trace(values, k=11, dt=0.1):
    return SignalTrace.from_arrays(dt, np.tile(values, (k, 1)))


class TestParser:
    def test_always_over_two_predicates(self, table):
        f = parse_formula("G[0,5] (df <= 0.5 & df >= -0.5)", table)
        assert isinstance(f, Always) and f.interval == Interval(0, 5)
        assert isinstance(f.child, And) and len(f.child.children) == 2
        lo, hi = (c.pred for c in f.child.children)
        assert lo.a == (1.0, 0.0) and lo.b == 0.5
        assert hi.a == (-1.0, 0.0) and hi.b == 0.5

    def test_fragment_valid(self, table):
        validate_fragment(parse_formula("G[2,5] (df <= 0.4)", table), strict=True)

    def test_malformed(self, table):
        with pytest.raises(FormulaSyntaxError) as exc:
            parse_formula("F[0,1] (x1 <= 0) U[0,2] ...", table)
        assert exc.value.line == 1 and exc.value.column > 1

    def test_bad_interval(self, table):
        with pytest.raises(FormulaSyntaxError):
            parse_formula("G[3,1] x1 <= 0", table)

    def test_unknown_variable(self, table):
        with pytest.raises(UnknownVariable):
            parse_formula("G[0,1] y <= 0", table)

    def test_normalization(self, table):
        with pytest.warns(UserWarning):
            f = parse_formula("2*x1 <= 1", table)
        assert f.pred.a == (1.0, 0.0) and f.pred.b == pytest.approx(0.5)
        with pytest.raises(NonNormalizedPredicate):
            parse_formula("2*x1 <= 1", table, normalize=False)

    def test_input_terms(self, table):
        f = parse_formula("x2 + 3*u <= 1", table)
        assert f.pred.c == (3.0,)

    def test_multiline_position(self, table):
        with pytest.raises(FormulaSyntaxError) as exc:
            parse_formula("G[0,1] (x1 <= 0 &\n   x2 <=)", table)
        assert exc.value.line == 2

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(1, 4))
    def test_parse_print_parse(self, seed, depth):
        rng = np.random.default_rng(seed)
        tbl = VariableTable(("x1", "x2", "x3"), ("u",))
        f = random_formula(rng, depth, 3, 1)
        text = format_formula(f, tbl)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = parse_formula(text, tbl)
        assert format_formula(g, tbl) == text
        assert g == f


class TestRobustness:
    def test_boundary(self, table):
        f = parse_formula("df <= 0.5", table)
        assert robustness(f, const_trace([0.5, 0.0])) == 0.0

    def test_constant_margin(self, table):
        f = parse_formula("G[0,1] x1 <= 1", table)
        assert robustness(f, const_trace([0.0, 0.0])) == pytest.approx(1.0)

    def test_input_zero_order_hold(self, table):
        f = parse_formula("x1 + u <= 1", table)
        tr = SignalTrace.from_arrays(0.1, np.zeros((3, 2)), np.array([[0.25], [2.0], [2.0]]))
        assert robustness(f, tr, 0.0) == pytest.approx(0.75)

    def test_nested_until_against_recursion(self):
        rng = np.random.default_rng(7)
        for i in range(500):
            f = random_formula(rng, 2 + i % 3, 2, dt=0.1)
            tr = random_trace(rng, 20, 2)
            need = horizon_needed(f, 0.1)
            vals, mask = robustness_signal(f, tr)
            for j in range(20 - need):
                assert mask[j]
                want = rob_brute(f, tr.times, tr.states, tr.inputs, tr.dt, j)
                assert vals[j] == pytest.approx(want, rel=0, abs=1e-12)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_negation(self, seed):
        rng = np.random.default_rng(seed)
        f = random_formula(rng, 3, 2)
        tr = random_trace(rng, 30, 2)
        v, m = robustness_signal(f, tr)
        w, n = robustness_signal(Not(f), tr)
        assert np.array_equal(m, n)
        assert np.array_equal(w[m], -v[m])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_monotone_in_margins(self, seed):
        rng = np.random.default_rng(seed)
        f = _negation_free(rng)
        tr = random_trace(rng, 30, 2)
        # tightening every bound by s lowers robustness by exactly s on negation-free formulas
        s = float(np.abs(rng.normal()))
        r1, m = robustness_signal(f, tr)
        r2, _ = robustness_signal(_shift_bounds(f, -s), tr)
        assert predicates(f)
        fin = m & np.isfinite(r1)
        assert np.all(r2[fin] <= r1[fin])
        assert np.allclose(r2[fin], r1[fin] - s)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_sign_soundness(self, seed):
        rng = np.random.default_rng(seed)
        f = random_formula(rng, 3, 2)
        tr = random_trace(rng, 30, 2)
        v, m = robustness_signal(f, tr)
        for j in np.flatnonzero(m):
            if v[j] > 0:
                assert satisfied(f, tr, tr.times[j])
            elif v[j] < 0:
                assert not satisfied(f, tr, tr.times[j])

    def test_out_of_domain(self, table):
        f = parse_formula("G[0,5] x1 <= 1", table)
        with pytest.raises(OutOfDomain):
            robustness(f, const_trace([0, 0], k=11), 0.0)


def _negation_free(rng):
    from certsynth.mtl.ast import Not as N

    while True:
        f = random_formula(rng, 3, 2)
        if not _has(f, N):
            return f


def _has(f, cls):
    from certsynth.mtl.ast import children

    return isinstance(f, cls) or any(_has(c, cls) for c in children(f))


def _shift_bounds(f, s):
    """Same formula with every predicate bound moved by s."""
    from dataclasses import replace

    from certsynth.mtl import ast as A

    if isinstance(f, A.Pred):
        return A.Pred(replace(f.pred, b=f.pred.b + s))
    if isinstance(f, A.TrueF):
        return f
    if isinstance(f, (A.And, A.Or)):
        return type(f)(tuple(_shift_bounds(c, s) for c in f.children))
    if isinstance(f, A.Until):
        return A.Until(_shift_bounds(f.left, s), _shift_bounds(f.right, s), f.interval)
    return type(f)(_shift_bounds(f.child, s), f.interval)


class TestTimeDomain:
    def test_predicate(self, table):
        tr = const_trace([0, 0], k=101)
        assert time_domain(parse_formula("x1 <= 0", table), tr) == [(0.0, 10.0)]

    def test_always_window(self, table):
        tr = const_trace([0, 0], k=101)
        (lo, hi), = time_domain(parse_formula("G[2,5] x1 <= 0", table), tr)
        assert lo == 0.0 and hi == pytest.approx(5.0)

    def test_too_short(self, table):
        with pytest.raises(EmptyDomain):
            time_domain(parse_formula("G[2,5] x1 <= 0", table), const_trace([0, 0], k=41))

    def test_fragment_contains_zero(self, table):
        f = parse_formula("G[0,5] (x1 <= 1 & x1 >= -1) & G[2,5] (x1 <= 0.5)", table)
        assert time_domain(f, const_trace([0, 0], k=51))[0][0] == 0.0


class TestRobustify:
    def _spec(self, table):
        return parse_formula("G[0,5] (df <= 0.5 & df >= -0.5) & G[2,5] (df <= 0.4)", table)

    def test_zero_offset_unchanged(self, table):
        f = self._spec(table)
        mod = RobustModification({(0, 0): (0.0,), (0, 1): (0.0,), (1, 0): (0.0,)}, (0.1,), (0.0,))
        assert robustify(f, mod) == f

    def test_exponential_bound(self, table):
        f = self._spec(table)
        mod = RobustModification({(0, 0): (0.217,), (0, 1): (0.217,), (1, 0): (0.217,)}, (0.1,), (0.0,))
        g = robustify(f, mod)
        p = fragment_terms(g)[0].preds[0]
        for t in (0.0, 1.0, 4.5):
            assert p.bound(t) == pytest.approx(0.5 - 0.217 * math.exp(-0.05 * t))

    def test_piecewise_restart(self):
        from certsynth.mtl.ast import PiecewiseExpOffset

        off = PiecewiseExpOffset((0.0, 5.0), (1.0, 2.0), (0.5, 0.25))
        assert off(4.0) == pytest.approx(math.exp(-2.0))
        assert off(6.0) == pytest.approx(2.0 * math.exp(-0.25))

    def test_missing(self, table):
        with pytest.raises(MissingOffset):
            robustify(self._spec(table), RobustModification({(0, 0): (1.0,)}, (0.1,), (0.0,)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        tbl = VariableTable(("x1", "x2"))
        f = parse_formula("G[0,2] (x1 <= 1 & x2 >= -1) & G[1,2] (x1 <= 0.5)", tbl)
        d = {k: (float(rng.uniform(0, 2)),) for k in ((0, 0), (0, 1), (1, 0))}
        g = robustify(f, RobustModification(d, (float(rng.uniform(0, 1)),), (0.0,)))
        tr = random_trace(rng, 21, 2)
        assert robustness(g, tr) <= robustness(f, tr)


class TestFragment:
    def test_not_nested(self, table):
        f = parse_formula("G[0,5] (x1 <= 0.4) & G[2,5] (x1 <= 0.5)", table)
        with pytest.raises(FragmentViolation):
            validate_fragment(f, strict=True)

    def test_tau_order(self, table):
        f = parse_formula("G[2,5] (x1 <= 0.5) & G[0,5] (x1 <= 0.4)", table)
        with pytest.raises(FragmentViolation):
            validate_fragment(f, strict=True)

    def test_shape(self, table):
        with pytest.raises(FragmentViolation):
            fragment_terms(parse_formula("F[0,5] x1 <= 0", table))
        with pytest.raises(FragmentViolation):
            fragment_terms(parse_formula("G[0,5] x1 <= 0 & G[0,4] x1 <= 0", table))


def test_make_predicate_normalizes():
    p = make_predicate([3.0, 4.0], [], 10.0)
    assert p.a == pytest.approx((0.6, 0.8)) and p.b == pytest.approx(2.0)
    with pytest.raises(NonNormalizedPredicate):
        make_predicate([0.0, 0.0], [], 1.0)
