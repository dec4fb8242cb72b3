"""Text grammar for formulas.

    phi   := phi "|" phi | phi "&" phi | phi "U[" num "," num "]" phi
           | "!" phi | "G[" num "," num "]" phi | "F[" num "," num "]" phi
           | "(" phi ")" | "true" | atom
    atom  := lincomb ("<=" | ">=" | "<" | ">") num
    lincomb := ["-"] term (("+" | "-") term)*
    term  := num "*" var | var

Binding from loosest to tightest: "|", "&", "U" (right associative), then the
prefix operators.  Variables are linear functionals of the state and input
vectors; every state and input name is a variable, and scenarios may add
derived ones (e.g. a frequency in Hz computed from a speed in rad/s).
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormulaSyntaxError, UnknownVariable
from .ast import (
    Always, And, Eventually, Formula, Interval, LinearPredicate, Not, Or, Pred,
    TrueF, Until, make_predicate, NORM_TOL,
)


@dataclass(frozen=True)
class Variable:
    name: str
    a: np.ndarray
    c: np.ndarray
    offset: float = 0.0


@dataclass
class VariableTable:
    state_names: tuple[str, ...]
    input_names: tuple[str, ...] = ()
    derived: dict[str, Variable] = field(default_factory=dict)

    def __post_init__(self):
        self.state_names = tuple(self.state_names)
        self.input_names = tuple(self.input_names)
        names = self.state_names + self.input_names
        if len(set(names)) != len(names):
            raise ValueError("state and input names must be unique")

    @property
    def n(self) -> int:
        return len(self.state_names)

    @property
    def p(self) -> int:
        return len(self.input_names)

    def add(self, name: str, a=None, c=None, offset: float = 0.0) -> None:
        if name in self.state_names or name in self.input_names:
            raise ValueError(f"variable {name!r} shadows a state or input")
        a = np.zeros(self.n) if a is None else np.asarray(a, dtype=float)
        c = np.zeros(self.p) if c is None else np.asarray(c, dtype=float)
        if a.shape != (self.n,) or c.shape != (self.p,):
            raise ValueError(f"variable {name!r} has wrong coefficient dimensions")
        self.derived[name] = Variable(name, a, c, float(offset))

    def add_scaled(self, name: str, base: str, scale: float) -> None:
        v = self.lookup(base)
        self.add(name, v.a * scale, v.c * scale, v.offset * scale)

    def lookup(self, name: str) -> Variable:
        if name in self.derived:
            return self.derived[name]
        if name in self.state_names:
            a = np.zeros(self.n)
            a[self.state_names.index(name)] = 1.0
            return Variable(name, a, np.zeros(self.p))
        if name in self.input_names:
            c = np.zeros(self.p)
            c[self.input_names.index(name)] = 1.0
            return Variable(name, np.zeros(self.n), c)
        raise UnknownVariable(name)


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+|\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<tempop>[GFU]\s*\[)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<|>|&|\||!|\(|\)|\]|,|\*|\+|-)
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            if m.group() == "\n":
                line += 1
                line_start = m.end()
        elif kind == "tempop":
            toks.append(_Tok(m.group()[0], m.group(), line, pos - line_start + 1))
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, table: VariableTable, normalize: bool):
        self.toks = _tokenize(text)
        self.i = 0
        self.table = table
        self.normalize = normalize
        self.text = text

    # token helpers
    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        return FormulaSyntaxError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def number(self) -> float:
        sign = 1.0
        while self.peek().text in ("-", "+"):
            if self.next().text == "-":
                sign = -sign
        tok = self.next()
        if tok.kind != "num":
            raise self.error(f"expected a number, found {tok.text or 'end of input'!r}", tok)
        return sign * float(tok.text)

    # grammar
    def parse(self) -> Formula:
        f = self.disjunction()
        if self.peek().kind != "eof":
            raise self.error(f"unexpected {self.peek().text!r}")
        return f

    def disjunction(self) -> Formula:
        items = [self.conjunction()]
        while self.peek().text == "|":
            self.next()
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def conjunction(self) -> Formula:
        items = [self.until()]
        while self.peek().text == "&":
            self.next()
            items.append(self.until())
        return items[0] if len(items) == 1 else And(tuple(items))

    def until(self) -> Formula:
        left = self.unary()
        if self.peek().kind == "U":
            self.next()
            interval = self.interval()
            right = self.until()
            return Until(left, right, interval)
        return left

    def interval(self) -> Interval:
        start = self.peek()
        lo = self.number()
        self.expect(",")
        hi = self.number()
        self.expect("]")
        try:
            return Interval(lo, hi)
        except ValueError as exc:
            raise self.error(str(exc), start) from None

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.text == "!":
            self.next()
            return Not(self.unary())
        if tok.kind in ("G", "F"):
            self.next()
            interval = self.interval()
            child = self.unary()
            return Always(child, interval) if tok.kind == "G" else Eventually(child, interval)
        if tok.text == "(":
            # a parenthesis opens either a sub-formula or an atom's lincomb;
            # lincombs here never use parentheses, so it is a sub-formula.
            self.next()
            f = self.disjunction()
            self.expect(")")
            return f
        if tok.kind == "ident" and tok.text == "true":
            self.next()
            return TrueF()
        if tok.kind == "eof":
            raise self.error("unexpected end of input")
        return self.atom()

    def atom(self) -> Formula:
        start = self.peek()
        a = np.zeros(self.table.n)
        c = np.zeros(self.table.p)
        const = 0.0
        sign = 1.0
        if self.peek().text in ("-", "+"):
            sign = -1.0 if self.next().text == "-" else 1.0
        while True:
            coef, name_tok = self.term()
            try:
                var = self.table.lookup(name_tok.text)
            except UnknownVariable:
                raise UnknownVariable(
                    f"{name_tok.text!r} (line {name_tok.line}, column {name_tok.col})"
                ) from None
            k = sign * coef
            a = a + k * var.a
            c = c + k * var.c
            const += k * var.offset
            if self.peek().text in ("+", "-"):
                sign = -1.0 if self.next().text == "-" else 1.0
                continue
            break
        op = self.next()
        if op.text not in ("<=", ">=", "<", ">"):
            raise self.error(f"expected a comparison, found {op.text or 'end of input'!r}", op)
        bound = self.number()
        end = self.toks[self.i - 1]
        label = self._slice(start, end)
        b = bound - const
        if op.text in (">=", ">"):
            a, c, b = -a, -c, -b
        norm = float(np.linalg.norm(a))
        if self.normalize and norm > 0 and abs(norm - 1.0) > NORM_TOL:
            warnings.warn(f"predicate {label!r} rescaled to a unit state normal", stacklevel=4)
        return Pred(make_predicate(a, c, b, label=label, normalize=self.normalize))

    def term(self) -> tuple[float, _Tok]:
        tok = self.next()
        if tok.kind == "num":
            self.expect("*")
            name = self.next()
            if name.kind != "ident":
                raise self.error("expected a variable name", name)
            return float(tok.text), name
        if tok.kind == "ident":
            return 1.0, tok
        raise self.error(f"expected a term, found {tok.text or 'end of input'!r}", tok)

    def _slice(self, start: _Tok, end: _Tok) -> str:
        lines = self.text.split("\n")
        if start.line == end.line:
            return lines[start.line - 1][start.col - 1:end.col - 1 + len(end.text)].strip()
        return f"{start.text}...{end.text}"


def parse_formula(text: str, table: VariableTable, normalize: bool = True) -> Formula:
    """Parse formula text against a variable table."""
    return _Parser(text, table, normalize).parse()


def _fmt_num(v: float) -> str:
    return repr(float(v))


def _fmt_pred(p: LinearPredicate, table: VariableTable) -> str:
    terms = []
    for coef, name in list(zip(p.a, table.state_names)) + list(zip(p.c, table.input_names)):
        if coef != 0.0:
            terms.append((coef, name))
    parts = []
    for idx, (coef, name) in enumerate(terms):
        mag = _fmt_num(abs(coef))
        if idx == 0:
            parts.append(("-" if coef < 0 else "") + f"{mag}*{name}")
        else:
            parts.append(("- " if coef < 0 else "+ ") + f"{mag}*{name}")
    text = " ".join(parts) + " <= " + _fmt_num(p.b)
    if p.offset is not None and not p.offset.is_zero:
        segs = ", ".join(
            f"{d:.6g}*exp(-{r:.6g}*(t-{s:g}))"
            for s, d, r in zip(p.offset.starts, p.offset.deltas, p.offset.rates)
        )
        text += f" - offset[{segs}]"
    return text


def _needs_parens(f: Formula) -> bool:
    return isinstance(f, (And, Or, Until))


def format_formula(f: Formula, table: VariableTable) -> str:
    """Print a formula in the grammar accepted by parse_formula.

    Offset-free formulas round-trip exactly; offsets are rendered for
    reading only.
    """

    def wrap(g: Formula) -> str:
        s = fmt(g)
        return f"({s})" if _needs_parens(g) else s

    def fmt(g: Formula) -> str:
        if isinstance(g, TrueF):
            return "true"
        if isinstance(g, Pred):
            return f"({_fmt_pred(g.pred, table)})"
        if isinstance(g, Not):
            return "!" + wrap(g.child)
        if isinstance(g, And):
            return " & ".join(wrap(k) for k in g.children)
        if isinstance(g, Or):
            return " | ".join(wrap(k) for k in g.children)
        if isinstance(g, Until):
            iv = g.interval
            return f"{wrap(g.left)} U[{_fmt_num(iv.lo)},{_fmt_num(iv.hi)}] {wrap(g.right)}"
        if isinstance(g, (Always, Eventually)):
            op = "G" if isinstance(g, Always) else "F"
            iv = g.interval
            return f"{op}[{_fmt_num(iv.lo)},{_fmt_num(iv.hi)}] {wrap(g.child)}"
        raise TypeError(type(g).__name__)

    return fmt(f)
