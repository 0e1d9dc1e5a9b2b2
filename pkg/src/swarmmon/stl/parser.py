"""Recursive-descent parser for the SwarmSTL text syntax.

Binding strength, loosest first: ``=>`` (right associative), ``|``, ``&``,
the infix temporal operators ``S[a,b]`` / ``U[a,b]``, then the prefix
operators ``!``, ``P[a,b]``, ``H[a,b]``. An atom is a linear expression over
moment names compared to a number with ``<=`` or ``>=``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .formula import (AlwaysPast, And, Atom, Event, EventuallyPast, FalseF, Formula,
                      FormulaError, Implies, Not, Or, Since, TrueF, Until)


class ParseError(FormulaError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{msg} (line {line}, column {col})")
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|=>|[&|!()\[\],+\-*])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str, line0: int = 1) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, line0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        else:
            nl = m.group().count("\n")
            if nl:
                line += nl
                line_start = pos + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens, moments: Sequence[str], defs: Mapping[str, Formula]):
        self.toks = tokens
        self.i = 0
        self.moments = list(moments)
        self.defs = dict(defs)

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, n=1) -> Token:
        return self.toks[min(self.i + n, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def take(self, text=None, kind=None) -> Token:
        tok = self.tok
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            want = repr(text) if text is not None else kind
            got = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error(f"expected {want}, got {got}")
        self.i += 1
        return tok

    def at_temporal(self, letters) -> bool:
        return self.tok.kind == "ident" and self.tok.text in letters and self.peek().text == "["

    def parse(self) -> Formula:
        f = self.implication()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.tok.text == "=>":
            self.take()
            return Implies(left, self.implication())
        return left

    def disjunction(self) -> Formula:
        f = self.conjunction()
        while self.tok.text == "|":
            self.take()
            f = Or(f, self.conjunction())
        return f

    def conjunction(self) -> Formula:
        f = self.temporal()
        while self.tok.text == "&":
            self.take()
            f = And(f, self.temporal())
        return f

    def temporal(self) -> Formula:
        f = self.unary()
        while self.at_temporal(("S", "U")):
            op = self.take().text
            lo, hi = self.interval()
            right = self.unary()
            f = Since(f, right, lo, hi) if op == "S" else Until(f, right, lo, hi)
        return f

    def interval(self) -> tuple[int, int]:
        start = self.take("[")
        lo = self.integer()
        self.take(",")
        hi = self.integer()
        self.take("]")
        if lo > hi:
            raise self.error(f"interval lower bound {lo} exceeds upper bound {hi}", start)
        return lo, hi

    def integer(self) -> int:
        tok = self.take(kind="num")
        if not tok.text.isdigit():
            raise self.error("interval bounds must be non-negative integers", tok)
        return int(tok.text)

    def unary(self) -> Formula:
        if self.tok.text == "!":
            self.take()
            return Not(self.unary())
        if self.at_temporal(("P", "H")):
            op = self.take().text
            lo, hi = self.interval()
            arg = self.unary()
            return EventuallyPast(arg, lo, hi) if op == "P" else AlwaysPast(arg, lo, hi)
        return self.primary()

    def primary(self) -> Formula:
        tok = self.tok
        if tok.text == "(":
            self.take()
            f = self.implication()
            self.take(")")
            return f
        if tok.kind == "ident":
            if tok.text == "true":
                self.take()
                return TrueF()
            if tok.text == "false":
                self.take()
                return FalseF()
            if tok.text in self.defs:
                self.take()
                return self.defs[tok.text]
            if tok.text in self.moments:
                return self.atom()
            if self.peek().text in ("<=", ">=", "+", "-", "*"):
                raise self.error(f"unknown moment name {tok.text!r}")
            self.take()
            return Event(tok.text)
        if tok.kind == "num" or tok.text in ("+", "-"):
            return self.atom()
        if tok.kind == "eof":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {tok.text!r}")

    def atom(self) -> Atom:
        a = [0.0] * len(self.moments)
        first = True
        while True:
            sign = 1.0
            if self.tok.text in ("+", "-"):
                sign = -1.0 if self.take().text == "-" else 1.0
            elif not first:
                break
            coeff = 1.0
            if self.tok.kind == "num":
                coeff = float(self.take().text)
                self.take("*")
            name = self.take(kind="ident")
            if name.text not in self.moments:
                raise self.error(f"unknown moment name {name.text!r}", name)
            a[self.moments.index(name.text)] += sign * coeff
            first = False
        if self.tok.text not in ("<=", ">="):
            raise self.error("expected '<=' or '>=' after linear expression")
        cmp = self.take().text
        sign = 1.0
        if self.tok.text in ("+", "-"):
            sign = -1.0 if self.take().text == "-" else 1.0
        c = sign * float(self.take(kind="num").text)
        if cmp == ">=":
            a, c = [-x for x in a], -c
        return Atom(tuple(a), c, tuple(self.moments))


def parse(text: str, moments: Sequence[str] = (), defs: Mapping[str, Formula] | None = None,
          line0: int = 1) -> Formula:
    """Parse one formula. Identifiers that are neither moments nor definitions are events."""
    return _Parser(tokenize(text, line0), moments, defs or {}).parse()


_DEF_RE = re.compile(r"^\s*def\s+([A-Za-z_][A-Za-z_0-9]*)\s*=(.*)$")


def parse_definitions(defs: Mapping[str, str], moments: Sequence[str]) -> dict[str, Formula]:
    """Parse named sub-formulas in order; later ones may use earlier ones."""
    out: dict[str, Formula] = {}
    for name, text in defs.items():
        if name in moments:
            raise FormulaError(f"definition {name!r} shadows a moment name")
        out[name] = parse(text, moments, out)
    return out


def parse_formula_file(text: str, moments: Sequence[str],
                       defs: Mapping[str, Formula] | None = None) -> Formula:
    """Parse a formula file: ``def name = formula`` lines, ``#`` comments, one target formula."""
    env = dict(defs or {})
    target = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _DEF_RE.match(line)
        if m:
            name = m.group(1)
            if name in moments:
                raise ParseError(f"definition {name!r} shadows a moment name", lineno, 1)
            env[name] = parse(" " * m.start(2) + m.group(2), moments, env, line0=lineno)
            continue
        if target is not None:
            raise ParseError("more than one target formula", lineno, 1)
        target = parse(line, moments, env, line0=lineno)
    if target is None:
        raise FormulaError("formula file has no target formula")
    return target
