"""SwarmSTL abstract syntax and negation normal form."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FormulaError(ValueError):
    pass


class Formula:
    __slots__ = ()

    def children(self) -> tuple["Formula", ...]:
        return ()

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class TrueF(Formula):
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Atom(Formula):
    """Linear predicate ``a . eta <= c`` over the configured moment vector."""

    a: tuple
    c: float
    names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "names", tuple(self.names))
        if self.names and len(self.names) != len(self.a):
            raise FormulaError("atom coefficient/name arity mismatch")

    def margin(self, eta: np.ndarray) -> np.ndarray:
        """c - a . eta along the last axis of ``eta``."""
        eta = np.asarray(eta, dtype=float)
        if eta.shape[-1] != len(self.a):
            raise FormulaError(f"atom over {len(self.a)} moments applied to {eta.shape[-1]}")
        # left-to-right accumulation keeps scalar and batched evaluation bitwise equal
        acc = np.zeros(eta.shape[:-1])
        for i, coeff in enumerate(self.a):
            if coeff != 0.0:
                acc = acc + coeff * eta[..., i]
        return self.c - acc

    def negate(self) -> "Atom":
        return Atom(tuple(-x for x in self.a), -self.c, self.names)

    def __str__(self):
        names = self.names or tuple(f"m{i}" for i in range(len(self.a)))
        terms = [f"{x:g}*{n}" for x, n in zip(self.a, names) if x != 0]
        return f"({' + '.join(terms) or '0'} <= {self.c:g})"


@dataclass(frozen=True)
class Event(Formula):
    """Externally supplied Boolean signal; ``value`` is the polarity that satisfies it."""

    name: str
    value: bool = True

    def __str__(self):
        return self.name if self.value else f"!{self.name}"


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"!{self.arg}"


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} | {self.right})"


def _check_interval(lo, hi):
    if not (isinstance(lo, (int, np.integer)) and isinstance(hi, (int, np.integer))):
        raise FormulaError("temporal bounds must be integers")
    if not 0 <= lo <= hi:
        raise FormulaError(f"invalid interval [{lo},{hi}]")


@dataclass(frozen=True)
class Since(Formula):
    """left S[lo,hi] right: right held at some k' in [k-hi, k-lo] and left held on (k', k]."""

    left: Formula
    right: Formula
    lo: int
    hi: int

    def __post_init__(self):
        _check_interval(self.lo, self.hi)

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} S[{self.lo},{self.hi}] {self.right})"


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula
    lo: int
    hi: int

    def __post_init__(self):
        _check_interval(self.lo, self.hi)

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} U[{self.lo},{self.hi}] {self.right})"


@dataclass(frozen=True)
class EventuallyPast(Formula):
    """P[lo,hi] arg, i.e. true S[lo,hi] arg."""

    arg: Formula
    lo: int
    hi: int

    def __post_init__(self):
        _check_interval(self.lo, self.hi)

    def children(self):
        return (self.arg,)

    def desugar(self) -> Since:
        return Since(TrueF(), self.arg, self.lo, self.hi)

    def __str__(self):
        return f"P[{self.lo},{self.hi}] {self.arg}"


@dataclass(frozen=True)
class AlwaysPast(Formula):
    """H[lo,hi] arg, i.e. !P[lo,hi] !arg."""

    arg: Formula
    lo: int
    hi: int

    def __post_init__(self):
        _check_interval(self.lo, self.hi)

    def children(self):
        return (self.arg,)

    def desugar(self) -> Not:
        return Not(Since(TrueF(), Not(self.arg), self.lo, self.hi))

    def __str__(self):
        return f"H[{self.lo},{self.hi}] {self.arg}"


def Implies(left: Formula, right: Formula) -> Or:
    return Or(Not(left), right)


def is_past_time(f: Formula) -> bool:
    if isinstance(f, Until):
        return False
    return all(is_past_time(c) for c in f.children())


def history_depth(f: Formula) -> int:
    """Slots of past a formula reaches back; the online monitor's buffer size minus one."""
    own = f.hi if isinstance(f, (Since, EventuallyPast, AlwaysPast)) else 0
    return own + max((history_depth(c) for c in f.children()), default=0)


def atoms(f: Formula) -> list[Atom]:
    if isinstance(f, Atom):
        return [f]
    return [a for c in f.children() for a in atoms(c)]


def events(f: Formula) -> set[str]:
    if isinstance(f, Event):
        return {f.name}
    out = set()
    for c in f.children():
        out |= events(c)
    return out


def to_nnf(f: Formula, strict: bool = False) -> Formula:
    """Push negations down to atoms and events.

    A negation in front of a Since whose left operand is not ``true`` (or in
    front of an Until) has no dual in this logic; it is kept as is, or
    rejected when ``strict`` is set.
    """
    return _nnf(f, False, strict)


def _nnf(f: Formula, neg: bool, strict: bool) -> Formula:
    if isinstance(f, Not):
        return _nnf(f.arg, not neg, strict)
    if isinstance(f, TrueF):
        return FalseF() if neg else f
    if isinstance(f, FalseF):
        return TrueF() if neg else f
    if isinstance(f, Atom):
        return f.negate() if neg else f
    if isinstance(f, Event):
        return Event(f.name, not f.value) if neg else f
    if isinstance(f, And):
        l, r = _nnf(f.left, neg, strict), _nnf(f.right, neg, strict)
        return Or(l, r) if neg else And(l, r)
    if isinstance(f, Or):
        l, r = _nnf(f.left, neg, strict), _nnf(f.right, neg, strict)
        return And(l, r) if neg else Or(l, r)
    if isinstance(f, EventuallyPast):
        cls = AlwaysPast if neg else EventuallyPast
        return cls(_nnf(f.arg, neg, strict), f.lo, f.hi)
    if isinstance(f, AlwaysPast):
        cls = EventuallyPast if neg else AlwaysPast
        return cls(_nnf(f.arg, neg, strict), f.lo, f.hi)
    if isinstance(f, Since) and isinstance(f.left, TrueF):
        return _nnf(EventuallyPast(f.right, f.lo, f.hi), neg, strict)
    if isinstance(f, (Since, Until)):
        inner = type(f)(_nnf(f.left, False, strict), _nnf(f.right, False, strict), f.lo, f.hi)
        if not neg:
            return inner
        if strict:
            kind = "Since" if isinstance(f, Since) else "Until"
            raise FormulaError(f"no confidence rule for negated {kind}")
        return Not(inner)
    raise FormulaError(f"unknown formula node {f!r}")


def is_nnf(f: Formula) -> bool:
    if isinstance(f, Not):
        return False
    return all(is_nnf(c) for c in f.children())

