"""Incremental past-time monitor with bounded per-operator history."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import semantics as sem
from .formula import (AlwaysPast, And, Atom, Event, EventuallyPast, FalseF, Formula,
                      FormulaError, Not, Or, Since, TrueF, history_depth, is_past_time,
                      to_nnf)


@dataclass
class TraceRow:
    zeta: np.ndarray
    rho: np.ndarray
    eta: np.ndarray | None = None
    events: Mapping[str, bool] = field(default_factory=dict)


@dataclass
class MonitorOutput:
    k: int
    r: float
    sat: bool | None
    confidence: np.ndarray
    status: str


class RingBuffer:
    """Fixed-capacity history; ``window()`` returns the retained rows oldest first."""

    def __init__(self, capacity: int, shape=()):
        self.buf = np.empty((capacity,) + tuple(shape))
        self.capacity = capacity
        self.count = 0

    def push(self, value):
        self.buf[self.count % self.capacity] = value
        self.count += 1

    def window(self) -> np.ndarray:
        m = min(self.count, self.capacity)
        idx = np.arange(self.count - m, self.count) % self.capacity
        return self.buf[idx]


class _Node:
    def __init__(self, f: Formula, mode: str, shape, closed: bool):
        self.f = f
        self.mode = mode
        self.closed = closed
        self.kids = [_Node(c, mode, shape, closed) for c in f.children()]
        if isinstance(f, (Since, EventuallyPast, AlwaysPast)):
            self.hist = [RingBuffer(f.hi + 1, shape) for _ in self.kids]

    def push(self, row: TraceRow):
        f, rob = self.f, self.mode == "rob"
        vals = [kid.push(row) for kid in self.kids]
        if isinstance(f, TrueF):
            return np.float64(np.inf) if rob else np.ones(row.zeta.shape[0])
        if isinstance(f, FalseF):
            return np.float64(-np.inf) if rob else np.zeros(row.zeta.shape[0])
        if isinstance(f, Atom):
            if rob:
                return f.margin(row.eta)
            return sem.atom_confidence(f.margin(row.zeta), np.max(row.rho))
        if isinstance(f, Event):
            if f.name not in row.events:
                raise FormulaError(f"unknown event {f.name!r}")
            hit = bool(row.events[f.name]) == f.value
            if rob:
                return np.float64(np.inf if hit else -np.inf)
            return np.full(row.zeta.shape[0], float(hit))
        if isinstance(f, Not):
            if not rob:
                raise FormulaError("confidence needs a formula in negation normal form")
            return -vals[0]
        if isinstance(f, And):
            return np.minimum(*vals) if rob else np.maximum(vals[0] + vals[1] - 1.0, 0.0)
        if isinstance(f, Or):
            return np.maximum(*vals)
        for h, v in zip(self.hist, vals):
            h.push(v)
        wins = [h.window() for h in self.hist]
        if isinstance(f, EventuallyPast):
            kern = sem.eventually_robustness_window if rob else sem.eventually_confidence_window
            return kern(wins[0], f.lo)
        if isinstance(f, AlwaysPast):
            kern = sem.always_robustness_window if rob else sem.always_confidence_window
            return kern(wins[0], f.lo)
        if isinstance(f, Since):
            if rob:
                return sem.since_robustness_window(wins[0], wins[1], f.lo)
            return sem.since_confidence_window(wins[0], wins[1], f.lo, self.closed)
        raise FormulaError(f"unsupported node {f!r}")


class OnlineMonitor:
    """Evaluates one past-time formula slot by slot.

    Robustness is computed on the true moments when a row carries them;
    confidence levels are computed per agent from the negation normal form.
    Slots earlier than the formula's history depth are flagged
    ``insufficient_history``.
    """

    def __init__(self, f: Formula, n_agents: int, since_closed: bool = True):
        if not is_past_time(f):
            raise FormulaError("online monitoring supports past-time formulas only (found Until)")
        self.formula = f
        self.depth = history_depth(f)
        self._rob = _Node(f, "rob", (), since_closed)
        self._conf = _Node(to_nnf(f, strict=True), "conf", (n_agents,), since_closed)
        self.k = 0

    def update(self, row: TraceRow) -> MonitorOutput:
        conf = self._conf.push(row)
        if row.eta is None:
            row = TraceRow(row.zeta, row.rho, np.full(np.shape(row.rho), np.nan), row.events)
        r = float(self._rob.push(row))
        sat = None if np.isnan(r) else bool(r >= 0)
        status = "ok" if self.k >= self.depth else "insufficient_history"
        out = MonitorOutput(self.k, r, sat, np.asarray(conf, dtype=float), status)
        self.k += 1
        return out


def monitor_online(rows: Iterable[TraceRow], f: Formula, n_agents: int,
                   since_closed: bool = True) -> Iterator[MonitorOutput]:
    mon = OnlineMonitor(f, n_agents, since_closed)
    for row in rows:
        yield mon.update(row)


def trace_rows(trace: sem.MomentTrace) -> Iterator[TraceRow]:
    for k in range(trace.T):
        yield TraceRow(trace.zeta[k], trace.rho[k],
                       None if trace.eta is None else trace.eta[k],
                       {name: bool(b[k]) for name, b in trace.events.items()})
