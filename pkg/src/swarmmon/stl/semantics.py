"""Quantitative semantics and distributed confidence levels of SwarmSTL formulas.

Robustness follows the min/max past-time convention: an atom ``a.eta <= c``
scores ``c - a.eta``, negation flips sign, conjunction/disjunction take
min/max, and a temporal operator scores the best witness inside its window.
Windows are clipped at slot 0; an empty window scores -inf (+inf for the
always-past dual). Events score +inf/-inf.

Confidence levels are Markov-inequality lower bounds that agent j derives
from its own estimate zeta^j and the consensus error bound rho:

* atom: 1 - max_i rho_i / m^j, where m^j is the robustness of zeta^j (0 if m^j <= 0)
* and: max(0, p1 + p2 - 1); or: max(p1, p2)
* since: best witness k' of 1 - deficit(right, k') - sum of deficits(left) over [k', k]
* always-past: union bound 1 - sum of deficits over the window

All window computations go through the ``*_window`` kernels, which receive
the child values for slots ``max(0, k - hi) .. k`` in chronological order.
The online monitor feeds them the same slices, so both paths agree bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .formula import (AlwaysPast, And, Atom, Event, EventuallyPast, FalseF, Formula,
                      FormulaError, Not, Or, Since, TrueF, Until, history_depth,
                      is_nnf, to_nnf)

INF = np.inf


class InsufficientHistory(FormulaError):
    pass


@dataclass
class MomentTrace:
    """Time-indexed moment signals seen by the monitor.

    zeta: agent estimates, (T, N, v); rho: per-moment error bounds, (T, v);
    eta: true moments, (T, v), when known; events: name -> (T,) booleans.
    """

    moment_names: tuple
    zeta: np.ndarray
    rho: np.ndarray
    eta: np.ndarray | None = None
    events: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        T, _, v = self.zeta.shape
        if len(self.moment_names) != v:
            raise ValueError("moment_names does not match zeta")
        if self.rho.shape != (T, v):
            raise ValueError(f"rho must have shape {(T, v)}")
        if self.eta is not None:
            self.eta = np.asarray(self.eta, dtype=float)
            if self.eta.shape != (T, v):
                raise ValueError(f"eta must have shape {(T, v)}")
        self.events = {k: np.asarray(b, dtype=bool) for k, b in self.events.items()}
        for name, b in self.events.items():
            if b.shape != (T,):
                raise ValueError(f"event {name!r} must have shape {(T,)}")

    @property
    def T(self) -> int:
        return self.zeta.shape[0]

    @property
    def n_agents(self) -> int:
        return self.zeta.shape[1]


# ------------------------------------------------------------------ kernels

def _n_candidates(length: int, lo: int) -> int:
    return max(length - lo, 0)


def since_robustness_window(r_left, r_right, lo):
    n = _n_candidates(len(r_left), lo)
    if n == 0:
        return np.full(r_left.shape[1:], -INF)
    # tail[c] = min of r_left over (c, end]
    rev = np.minimum.accumulate(r_left[::-1], axis=0)[::-1]
    tail = np.concatenate([rev[1:], np.full((1,) + r_left.shape[1:], INF)])
    return np.minimum(r_right[:n], tail[:n]).max(axis=0)


def eventually_robustness_window(r, lo):
    n = _n_candidates(len(r), lo)
    if n == 0:
        return np.full(r.shape[1:], -INF)
    return r[:n].max(axis=0)


def always_robustness_window(r, lo):
    n = _n_candidates(len(r), lo)
    if n == 0:
        return np.full(r.shape[1:], INF)
    return r[:n].min(axis=0)


def until_robustness_window(r_left, r_right, lo):
    """Window covers slots k .. k + hi; left must hold on [k, k')."""
    head = np.minimum.accumulate(r_left, axis=0)
    head = np.concatenate([np.full((1,) + r_left.shape[1:], INF), head[:-1]])
    if lo >= len(r_left):
        return np.full(r_left.shape[1:], -INF)
    return np.minimum(r_right[lo:], head[lo:]).max(axis=0)


def since_confidence_window(p_left, p_right, lo, closed=True):
    n = _n_candidates(len(p_left), lo)
    if n == 0:
        return np.zeros(p_left.shape[1:])
    deficit = 1.0 - p_left
    suffix = np.cumsum(deficit[::-1], axis=0)[::-1]
    if not closed:
        suffix = suffix - deficit
    vals = 1.0 - (1.0 - p_right[:n]) - suffix[:n]
    return np.maximum(vals.max(axis=0), 0.0)


def eventually_confidence_window(p, lo):
    n = _n_candidates(len(p), lo)
    if n == 0:
        return np.zeros(p.shape[1:])
    return p[:n].max(axis=0)


def always_confidence_window(p, lo):
    n = _n_candidates(len(p), lo)
    if n == 0:
        return np.ones(p.shape[1:])
    return np.maximum(1.0 - (1.0 - p[:n]).sum(axis=0), 0.0)


def atom_confidence(margin, rho_max):
    """1 - rho_max / margin where margin > 0, else 0."""
    margin = np.asarray(margin, dtype=float)
    rho_max = np.broadcast_to(np.asarray(rho_max, dtype=float), margin.shape)
    out = np.zeros(margin.shape)
    pos = margin > 0
    out[pos] = np.maximum(1.0 - rho_max[pos] / margin[pos], 0.0)
    return np.minimum(out, 1.0)


def event_values(f: Event, events: Mapping[str, np.ndarray]):
    if f.name not in events:
        raise FormulaError(f"unknown event {f.name!r}")
    return np.asarray(events[f.name], dtype=bool) == f.value


# ------------------------------------------------------------- offline series

def robustness_series(f: Formula, signal, events: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
    """Robustness at every slot of ``signal`` (shape (T, v) or (T, N, v)).

    Slots whose Until windows run past the end of the signal are NaN.
    """
    signal = np.asarray(signal, dtype=float)
    return _rob(f, signal, events or {}, {})


def _windowed(child_a, child_b, T, hi, fn):
    out = np.empty(child_a.shape)
    for k in range(T):
        s = max(0, k - hi)
        out[k] = fn(child_a[s:k + 1], None if child_b is None else child_b[s:k + 1])
    return out


def _rob(f, sig, events, memo):
    key = f
    if key in memo:
        return memo[key]
    T = sig.shape[0]
    shape = sig.shape[:-1]
    if isinstance(f, TrueF):
        out = np.full(shape, INF)
    elif isinstance(f, FalseF):
        out = np.full(shape, -INF)
    elif isinstance(f, Atom):
        out = f.margin(sig)
    elif isinstance(f, Event):
        hit = event_values(f, events)
        out = np.broadcast_to(np.where(hit, INF, -INF).reshape((T,) + (1,) * (len(shape) - 1)), shape).copy()
    elif isinstance(f, Not):
        out = -_rob(f.arg, sig, events, memo)
    elif isinstance(f, And):
        out = np.minimum(_rob(f.left, sig, events, memo), _rob(f.right, sig, events, memo))
    elif isinstance(f, Or):
        out = np.maximum(_rob(f.left, sig, events, memo), _rob(f.right, sig, events, memo))
    elif isinstance(f, EventuallyPast):
        r = _rob(f.arg, sig, events, memo)
        out = _windowed(r, None, T, f.hi, lambda a, _: eventually_robustness_window(a, f.lo))
    elif isinstance(f, AlwaysPast):
        r = _rob(f.arg, sig, events, memo)
        out = _windowed(r, None, T, f.hi, lambda a, _: always_robustness_window(a, f.lo))
    elif isinstance(f, Since):
        r1, r2 = _rob(f.left, sig, events, memo), _rob(f.right, sig, events, memo)
        out = _windowed(r1, r2, T, f.hi, lambda a, b: since_robustness_window(a, b, f.lo))
    elif isinstance(f, Until):
        r1, r2 = _rob(f.left, sig, events, memo), _rob(f.right, sig, events, memo)
        out = np.full(shape, np.nan)
        for k in range(T - f.hi):
            out[k] = until_robustness_window(r1[k:k + f.hi + 1], r2[k:k + f.hi + 1], f.lo)
    else:
        raise FormulaError(f"unknown formula node {f!r}")
    memo[key] = out
    return out


def confidence_series(f: Formula, zeta, rho, events: Mapping[str, np.ndarray] | None = None,
                      since_closed: bool = True) -> np.ndarray:
    """Per-agent confidence levels, shape (T, N), for a formula in negation normal form.

    ``since_closed`` charges the left operand's deficit on [k', k]; set it to
    False to charge only (k', k].
    """
    if not is_nnf(f):
        raise FormulaError("confidence needs a formula in negation normal form")
    zeta = np.asarray(zeta, dtype=float)
    rho_max = np.asarray(rho, dtype=float).max(axis=1)
    return _conf(f, zeta, rho_max, events or {}, since_closed, {})


def _conf(f, zeta, rho_max, events, closed, memo):
    if f in memo:
        return memo[f]
    T, N = zeta.shape[:2]
    if isinstance(f, TrueF):
        out = np.ones((T, N))
    elif isinstance(f, FalseF):
        out = np.zeros((T, N))
    elif isinstance(f, Atom):
        out = atom_confidence(f.margin(zeta), rho_max[:, None])
    elif isinstance(f, Event):
        out = np.repeat(event_values(f, events).astype(float)[:, None], N, axis=1)
    elif isinstance(f, And):
        a = _conf(f.left, zeta, rho_max, events, closed, memo)
        b = _conf(f.right, zeta, rho_max, events, closed, memo)
        out = np.maximum(a + b - 1.0, 0.0)
    elif isinstance(f, Or):
        out = np.maximum(_conf(f.left, zeta, rho_max, events, closed, memo),
                         _conf(f.right, zeta, rho_max, events, closed, memo))
    elif isinstance(f, EventuallyPast):
        p = _conf(f.arg, zeta, rho_max, events, closed, memo)
        out = _windowed(p, None, T, f.hi, lambda a, _: eventually_confidence_window(a, f.lo))
    elif isinstance(f, AlwaysPast):
        p = _conf(f.arg, zeta, rho_max, events, closed, memo)
        out = _windowed(p, None, T, f.hi, lambda a, _: always_confidence_window(a, f.lo))
    elif isinstance(f, Since):
        p1 = _conf(f.left, zeta, rho_max, events, closed, memo)
        p2 = _conf(f.right, zeta, rho_max, events, closed, memo)
        out = _windowed(p1, p2, T, f.hi, lambda a, b: since_confidence_window(a, b, f.lo, closed))
    elif isinstance(f, Until):
        raise FormulaError("no confidence rule for Until")
    else:
        raise FormulaError(f"unknown formula node {f!r}")
    memo[f] = out
    return out


# ------------------------------------------------------------- point queries

def robustness(trace: MomentTrace, f: Formula, k: int) -> float:
    """Robustness of the true moments at slot ``k``."""
    if trace.eta is None:
        raise ValueError("trace carries no true moments")
    if not 0 <= k < trace.T:
        raise InsufficientHistory(f"slot {k} outside trace of length {trace.T}")
    val = robustness_series(f, trace.eta, trace.events)[k]
    if np.isnan(val):
        raise InsufficientHistory(f"insufficient history: future window of slot {k} passes the trace end")
    return float(val)


def satisfies(trace: MomentTrace, f: Formula, k: int) -> bool:
    return robustness(trace, f, k) >= 0


def confidence(trace: MomentTrace, f: Formula, k: int, agent: int, since_closed: bool = True) -> float:
    if not 0 <= k < trace.T:
        raise InsufficientHistory(f"slot {k} outside trace of length {trace.T}")
    g = to_nnf(f, strict=True)
    return float(confidence_series(g, trace.zeta, trace.rho, trace.events, since_closed)[k, agent])


@dataclass
class MonitorResult:
    r: np.ndarray
    sat: np.ndarray
    confidence: np.ndarray
    status: np.ndarray


def evaluate_trace(trace: MomentTrace, f: Formula, since_closed: bool = True) -> MonitorResult:
    """Offline monitor: robustness/satisfaction on true moments plus per-agent confidence."""
    if trace.eta is not None:
        r = robustness_series(f, trace.eta, trace.events)
    else:
        r = np.full(trace.T, np.nan)
    conf = confidence_series(to_nnf(f, strict=True), trace.zeta, trace.rho, trace.events, since_closed)
    depth = history_depth(f)
    status = np.where(np.arange(trace.T) < depth, "insufficient_history", "ok")
    return MonitorResult(r, r >= 0, conf, status)
