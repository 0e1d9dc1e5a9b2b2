"""Polynomials, generalized moments, communication graphs and the planar environment."""
from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class EnvBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"invalid box {self}")

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2])

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return ((xy[..., 0] >= self.x_min) & (xy[..., 0] <= self.x_max)
                & (xy[..., 1] >= self.y_min) & (xy[..., 1] <= self.y_max))

    def clamp(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        out = np.empty_like(xy)
        out[..., 0] = np.clip(xy[..., 0], self.x_min, self.x_max)
        out[..., 1] = np.clip(xy[..., 1], self.y_min, self.y_max)
        return out

    def abs_bounds(self) -> tuple[float, float]:
        """Largest |x| and |y| attainable inside the box."""
        return (max(abs(self.x_min), abs(self.x_max)),
                max(abs(self.y_min), abs(self.y_max)))


@dataclass(frozen=True)
class Monomial:
    coeff: float
    px: int = 0
    py: int = 0

    def __post_init__(self):
        if self.px < 0 or self.py < 0:
            raise ValueError("monomial exponents must be non-negative")


_FACTOR = r"(?:(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[xy](?:\^\d+)?)"
_TERM_RE = re.compile(r"\s*([+-]?)\s*(" + _FACTOR + r"(?:\s*\*\s*" + _FACTOR + r")*)\s*")


class Polynomial(tuple):
    """Immutable sum of monomials in the agent coordinates ``x`` and ``y``."""

    def __new__(cls, terms: Iterable[Monomial] = ()):
        return super().__new__(cls, tuple(terms))

    @classmethod
    def parse(cls, text: str) -> "Polynomial":
        """Parse ``c*x^p*y^q`` terms joined by ``+``/``-``, e.g. ``0.5*x^2 + y``."""
        terms = []
        pos = 0
        while pos < len(text):
            m = _TERM_RE.match(text, pos)
            if not m or (terms and not m.group(1)):
                raise ValueError(f"cannot parse polynomial {text!r} at column {pos + 1}")
            sign = -1.0 if m.group(1) == "-" else 1.0
            terms.append(_parse_term(m.group(2), sign))
            pos = m.end()
        if not terms:
            raise ValueError("empty polynomial")
        return cls(terms)

    def __str__(self):
        if not self:
            return "0"
        parts = []
        for m in self:
            factors = [repr(m.coeff)]
            if m.px:
                factors.append("x" if m.px == 1 else f"x^{m.px}")
            if m.py:
                factors.append("y" if m.py == 1 else f"y^{m.py}")
            parts.append("*".join(factors))
        return " + ".join(parts)


def _parse_term(term: str, sign: float) -> Monomial:
    coeff, px, py = sign, 0, 0
    for factor in term.split("*"):
        factor = factor.strip()
        if factor[0] in "xy":
            power = int(factor[2:]) if "^" in factor else 1
            if factor[0] == "x":
                px += power
            else:
                py += power
        else:
            coeff *= float(factor)
    return Monomial(coeff, px, py)


@dataclass(frozen=True)
class MomentSpec:
    name: str
    poly: Polynomial

    def __post_init__(self):
        if not self.name.isidentifier():
            raise ValueError(f"moment name {self.name!r} is not an identifier")
        if len(self.poly) == 0:
            raise ValueError(f"moment {self.name!r} has an empty polynomial")
        object.__setattr__(self, "poly", Polynomial(self.poly))


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float


@dataclass(frozen=True)
class SwarmState:
    agents: tuple[AgentState, ...]

    @classmethod
    def from_array(cls, xy) -> "SwarmState":
        return cls(tuple(AgentState(float(a), float(b)) for a, b in np.asarray(xy, dtype=float)))

    def to_array(self) -> np.ndarray:
        return np.array([[a.x, a.y] for a in self.agents], dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.agents)


def eval_polynomial(poly: Sequence[Monomial], s) -> float | np.ndarray:
    """Evaluate ``poly`` at an AgentState or at an array whose last axis is (x, y)."""
    if isinstance(s, AgentState):
        x, y = s.x, s.y
    else:
        arr = np.asarray(s, dtype=float)
        x, y = arr[..., 0], arr[..., 1]
    total = 0.0
    for m in poly:
        total = total + m.coeff * x ** m.px * y ** m.py
    if isinstance(s, AgentState):
        return float(total)
    return np.broadcast_to(np.asarray(total, dtype=float), np.shape(x)).copy()


def compute_moment(spec: MomentSpec, swarm) -> float:
    """Exact generalized moment: the average of the polynomial over all agents."""
    xy = swarm.to_array() if isinstance(swarm, SwarmState) else np.asarray(swarm, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        raise ValueError("empty swarm")
    return float(np.mean(eval_polynomial(spec.poly, xy)))


def moment_values(moments: Sequence[MomentSpec], xy: np.ndarray) -> np.ndarray:
    """Per-agent polynomial values, shape ``xy.shape[:-1] + (len(moments),)``."""
    return np.stack([eval_polynomial(m.poly, xy) for m in moments], axis=-1)


def polynomial_gradient_sup(poly: Sequence[Monomial], box: EnvBox) -> float:
    """Certified upper bound on the Euclidean norm of the gradient of ``poly`` over ``box``.

    Each partial derivative is bounded monomial-wise using the largest
    attainable |x| and |y|, then the two bounds are combined in 2-norm.
    """
    X, Y = box.abs_bounds()
    gx = gy = 0.0
    for m in poly:
        c = abs(m.coeff)
        if m.px:
            gx += c * m.px * X ** (m.px - 1) * Y ** m.py
        if m.py:
            gy += c * m.py * X ** m.px * Y ** (m.py - 1)
    return math.hypot(gx, gy)


def polynomial_abs_sup(poly: Sequence[Monomial], box: EnvBox) -> float:
    """Upper bound on |P| over ``box`` by summing absolute monomial bounds."""
    X, Y = box.abs_bounds()
    return float(sum(abs(m.coeff) * X ** m.px * Y ** m.py for m in poly))


def lipschitz_constants(poly: Sequence[Monomial], box: EnvBox, n_agents: int) -> tuple[float, float]:
    """Return (per-agent constant, moment-level constant).

    The moment gradient is (1/N)[grad P(s^1), ..., grad P(s^N)], whose norm is
    at most L_P / sqrt(N).
    """
    lp = polynomial_gradient_sup(poly, box)
    return lp, lp / math.sqrt(n_agents)


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> list[int]:
        return sorted(b if a == i else a for a, b in self.edges if i in (a, b))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A

    # common topologies

    @classmethod
    def path(cls, n):
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    @classmethod
    def ring(cls, n):
        if n < 3:
            return cls.path(n)
        return cls(n, frozenset((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def star(cls, n, center=0):
        return cls(n, frozenset((center, j) for j in range(n) if j != center))

    @classmethod
    def complete(cls, n):
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def circulant(cls, n, offsets):
        return cls(n, frozenset((i, (i + o) % n) for i in range(n) for o in offsets if (i + o) % n != i))

    @classmethod
    def random_geometric(cls, n, radius, rng):
        pts = rng.random((n, 2))
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n) if d[i, j] <= radius))


def is_connected(g: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    adj = {i: [] for i in range(g.n)}
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == g.n


def metropolis_weights(g: Graph) -> np.ndarray:
    """Row-stochastic gossip probabilities ``1/max(deg i, deg j)`` on edges, rest on the diagonal."""
    if not is_connected(g):
        raise ValueError("graph is not connected")
    deg = g.degrees()
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        W[i, j] = W[j, i] = 1.0 / max(deg[i], deg[j])
    W[np.diag_indices(g.n)] = 1.0 - W.sum(axis=1)
    return W
