"""Randomized-gossip generalized-moment consensus and its error bounds.

``zeta`` arrays carry agent estimates with shape ``(..., N, v)``: one column
per tracked moment and optional leading replica axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Graph, is_connected, metropolis_weights
from .kalman import delta_max


class GossipError(ValueError):
    pass


def validate_weights(W, g: Graph | None = None, atol: float = 1e-9) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if W.shape != (n, n):
        raise ValueError("W must be square")
    if np.any(W < -atol):
        raise ValueError("W has negative entries")
    if not np.allclose(W.sum(axis=1), 1.0, atol=atol):
        raise ValueError("W rows must sum to 1")
    if g is not None:
        if g.n != n:
            raise ValueError("W size does not match graph")
        off = ~(g.adjacency() | np.eye(n, dtype=bool))
        if np.any(np.abs(W[off]) > atol):
            raise ValueError("W has mass outside the graph support")
    return W


def pair_mixing_matrix(n: int, i: int, j: int) -> np.ndarray:
    """V_ij = I - (e_i - e_j)(e_i - e_j)^T / 2: agents i and j replace their values by the pair mean."""
    d = np.zeros(n)
    d[i] += 1.0
    d[j] -= 1.0
    return np.eye(n) - 0.5 * np.outer(d, d)


@dataclass(frozen=True)
class MixingSpectrum:
    V: np.ndarray
    lambda2: float
    u2: np.ndarray = field(repr=False)


def expected_mixing_matrix(W) -> np.ndarray:
    """V = (1/N) sum_ij W_ij V_ij, assembled in closed form."""
    W = np.asarray(W, dtype=float)
    n = len(W)
    S = W + W.T
    np.fill_diagonal(S, 0.0)
    laplacian = np.diag(S.sum(axis=1)) - S
    return np.eye(n) - laplacian / (2 * n)


def build_expected_mixing(W) -> MixingSpectrum:
    """Expected gossip matrix and its second-largest eigenvalue.

    lambda2 is the top eigenvalue of V - 11^T/N, which coincides with the
    second-largest eigenvalue of V and equals 1 on disconnected supports.
    """
    V = expected_mixing_matrix(W)
    n = len(V)
    vals, vecs = np.linalg.eigh(V - np.full((n, n), 1.0 / n))
    return MixingSpectrum(V, float(vals[-1]), vecs[:, -1])


# ---------------------------------------------------------------- gossip

@dataclass
class ConsensusState:
    zeta: np.ndarray
    theta_hat: np.ndarray
    k: int = 0

    @classmethod
    def start(cls, theta_hat0) -> "ConsensusState":
        theta = np.array(theta_hat0, dtype=float)
        if theta.ndim == 1:
            theta = theta[:, None]
        return cls(theta.copy(), theta.copy(), 0)


def apply_pairs(zeta: np.ndarray, i, j) -> np.ndarray:
    """Average rows ``i`` and ``j`` of ``zeta`` in place (batched over a leading replica axis when 3-D)."""
    if zeta.ndim == 2:
        mean = 0.5 * (zeta[i] + zeta[j])
        zeta[i] = mean
        zeta[j] = mean
        return zeta
    r = np.arange(zeta.shape[0])
    mean = 0.5 * (zeta[r, i] + zeta[r, j])
    zeta[r, i] = mean
    zeta[r, j] = mean
    return zeta


def gossip_pair_update(state: ConsensusState, i: int, j: int, theta_hat_next,
                       graph: Graph | None = None) -> ConsensusState:
    """Pair (i, j) averages, then every agent adds its own change in local moment value."""
    if graph is not None and i != j and not graph.has_edge(i, j):
        raise GossipError("non-neighbor gossip")
    nxt = np.array(theta_hat_next, dtype=float).reshape(state.theta_hat.shape)
    zeta = apply_pairs(state.zeta.copy(), i, j)
    zeta += nxt - state.theta_hat
    return ConsensusState(zeta, nxt, state.k + 1)


def sample_pairs(cum_W: np.ndarray, u_agent, u_partner):
    """Map uniforms to (active agent, partner): active uniform over agents, partner from row of W."""
    n = cum_W.shape[0]
    i = np.minimum((np.asarray(u_agent) * n).astype(int), n - 1)
    rows = cum_W[i]
    j = (rows <= np.asarray(u_partner)[..., None]).sum(axis=-1)
    return i, np.minimum(j, n - 1)


def gossip_step(state: ConsensusState, W, rng, theta_hat_next=None) -> ConsensusState:
    """One asynchronous time slot: exactly one pair exchanges, all agents add their increments."""
    W = np.asarray(W, dtype=float)
    u = rng.random(2)
    i, j = sample_pairs(np.cumsum(W, axis=1), u[0], u[1])
    nxt = state.theta_hat if theta_hat_next is None else theta_hat_next
    return gossip_pair_update(state, int(i), int(j), nxt)


# ---------------------------------------------------------------- bounds

@dataclass(frozen=True)
class BoundParams:
    N: int
    s_max: float
    v_max: float
    u_max: float
    zeta_max: float
    L1: float
    L2: float
    lambda2: float

    def __post_init__(self):
        if self.N < 1 or min(self.s_max, self.v_max, self.zeta_max) <= 0:
            raise ValueError("N, s_max, v_max and zeta_max must be positive")
        if self.u_max < 0 or self.L1 < 0 or self.L2 < 0:
            raise ValueError("u_max, L1 and L2 must be non-negative")
        if not 0.0 <= self.lambda2 < 1.0:
            raise ValueError("lambda2 must lie in [0, 1)")


def rho_series(horizon: int, p: BoundParams, dynamic: bool = True) -> np.ndarray:
    """Error bound rho(k) for k = 0..horizon.

    The geometric sum over past slots is carried by the recursion
    S(k) = lambda2 S(k-1) + L1 sqrt(delta(k) + delta(k-1) + 2 N u_max^2).
    """
    ks = np.arange(horizon + 1)
    delta = delta_max(ks, p.N, p.s_max, p.v_max)
    drift = 2 * p.N * p.u_max ** 2 if dynamic else 0.0
    incr = p.L1 * np.sqrt(delta[1:] + delta[:-1] + drift)
    out = np.empty(horizon + 1)
    root_n = math.sqrt(p.N)
    geo = 1.0
    acc = 0.0
    out[0] = root_n * p.zeta_max + p.L2 * math.sqrt(delta[0])
    for k in range(1, horizon + 1):
        geo *= p.lambda2
        acc = p.lambda2 * acc + incr[k - 1]
        out[k] = geo * root_n * p.zeta_max + acc + p.L2 * math.sqrt(delta[k])
    return out


def rho_static(k: int, p: BoundParams) -> float:
    return float(rho_series(k, p, dynamic=False)[k])


def rho_dynamic(k: int, p: BoundParams) -> float:
    return float(rho_series(k, p, dynamic=True)[k])


def rho_dynamic_limit(p: BoundParams) -> float:
    """Steady-state floor of the dynamic bound."""
    return p.L1 * math.sqrt(2 * p.N * p.u_max ** 2) / (1 - p.lambda2)


# ---------------------------------------------------------- weight design

def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if v.size == 1:
        return np.ones(1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


@dataclass
class OptimizeResult:
    W: np.ndarray
    spectrum: MixingSpectrum
    lambda2_start: float
    history: list = field(default_factory=list)


def lambda2_subgradient(spec: MixingSpectrum) -> np.ndarray:
    """d lambda2 / d W_ij = (1/N) u2^T V_ij u2 = (1/N)(1 - (u_i - u_j)^2 / 2)."""
    u = spec.u2
    n = len(u)
    diff = u[:, None] - u[None, :]
    return (1.0 - 0.5 * diff ** 2) / n


def optimize_weights(g: Graph, iters: int = 500, step: float = 1.0, W0=None) -> OptimizeResult:
    """Minimize lambda2 of the expected mixing matrix over gossip probabilities supported on ``g``.

    Projected subgradient descent with steps ``step / sqrt(t)``; each row is
    projected onto the simplex over its neighbours and itself. Starts from the
    Metropolis weights and returns the best iterate seen.
    """
    if not is_connected(g):
        raise ValueError("graph is not connected")
    n = g.n
    support = g.adjacency() | np.eye(n, dtype=bool)
    W = metropolis_weights(g) if W0 is None else validate_weights(W0, g).copy()
    spec = build_expected_mixing(W)
    best_W, best_spec = W.copy(), spec
    history = [spec.lambda2]
    start = spec.lambda2
    for t in range(1, iters + 1):
        grad = lambda2_subgradient(spec)
        step_t = step / math.sqrt(t)
        for i in range(n):
            cols = support[i]
            W[i, cols] = project_simplex(W[i, cols] - step_t * grad[i, cols])
            W[i, ~cols] = 0.0
        spec = build_expected_mixing(W)
        if spec.lambda2 < best_spec.lambda2:
            best_W, best_spec = W.copy(), spec
        history.append(best_spec.lambda2)
    return OptimizeResult(best_W, best_spec, start, history)


def with_u_max(p: BoundParams, u_max: float) -> BoundParams:
    return replace(p, u_max=u_max)
