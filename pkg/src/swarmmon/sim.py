"""Swarm scenario engine: flocking agents visiting waypoint regions, noisy sensing,
per-agent Kalman filters and gossip consensus on generalized moments.

The engine advances a batch of independent replicas in lock step; every
replica owns its random streams (one per agent for sensing, one for the
initial layout, one for gossip), so a replica's trajectory depends only on
its seed and a single run is the one-replica case.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .consensus import (BoundParams, apply_pairs, build_expected_mixing, optimize_weights,
                        rho_series, sample_pairs, validate_weights)
from .core import (EnvBox, Graph, MomentSpec, is_connected, lipschitz_constants,
                   metropolis_weights, moment_values, polynomial_abs_sup)
from .kalman import NoiseModel, kf_update

_BLOCK = 1024


class SimulationError(RuntimeError):
    """An in-run invariant (control bound, environment containment) failed."""


@dataclass(frozen=True)
class Region:
    name: str
    box: EnvBox


@dataclass(frozen=True)
class Waypoint:
    region: str
    dwell: int = 0


@dataclass(frozen=True)
class FlockingGains:
    goal: float = 0.05
    cohesion: float = 0.0
    separation: float = 0.0
    radius: float = 5.0


@dataclass
class Scenario:
    env: EnvBox
    graph: Graph
    moments: tuple
    noise: NoiseModel
    s_max: float
    u_max: float
    horizon: int
    seed: int
    regions: tuple = ()
    waypoints: tuple = ()
    gains: FlockingGains = field(default_factory=FlockingGains)
    initial_center: tuple = (0.0, 0.0)
    initial_spread: float = 10.0
    weights: object = "optimized"
    optimizer_iters: int = 300
    use_kf: bool = True
    formula: str | None = None
    definitions: dict = field(default_factory=dict)
    since_closed: bool = True

    def __post_init__(self):
        if self.u_max < 0:
            raise ValueError("u_max must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.s_max <= 0:
            raise ValueError("s_max must be positive")
        if not self.moments:
            raise ValueError("at least one moment is required")
        names = [m.name for m in self.moments]
        if len(set(names)) != len(names):
            raise ValueError("moment names must be unique")
        known = {r.name for r in self.regions}
        for wp in self.waypoints:
            if wp.region not in known:
                raise ValueError(f"waypoint region {wp.region!r} is not declared")
        for r in self.regions:
            b = r.box
            if b.x_min < self.env.x_min or b.x_max > self.env.x_max or b.y_min < self.env.y_min or b.y_max > self.env.y_max:
                raise ValueError(f"region {r.name!r} leaves the environment")
        if not is_connected(self.graph):
            raise ValueError("communication graph is not connected")

    @property
    def n_agents(self) -> int:
        return self.graph.n

    @property
    def moment_names(self) -> tuple:
        return tuple(m.name for m in self.moments)

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def gossip_weights(self) -> np.ndarray:
        if isinstance(self.weights, str):
            if self.weights == "metropolis":
                return metropolis_weights(self.graph)
            if self.weights == "optimized":
                return optimize_weights(self.graph, iters=self.optimizer_iters).W
            raise ValueError(f"unknown weight rule {self.weights!r}")
        return validate_weights(self.weights, self.graph)

    def bound_params(self, lambda2: float) -> list[BoundParams]:
        """Per-moment bound inputs; all of them are fixed before the run starts."""
        out = []
        for m in self.moments:
            L1, L2 = lipschitz_constants(m.poly, self.env, self.n_agents)
            out.append(BoundParams(N=self.n_agents, s_max=self.s_max, v_max=self.noise.v_max,
                                   u_max=self.u_max, zeta_max=2 * polynomial_abs_sup(m.poly, self.env),
                                   L1=L1, L2=L2, lambda2=lambda2))
        return out

    def rho(self, lambda2: float) -> np.ndarray:
        """Bound series, shape (horizon + 1, v)."""
        return np.stack([rho_series(self.horizon, p) for p in self.bound_params(lambda2)], axis=1)


# ------------------------------------------------------------------ control

def _controls(pos, target, gains: FlockingGains, u_max: float) -> np.ndarray:
    """Batched control law on ``pos`` of shape (R, N, 2); ``target`` is (R, 2) or None."""
    u = np.zeros_like(pos)
    if target is not None and gains.goal:
        u += gains.goal * (target[:, None, :] - pos)
    if gains.cohesion:
        u += gains.cohesion * (pos.mean(axis=1, keepdims=True) - pos)
    n = pos.shape[1]
    if gains.separation and n > 1:
        diff = pos[:, :, None, :] - pos[:, None, :, :]
        d2 = (diff ** 2).sum(axis=-1)
        off = ~np.eye(n, dtype=bool)
        coincident = (d2 < 1e-18) & off
        if coincident.any():
            # fixed fallback direction so that stacked agents still push apart
            sign = np.sign(np.arange(n)[:, None] - np.arange(n)[None, :]).astype(float)
            fallback = np.zeros_like(diff)
            fallback[..., 0] = sign * (gains.radius / 2)
            diff = np.where(coincident[..., None], fallback, diff)
            d2 = np.where(coincident, (gains.radius / 2) ** 2, d2)
        near = (d2 < gains.radius ** 2) & off
        with np.errstate(divide="ignore", invalid="ignore"):
            push = np.where(near[..., None], diff / d2[..., None], 0.0)
        u += gains.separation * push.sum(axis=2)
    return np.clip(u, -u_max, u_max)


def control_step(swarm_xy, target: Region | None, gains: FlockingGains, u_max: float) -> np.ndarray:
    """Control inputs for one swarm, shape (N, 2), saturated per coordinate at ``u_max``."""
    pos = np.asarray(swarm_xy, dtype=float)[None]
    tgt = None if target is None else target.box.center[None]
    return _controls(pos, tgt, gains, u_max)[0]


def advance(swarm_xy, u, env: EnvBox, u_max: float) -> np.ndarray:
    """Single-integrator step, clamped to the environment."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > u_max * (1 + 1e-12) + 1e-15):
        raise ValueError(f"control exceeds u_max={u_max}")
    return env.clamp(np.asarray(swarm_xy, dtype=float) + u)


# ------------------------------------------------------------------- engine

@dataclass
class TraceBundle:
    scenario: Scenario
    use_kf: bool
    W: np.ndarray
    lambda2: float
    states: np.ndarray
    controls: np.ndarray
    measurements: np.ndarray
    estimates: np.ndarray
    cov_trace: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    e_s: np.ndarray
    waypoint: np.ndarray
    monitor: object = None

    @property
    def ks(self) -> np.ndarray:
        return np.arange(len(self.eta))

    def moment_trace(self):
        from .stl import MomentTrace

        return MomentTrace(self.scenario.moment_names, self.zeta, self.rho, self.eta)


@dataclass
class ReplicaStats:
    """Per-replica error samples at the logged slots."""

    ks: np.ndarray
    err_inf: np.ndarray
    e_s: np.ndarray
    rho: np.ndarray
    lambda2: float

    @property
    def mean_err_inf(self) -> np.ndarray:
        return self.err_inf.mean(axis=1)

    @property
    def mean_e_s(self) -> np.ndarray:
        return self.e_s.mean(axis=1)


class _Engine:
    def __init__(self, sc: Scenario, seeds, use_kf: bool, W: np.ndarray):
        self.sc = sc
        self.use_kf = use_kf
        self.R = len(seeds)
        N = sc.n_agents
        self.cum_W = np.cumsum(W, axis=1)
        streams = [np.random.SeedSequence(int(s)).spawn(N + 2) for s in seeds]
        self.layout_rng = [np.random.default_rng(ch[0]) for ch in streams]
        self.gossip_rng = [np.random.default_rng(ch[1]) for ch in streams]
        self.agent_rng = [[np.random.default_rng(c) for c in ch[2:]] for ch in streams]
        self.chol = sc.noise.chol

        center = np.asarray(sc.initial_center, dtype=float)
        pos = np.stack([center + g.uniform(-sc.initial_spread, sc.initial_spread, size=(N, 2))
                        for g in self.layout_rng])
        self.pos = sc.env.clamp(pos)
        z0 = np.stack([np.stack([g.standard_normal(2) for g in row]) for row in self.agent_rng])
        self.y = self.pos + z0 @ self.chol.T
        if use_kf:
            self.est = self.pos + math.sqrt(sc.s_max / 2) * z0
            self.cov = np.broadcast_to((sc.s_max / 2) * np.eye(2), (N, 2, 2)).copy()
        else:
            self.est = self.y.copy()
            self.cov = np.full((N, 2, 2), np.nan)
        self.theta = moment_values(sc.moments, self.est)
        self.zeta = self.theta.copy()
        self.u = np.zeros_like(self.pos)
        self.k = 0

        n_wp = len(sc.waypoints)
        if n_wp:
            regions = [sc.region(w.region).box for w in sc.waypoints]
            self.wp_box = np.array([[b.x_min, b.x_max, b.y_min, b.y_max] for b in regions])
            self.wp_center = np.array([b.center for b in regions])
            self.wp_dwell = np.array([w.dwell for w in sc.waypoints])
        self.wp = np.zeros(self.R, dtype=int)
        self.entered = np.zeros(self.R, dtype=bool)
        self.dwell_count = np.zeros(self.R, dtype=int)
        self._noise = None
        self._unif = None

    def _refill(self):
        N = self.sc.n_agents
        self._noise = np.stack([np.stack([g.standard_normal((_BLOCK, 2)) for g in row], axis=1)
                                for row in self.agent_rng]) @ self.chol.T
        self._unif = np.stack([g.random((_BLOCK, 2)) for g in self.gossip_rng])
        assert self._noise.shape == (self.R, _BLOCK, N, 2)

    def _update_waypoints(self):
        if not len(self.sc.waypoints):
            return None
        cen = self.pos.mean(axis=1)
        box = self.wp_box[self.wp]
        inside = ((cen[:, 0] >= box[:, 0]) & (cen[:, 0] <= box[:, 1])
                  & (cen[:, 1] >= box[:, 2]) & (cen[:, 1] <= box[:, 3]))
        self.dwell_count[self.entered] += 1
        arrive = ~self.entered & inside
        self.entered |= arrive
        self.dwell_count[arrive] = 0
        leave = self.entered & (self.dwell_count >= self.wp_dwell[self.wp]) & (self.wp < len(self.sc.waypoints) - 1)
        self.wp[leave] += 1
        self.entered[leave] = False
        self.dwell_count[leave] = 0
        return self.wp_center[self.wp]

    def step(self):
        sc = self.sc
        b = self.k % _BLOCK
        if b == 0:
            self._refill()
        target = self._update_waypoints()
        u = _controls(self.pos, target, sc.gains, sc.u_max) if sc.u_max > 0 else np.zeros_like(self.pos)
        # walls cut the step short; the filter is told the displacement actually made
        lo = np.array([sc.env.x_min, sc.env.y_min])
        hi = np.array([sc.env.x_max, sc.env.y_max])
        u_eff = np.clip(u, lo - self.pos, hi - self.pos)
        if np.any(np.abs(u_eff) > sc.u_max):
            raise SimulationError(f"control bound violated at slot {self.k}")
        new = sc.env.clamp(self.pos + u_eff)
        self.u = u_eff
        self.pos = new
        self.y = new + self._noise[:, b]
        if self.use_kf:
            self.est, self.cov = kf_update(self.est, self.cov, u_eff, self.y, sc.noise.K_va)
        else:
            self.est = self.y
        theta = moment_values(sc.moments, self.est)
        i, j = sample_pairs(self.cum_W, self._unif[:, b, 0], self._unif[:, b, 1])
        apply_pairs(self.zeta, i, j)
        self.zeta += theta - self.theta
        self.theta = theta
        self.k += 1

    def true_moments(self) -> np.ndarray:
        return moment_values(self.sc.moments, self.pos).mean(axis=1)

    def check_containment(self):
        if not np.all(self.sc.env.contains(self.pos)):
            raise SimulationError(f"agent left the environment at slot {self.k}")


def _resolve_weights(sc: Scenario, W):
    W = sc.gossip_weights() if W is None else validate_weights(W, sc.graph)
    return W, build_expected_mixing(W).lambda2


def run_scenario(sc: Scenario, use_kf: bool | None = None, W=None, monitor: bool = True) -> TraceBundle:
    """Run one seeded scenario and record every slot."""
    use_kf = sc.use_kf if use_kf is None else use_kf
    W, lam = _resolve_weights(sc, W)
    eng = _Engine(sc, [sc.seed], use_kf, W)
    T, N, v = sc.horizon, sc.n_agents, len(sc.moments)
    states = np.empty((T + 1, N, 2))
    controls = np.zeros((T + 1, N, 2))
    meas = np.empty((T + 1, N, 2))
    est = np.empty((T + 1, N, 2))
    cov_tr = np.empty((T + 1, N))
    zeta = np.empty((T + 1, N, v))
    eta = np.empty((T + 1, v))
    wp = np.zeros(T + 1, dtype=int)

    def record(k):
        states[k] = eng.pos[0]
        meas[k] = eng.y[0] if (k > 0 or not use_kf) else np.nan
        est[k] = eng.est[0]
        cov_tr[k] = np.trace(eng.cov, axis1=-2, axis2=-1)
        zeta[k] = eng.zeta[0]
        eta[k] = eng.true_moments()[0]
        wp[k] = eng.wp[0]

    record(0)
    for k in range(1, T + 1):
        eng.step()
        controls[k - 1] = eng.u[0]
        eng.check_containment()
        record(k)
    rho = sc.rho(lam)
    e_s = np.linalg.norm(zeta - eta[:, None, :], axis=-1).mean(axis=1)
    bundle = TraceBundle(sc, use_kf, W, lam, states, controls, meas, est, cov_tr, zeta, eta,
                         rho, e_s, wp)
    if monitor and sc.formula:
        from .stl import evaluate_trace, parse, parse_definitions

        defs = parse_definitions(sc.definitions, sc.moment_names)
        f = parse(sc.formula, sc.moment_names, defs)
        bundle.monitor = evaluate_trace(bundle.moment_trace(), f, sc.since_closed)
    return bundle


def run_replicas(sc: Scenario, seeds, use_kf: bool | None = None, log_every: int = 1,
                 W=None) -> ReplicaStats:
    """Advance one replica per seed in lock step, logging errors every ``log_every`` slots."""
    use_kf = sc.use_kf if use_kf is None else use_kf
    W, lam = _resolve_weights(sc, W)
    eng = _Engine(sc, list(seeds), use_kf, W)
    ks, errs, es = [], [], []

    def log():
        eta = eng.true_moments()
        dev = eng.zeta - eta[:, None, :]
        ks.append(eng.k)
        errs.append(np.abs(dev).max(axis=1))
        es.append(np.linalg.norm(dev, axis=-1).mean(axis=1))

    log()
    for k in range(1, sc.horizon + 1):
        eng.step()
        if k % log_every == 0 or k == sc.horizon:
            eng.check_containment()
            log()
    ks = np.array(ks)
    return ReplicaStats(ks, np.array(errs), np.array(es), sc.rho(lam)[ks], lam)
