"""JSON scenario documents.

Schema (all keys except ``regions``, ``waypoints``, ``gains``, ``initial``,
``weights``, ``formula`` are required)::

    {
      "seed": 1, "horizon": 25000,
      "env": {"x": [-400, 400], "y": [-400, 400]},
      "graph": {"kind": "complete" | "ring" | "path" | "star", "n": 10}
             | {"kind": "circulant", "n": 10, "offsets": [1, 2]}
             | {"kind": "random_geometric", "n": 10, "radius": 0.5, "seed": 0}
             | {"kind": "edges", "n": 3, "edges": [[0, 1], [1, 2]]},
      "moments": {"mx": "x", "my": "y"},
      "noise": {"K_va": [[1, 0], [0, 1]], "v_max": 2.0},
      "s_max": 1.0, "u_max": 0.2,
      "regions": {"Wh": {"x": [-50, 50], "y": [-50, 50]}},
      "waypoints": [{"region": "Wh", "dwell": 300}],
      "gains": {"goal": 0.05, "cohesion": 0.01, "separation": 1.0, "radius": 10.0},
      "initial": {"center": [0, 0], "spread": 10.0},
      "weights": "optimized" | "metropolis" | [[...], ...],
      "optimizer_iters": 300,
      "use_kf": true,
      "since_closed": true,
      "formula": {"defs": {"in_wh": "mx >= -50 & mx <= 50"}, "monitor": "P[0,10] in_wh"}
    }
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import EnvBox, Graph, MomentSpec, Polynomial
from .kalman import NoiseModel
from .sim import FlockingGains, Region, Scenario, Waypoint


class ConfigError(ValueError):
    """Invalid scenario document; ``field`` names the offending key path."""

    def __init__(self, field: str, msg: str):
        super().__init__(f"{field}: {msg}")
        self.field = field


def _get(doc, key, path, kind=None):
    if key not in doc:
        raise ConfigError(f"{path}{key}", "missing required field")
    val = doc[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"{path}{key}", f"expected {kind.__name__ if isinstance(kind, type) else kind}")
    return val


def _box(spec, field) -> EnvBox:
    try:
        (x0, x1), (y0, y1) = spec["x"], spec["y"]
        return EnvBox(float(x0), float(x1), float(y0), float(y1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(field, f"bad box ({exc})") from None


def graph_from_dict(spec) -> Graph:
    kind = _get(spec, "kind", "graph.", str)
    n = _get(spec, "n", "graph.", int)
    try:
        if kind in ("complete", "ring", "path", "star"):
            return getattr(Graph, kind)(n)
        if kind == "circulant":
            return Graph.circulant(n, _get(spec, "offsets", "graph.", list))
        if kind == "random_geometric":
            rng = np.random.default_rng(spec.get("seed", 0))
            return Graph.random_geometric(n, float(_get(spec, "radius", "graph.")), rng)
        if kind == "edges":
            return Graph(n, frozenset(tuple(e) for e in _get(spec, "edges", "graph.", list)))
    except (TypeError, ValueError) as exc:
        raise ConfigError("graph", str(exc)) from None
    raise ConfigError("graph.kind", f"unknown graph kind {kind!r}")


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    seed = _get(doc, "seed", "", int)
    horizon = _get(doc, "horizon", "", int)
    env = _box(_get(doc, "env", "", dict), "env")
    graph = graph_from_dict(_get(doc, "graph", "", dict))

    moments = []
    for name, text in _get(doc, "moments", "", dict).items():
        try:
            moments.append(MomentSpec(name, Polynomial.parse(text)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"moments.{name}", str(exc)) from None

    noise_doc = _get(doc, "noise", "", dict)
    try:
        noise = NoiseModel(np.asarray(_get(noise_doc, "K_va", "noise."), dtype=float),
                           float(_get(noise_doc, "v_max", "noise.")))
    except (TypeError, ValueError) as exc:
        raise ConfigError("noise", str(exc)) from None

    regions = tuple(Region(name, _box(spec, f"regions.{name}"))
                    for name, spec in doc.get("regions", {}).items())
    known = {r.name for r in regions}
    waypoints = []
    for i, wp in enumerate(doc.get("waypoints", [])):
        region = _get(wp, "region", f"waypoints[{i}].", str)
        if region not in known:
            raise ConfigError(f"waypoints[{i}].region", f"region {region!r} is not declared")
        waypoints.append(Waypoint(region, int(wp.get("dwell", 0))))

    try:
        gains = FlockingGains(**doc.get("gains", {}))
    except TypeError as exc:
        raise ConfigError("gains", str(exc)) from None
    init = doc.get("initial", {})
    formula = doc.get("formula", {})
    weights = doc.get("weights", "optimized")
    if isinstance(weights, list):
        weights = np.asarray(weights, dtype=float)

    try:
        return Scenario(
            env=env, graph=graph, moments=tuple(moments), noise=noise,
            s_max=float(_get(doc, "s_max", "")), u_max=float(_get(doc, "u_max", "")),
            horizon=horizon, seed=seed, regions=regions, waypoints=tuple(waypoints), gains=gains,
            initial_center=tuple(init.get("center", env.center)),
            initial_spread=float(init.get("spread", 10.0)),
            weights=weights, optimizer_iters=int(doc.get("optimizer_iters", 300)),
            use_kf=bool(doc.get("use_kf", True)), formula=formula.get("monitor"),
            definitions=dict(formula.get("defs", {})),
            since_closed=bool(doc.get("since_closed", True)),
        )
    except ValueError as exc:
        raise ConfigError("<scenario>", str(exc)) from None


def load_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc})") from None


def load_scenario(path, **overrides) -> Scenario:
    doc = load_config(path)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return scenario_from_dict(doc)
