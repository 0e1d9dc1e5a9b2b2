"""Distributed monitoring of swarm-level temporal properties.

Agents filter their own noisy position readings, agree on generalized
moments of the swarm through randomized gossip, and evaluate SwarmSTL
formulas together with a certified bound on their consensus error.
"""
from .core import EnvBox, Graph, MomentSpec, Polynomial
from .kalman import NoiseModel
from .sim import Region, Scenario, Waypoint, FlockingGains, run_replicas, run_scenario

__version__ = "0.1.0"

__all__ = ["EnvBox", "Graph", "MomentSpec", "Polynomial", "NoiseModel", "Region", "Scenario",
           "Waypoint", "FlockingGains", "run_replicas", "run_scenario", "__version__"]
