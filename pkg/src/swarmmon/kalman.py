"""Per-agent Kalman filtering for single-integrator agents with direct position measurements.

The swarm-level filter decouples into independent 2x2 filters because every
agent measures only its own position and the swarm noise covariance is
block diagonal. Arrays follow a leading-axes convention: ``est`` has shape
``(..., N, 2)`` and ``cov`` has shape ``(..., N, 2, 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class KalmanError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Time-invariant Gaussian sensor noise of one agent."""

    K_va: np.ndarray
    v_max: float

    def __post_init__(self):
        K = np.array(self.K_va, dtype=float)
        if K.shape != (2, 2) or not np.allclose(K, K.T):
            raise ValueError("K_va must be a symmetric 2x2 matrix")
        if np.min(np.linalg.eigvalsh(K)) <= 0:
            raise ValueError("K_va must be positive definite")
        if np.trace(K) > self.v_max * (1 + 1e-12):
            raise ValueError(f"v_max={self.v_max} is below trace(K_va)={np.trace(K)}")
        K.setflags(write=False)
        object.__setattr__(self, "K_va", K)

    @property
    def chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.K_va)


@dataclass
class EstimatorState:
    est: np.ndarray
    cov: np.ndarray
    s_max: float

    @classmethod
    def initial(cls, true_xy, s_max: float, rng: np.random.Generator) -> "EstimatorState":
        """Prior with E||s_hat(0) - s(0)||^2 = s_max: isotropic noise of variance s_max/2 per axis."""
        true_xy = np.asarray(true_xy, dtype=float)
        est = true_xy + np.sqrt(s_max / 2) * rng.standard_normal(true_xy.shape)
        cov = np.broadcast_to((s_max / 2) * np.eye(2), true_xy.shape[:-1] + (2, 2)).copy()
        return cls(est, cov, s_max)

    def total_trace(self) -> float:
        return float(np.trace(self.cov, axis1=-2, axis2=-1).sum())


def kalman_gain(cov: np.ndarray, K_va: np.ndarray) -> np.ndarray:
    """K = cov (cov + K_va)^-1, batched over leading axes."""
    S = cov + K_va
    try:
        # K S = cov  <=>  S^T K^T = cov^T
        return np.swapaxes(np.linalg.solve(np.swapaxes(S, -1, -2), np.swapaxes(cov, -1, -2)), -1, -2)
    except np.linalg.LinAlgError:
        raise KalmanError("degenerate innovation covariance") from None


def kf_update(est, cov, u, y, K_va):
    """One filter step on raw arrays; returns ``(est, cov)``."""
    K = kalman_gain(cov, K_va)
    pred = est + u
    innov = y - pred
    est_new = pred + np.einsum("...ij,...j->...i", K, innov)
    cov_new = cov - K @ cov
    cov_new = 0.5 * (cov_new + np.swapaxes(cov_new, -1, -2))
    return est_new, cov_new


def kf_step(state: EstimatorState, u, y, noise: NoiseModel) -> EstimatorState:
    """Predict with control ``u`` under identity dynamics, then correct with measurement ``y``.

    Passing ``u = 0`` gives the static-agent filter.
    """
    est, cov = kf_update(state.est, state.cov, np.asarray(u, dtype=float),
                         np.asarray(y, dtype=float), noise.K_va)
    return EstimatorState(est, cov, state.s_max)


def closed_form_covariance(sigma0, K_va, k: int) -> np.ndarray:
    """Covariance after ``k`` static updates: K_va (K_va + k sigma0)^-1 sigma0."""
    sigma0 = np.asarray(sigma0, dtype=float)
    K_va = np.asarray(K_va, dtype=float)
    if k == 0:
        return sigma0.copy()
    out = K_va @ np.linalg.solve(K_va + k * sigma0, sigma0)
    return 0.5 * (out + out.T)


def delta_max(k, N: int, s_max: float, v_max: float):
    """Bound on the trace of the swarm estimation-error covariance after ``k`` updates.

    Vectorized in ``k``.
    """
    if s_max <= 0 or v_max <= 0:
        raise ValueError("s_max and v_max must be positive")
    k = np.asarray(k, dtype=float)
    out = N ** 2 * s_max * v_max / (v_max + k * s_max)
    return float(out) if out.ndim == 0 else out
