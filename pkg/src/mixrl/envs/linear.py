"""Linear dynamics with quadratic cost: the desk-scale testbed.

The optimum is known from the Riccati oracle, which makes this the suite
where convergence of the training engine is checked against ground truth.
"""

from __future__ import annotations

import numpy as np

from ..numkit import Gaussian, RngStream
from .base import Environment

__all__ = ["LinearQuadraticEnv", "random_lq_matrices"]


class LinearQuadraticEnv(Environment):
    """``x' = A x + B u + xi`` with utility ``x'^T Q x' + u^T R u``."""

    def __init__(
        self,
        A,
        B,
        Q,
        R,
        noise: Gaussian,
        action_bound: float = 1e6,
        init_std: float = 0.5,
    ):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.state_dim = self.A.shape[0]
        self.action_dim = self.B.shape[1]
        self.true_noise = noise
        self.action_lo = np.full(self.action_dim, -float(action_bound))
        self.action_hi = np.full(self.action_dim, float(action_bound))
        self.init_std = float(init_std)

    def f(self, x, u):
        return self.A @ x + self.B @ u

    def f_batch(self, X, U):
        return X @ self.A.T + U @ self.B.T

    def f_jac_u(self, X, U, step: float = 1e-6):
        return np.broadcast_to(self.B, (X.shape[0],) + self.B.shape).copy()

    def utility(self, x_next, u):
        return float(x_next @ self.Q @ x_next + u @ self.R @ u)

    def utility_batch(self, X_next, U):
        return np.einsum("bi,ij,bj->b", X_next, self.Q, X_next) + np.einsum(
            "bi,ij,bj->b", U, self.R, U
        )

    def utility_grads(self, X_next, U):
        return 2.0 * X_next @ self.Q, 2.0 * U @ self.R

    def init_state(self, rng: RngStream):
        return self.init_std * rng.standard_normal(self.state_dim)


def random_lq_matrices(
    seed: int, state_dim: int = 3, action_dim: int = 2, spectral_radius: float = 0.95
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random ``(A, B)`` with ``A`` rescaled to the given spectral radius.

    An open-loop radius just under 1 keeps the uncontrolled system marginally
    stable, so early exploratory policies do not blow up while the optimal
    gain still matters.
    """
    rng = RngStream(seed, stream=777)
    A = rng.standard_normal((state_dim, state_dim))
    A *= spectral_radius / max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((state_dim, action_dim)) / np.sqrt(state_dim)
    return A, B
