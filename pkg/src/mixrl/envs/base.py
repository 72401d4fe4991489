"""Environment abstraction: deterministic transition plus hidden true noise.

An :class:`Environment` owns the deterministic part ``f`` of the dynamics,
the true disturbance distribution (used only by the simulator, never shown to
the learner), the per-step utility ``l(x_next, u)`` (charged on the state the
action produced), and the action box. Subclasses provide the batched
evaluations and analytic utility gradients the training engine needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ibe import Transition
from ..numkit import Gaussian, RngStream, sample_gaussian

__all__ = ["Environment", "Trajectory", "env_step", "rollout"]

#: Sup-norm blow-up bound: a rollout whose state exceeds this is cut short
#: and flagged as diverged.
DEFAULT_BLOWUP = 1e3


class Environment:
    """Base class; concrete environments fill in dynamics and utility."""

    state_dim: int
    action_dim: int
    true_noise: Gaussian
    action_lo: np.ndarray
    action_hi: np.ndarray

    def f(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Deterministic part of the transition."""
        raise NotImplementedError

    def f_batch(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Row-wise ``f`` over (B, n) states and (B, m) actions."""
        return np.stack([self.f(x, u) for x, u in zip(X, U)])

    def f_jac_u(self, X: np.ndarray, U: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """Jacobian of ``f`` w.r.t. the action, shape (B, n, m).

        Default is central differences; environments with linear dynamics
        override with the exact matrix.
        """
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        nb, m = U.shape
        jac = np.empty((nb, self.state_dim, m))
        for j in range(m):
            dU = np.zeros_like(U)
            dU[:, j] = step
            hi = self.f_batch(X, U + dU)
            lo = self.f_batch(X, U - dU)
            jac[:, :, j] = (hi - lo) / (2.0 * step)
        return jac

    def utility(self, x_next: np.ndarray, u: np.ndarray) -> float:
        raise NotImplementedError

    def utility_batch(self, X_next: np.ndarray, U: np.ndarray) -> np.ndarray:
        return np.array([self.utility(x, u) for x, u in zip(X_next, U)])

    def utility_grads(self, X_next: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(dl/dx_next, dl/du)`` row-wise; exact for the quadratic costs here."""
        raise NotImplementedError

    def clip_action(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.action_lo, self.action_hi)

    def init_state(self, rng: RngStream) -> np.ndarray:
        """Draw a training episode start state."""
        raise NotImplementedError


@dataclass
class Trajectory:
    """Rollout record: executed transitions, per-step utilities, divergence flag."""

    transitions: list[Transition]
    utilities: np.ndarray
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def states(self) -> np.ndarray:
        """Visited states including the final one, shape (len+1, n)."""
        rows = [self.transitions[0].x] + [t.x_next for t in self.transitions]
        return np.stack(rows)

    def discounted_return(self, gamma: float) -> float:
        weights = gamma ** np.arange(len(self.utilities))
        return float(weights @ self.utilities)


def env_step(
    env: Environment, x: np.ndarray, u: np.ndarray, rng: RngStream
) -> tuple[np.ndarray, np.ndarray]:
    """One stochastic step: returns ``(x_next, xi)`` with the sampled noise.

    The action is clipped to the environment's box before it is applied.
    """
    u = env.clip_action(np.asarray(u, dtype=float))
    xi = sample_gaussian(env.true_noise, rng)
    return env.f(x, u) + xi, xi


def rollout(
    env: Environment,
    policy,
    x0: np.ndarray,
    horizon: int,
    rng: RngStream,
    explore_std: np.ndarray | None = None,
    blowup: float = DEFAULT_BLOWUP,
) -> Trajectory:
    """Roll ``policy`` out for ``horizon`` steps, recording every transition.

    ``explore_std`` adds per-coordinate Gaussian action noise before
    clipping. A state exceeding ``blowup`` in sup-norm truncates the
    trajectory and flags it diverged.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    x = np.asarray(x0, dtype=float).copy()
    transitions: list[Transition] = []
    utilities = []
    diverged = False
    for _ in range(horizon):
        u = np.asarray(policy(x), dtype=float)
        if explore_std is not None:
            u = u + explore_std * rng.standard_normal(env.action_dim)
        u = env.clip_action(u)
        x_next, _ = env_step(env, x, u, rng)
        transitions.append(Transition(x=x, u=u, x_next=x_next))
        utilities.append(env.utility(x_next, u))
        x = x_next
        if np.abs(x).max() > blowup or not np.all(np.isfinite(x)):
            diverged = True
            break
    return Trajectory(transitions, np.asarray(utilities), diverged=diverged)
