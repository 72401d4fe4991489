"""Independent ground-truth generators used by tests and acceptance checks.

Nothing here shares code paths with the training engine: the Riccati solver
and the Lyapunov-style policy evaluation are straight linear algebra, the
Monte-Carlo evaluator just rolls the simulator, and the grid search and
value-iteration routines are brute force. That independence is the point -
they are the second route every engine result is checked against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .envs.base import Environment, rollout
from .envs.tabular import TabularMDP
from .numkit import Gaussian, RngStream

__all__ = [
    "LQProblem",
    "riccati_solve",
    "lq_policy_value",
    "mc_policy_value",
    "grid_map_search",
    "tabular_brute_force",
]


@dataclass(frozen=True)
class LQProblem:
    """Discounted linear-quadratic problem with additive Gaussian noise."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    gamma: float
    noise: Gaussian

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        n, m = B.shape
        if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
            raise ValueError("inconsistent LQ dimensions")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        for name, mat in (("Q", Q), ("R", R)):
            if np.any(np.linalg.eigvalsh(0.5 * (mat + mat.T)) <= 0):
                raise ValueError(f"{name} must be symmetric positive definite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


def riccati_solve(
    problem: LQProblem,
    next_state_utility: bool = False,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-point iteration of the discounted discrete Riccati equation.

    Returns ``(P, gain)`` with the optimal policy ``u = -gain @ x``.

    With ``next_state_utility=False`` the cost charges the current state
    (textbook convention, equivalent to the undiscounted equation on
    ``sqrt(gamma) A``). With ``True`` the per-step cost is
    ``x'^T Q x' + u^T R u`` on the landed state - the convention the training
    engine optimizes - which is the same problem with state cost ``Q/gamma``;
    the returned ``P`` is then the quadratic coefficient of the corresponding
    value function. The optimal gain of a discounted LQ problem does not
    depend on the noise, so ``problem.noise`` is ignored here.
    """
    A, B, R, gamma = problem.A, problem.B, problem.R, problem.gamma
    Q = problem.Q / gamma if next_state_utility else problem.Q
    P = Q.copy()
    for _ in range(max_iter):
        BP = B.T @ P
        inner = np.linalg.solve(R + gamma * BP @ B, BP @ A)
        P_next = Q + gamma * A.T @ P @ A - gamma**2 * A.T @ P @ B @ inner
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.abs(P_next - P).max()
        P = P_next
        if not np.isfinite(delta) or np.abs(P).max() > 1e14:
            raise RuntimeError("Riccati iteration diverged (system not stabilizable?)")
        if delta <= tol * max(1.0, np.abs(P).max()):
            break
    else:
        raise RuntimeError(f"Riccati iteration did not converge in {max_iter} steps")
    BP = B.T @ P
    gain = gamma * np.linalg.solve(R + gamma * BP @ B, BP @ A)
    if next_state_utility:
        P = P - problem.Q / gamma
    return P, gain


def lq_policy_value(
    problem: LQProblem, W: np.ndarray, b: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact value of the fixed affine policy ``u = W x + b``.

    Uses the landed-state cost convention. Returns ``(P, q, c)`` with
    ``V(x) = x^T P x + q^T x + c``; requires ``gamma < 1`` and a closed loop
    with spectral radius below ``1/sqrt(gamma)`` for the series to converge.
    Solved exactly by vectorizing the quadratic fixed point (Kronecker form),
    independent of any gradient-based evaluation in the engine.
    """
    A, B, Q, R, gamma = problem.A, problem.B, problem.Q, problem.R, problem.gamma
    if gamma >= 1.0:
        raise ValueError("policy value needs gamma < 1")
    n = A.shape[0]
    W = np.asarray(W, dtype=float)
    b = np.zeros(B.shape[1]) if b is None else np.asarray(b, dtype=float)
    Acl = A + B @ W
    if max(np.abs(np.linalg.eigvals(Acl))) >= 1.0 / np.sqrt(gamma):
        raise ValueError("closed loop is not stable enough for a finite value")
    mu, Kn = problem.noise.mean, problem.noise.cov
    drift = B @ b + mu

    # P = Acl^T (Q + gamma P) Acl + W^T R W, solved linearly via vec()
    const = Acl.T @ Q @ Acl + W.T @ R @ W
    lhs = np.eye(n * n) - gamma * np.kron(Acl.T, Acl.T)
    P = np.linalg.solve(lhs, const.ravel()).reshape(n, n)
    P = 0.5 * (P + P.T)

    M = Q + gamma * P
    q = np.linalg.solve(np.eye(n) - gamma * Acl.T, 2.0 * Acl.T @ M @ drift + 2.0 * W.T @ R @ b)
    c = (
        drift @ M @ drift
        + float(np.trace(M @ Kn))
        + gamma * q @ drift
        + b @ R @ b
    ) / (1.0 - gamma)
    return P, q, float(c)


def mc_policy_value(
    env: Environment,
    policy,
    x0: np.ndarray,
    gamma: float,
    episodes: int,
    horizon: int,
    rng: RngStream,
) -> tuple[float, float]:
    """Truncated-horizon Monte-Carlo estimate of the discounted cost.

    Returns ``(mean, standard_error)``. The horizon should be long enough
    that the discarded tail is negligible against the estimate.
    """
    returns = np.empty(episodes)
    for ep in range(episodes):
        traj = rollout(env, policy, x0, horizon, rng.substream(ep))
        returns[ep] = traj.discounted_return(gamma)
    se = returns.std(ddof=1) / np.sqrt(episodes) if episodes > 1 else 0.0
    return float(returns.mean()), float(se)


def grid_map_search(log_posterior, bounds, resolution: float) -> np.ndarray:
    """Exhaustive grid argmax of a 1-D or 2-D log posterior.

    Ties break toward the first cell in scan order. An argmax landing on the
    boundary of the grid triggers a warning (the bounds were too tight).
    """
    bounds = [tuple(map(float, bd)) for bd in bounds]
    if len(bounds) not in (1, 2):
        raise ValueError("grid search supports 1 or 2 parameters only")
    axes = [np.arange(lo, hi + 0.5 * resolution, resolution) for lo, hi in bounds]

    if len(axes) == 1:
        vals = np.array([log_posterior(np.array([x])) for x in axes[0]])
        idx = (int(np.argmax(vals)),)
    else:
        vals = np.array(
            [[log_posterior(np.array([x, y])) for y in axes[1]] for x in axes[0]]
        )
        flat = int(np.argmax(vals))
        idx = np.unravel_index(flat, vals.shape)

    for dim, i in enumerate(idx):
        if i == 0 or i == axes[dim].size - 1:
            warnings.warn(
                f"grid argmax lies on the boundary of dimension {dim}; "
                "widen the bounds",
                stacklevel=2,
            )
    return np.array([axes[dim][i] for dim, i in enumerate(idx)])


def tabular_brute_force(
    mdp: TabularMDP, tol: float = 1e-12, max_iter: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """Optimal value and policy by value iteration to ``tol``."""
    r = mdp.expected_utility()
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        Qsa = r + mdp.gamma * mdp.P @ V
        V_next = Qsa.min(axis=1)
        delta = np.abs(V_next - V).max()
        V = V_next
        if delta <= tol:
            break
    else:
        raise RuntimeError("value iteration did not converge")
    policy = (r + mdp.gamma * mdp.P @ V).argmin(axis=1)
    return V, policy
