"""Disturbance residual extraction and the iterative Bayesian estimator.

The environment is ``x' = f(x, u) + xi`` with Gaussian ``xi``. Each measured
triple ``(x, u, x')`` yields one residual sample ``xi = x' - f(x, u)``; the
estimator fuses those samples with a designer prior ``N(prior_mu, prior_K)``
into a running MAP estimate of the disturbance distribution.

Two cases are supported, each with a closed-form batch estimate and an
equivalent streaming recursion over the precision accumulator ``psi`` and
the residual sum ``m_sum``:

* case 1 - covariance known (``known_K``), only the mean is estimated;
* case 2 - mean and covariance both unknown; the covariance starts at the
  prior covariance and is refit as a running second moment about the
  lagged mean estimate.

Beliefs are immutable snapshots: every update returns a new object, so
readers can hold a belief while the trainer advances.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numkit import Gaussian, cov_cholesky, solve_spd

__all__ = [
    "Transition",
    "GaussianBelief",
    "residual",
    "ibe_update_case1",
    "ibe_update_case2",
    "ibe_fold",
    "batch_map_case1",
    "batch_map_case2",
]


def _inv_cov(cov: np.ndarray) -> np.ndarray:
    # inverse through the conditionally-floored Cholesky factor, so exactly
    # the same matrix is inverted on the streaming and the batch path
    low = cov_cholesky(np.asarray(cov, dtype=float))
    half = np.linalg.solve(low, np.eye(low.shape[0]))
    return np.linalg.solve(low.T, half)


@dataclass(frozen=True)
class Transition:
    """One measured step ``(x, u, x_next)``; ``u`` is the executed action."""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray


def residual(t: Transition, f) -> np.ndarray:
    """Disturbance sample carried by a transition: ``x_next - f(x, u)``."""
    return np.asarray(t.x_next, dtype=float) - np.asarray(f(t.x, t.u), dtype=float)


@dataclass(frozen=True)
class GaussianBelief:
    """Running MAP state of the disturbance distribution.

    Fields follow the streaming recursion: ``psi`` accumulates precision,
    ``m_sum`` accumulates residuals, ``count`` is the number of residuals
    folded in. ``known_K`` selects case 1 when present.
    """

    mu_hat: np.ndarray
    K_hat: np.ndarray
    psi: np.ndarray
    m_sum: np.ndarray
    count: int
    prior_mu: np.ndarray
    prior_K: np.ndarray
    known_K: np.ndarray | None = None
    # cached constants of the recursion, carried through updates
    prior_term: np.ndarray | None = field(default=None, repr=False, compare=False)
    known_K_inv: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_prior(cls, prior_mu, prior_K, known_K=None) -> "GaussianBelief":
        prior_mu = np.atleast_1d(np.asarray(prior_mu, dtype=float))
        prior_K = np.asarray(prior_K, dtype=float)
        if known_K is not None:
            known_K = np.asarray(known_K, dtype=float)
        psi0 = _inv_cov(prior_K)
        return cls(
            mu_hat=prior_mu.copy(),
            K_hat=prior_K.copy(),
            psi=psi0,
            m_sum=np.zeros_like(prior_mu),
            count=0,
            prior_mu=prior_mu,
            prior_K=prior_K,
            known_K=known_K,
            prior_term=psi0 @ prior_mu,
            known_K_inv=None if known_K is None else _inv_cov(known_K),
        )

    @property
    def dim(self) -> int:
        return self.mu_hat.shape[0]

    def distribution(self) -> Gaussian:
        """Current disturbance estimate as a Gaussian."""
        cov = self.known_K if self.known_K is not None else self.K_hat
        return Gaussian(self.mu_hat, cov)


def _prior_precision_term(belief: GaussianBelief) -> np.ndarray:
    if belief.prior_term is not None:
        return belief.prior_term
    low = cov_cholesky(belief.prior_K)
    return np.linalg.solve(low.T, np.linalg.solve(low, belief.prior_mu))


def ibe_update_case1(belief: GaussianBelief, xi) -> GaussianBelief:
    """Fold one residual, covariance known.

    Recursion: ``psi += K^{-1}``, ``m += xi``,
    ``mu_hat = psi^{-1} (K_M^{-1} mu_M + K^{-1} m)``. The covariance estimate
    stays pinned at ``known_K``.
    """
    if belief.known_K is None:
        raise ValueError("case-1 update requires a belief with known_K set")
    xi = np.asarray(xi, dtype=float)
    k_inv = belief.known_K_inv if belief.known_K_inv is not None else _inv_cov(belief.known_K)
    psi = belief.psi + k_inv
    m_sum = belief.m_sum + xi
    # psi is SPD by construction; this runs once per residual, so a single
    # LAPACK solve beats factoring
    mu_hat = np.linalg.solve(psi, _prior_precision_term(belief) + k_inv @ m_sum)
    return replace(belief, mu_hat=mu_hat, psi=psi, m_sum=m_sum, count=belief.count + 1)


def ibe_update_case2(belief: GaussianBelief, xi) -> GaussianBelief:
    """Fold one residual, mean and covariance both unknown.

    Recursion: ``psi += K_hat^{-1}``, ``m += xi``,
    ``mu_hat = psi^{-1} (K_M^{-1} mu_M + K_hat^{-1} m)`` using the previous
    covariance estimate, then
    ``K_hat <- ((k-1) K_hat + (xi - mu_prev)(xi - mu_prev)^T) / k`` using the
    previous mean estimate.
    """
    xi = np.asarray(xi, dtype=float)
    k = belief.count + 1
    k_prev_inv = _inv_cov(belief.K_hat)
    psi = belief.psi + k_prev_inv
    m_sum = belief.m_sum + xi
    mu_hat = np.linalg.solve(psi, _prior_precision_term(belief) + k_prev_inv @ m_sum)
    dev = xi - belief.mu_hat
    K_hat = ((k - 1) * belief.K_hat + np.outer(dev, dev)) / k
    K_hat = 0.5 * (K_hat + K_hat.T)
    return replace(
        belief, mu_hat=mu_hat, K_hat=K_hat, psi=psi, m_sum=m_sum, count=k
    )


def ibe_fold(belief: GaussianBelief, residuals, case: str) -> GaussianBelief:
    """Fold a buffer of residuals one at a time, in stream order."""
    if case == "case1":
        step = ibe_update_case1
    elif case == "case2":
        step = ibe_update_case2
    else:
        raise ValueError(f"unknown estimator case {case!r}")
    for xi in residuals:
        belief = step(belief, xi)
    return belief


def batch_map_case1(prior_mu, prior_K, K, data) -> np.ndarray:
    """Closed-form batch MAP of the mean with known covariance ``K``.

    ``mu_hat = (K_M^{-1} + N K^{-1})^{-1} (K_M^{-1} mu_M + K^{-1} sum xi)``.
    """
    prior_mu = np.atleast_1d(np.asarray(prior_mu, dtype=float))
    data = [np.asarray(x, dtype=float) for x in data]
    prior_K_inv = _inv_cov(prior_K)
    k_inv = _inv_cov(K)
    n = len(data)
    total = np.sum(data, axis=0) if n else np.zeros_like(prior_mu)
    lhs = prior_K_inv + n * k_inv
    rhs = prior_K_inv @ prior_mu + k_inv @ total
    return solve_spd(lhs, rhs)


def batch_map_case2(
    prior_mu, prior_K, data, tol: float = 1e-12, max_iter: int = 10_000
) -> tuple[np.ndarray, np.ndarray]:
    """Batch MAP with unknown mean and covariance.

    The two estimates are coupled (the mean weights data by the inverse
    covariance, the covariance centers on the mean), so the fixed point is
    found by alternating substitution, starting from the prior covariance.
    Raises ``RuntimeError`` if the alternation has not settled to ``tol``
    (max-norm change of both estimates) within ``max_iter`` rounds.
    """
    data = [np.asarray(x, dtype=float) for x in data]
    if not data:
        raise ValueError("need at least one residual")
    prior_mu = np.atleast_1d(np.asarray(prior_mu, dtype=float))
    n = len(data)
    stacked = np.stack(data)
    total = stacked.sum(axis=0)

    prior_K_inv = _inv_cov(np.asarray(prior_K, dtype=float))
    prior_term = prior_K_inv @ prior_mu
    K_hat = np.asarray(prior_K, dtype=float).copy()
    mu_hat = prior_mu.copy()
    for _ in range(max_iter):
        k_inv = _inv_cov(K_hat)
        mu_next = solve_spd(prior_K_inv + n * k_inv, prior_term + k_inv @ total)
        dev = stacked - mu_next
        K_next = dev.T @ dev / n
        K_next = 0.5 * (K_next + K_next.T)
        delta = max(
            np.abs(mu_next - mu_hat).max(), np.abs(K_next - K_hat).max()
        )
        mu_hat, K_hat = mu_next, K_next
        if delta <= tol:
            return mu_hat, K_hat
    raise RuntimeError(
        f"batch MAP alternation did not converge within {max_iter} rounds"
    )
