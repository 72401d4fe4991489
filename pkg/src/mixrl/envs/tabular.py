"""Finite MDPs: the setting where policy iteration is exact.

Utility is charged on the landed state, ``l[s_next, action]``, matching the
convention used everywhere else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit import RngStream

__all__ = ["TabularMDP", "random_mdp"]

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class TabularMDP:
    """Transition kernel ``P[s, a, s']``, utility table ``l[s', a]``, discount."""

    P: np.ndarray
    l: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        l = np.asarray(self.l, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"kernel must have shape (S, A, S), got {P.shape}")
        if l.shape != (P.shape[0], P.shape[1]):
            raise ValueError(
                f"utility table must have shape (S, A) = {(P.shape[0], P.shape[1])}, got {l.shape}"
            )
        if np.abs(P.sum(axis=2) - 1.0).max() > ROW_SUM_TOL:
            raise ValueError("kernel rows must sum to 1")
        if P.min() < 0:
            raise ValueError("kernel entries must be nonnegative")
        if l.min() < 0:
            raise ValueError("utility must be nonnegative")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "l", l)

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def expected_utility(self, P: np.ndarray | None = None) -> np.ndarray:
        """``r[s, a] = sum_{s'} P[s, a, s'] l[s', a]``."""
        kernel = self.P if P is None else P
        return np.einsum("sap,pa->sa", kernel, self.l)


def random_mdp(
    seed: int, n_states: int, n_actions: int, gamma: float = 0.9
) -> TabularMDP:
    """Seeded random MDP: Dirichlet kernel rows, uniform nonnegative utility."""
    gen = RngStream(seed, stream=555).generator
    P = gen.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    l = gen.uniform(0.0, 1.0, size=(n_states, n_actions))
    return TabularMDP(P=P, l=l, gamma=gamma)
