"""Training engine: policy evaluation/improvement against the mixed model.

The mixed model is the known deterministic transition plus the *current
estimate* of the additive disturbance. Each iteration of the main trainer:

1. collects fresh transitions under the exploring actor,
2. folds their residuals into the disturbance belief (skipped by the
   model-driven baseline, which keeps the designer prior forever),
3. takes one semi-gradient critic step on the bootstrapped squared error,
4. takes one pathwise actor step on the one-step-plus-value objective,
5. gates the belief change: if the estimator update moved the expected cost
   more than the actor step just gained (the maximum-variation check), the
   actor keeps stepping until the check passes or ``j_max`` is hit.

Expectations over the disturbance are deterministic quadrature sums over the
belief's unscented nodes (config can switch to seeded Monte-Carlo nodes).

``exact_policy_iteration`` is the tabular instantiation - exact linear-solve
evaluation and exact argmin improvement - where the monotone-value guarantee
holds without approximation error. ``DataDrivenTrainer`` is the model-free
baseline: an action-value critic trained on replayed transitions with the
actor following its action gradient; no model term anywhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .envs.base import Environment, rollout
from .envs.tabular import TabularMDP
from .funcapprox import GradientError, LinearPolicy, Mlp, ParametricFn, QuadraticValue, SgdOptimizer
from .ibe import GaussianBelief, ibe_fold
from .numkit import Gaussian, RngStream, sample_gaussian, sigma_points

__all__ = [
    "MixedModel",
    "MvcResult",
    "IterationReport",
    "TrainSettings",
    "h_value",
    "h_values",
    "pev_step",
    "pim_step",
    "mvc_check",
    "MixedRlTrainer",
    "DataDrivenTrainer",
    "PolicyIterationStep",
    "exact_policy_iteration",
]

logger = logging.getLogger(__name__)


class MixedModel:
    """Deterministic transition paired with a disturbance-belief snapshot.

    Holds the quadrature nodes (disturbance values) and weights implied by
    the snapshot, so repeated expectations reuse one factorization.
    """

    def __init__(
        self,
        env: Environment,
        dist: Gaussian,
        scheme: str = "sigma_point",
        rng: RngStream | None = None,
        mc_samples: int = 32,
    ):
        self.env = env
        self.dist = dist
        if scheme == "sigma_point":
            self.nodes, self.weights = sigma_points(dist)
        elif scheme == "monte_carlo":
            if rng is None:
                raise ValueError("monte_carlo scheme needs an RngStream")
            self.nodes = sample_gaussian(dist, rng, size=mc_samples)
            self.weights = np.full(mc_samples, 1.0 / mc_samples)
        else:
            raise ValueError(f"unknown quadrature scheme {scheme!r}")
        self._scratch: dict = {}

    @classmethod
    def from_belief(cls, env, belief: GaussianBelief, **kwargs) -> "MixedModel":
        return cls(env, belief.distribution(), **kwargs)

    def next_states(self, base: np.ndarray) -> np.ndarray:
        """All quadrature successors of deterministic results ``base`` (B, n).

        Reuses a per-shape buffer; the result is only valid until the next
        call on this model.
        """
        shape = (base.shape[0], self.nodes.shape[0], base.shape[1])
        buf = self._scratch.get(shape)
        if buf is None:
            buf = np.empty(shape)
            self._scratch[shape] = buf
        np.add(base[:, None, :], self.nodes[None, :, :], out=buf)
        return buf


def _h_from_base(base, U, model: MixedModel, critic, gamma: float) -> np.ndarray:
    """Expected one-step-plus-value cost given precomputed ``f(x, u)`` rows."""
    nb, n = base.shape
    nodes = model.nodes.shape[0]
    XP = model.next_states(base).reshape(nb * nodes, n)
    U_rep = np.repeat(U, nodes, axis=0)
    stage = model.env.utility_batch(XP, U_rep)
    values = critic.forward(XP).ravel()
    return (stage + gamma * values).reshape(nb, nodes) @ model.weights


def h_values(X, U, model: MixedModel, critic, gamma: float) -> np.ndarray:
    """Expected cost-plus-discounted-value of acting ``U`` at ``X`` (batched)."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    return _h_from_base(model.env.f_batch(X, U), U, model, critic, gamma)


def h_value(x, u, model: MixedModel, critic, gamma: float) -> float:
    return float(h_values(x, u, model, critic, gamma)[0])


def pev_step(
    critic: ParametricFn,
    actor: ParametricFn,
    model: MixedModel,
    X: np.ndarray,
    gamma: float,
    optimizer: SgdOptimizer,
    bootstrap: ParametricFn | None = None,
) -> float:
    """One semi-gradient policy-evaluation step; returns the critic loss.

    Loss is the quadrature/batch mean of half the squared bootstrap error;
    the gradient holds the target fixed, so only ``V(x; w)`` is
    differentiated. ``bootstrap`` supplies the successor values in the
    target; by default that is the critic itself (the per-step semi-gradient
    form), while passing a periodically refreshed copy keeps the backup
    stable on state distributions far from the policy's own (see
    ``TrainSettings.target_refresh``).
    """
    nb = X.shape[0]
    if nb == 0:
        raise ValueError("empty state batch")
    if bootstrap is None:
        bootstrap = critic
    U = actor.forward(X)
    base = model.env.f_batch(X, U)
    nodes = model.nodes.shape[0]
    XP = model.next_states(base).reshape(nb * nodes, -1)
    U_rep = np.repeat(U, nodes, axis=0)
    stage = model.env.utility_batch(XP, U_rep)
    v_next = bootstrap.forward(XP).ravel()
    per_node = (stage + gamma * v_next).reshape(nb, nodes)
    target = per_node @ model.weights
    v = critic.forward(X).ravel()
    loss = float(np.mean((0.5 * (per_node - v[:, None]) ** 2) @ model.weights))
    if not np.isfinite(loss):
        raise GradientError(f"critic loss is non-finite ({loss})")
    grad = critic.grad_params(X, ((v - target) / nb)[:, None])
    optimizer.step(critic, grad)
    return loss


def pim_step(
    actor: ParametricFn,
    critic: ParametricFn,
    model: MixedModel,
    X: np.ndarray,
    gamma: float,
    optimizer: SgdOptimizer,
) -> float:
    """One pathwise policy-improvement step; returns the actor objective.

    The gradient flows through the mixed model's successor states at every
    quadrature node: ``d/du [l(x', u) + gamma V(x')]`` with
    ``x' = f(x, u) + node`` chains the utility and critic input gradients
    through ``df/du``, plus the direct dependence of the utility on ``u``.
    """
    nb = X.shape[0]
    if nb == 0:
        raise ValueError("empty state batch")
    env = model.env
    U = actor.forward(X)
    base = env.f_batch(X, U)
    nodes = model.nodes.shape[0]
    XP = model.next_states(base).reshape(nb * nodes, -1)
    U_rep = np.repeat(U, nodes, axis=0)
    stage = env.utility_batch(XP, U_rep)
    values = critic.forward(XP).ravel()
    objective = float(np.mean((stage + gamma * values).reshape(nb, nodes) @ model.weights))
    if not np.isfinite(objective):
        raise GradientError(f"actor objective is non-finite ({objective})")

    dl_dx, dl_du = env.utility_grads(XP, U_rep)
    dv_dx = critic.grad_input(XP, np.ones((nb * nodes, 1)))
    gx = (dl_dx + gamma * dv_dx).reshape(nb, nodes, -1)
    gx = np.einsum("bjn,j->bn", gx, model.weights)
    gu = np.einsum("bjm,j->bm", dl_du.reshape(nb, nodes, -1), model.weights)
    jac = env.f_jac_u(X, U)
    dJ_dU = np.einsum("bn,bnm->bm", gx, jac) + gu
    grad = actor.grad_params(X, dJ_dU / nb)
    optimizer.step(actor, grad)
    return objective


@dataclass(frozen=True)
class MvcResult:
    satisfied: bool
    lhs: float
    e_k: float


def mvc_check(
    probe_states: np.ndarray,
    actor_prev: ParametricFn,
    actor_new: ParametricFn,
    model_prev: MixedModel,
    model_new: MixedModel,
    critic: ParametricFn,
    gamma: float,
    tol_scale: float = 1e-6,
    per_state: bool = False,
) -> MvcResult:
    """Maximum-variation check of the belief update against the actor's gain.

    Left side: how much switching the belief changed the expected cost of
    the *new* actions. Right side ``e_k``: how much the improvement step
    lowered the expected cost under the *old* belief. The gate passes when
    ``lhs <= max(e_k, 0) + tol`` with ``tol = tol_scale * (1 + |e_k|)``
    (``e_k`` can dip below zero under function approximation; it is clamped
    only inside the comparison, never in what is reported). ``per_state``
    requires the inequality at every probe state instead of on the mean.
    """
    X = np.asarray(probe_states, dtype=float)
    env = model_new.env
    U_new = actor_new.forward(X)
    base_new = env.f_batch(X, U_new)
    h_new_new = _h_from_base(base_new, U_new, model_new, critic, gamma)
    h_new_prev = _h_from_base(base_new, U_new, model_prev, critic, gamma)
    U_prev = actor_prev.forward(X)
    base_prev = env.f_batch(X, U_prev)
    h_prev_prev = _h_from_base(base_prev, U_prev, model_prev, critic, gamma)

    lhs_x = h_new_new - h_new_prev
    ek_x = h_prev_prev - h_new_prev
    lhs = float(lhs_x.mean())
    e_k = float(ek_x.mean())
    if per_state:
        tol = tol_scale * (1.0 + np.abs(ek_x))
        satisfied = bool(np.all(lhs_x <= np.maximum(ek_x, 0.0) + tol))
    else:
        satisfied = lhs <= max(e_k, 0.0) + tol_scale * (1.0 + abs(e_k))
    return MvcResult(satisfied=satisfied, lhs=lhs, e_k=e_k)


@dataclass
class IterationReport:
    """Everything one training iteration leaves behind (one CSV row)."""

    k: int
    critic_loss: float
    actor_obj: float
    mvc_lhs: float
    e_k: float
    mvc_satisfied: bool
    inner_steps: int
    eval_return: float
    mu_hat: np.ndarray
    k_hat_diag: np.ndarray


@dataclass
class TrainSettings:
    """Hyperparameters shared by the trainers (harness fills these from config)."""

    gamma: float = 0.99
    iterations: int = 1000
    critic_rate: float = 1e-2
    actor_rate: float = 1e-3
    momentum: float = 0.0
    batch_size: int = 64
    buffer_capacity: int = 100_000
    rollout_steps: int = 20
    explore_std: tuple = (0.1,)
    explore_final_frac: float = 0.05
    explore_decay_frac: float = 0.6
    j_max: int = 10
    mvc_tol_scale: float = 1e-6
    mvc_per_state: bool = False
    quadrature: str = "sigma_point"
    mc_samples: int = 32
    probe_count: int = 256
    probe_std: float = 1.0
    eval_every: int = 100
    eval_episodes: int = 4
    eval_horizon: int = 300
    ibe_case: str = "case2"
    blowup: float = 1e3
    rate_decay_tau: float = 0.0
    clip_norm: float = 0.0
    psd_project: bool = True
    target_refresh: int = 1

    def explore_schedule(self, k: int) -> np.ndarray:
        """Linear decay of the exploration noise over the first part of training."""
        std0 = np.asarray(self.explore_std, dtype=float)
        span = max(1, int(self.explore_decay_frac * self.iterations))
        frac = max(self.explore_final_frac, 1.0 - k / span)
        return std0 * frac

    def rate_at(self, base: float, k: int) -> float:
        """Robbins-Monro style 1/(1 + k/tau) decay; constant when tau = 0."""
        if self.rate_decay_tau <= 0:
            return base
        return base / (1.0 + k / self.rate_decay_tau)


# substream purposes (offsets under each trainer's root stream)
_S_PROBE, _S_EVAL, _S_SEED_STATES, _S_INIT = 1, 2, 3, 4
_S_ROLLOUT, _S_BATCH, _S_NODES = 10, 11, 12


class _TrainerBase:
    """Shared plumbing: probe/eval state sets, exploration, evaluation."""

    def __init__(self, env: Environment, settings: TrainSettings, seed: int):
        self.env = env
        self.settings = settings
        self.rng = RngStream(seed)
        self.k = 0
        st = settings
        self.probe_states = st.probe_std * self.rng.substream(_S_PROBE).standard_normal(
            (st.probe_count, env.state_dim)
        )
        eval_rng = self.rng.substream(_S_EVAL)
        self._eval_x0 = [env.init_state(eval_rng) for _ in range(st.eval_episodes)]
        self._last_eval = np.nan

    def state_batch(self, rng: RngStream) -> np.ndarray:
        """Fresh episode-start states; the update distribution for PEV/PIM."""
        return np.stack(
            [self.env.init_state(rng) for _ in range(self.settings.batch_size)]
        )

    def policy(self, x: np.ndarray) -> np.ndarray:
        return self.actor.forward_one(x)

    def eval_return(self) -> float:
        """Deterministic-policy return, common random numbers across calls.

        Reusing the same noise streams for every evaluation makes successive
        values reflect policy movement only, not fresh simulator noise.
        """
        st = self.settings
        totals = []
        for ep, x0 in enumerate(self._eval_x0):
            rng = self.rng.substream(_S_EVAL, 1000 + ep)
            traj = rollout(self.env, self.policy, x0, st.eval_horizon, rng)
            totals.append(traj.discounted_return(st.gamma))
        return float(np.mean(totals))

    def _maybe_eval(self) -> float:
        if self.k % self.settings.eval_every == 0 or np.isnan(self._last_eval):
            self._last_eval = self.eval_return()
        return self._last_eval

    def run(self, iterations: int | None = None):
        """Convenience loop; yields the per-iteration reports."""
        total = self.settings.iterations if iterations is None else iterations
        return [self.iterate() for _ in range(total)]


class MixedRlTrainer(_TrainerBase):
    """Main trainer; with ``update_belief=False`` it is the model-driven baseline.

    The belief starts at the designer prior ``N(prior_mu, prior_K)``. The
    mixed variant refines it from rollout residuals every iteration and
    gates the refinement with the maximum-variation check; the model-driven
    variant keeps the prior, making the gate trivially satisfied.
    """

    def __init__(
        self,
        env: Environment,
        settings: TrainSettings,
        critic: ParametricFn,
        actor: ParametricFn,
        prior_mu,
        prior_K,
        seed: int,
        update_belief: bool = True,
        known_K=None,
    ):
        super().__init__(env, settings, seed)
        self.critic = critic
        self.actor = actor
        if isinstance(critic, Mlp):
            critic.initialize(self.rng.substream(_S_INIT, 0))
        if isinstance(actor, Mlp):
            actor.initialize(self.rng.substream(_S_INIT, 1))
        self.critic_opt = SgdOptimizer(settings.critic_rate, settings.momentum, settings.clip_norm)
        self.actor_opt = SgdOptimizer(settings.actor_rate, settings.momentum, settings.clip_norm)
        self.update_belief = update_belief
        self.belief = GaussianBelief.from_prior(prior_mu, prior_K, known_K=known_K)
        self.model = self._build_model(self.belief)
        self.critic_target = critic.copy() if settings.target_refresh > 1 else None

    def _build_model(self, belief: GaussianBelief) -> MixedModel:
        st = self.settings
        return MixedModel.from_belief(
            self.env,
            belief,
            scheme=st.quadrature,
            rng=self.rng.substream(_S_NODES, self.k),
            mc_samples=st.mc_samples,
        )

    def iterate(self) -> IterationReport:
        st = self.settings
        k = self.k
        rng_roll = self.rng.substream(_S_ROLLOUT, k)
        rng_batch = self.rng.substream(_S_BATCH, k)
        self.critic_opt.rate = st.rate_at(st.critic_rate, k)
        self.actor_opt.rate = st.rate_at(st.actor_rate, k)

        traj = rollout(
            self.env,
            self.policy,
            self.env.init_state(rng_roll),
            st.rollout_steps,
            rng_roll,
            explore_std=st.explore_schedule(k),
            blowup=st.blowup,
        )
        model_prev = self.model
        if traj.diverged:
            logger.warning("iteration %d: rollout diverged, discarding it", k)
        elif self.update_belief:
            X = np.stack([t.x for t in traj.transitions])
            U = np.stack([t.u for t in traj.transitions])
            Xn = np.stack([t.x_next for t in traj.transitions])
            residuals = Xn - self.env.f_batch(X, U)
            self.belief = ibe_fold(self.belief, residuals, st.ibe_case)
        model_new = self._build_model(self.belief) if self.update_belief else model_prev

        batch = self.state_batch(rng_batch)

        if self.critic_target is not None and k % st.target_refresh == 0:
            self.critic_target = self.critic.copy()
        critic_backup = self.critic.params
        try:
            loss = pev_step(
                self.critic, self.actor, model_new, batch, st.gamma,
                self.critic_opt, bootstrap=self.critic_target,
            )
            if st.psd_project and hasattr(self.critic, "project_psd"):
                self.critic.project_psd()
        except GradientError as exc:
            logger.warning("iteration %d: critic step aborted (%s)", k, exc)
            self.critic.set_params(critic_backup)
            loss = float("nan")

        # the actor improves the probe-state average, the same quantity the
        # variation check measures, so its one-step gain e_k is nonnegative
        # up to critic noise
        actor_prev = self.actor.copy()
        actor_backup = self.actor.params
        try:
            actor_obj = pim_step(
                self.actor, self.critic, model_new, self.probe_states, st.gamma, self.actor_opt
            )
        except GradientError as exc:
            logger.warning("iteration %d: actor step aborted (%s)", k, exc)
            self.actor.set_params(actor_backup)
            actor_obj = float("nan")

        inner = 0
        if self.update_belief:
            result = mvc_check(
                self.probe_states, actor_prev, self.actor, model_prev, model_new,
                self.critic, st.gamma, st.mvc_tol_scale, st.mvc_per_state,
            )
            while not result.satisfied and inner < st.j_max:
                try:
                    actor_obj = pim_step(
                        self.actor, self.critic, model_new, self.probe_states, st.gamma, self.actor_opt
                    )
                except GradientError as exc:
                    logger.warning("iteration %d: inner actor step aborted (%s)", k, exc)
                    break
                inner += 1
                result = mvc_check(
                    self.probe_states, actor_prev, self.actor, model_prev, model_new,
                    self.critic, st.gamma, st.mvc_tol_scale, st.mvc_per_state,
                )
        else:
            result = MvcResult(satisfied=True, lhs=0.0, e_k=0.0)

        self.model = model_new
        eval_return = self._maybe_eval()
        dist = self.belief.distribution()
        report = IterationReport(
            k=k,
            critic_loss=loss,
            actor_obj=actor_obj,
            mvc_lhs=result.lhs,
            e_k=result.e_k,
            mvc_satisfied=result.satisfied,
            inner_steps=inner,
            eval_return=eval_return,
            mu_hat=dist.mean.copy(),
            k_hat_diag=np.diagonal(dist.cov).copy(),
        )
        self.k += 1
        return report


class DataDrivenTrainer(_TrainerBase):
    """Model-free baseline: replayed transitions, action-value critic.

    The critic estimates the cost-to-go of a state-action pair from sampled
    one-step targets; the actor descends the critic's action gradient. On
    numerical trouble both nets roll back and the learning rates halve.
    """

    def __init__(
        self,
        env: Environment,
        settings: TrainSettings,
        critic: ParametricFn,
        actor: ParametricFn,
        seed: int,
    ):
        super().__init__(env, settings, seed)
        self.critic = critic
        self.actor = actor
        if isinstance(critic, Mlp):
            critic.initialize(self.rng.substream(_S_INIT, 0))
        if isinstance(actor, Mlp):
            actor.initialize(self.rng.substream(_S_INIT, 1))
        self.critic_opt = SgdOptimizer(settings.critic_rate, settings.momentum, settings.clip_norm)
        self.actor_opt = SgdOptimizer(settings.actor_rate, settings.momentum, settings.clip_norm)
        self.critic_target = critic.copy() if settings.target_refresh > 1 else None
        cap = settings.buffer_capacity
        n, m = env.state_dim, env.action_dim
        self._rx = np.empty((cap, n))
        self._ru = np.empty((cap, m))
        self._rxn = np.empty((cap, n))
        self._rc = np.empty(cap)
        self._rsize = 0
        self._rpos = 0

    def _push(self, traj) -> None:
        for t, cost in zip(traj.transitions, traj.utilities):
            i = self._rpos
            self._rx[i] = t.x
            self._ru[i] = t.u
            self._rxn[i] = t.x_next
            self._rc[i] = cost
            self._rpos = (i + 1) % self._rx.shape[0]
            self._rsize = min(self._rsize + 1, self._rx.shape[0])

    def iterate(self) -> IterationReport:
        st = self.settings
        k = self.k
        rng_roll = self.rng.substream(_S_ROLLOUT, k)
        rng_batch = self.rng.substream(_S_BATCH, k)
        self.critic_opt.rate = min(self.critic_opt.rate, st.rate_at(st.critic_rate, k))
        self.actor_opt.rate = min(self.actor_opt.rate, st.rate_at(st.actor_rate, k))

        traj = rollout(
            self.env,
            self.policy,
            self.env.init_state(rng_roll),
            st.rollout_steps,
            rng_roll,
            explore_std=st.explore_schedule(k),
            blowup=st.blowup,
        )
        if traj.diverged:
            logger.warning("iteration %d: rollout diverged, discarding it", k)
        else:
            self._push(traj)

        idx = rng_batch.integers(0, max(self._rsize, 1), st.batch_size)
        X, U, Xn, C = self._rx[idx], self._ru[idx], self._rxn[idx], self._rc[idx]
        nb = X.shape[0]

        if self.critic_target is not None and k % st.target_refresh == 0:
            self.critic_target = self.critic.copy()
        bootstrap = self.critic_target if self.critic_target is not None else self.critic
        critic_backup = self.critic.params
        actor_backup = self.actor.params
        try:
            U_next = self.actor.forward(Xn)
            q_next = bootstrap.forward(np.hstack([Xn, U_next])).ravel()
            target = C + st.gamma * q_next
            XU = np.hstack([X, U])
            q = self.critic.forward(XU).ravel()
            loss = float(np.mean(0.5 * (q - target) ** 2))
            if not np.isfinite(loss):
                raise GradientError(f"critic loss is non-finite ({loss})")
            grad = self.critic.grad_params(XU, ((q - target) / nb)[:, None])
            self.critic_opt.step(self.critic, grad)
            if st.psd_project and hasattr(self.critic, "project_psd"):
                self.critic.project_psd()

            U_a = self.actor.forward(X)
            XUa = np.hstack([X, U_a])
            actor_obj = float(np.mean(self.critic.forward(XUa)))
            dq = self.critic.grad_input(XUa, np.full((nb, 1), 1.0 / nb))
            dq_du = dq[:, self.env.state_dim :]
            agrad = self.actor.grad_params(X, dq_du)
            self.actor_opt.step(self.actor, agrad)
        except GradientError as exc:
            self.critic.set_params(critic_backup)
            self.actor.set_params(actor_backup)
            self.critic_opt.halve_rate()
            self.actor_opt.halve_rate()
            logger.warning(
                "iteration %d: diverged (%s); rolled back, rates halved to %g/%g",
                k, exc, self.critic_opt.rate, self.actor_opt.rate,
            )
            loss = float("nan")
            actor_obj = float("nan")

        eval_return = self._maybe_eval()
        n = self.env.state_dim
        report = IterationReport(
            k=k,
            critic_loss=loss,
            actor_obj=actor_obj,
            mvc_lhs=0.0,
            e_k=0.0,
            mvc_satisfied=True,
            inner_steps=0,
            eval_return=eval_return,
            mu_hat=np.zeros(n),
            k_hat_diag=np.zeros(n),
        )
        self.k += 1
        return report


@dataclass(frozen=True)
class PolicyIterationStep:
    V: np.ndarray
    policy: np.ndarray


def exact_policy_iteration(
    mdp: TabularMDP,
    kernel_schedule=None,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> list[PolicyIterationStep]:
    """Exact tabular policy iteration; returns the full (V, policy) sequence.

    Evaluation solves the linear self-consistency system outright each
    iteration; improvement is an exact argmin over actions. An optional
    ``kernel_schedule(k)`` substitutes the transition kernel used at
    iteration ``k`` (the tabular analogue of a changing disturbance belief);
    by default the kernel is fixed and the value sequence is monotone.
    Terminates when the value moved less than ``tol`` and the policy is
    unchanged.
    """
    gamma = mdp.gamma
    assert gamma < 1.0, "exact evaluation needs gamma < 1"
    n = mdp.n_states
    idx = np.arange(n)

    def kernel(k: int) -> np.ndarray:
        if kernel_schedule is None:
            return mdp.P
        P = kernel_schedule(k)
        return mdp.P if P is None else np.asarray(P, dtype=float)

    policy = mdp.expected_utility(kernel(0)).argmin(axis=1)
    steps: list[PolicyIterationStep] = []
    V_prev = None
    for k in range(max_iter):
        Pk = kernel(k)
        rk = mdp.expected_utility(Pk)
        P_pi = Pk[idx, policy]
        r_pi = rk[idx, policy]
        V = np.linalg.solve(np.eye(n) - gamma * P_pi, r_pi)
        steps.append(PolicyIterationStep(V=V, policy=policy.copy()))

        policy_new = (rk + gamma * Pk @ V).argmin(axis=1)
        if (
            V_prev is not None
            and np.abs(V - V_prev).max() <= tol
            and np.array_equal(policy_new, policy)
        ):
            break
        V_prev = V
        policy = policy_new
    else:
        raise RuntimeError("policy iteration did not terminate")
    return steps
