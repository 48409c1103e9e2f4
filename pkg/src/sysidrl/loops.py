"""Learning loops: one-shot batch fitting, iterative dataset aggregation
with mixed exploration/on-policy sampling, and the expert-seeded variant.

The iterative loop alternates (1) drawing transitions, each from the
exploration distribution with probability ``beta`` and otherwise from the
discounted visitation of the latest policy via geometric stopping, and
(2) refitting on the aggregate and re-solving the control problem.  Batch is
the single-iteration, pure-exploration special case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import EXPLORATION, ON_POLICY, TransitionDataset
from .losses import CLASSIFICATION, KL, empirical_loss
from .mdp import FiniteMdp, policy_cost, sample_visitation
from .ocsolve import ConvergenceError
from .plant import LinearPlant, collect_trajectory_samples, rollout_cost
from .policies import MixturePolicy
from .rng import substream


class FiniteEnv:
    """Loop adapter for explicit finite MDPs (exact test evaluation)."""

    discrete = True

    def __init__(self, mdp: FiniteMdp):
        self.mdp = mdp

    def new_dataset(self) -> TransitionDataset:
        return TransitionDataset(discrete=True)

    def collect_exploration(self, nu, m, rng, stop_rng):
        s, a, s2 = nu.sample(self.mdp, m, rng)
        return np.zeros(m, dtype=int), s, a, s2

    def collect_on_policy(self, policy, m, rng, stop_rng):
        s = np.empty(m, dtype=np.int64)
        a = np.empty(m, dtype=np.int64)
        s2 = np.empty(m, dtype=np.int64)
        for i in range(m):
            s[i], a[i] = sample_visitation(self.mdp, policy, rng, stop_rng=stop_rng)
            s2[i] = self.mdp.step(int(s[i]), int(a[i]), rng)
        return np.zeros(m, dtype=int), s, a, s2

    def evaluate(self, policy, iteration, seed):
        return policy_cost(self.mdp, policy), 0.0


class PlantEnv:
    """Loop adapter for the linear plant (rollout test evaluation).

    Test rollouts at iteration n draw from the stream ("test", n) of the run
    seed, so every algorithm evaluated at the same (seed, sample budget)
    point sees identical disturbances.
    """

    discrete = False

    def __init__(self, plant: LinearPlant, test_episodes: int = 20,
                 abort_threshold: float = 5.0, discounted: bool = False,
                 cost_ceiling: float = 1e9):
        self.plant = plant
        self.test_episodes = test_episodes
        self.abort_threshold = abort_threshold
        self.discounted = discounted
        self.cost_ceiling = cost_ceiling
        self.clamped_episodes = 0

    def new_dataset(self) -> TransitionDataset:
        return TransitionDataset(discrete=False, state_dim=self.plant.state_dim,
                                 action_dim=self.plant.control_dim)

    def collect_exploration(self, nu, m, rng, stop_rng):
        return nu.sample(self.plant, m, rng, abort_threshold=self.abort_threshold,
                         stop_rng=stop_rng)

    def collect_on_policy(self, policy, m, rng, stop_rng):
        return collect_trajectory_samples(self.plant, policy, m, rng,
                                          abort_threshold=self.abort_threshold,
                                          stop_rng=stop_rng)

    def evaluate(self, policy, iteration, seed):
        stats = rollout_cost(self.plant, policy, self.test_episodes,
                             substream(seed, "test", iteration),
                             discounted=self.discounted, cost_ceiling=self.cost_ceiling)
        self.clamped_episodes += stats.clamped_episodes
        return stats.mean, stats.stderr


@dataclass
class LoopResult:
    """Everything a run produced, sufficient to replay audits exactly."""

    algorithm: str
    seed: int
    num_iterations: int
    samples_per_iteration: int
    beta: float
    exploration_name: str
    initial_model: object
    initial_policy: object
    models: list
    policies: list
    test_mean: np.ndarray
    test_stderr: np.ndarray
    train_kl: np.ndarray
    train_cls: np.ndarray
    oc_slack: np.ndarray
    oc_failures: int
    dataset: TransitionDataset
    dataset_sizes: np.ndarray
    exploration_counts: np.ndarray
    exploration: object
    samples_consumed: int

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.test_mean))

    @property
    def best_policy(self):
        return self.policies[self.best_index]

    @property
    def mixture_policy(self) -> MixturePolicy:
        return MixturePolicy(tuple(self.policies))

    def models_before_slices(self) -> list:
        """Model sequence aligned so entry i was chosen before slice i."""
        return [self.initial_model] + list(self.models[:-1])

    def policies_before_slices(self) -> list:
        """Policy sequence whose visitations generated the on-policy draws."""
        return [self.initial_policy] + list(self.policies[:-1])

    def to_csv(self) -> str:
        lines = ["# sysidrl loop-result csv v1",
                 "# columns: iteration,cumulative_samples,train_kl,train_cls,"
                 "test_cost_mean,test_cost_stderr,oc_slack",
                 f"# algorithm={self.algorithm} nu={self.exploration_name} "
                 f"seed={self.seed} m={self.samples_per_iteration} beta={self.beta:.17g}"]
        for i in range(self.num_iterations):
            lines.append(",".join([
                str(i + 1),
                str(int(self.dataset_sizes[i])),
                f"{self.train_kl[i]:.17g}",
                f"{self.train_cls[i]:.17g}",
                f"{self.test_mean[i]:.17g}",
                f"{self.test_stderr[i]:.17g}",
                f"{self.oc_slack[i]:.17g}",
            ]))
        return "\n".join(lines) + "\n"


def _solve_or_keep(oc_solver, model, previous):
    """Solve the control problem; on failure keep the previous policy."""
    try:
        sol = oc_solver(model)
        return sol.policy, sol.subopt_slack, False
    except (ConvergenceError, ValueError, np.linalg.LinAlgError):
        if previous is None:
            raise
        return previous, math.inf, True


def _run_loop(env, nu, num_iterations, samples_per_iteration, learner, oc_solver,
              seed, beta_schedule, algorithm: str) -> LoopResult:
    N, m = int(num_iterations), int(samples_per_iteration)
    if N < 1 or m < 1:
        raise ValueError("need at least one iteration and one sample per iteration")
    dataset = env.new_dataset()
    initial_model = learner.initial()
    policy, _, _ = _solve_or_keep(oc_solver, initial_model, None)
    initial_policy = policy
    models, policies = [], []
    test_mean = np.zeros(N)
    test_stderr = np.zeros(N)
    train_kl = np.zeros(N)
    train_cls = np.full(N, math.nan)
    oc_slack = np.zeros(N)
    sizes = np.zeros(N, dtype=int)
    explore_counts = np.zeros(N, dtype=int)
    oc_failures = 0
    for n in range(1, N + 1):
        beta = beta_schedule(n)
        coins = substream(seed, "branch", n).random(m) < beta
        n_explore = int(coins.sum())
        explore_counts[n - 1] = n_explore
        if n_explore:
            t, s, a, s2 = env.collect_exploration(nu, n_explore,
                                                  substream(seed, "explore", n),
                                                  substream(seed, "stop-explore", n))
            dataset.append_batch(n, EXPLORATION, t, s, a, s2)
        if m - n_explore:
            t, s, a, s2 = env.collect_on_policy(policy, m - n_explore,
                                                substream(seed, "onpolicy", n),
                                                substream(seed, "stop-onpolicy", n))
            dataset.append_batch(n, ON_POLICY, t, s, a, s2)
        model = learner.fit(dataset)
        policy, slack, failed = _solve_or_keep(oc_solver, model, policy)
        oc_failures += int(failed)
        models.append(model)
        policies.append(policy)
        oc_slack[n - 1] = slack
        test_mean[n - 1], test_stderr[n - 1] = env.evaluate(policy, n, seed)
        everything = dataset.block()
        train_kl[n - 1] = empirical_loss(model, everything, KL)
        if env.discrete:
            train_cls[n - 1] = empirical_loss(model, everything, CLASSIFICATION)
        sizes[n - 1] = len(dataset)
    return LoopResult(
        algorithm=algorithm, seed=seed, num_iterations=N, samples_per_iteration=m,
        beta=beta_schedule(max(2, N)), exploration_name=getattr(nu, "name", "custom"),
        initial_model=initial_model, initial_policy=initial_policy,
        models=models, policies=policies, test_mean=test_mean, test_stderr=test_stderr,
        train_kl=train_kl, train_cls=train_cls, oc_slack=oc_slack,
        oc_failures=oc_failures, dataset=dataset, dataset_sizes=sizes,
        exploration_counts=explore_counts, exploration=nu, samples_consumed=N * m)


def run_dagger(env, nu, num_iterations, samples_per_iteration, learner, oc_solver,
               seed, beta: float = 0.5, algorithm: str = "dagger") -> LoopResult:
    """Iterative aggregation: per sample, explore w.p. ``beta`` else follow
    the latest policy's visitation; refit and re-solve each iteration."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return _run_loop(env, nu, num_iterations, samples_per_iteration, learner,
                     oc_solver, seed, lambda n: beta, algorithm)


def run_batch(env, nu, num_samples, learner, oc_solver, seed) -> LoopResult:
    """One-shot: m exploration transitions, one fit, one control solve."""
    return run_dagger(env, nu, 1, num_samples, learner, oc_solver, seed,
                      beta=1.0, algorithm="batch")


def run_batch_curve(env, nu, num_iterations, samples_per_iteration, learner,
                    oc_solver, seed) -> LoopResult:
    """Batch evaluated along a growing exploration stream.

    The fit at budget n*m uses n*m i.i.d. exploration samples, so each curve
    point is distributed exactly like an independent one-shot batch run while
    sharing the paired evaluation streams of the iterative runs.
    """
    return run_dagger(env, nu, num_iterations, samples_per_iteration, learner,
                      oc_solver, seed, beta=1.0, algorithm="batch")


def run_expert_seeded(env, nu_expert, num_iterations, samples_per_iteration,
                      learner, oc_solver, seed) -> LoopResult:
    """Expert data at the first iteration only, on-policy afterwards."""
    return _run_loop(env, nu_expert, num_iterations, samples_per_iteration, learner,
                     oc_solver, seed, lambda n: 1.0 if n == 1 else 0.0, "expert_seeded")


def select_policy(result: LoopResult, mode: str = "best"):
    """Pick the deployment policy: recorded-cost argmin, uniform mixture, or last."""
    if not result.policies:
        raise ValueError("empty policy sequence")
    if mode == "best":
        return result.best_policy
    if mode == "mixture":
        return result.mixture_policy
    if mode == "last":
        return result.policies[-1]
    raise ValueError(f"unknown selection mode: {mode!r}")
