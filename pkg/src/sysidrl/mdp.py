"""Finite MDPs: exact discounted visitation, exact policy evaluation, sampling.

The discounted state-action visitation of a policy is the normalized
discounted average of the per-step state-action distributions,

    D(s, a) = (1 - gamma) * sum_t gamma^(t-1) P[s_t = s, a_t = a],

computed here by a direct linear solve of the flow equation.  Sampling from it
uses geometric trajectory stopping: continue each step with probability gamma
and return the state-action pair at the stopping step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .policies import MixturePolicy, TabularPolicy

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class FiniteMdp:
    """Explicit tabular MDP.

    Attributes:
        transition: (S, A, S) tensor, ``transition[s, a]`` a distribution.
        cost: (S, A) known cost table.
        initial_dist: distribution over start states.
        discount: gamma in (0, 1).
        cost_min / cost_max: declared cost bounds (default: observed).
    """

    transition: np.ndarray
    cost: np.ndarray
    initial_dist: np.ndarray
    discount: float
    cost_min: float | None = None
    cost_max: float | None = None

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        C = np.asarray(self.cost, dtype=float)
        mu = np.asarray(self.initial_dist, dtype=float)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "cost", C)
        object.__setattr__(self, "initial_dist", mu)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise ValueError("transition must have shape (S, A, S)")
        if C.shape != T.shape[:2]:
            raise ValueError("cost table must have shape (S, A)")
        if mu.shape != (T.shape[0],):
            raise ValueError("initial distribution length must equal S")
        if np.any(T < 0):
            raise ValueError("transition probabilities must be nonnegative")
        if np.max(np.abs(T.sum(axis=2) - 1.0)) > _PROB_TOL:
            raise ValueError("every transition row must sum to 1 within 1e-12")
        if abs(mu.sum() - 1.0) > _PROB_TOL or np.any(mu < 0):
            raise ValueError("initial distribution must sum to 1 within 1e-12")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        lo = float(C.min()) if self.cost_min is None else float(self.cost_min)
        hi = float(C.max()) if self.cost_max is None else float(self.cost_max)
        object.__setattr__(self, "cost_min", lo)
        object.__setattr__(self, "cost_max", hi)
        if C.min() < lo - 1e-12 or C.max() > hi + 1e-12:
            raise ValueError("costs fall outside the declared [cost_min, cost_max]")

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def cost_range(self) -> float:
        return self.cost_max - self.cost_min

    # -- forward simulation (reset model; generative access also available
    #    since the tensor is explicit) -------------------------------------

    def reset(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.num_states, p=self.initial_dist))

    def step(self, state: int, action: int, rng: np.random.Generator) -> int:
        return int(rng.choice(self.num_states, p=self.transition[state, action]))


@dataclass(frozen=True)
class ExplicitDist:
    """Explicit state-action distribution over a finite MDP."""

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        object.__setattr__(self, "table", table)
        if table.ndim != 2:
            raise ValueError("state-action table must be 2-d")
        if np.any(table < -1e-15):
            raise ValueError("state-action probabilities must be nonnegative")
        if abs(table.sum() - 1.0) > 1e-10:
            raise ValueError("state-action distribution must sum to 1 within 1e-10")

    def sample(self, rng: np.random.Generator) -> tuple[int, int]:
        flat = self.table.reshape(-1)
        idx = int(rng.choice(flat.shape[0], p=flat / flat.sum()))
        return idx // self.table.shape[1], idx % self.table.shape[1]


@dataclass(frozen=True)
class SamplerDist:
    """State-action distribution available only through draws."""

    draw: object  # callable rng -> (state, action)
    description: str = ""

    def sample(self, rng: np.random.Generator):
        return self.draw(rng)


StateActionDist = ExplicitDist | SamplerDist


def _policy_table(mdp: FiniteMdp, policy) -> np.ndarray:
    if isinstance(policy, TabularPolicy):
        if policy.probs.shape != (mdp.num_states, mdp.num_actions):
            raise ValueError("policy table does not match the MDP dimensions")
        return policy.probs
    raise TypeError("exact finite-MDP computations need a tabular policy")


def state_transition_matrix(mdp: FiniteMdp, policy: TabularPolicy) -> np.ndarray:
    """P[s, s'] = sum_a pi(a|s) T(s'|s, a)."""
    pi = _policy_table(mdp, policy)
    return np.einsum("sa,sax->sx", pi, mdp.transition)


def exact_visitation(mdp: FiniteMdp, policy) -> ExplicitDist:
    """Exact discounted state-action visitation of ``policy`` from mu.

    Solves the linear flow equation d = (1-gamma) mu + gamma P^T d in state
    space and expands by the action distribution.  Mixture policies average
    their members' visitations.
    """
    if isinstance(policy, MixturePolicy):
        tables = [exact_visitation(mdp, p).table for p in policy.members]
        return ExplicitDist(np.mean(tables, axis=0))
    pi = _policy_table(mdp, policy)
    P = state_transition_matrix(mdp, policy)
    g = mdp.discount
    d_state = np.linalg.solve(np.eye(mdp.num_states) - g * P.T, (1.0 - g) * mdp.initial_dist)
    d_state = np.maximum(d_state, 0.0)
    return ExplicitDist(d_state[:, None] * pi)


def flow_residual(mdp: FiniteMdp, policy: TabularPolicy, dist: ExplicitDist) -> float:
    """Sup-norm defect of the visitation flow equation at ``dist``."""
    pi = _policy_table(mdp, policy)
    g = mdp.discount
    d_state = dist.table.sum(axis=1)
    P = state_transition_matrix(mdp, policy)
    rhs = (1.0 - g) * mdp.initial_dist + g * P.T @ d_state
    return float(np.max(np.abs(rhs[:, None] * pi - dist.table)))


def policy_value(mdp: FiniteMdp, policy) -> np.ndarray:
    """V_pi from the exact linear solve (I - gamma P_pi) V = C_pi."""
    if isinstance(policy, MixturePolicy):
        return np.mean([policy_value(mdp, p) for p in policy.members], axis=0)
    pi = _policy_table(mdp, policy)
    P = state_transition_matrix(mdp, policy)
    c_pi = np.einsum("sa,sa->s", pi, mdp.cost)
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * P, c_pi)


def policy_cost(mdp: FiniteMdp, policy) -> float:
    """J_mu(pi) = <mu, V_pi>, the expected discounted cost from the start."""
    return float(mdp.initial_dist @ policy_value(mdp, policy))


def value_under_model(transition: np.ndarray, cost: np.ndarray, discount: float,
                      policy: TabularPolicy) -> np.ndarray:
    """V_pi when the dynamics are an arbitrary (S, A, S) tensor (e.g. a model)."""
    pi = policy.probs
    P = np.einsum("sa,sax->sx", pi, transition)
    c_pi = np.einsum("sa,sa->s", pi, cost)
    return np.linalg.solve(np.eye(transition.shape[0]) - discount * P, c_pi)


def stopping_cap(discount: float) -> int:
    """Hard step cap for geometric stopping; bias below gamma^cap."""
    return int(math.ceil(50.0 / (1.0 - discount)))


def sample_visitation(mdp: FiniteMdp, policy, rng: np.random.Generator,
                      diagnostics: dict | None = None,
                      stop_rng: np.random.Generator | None = None) -> tuple[int, int]:
    """One draw from D_{mu,pi} by geometric trajectory stopping.

    Runs a fresh trajectory from mu; at each step the trajectory continues
    with probability gamma.  Returns the state-action pair of the stopping
    step.  A hard cap guards against astronomically long trajectories; capped
    draws are counted in ``diagnostics['truncated']``.
    """
    if stop_rng is None:
        stop_rng = rng
    if isinstance(policy, MixturePolicy):
        policy = policy.pick(rng)
    cap = stopping_cap(mdp.discount)
    s = mdp.reset(rng)
    for _ in range(cap):
        a = policy.sample_action(s, rng)
        if stop_rng.random() >= mdp.discount:  # stop with probability 1 - gamma
            return s, a
        s = mdp.step(s, a, rng)
    if diagnostics is not None:
        diagnostics["truncated"] = diagnostics.get("truncated", 0) + 1
    return s, policy.sample_action(s, rng)


def sample_visitation_counts(mdp: FiniteMdp, policy: TabularPolicy, num_draws: int,
                             rng: np.random.Generator) -> np.ndarray:
    """Empirical (S, A) count table of ``num_draws`` i.i.d. visitation draws.

    Simulates the whole population of trajectories at once as per-state
    counts (multinomial transitions, binomial stop-thinning), which has
    exactly the law of aggregating independent ``sample_visitation`` draws.
    """
    S, A = mdp.num_states, mdp.num_actions
    pi = _policy_table(mdp, policy)
    counts = np.zeros((S, A), dtype=np.int64)
    alive = rng.multinomial(num_draws, mdp.initial_dist)
    cap = stopping_cap(mdp.discount)
    for _ in range(cap):
        if alive.sum() == 0:
            break
        # split each state's population across actions, then stop-thin
        sa = np.zeros((S, A), dtype=np.int64)
        for s in range(S):
            if alive[s]:
                sa[s] = rng.multinomial(alive[s], pi[s])
        stopped = rng.binomial(sa, 1.0 - mdp.discount)
        counts += stopped
        moving = sa - stopped
        nxt = np.zeros(S, dtype=np.int64)
        for s in range(S):
            for a in range(A):
                if moving[s, a]:
                    nxt += rng.multinomial(moving[s, a], mdp.transition[s, a])
        alive = nxt
    # trajectories that hit the cap are harvested where they stand
    for s in range(S):
        if alive[s]:
            counts[s] += rng.multinomial(alive[s], pi[s])
    return counts


def rollout_return(mdp: FiniteMdp, policy, rng: np.random.Generator,
                   num_steps: int) -> float:
    """Truncated discounted cost of one simulated trajectory (test oracle)."""
    if isinstance(policy, MixturePolicy):
        policy = policy.pick(rng)
    s = mdp.reset(rng)
    total, disc = 0.0, 1.0
    for _ in range(num_steps):
        a = policy.sample_action(s, rng)
        total += disc * mdp.cost[s, a]
        disc *= mdp.discount
        s = mdp.step(s, a, rng)
    return total
