"""Benchmark domains engineered to exhibit train/test mismatch.

* ``make_aliased_gridworld`` -- a tabular gridworld whose model class pools
  states into blocks.  A cheap-looking "trap" region (true behavior: every
  action returns to the start) shares blocks with cells near the good
  corridor, so a model fit only on exploration data believes the trap region
  is passable and the planner routes straight into it.

* ``make_delayed_plant`` -- a linear-Gaussian hover/tracking plant.  With no
  actuation delay the stationary linear model class contains the truth; a
  one-step delay hides the applied control from every model in the class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .explore import (ExplicitFiniteExploration, ExpertPolicyExploration,
                      TrajectoryNoiseExploration, uniform_finite_exploration)
from .mdp import ExplicitDist, FiniteMdp, exact_visitation, policy_cost
from .models import AliasedFtlLearner, RidgeOffsetLearner, TimeVaryingRidgeLearner
from .ocsolve import riccati_discounted, value_iteration
from .plant import LinearPlant
from .policies import TabularPolicy

UP, RIGHT, DOWN, LEFT = 0, 1, 2, 3
_MOVES = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}
_PERP = {UP: (LEFT, RIGHT), DOWN: (LEFT, RIGHT), LEFT: (UP, DOWN), RIGHT: (UP, DOWN)}


@dataclass
class GridworldSpec:
    """Tunable layout; the defaults realize the documented mismatch scenario."""

    rows: int = 4
    cols: int = 4
    start: tuple = (3, 0)
    goal: tuple = (0, 3)
    trap_cells: tuple = ((1, 1), (1, 2), (2, 1), (2, 2))
    alias_pairs: tuple = (((1, 1), (0, 1)), ((1, 2), (0, 2)),
                          ((2, 1), (1, 0)), ((2, 2), (2, 0)))
    corridor_cells: tuple = ((2, 0), (1, 0), (0, 0), (0, 1), (0, 2))
    corridor_cost: float = 0.45
    normal_cost: float = 0.6
    trap_cost: float = 0.05
    slip: float = 0.1
    discount: float = 0.95
    expert_softness: float = 0.15
    min_model_gap: float = 0.05


@dataclass(frozen=True)
class AliasedGridworld:
    """The constructed domain: true MDP, aliased model class, nu catalog."""

    mdp: FiniteMdp
    partition: np.ndarray
    learner: AliasedFtlLearner
    expert_policy: TabularPolicy
    optimal_policy: TabularPolicy
    nus: dict
    trap_states: np.ndarray
    model_gap_l1: float
    spec: GridworldSpec


def _cell_id(spec: GridworldSpec, cell) -> int:
    return cell[0] * spec.cols + cell[1]


def _build_transition(spec: GridworldSpec) -> tuple[np.ndarray, np.ndarray]:
    S = spec.rows * spec.cols
    A = 4
    T = np.zeros((S, A, S))
    C = np.full((S, A), spec.normal_cost)
    trap_ids = {_cell_id(spec, c) for c in spec.trap_cells}
    goal = _cell_id(spec, spec.goal)
    start = _cell_id(spec, spec.start)
    for c in spec.corridor_cells:
        C[_cell_id(spec, c), :] = spec.corridor_cost
    for c in spec.trap_cells:
        C[_cell_id(spec, c), :] = spec.trap_cost
    C[goal, :] = 0.0

    def move(r, c, action):
        dr, dc = _MOVES[action]
        nr, nc = r + dr, c + dc
        if 0 <= nr < spec.rows and 0 <= nc < spec.cols:
            return nr * spec.cols + nc
        return r * spec.cols + c

    for r in range(spec.rows):
        for c in range(spec.cols):
            s = r * spec.cols + c
            for a in range(A):
                if s == goal:
                    T[s, a, s] = 1.0           # absorbing, cost 0
                elif s in trap_ids:
                    T[s, a, start] = 1.0       # every action returns to start
                else:
                    T[s, a, move(r, c, a)] += 1.0 - spec.slip
                    for p in _PERP[a]:
                        T[s, a, move(r, c, p)] += spec.slip / 2.0
    return T, C


def _pair_l1_modeling_error(weights: np.ndarray, rows: np.ndarray) -> float:
    """Exact min_m sum_i w_i ||rows_i - m||_1 for blocks of one or two rows;
    a coordinatewise relaxation (valid lower bound) for larger blocks."""
    if rows.shape[0] == 1:
        return 0.0
    if rows.shape[0] == 2:
        return float(min(weights) * np.abs(rows[0] - rows[1]).sum())
    # weighted-median relaxation: drop the simplex constraint on m
    order = np.argsort(rows, axis=0)
    total = 0.0
    for j in range(rows.shape[1]):
        col = rows[:, j]
        w = weights
        idx = np.argsort(col)
        cw = np.cumsum(w[idx])
        med = col[idx][np.searchsorted(cw, cw[-1] / 2.0)]
        total += float((w * np.abs(col - med)).sum())
    return total


def aliased_l1_modeling_error(mdp: FiniteMdp, partition: np.ndarray,
                              dist: ExplicitDist) -> float:
    """Best-in-class expected L1 error under ``dist`` (exact for pair blocks)."""
    total = 0.0
    for b in np.unique(partition):
        members = np.flatnonzero(partition == b)
        for a in range(mdp.num_actions):
            w = dist.table[members, a]
            if w.sum() <= 0:
                continue
            total += _pair_l1_modeling_error(w, mdp.transition[members, a])
    return total


def make_aliased_gridworld(spec: GridworldSpec | None = None) -> AliasedGridworld:
    """Build the domain and assert its agnosticity at construction time."""
    spec = spec or GridworldSpec()
    if spec.rows < 3 or spec.cols < 3:
        raise ValueError("gridworld needs at least a 3x3 grid")
    T, C = _build_transition(spec)
    S, A = C.shape
    mu = np.zeros(S)
    mu[_cell_id(spec, spec.start)] = 1.0
    mdp = FiniteMdp(T, C, mu, spec.discount, cost_min=0.0,
                    cost_max=float(C.max()))

    partition = np.arange(S)
    for a_cell, b_cell in spec.alias_pairs:
        ia, ib = _cell_id(spec, a_cell), _cell_id(spec, b_cell)
        partition[partition == partition[ib]] = partition[ia]
    # compact block ids
    _, partition = np.unique(partition, return_inverse=True)

    uniform = uniform_finite_exploration(S, A).dist
    gap = aliased_l1_modeling_error(mdp, partition, uniform)
    if gap <= spec.min_model_gap:
        raise ValueError(
            f"aliasing partition is (near-)realizable: best-in-class L1 error "
            f"{gap:.4f} <= {spec.min_model_gap}; the domain must be agnostic")

    sol = value_iteration(mdp.transition, mdp.cost, mdp.discount, tol=1e-10)
    optimal = sol.policy
    eps = spec.expert_softness
    expert_probs = optimal.probs * (1.0 - eps) + eps / A
    expert = TabularPolicy(expert_probs)

    trap_states = np.array(sorted(_cell_id(spec, c) for c in spec.trap_cells))
    nontrap = np.ones((S, A))
    nontrap[trap_states, :] = 0.0
    nus = {
        "expert": ExplicitFiniteExploration(exact_visitation(mdp, expert), name="expert"),
        "uniform": ExplicitFiniteExploration(uniform, name="uniform"),
        "trap_avoiding": ExplicitFiniteExploration(
            ExplicitDist(nontrap / nontrap.sum()), name="trap_avoiding"),
    }
    learner = AliasedFtlLearner(partition=partition, num_actions=A)
    return AliasedGridworld(mdp, partition, learner, expert, optimal, nus,
                            trap_states, gap, spec)


def trap_visitation_mass(world: AliasedGridworld, policy) -> float:
    """Exact visitation probability mass inside the trap region."""
    d = exact_visitation(world.mdp, policy).table
    return float(d[world.trap_states, :].sum())


# ---------------------------------------------------------------------------
# delayed linear plant
# ---------------------------------------------------------------------------

@dataclass
class PlantSpec:
    """Hover / rotation-tracking surrogate: a 6-d double integrator whose
    velocity channels are driven by the controls and by two weakly damped
    auxiliary modes (the cross-coupling)."""

    dt: float = 0.05
    horizon: int = 400
    actuation_delay: int = 0
    process_noise_std: float = 1.0      # on force/torque channels
    coupling: float = 0.8               # auxiliary -> acceleration gain
    control_to_aux: float = 0.6         # control -> auxiliary gain
    aux_damping: float = 0.02
    aux_rotation: float = 0.25          # radians per step between the aux modes
    q_weight: float = 1.0
    r_weight: float = 0.1
    discount: float = 0.99
    initial_std: float = 0.05
    rotation_reference: bool = False
    rotation_radius: float = 5.0
    rotation_cycles: int = 4
    set_state_capable: bool = True
    # exploration defaults
    nu_t_state_cov: float = 0.0025
    nu_t_action_cov: float = 0.0001
    nu_en_control_cov: float = 0.0001


@dataclass(frozen=True)
class DelayedPlantDomain:
    plant: LinearPlant
    base_a: np.ndarray
    base_b: np.ndarray
    expert_policy: object
    nus: dict
    learner: object
    spec: PlantSpec


def _true_matrices(spec: PlantSpec) -> tuple[np.ndarray, np.ndarray]:
    dt = spec.dt
    A = np.eye(6)
    A[0, 2] = A[1, 3] = dt                      # position <- velocity
    A[2, 4] = A[3, 5] = dt * spec.coupling      # velocity <- auxiliary modes
    rot = (1.0 - spec.aux_damping) * np.array(
        [[np.cos(spec.aux_rotation), -np.sin(spec.aux_rotation)],
         [np.sin(spec.aux_rotation), np.cos(spec.aux_rotation)]])
    A[4:6, 4:6] = rot
    B = np.zeros((6, 2))
    B[2, 0] = B[3, 1] = dt                      # controls accelerate
    B[4, 0] = B[5, 1] = dt * spec.control_to_aux
    return A, B


def make_delayed_plant(spec: PlantSpec | None = None) -> DelayedPlantDomain:
    """Build the plant, the delay-ignorant expert, and the nu catalog."""
    spec = spec or PlantSpec()
    if spec.actuation_delay not in (0, 1):
        raise ValueError("actuation_delay must be 0 or 1")
    A, B = _true_matrices(spec)
    d = 6
    noise = np.zeros((d, d))
    sig = (spec.dt * spec.process_noise_std) ** 2
    for i in (2, 3, 4, 5):                       # forces / torques only
        noise[i, i] = sig
    Q = spec.q_weight * np.eye(d)
    R = spec.r_weight * np.eye(2)
    reference = None
    if spec.rotation_reference:
        steps = np.arange(spec.horizon + 1)
        angle = 2.0 * np.pi * spec.rotation_cycles * steps / spec.horizon
        reference = np.zeros((spec.horizon + 1, d))
        reference[:, 0] = spec.rotation_radius * np.cos(angle)
        reference[:, 1] = spec.rotation_radius * np.sin(angle)
    plant = LinearPlant(
        dynamics_a=A, dynamics_b=B, noise_cov=noise, cost_q=Q, cost_r=R,
        initial_mean=np.zeros(d), initial_cov=spec.initial_std ** 2 * np.eye(d),
        discount=spec.discount, horizon=spec.horizon,
        actuation_delay=spec.actuation_delay, reference_trajectory=reference,
        set_state_capable=spec.set_state_capable)

    # the expert linearizes the true delay-free dynamics; the delay is unknown
    # to it, which is exactly what makes it beatable when delay = 1
    expert = riccati_discounted(A, B, Q, R, discount=spec.discount, tol=1e-12).policy

    base_a = np.eye(d)
    base_b = B.copy()
    if spec.rotation_reference:
        learner = TimeVaryingRidgeLearner(base_a, base_b, horizon=spec.horizon,
                                          lam=1e-3, reference=reference)
    else:
        learner = RidgeOffsetLearner(base_a, base_b, lam=1e-3)
    nus = {
        "traj_noise": TrajectoryNoiseExploration(
            state_cov=spec.nu_t_state_cov * np.eye(d),
            action_cov=spec.nu_t_action_cov * np.eye(2), name="traj_noise"),
        "expert": ExpertPolicyExploration(expert, name="expert"),
        "expert_noise": ExpertPolicyExploration(
            expert, name="expert_noise",
            control_noise_cov=spec.nu_en_control_cov * np.eye(2)),
    }
    return DelayedPlantDomain(plant, base_a, base_b, expert, nus, learner, spec)
