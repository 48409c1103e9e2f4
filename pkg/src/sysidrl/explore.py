"""Exploration distributions: where the learner samples transitions from.

Finite variants are explicit state-action tables.  Continuous variants are
sampling procedures: white noise around the reference trajectory (needs a
set-state capable simulator), or running an expert controller forward with
geometric stopping, optionally with extra white noise in its controls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import ExplicitDist, FiniteMdp
from .plant import LinearPlant, collect_trajectory_samples, probe_transitions


class CapabilityError(RuntimeError):
    """The exploration distribution needs a simulator capability that the
    environment does not provide (e.g. set-state on a reset-only model)."""


@dataclass(frozen=True)
class ExplicitFiniteExploration:
    """Explicit nu over state-action pairs; transitions drawn generatively."""

    dist: ExplicitDist
    name: str = "explicit"

    def sample(self, mdp: FiniteMdp, m: int, rng: np.random.Generator):
        table = self.dist.table
        flat = table.reshape(-1)
        idx = rng.choice(flat.shape[0], size=m, p=flat / flat.sum())
        s, a = idx // table.shape[1], idx % table.shape[1]
        s2 = np.empty(m, dtype=np.int64)
        for i in range(m):
            s2[i] = mdp.step(int(s[i]), int(a[i]), rng)
        return s, a, s2


def uniform_finite_exploration(num_states: int, num_actions: int) -> ExplicitFiniteExploration:
    table = np.full((num_states, num_actions), 1.0 / (num_states * num_actions))
    return ExplicitFiniteExploration(ExplicitDist(table), name="uniform")


@dataclass(frozen=True)
class TrajectoryNoiseExploration:
    """White Gaussian noise on states and actions along the reference (nu_t).

    State-action pairs are placed by setting the simulator state, which
    requires generative (set-state) access.
    """

    state_cov: np.ndarray
    action_cov: np.ndarray
    name: str = "traj_noise"

    def sample(self, plant: LinearPlant, m: int, rng: np.random.Generator,
               abort_threshold: float | None = None,
               stop_rng: np.random.Generator | None = None):
        if not getattr(plant, "set_state_capable", True):
            raise CapabilityError("trajectory-noise exploration needs a set-state capable "
                                  "simulator, but this plant is reset-only")
        d, k = plant.state_dim, plant.control_dim
        t = rng.integers(plant.horizon, size=m)
        s = rng.standard_normal((m, d)) @ np.linalg.cholesky(np.asarray(self.state_cov)).T
        u = rng.standard_normal((m, k)) @ np.linalg.cholesky(np.asarray(self.action_cov)).T
        s2 = probe_transitions(plant, t, s, u, rng)
        return t, s, u, s2


@dataclass(frozen=True)
class ExpertPolicyExploration:
    """Run an expert controller from reset with geometric stopping (nu_e)."""

    policy: object
    name: str = "expert"
    control_noise_cov: np.ndarray | None = None   # nu_en when set

    def sample(self, plant: LinearPlant, m: int, rng: np.random.Generator,
               abort_threshold: float | None = 5.0,
               stop_rng: np.random.Generator | None = None):
        return collect_trajectory_samples(plant, self.policy, m, rng,
                                          control_noise_cov=self.control_noise_cov,
                                          abort_threshold=abort_threshold,
                                          stop_rng=stop_rng)
