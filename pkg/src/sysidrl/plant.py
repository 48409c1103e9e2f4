"""Discrete-time linear-Gaussian plant with quadratic tracking cost.

The plant state is the *deviation* from the reference trajectory.  With a
moving reference the deviation dynamics carry a drift equal to the per-step
reference motion, so a time-varying affine model class can represent the
plant exactly when there is no actuation delay:

    e_{t+1} = A e_t + B u_applied(t) + (ref_{t+1} - ref_t) + noise.

With ``actuation_delay = 1`` the control applied at step t is the one
commanded at step t-1.  The pending control is internal simulator state that
no model class observes, which is what makes the identification problem
agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .policies import LinearFeedback, MixturePolicy, TimeVaryingAffine

_EIG_TOL = 1e-10


def check_symmetric_psd(mat: np.ndarray, name: str, strict: bool = False) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(mat - mat.T)) > 1e-9:
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    if strict and eigs.min() <= _EIG_TOL:
        raise ValueError(f"{name} must be positive definite")
    if not strict and eigs.min() < -_EIG_TOL:
        raise ValueError(f"{name} must be positive semidefinite")
    return mat


@dataclass(frozen=True)
class LinearPlant:
    """Linear-Gaussian tracking plant (state = deviation from reference)."""

    dynamics_a: np.ndarray
    dynamics_b: np.ndarray
    noise_cov: np.ndarray
    cost_q: np.ndarray
    cost_r: np.ndarray
    initial_mean: np.ndarray
    initial_cov: np.ndarray
    discount: float
    horizon: int
    actuation_delay: int = 0
    reference_trajectory: np.ndarray | None = None
    set_state_capable: bool = True

    def __post_init__(self):
        A = np.asarray(self.dynamics_a, dtype=float)
        B = np.asarray(self.dynamics_b, dtype=float)
        d, k = B.shape
        if A.shape != (d, d):
            raise ValueError("dynamics_a must be square and match dynamics_b rows")
        object.__setattr__(self, "dynamics_a", A)
        object.__setattr__(self, "dynamics_b", B)
        object.__setattr__(self, "noise_cov", check_symmetric_psd(self.noise_cov, "noise_cov"))
        object.__setattr__(self, "cost_q", check_symmetric_psd(self.cost_q, "cost_q"))
        object.__setattr__(self, "cost_r", check_symmetric_psd(self.cost_r, "cost_r", strict=True))
        object.__setattr__(self, "initial_mean", np.asarray(self.initial_mean, dtype=float).reshape(d))
        object.__setattr__(self, "initial_cov", check_symmetric_psd(self.initial_cov, "initial_cov"))
        if self.actuation_delay not in (0, 1):
            raise ValueError("actuation_delay must be 0 or 1")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        ref = self.reference_trajectory
        if ref is not None:
            ref = np.asarray(ref, dtype=float)
            if ref.shape != (self.horizon + 1, d):
                raise ValueError("reference trajectory must have shape (horizon + 1, d)")
        object.__setattr__(self, "reference_trajectory", ref)
        # per-step reference motion entering the deviation dynamics
        if ref is None:
            drift = np.zeros((self.horizon, d))
        else:
            drift = ref[1:] - ref[:-1]
        object.__setattr__(self, "_drift", drift)
        object.__setattr__(self, "_noise_chol", np.linalg.cholesky(
            self.noise_cov + 1e-300 * np.eye(d)) if np.any(self.noise_cov) else None)

    @property
    def state_dim(self) -> int:
        return self.dynamics_b.shape[0]

    @property
    def control_dim(self) -> int:
        return self.dynamics_b.shape[1]

    def drift(self, t: int) -> np.ndarray:
        return self._drift[min(t, self.horizon - 1)]

    # -- batched simulation primitives -------------------------------------

    def sample_initial(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.state_dim))
        if np.any(self.initial_cov):
            z = z @ np.linalg.cholesky(self.initial_cov).T
        else:
            z = np.zeros((n, self.state_dim))
        return z + self.initial_mean

    def sample_noise(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._noise_chol is None:
            return np.zeros((n, self.state_dim))
        return rng.standard_normal((n, self.state_dim)) @ self._noise_chol.T

    def next_states(self, t: int, states: np.ndarray, applied: np.ndarray,
                    noise: np.ndarray) -> np.ndarray:
        return states @ self.dynamics_a.T + applied @ self.dynamics_b.T + self.drift(t) + noise


def _controls(policy, states: np.ndarray, t: int) -> np.ndarray:
    if isinstance(policy, (LinearFeedback, TimeVaryingAffine)):
        return policy.control(states, t)
    raise TypeError(f"plant simulation needs an affine policy, got {type(policy).__name__}")


@dataclass
class RolloutStats:
    """Mean and spread of total episode cost, with divergence accounting."""

    mean: float
    stderr: float
    episode_costs: np.ndarray
    clamped_episodes: int = 0


def rollout_cost(plant: LinearPlant, policy, num_episodes: int, rng: np.random.Generator,
                 discounted: bool = False, cost_ceiling: float = 1e9,
                 state_norm_limit: float = 1e6) -> RolloutStats:
    """Test-time evaluation: full-horizon episodes, never aborted.

    Episodes whose state norm blows past ``state_norm_limit`` are frozen and
    charged ``cost_ceiling`` (a diverging controller is a reportable outcome,
    not an exception).  Noise is drawn on a fixed schedule so paired runs see
    identical disturbances regardless of the policy under test.
    """
    if isinstance(policy, MixturePolicy):
        members = [int(rng.integers(len(policy.members))) for _ in range(num_episodes)]
        # simulate each member's episode group under a split of the same stream
        costs = np.empty(num_episodes)
        clamped = 0
        for j, member in enumerate(policy.members):
            idx = [i for i, mi in enumerate(members) if mi == j]
            if not idx:
                continue
            sub = rollout_cost(plant, member, len(idx), rng, discounted,
                               cost_ceiling, state_norm_limit)
            costs[idx] = sub.episode_costs
            clamped += sub.clamped_episodes
        mean = float(costs.mean())
        stderr = float(costs.std(ddof=1) / np.sqrt(num_episodes)) if num_episodes > 1 else 0.0
        return RolloutStats(mean, stderr, costs, clamped)

    n = int(num_episodes)
    states = plant.sample_initial(n, rng)
    pending = np.zeros((n, plant.control_dim))
    total = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    disc = 1.0
    for t in range(plant.horizon):
        noise = plant.sample_noise(n, rng)  # drawn every step to keep streams aligned
        u = _controls(policy, states, t)
        applied = pending if plant.actuation_delay else u
        stage = (np.einsum("ni,ij,nj->n", states, plant.cost_q, states)
                 + np.einsum("ni,ij,nj->n", u, plant.cost_r, u))
        total[alive] += disc * stage[alive]
        if discounted:
            disc *= plant.discount
        states = np.where(alive[:, None], plant.next_states(t, states, applied, noise), states)
        if plant.actuation_delay:
            pending = np.where(alive[:, None], u, pending)
        blown = alive & (np.linalg.norm(states, axis=1) > state_norm_limit)
        alive &= ~blown
    clamped = int((~alive).sum())
    total[~alive] = cost_ceiling
    total = np.minimum(total, cost_ceiling)
    mean = float(total.mean())
    stderr = float(total.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return RolloutStats(mean, stderr, total, clamped)


def collect_trajectory_samples(plant: LinearPlant, policy, num_samples: int,
                               rng: np.random.Generator,
                               control_noise_cov: np.ndarray | None = None,
                               abort_threshold: float | None = 5.0,
                               stop_rng: np.random.Generator | None = None,
                               ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw transitions by geometric stopping along fresh trajectories.

    Runs ``num_samples`` independent trajectories of ``policy`` (plus optional
    white control noise); each continues with probability ``plant.discount``
    per step and contributes the transition at its stopping step.  Training
    trajectories also stop when ||[state; control]|| exceeds the abort
    threshold.  Returns arrays (t, state, control, next_state).  Stopping
    coins come from ``stop_rng`` when given, so lengthening the noise stream
    never shifts the stop decisions.
    """
    n = int(num_samples)
    if stop_rng is None:
        stop_rng = rng
    d, k = plant.state_dim, plant.control_dim
    states = plant.sample_initial(n, rng)
    pending = np.zeros((n, k))
    out_t = np.zeros(n, dtype=int)
    out_s = np.zeros((n, d))
    out_u = np.zeros((n, k))
    out_s2 = np.zeros((n, d))
    active = np.ones(n, dtype=bool)
    u_chol = None
    if control_noise_cov is not None and np.any(control_noise_cov):
        u_chol = np.linalg.cholesky(np.asarray(control_noise_cov, dtype=float))
    for t in range(plant.horizon):
        if not active.any():
            break
        noise = plant.sample_noise(n, rng)
        u = _controls(policy, states, t)
        if u_chol is not None:
            u = u + rng.standard_normal((n, k)) @ u_chol.T
        applied = pending if plant.actuation_delay else u
        nxt = plant.next_states(t, states, applied, noise)
        stop = stop_rng.random(n) >= plant.discount
        if t == plant.horizon - 1:
            stop = np.ones(n, dtype=bool)
        if abort_threshold is not None:
            joint = np.sqrt(np.linalg.norm(states, axis=1) ** 2 + np.linalg.norm(u, axis=1) ** 2)
            stop |= joint > abort_threshold
        harvest = active & stop
        out_t[harvest] = t
        out_s[harvest] = states[harvest]
        out_u[harvest] = u[harvest]
        out_s2[harvest] = nxt[harvest]
        active &= ~stop
        states = np.where(active[:, None], nxt, states)
        if plant.actuation_delay:
            pending = np.where(active[:, None], u, pending)
    return out_t, out_s, out_u, out_s2


def probe_transitions(plant: LinearPlant, times: np.ndarray, states: np.ndarray,
                      controls: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Generative one-step probes: set the state, command a control, observe.

    Requires set-state capability; the internal pending control is reset to
    zero, so under actuation delay the commanded control does not influence
    the observed transition.
    """
    if not plant.set_state_capable:
        raise RuntimeError("probe_transitions needs a set-state capable plant")
    n = states.shape[0]
    noise = plant.sample_noise(n, rng)
    applied = np.zeros_like(controls) if plant.actuation_delay else controls
    drifts = plant._drift[np.minimum(np.asarray(times, dtype=int), plant.horizon - 1)]
    return states @ plant.dynamics_a.T + applied @ plant.dynamics_b.T + drifts + noise
