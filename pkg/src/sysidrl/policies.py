"""Policy representations shared by the finite and continuous environments.

Four variants:

* ``TabularPolicy``     -- stochastic action table for finite MDPs.
* ``LinearFeedback``    -- stationary affine state feedback u = K x + b.
* ``TimeVaryingAffine`` -- per-step affine feedback u_t = K_t x + b_t.
* ``MixturePolicy``     -- picks one member uniformly at trajectory start and
                           follows it for the whole trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class TabularPolicy:
    """Stochastic policy over a finite state-action space.

    ``probs[s, a]`` is the probability of action ``a`` in state ``s``.
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 2:
            raise ValueError("tabular policy needs a 2-d (states x actions) table")
        if np.any(probs < 0):
            raise ValueError("tabular policy has negative probabilities")
        rowsum = probs.sum(axis=1)
        if np.max(np.abs(rowsum - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("tabular policy rows must sum to 1 within 1e-12")

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    def sample_action(self, state: int, rng: np.random.Generator) -> int:
        return int(rng.choice(self.probs.shape[1], p=self.probs[state]))

    @staticmethod
    def deterministic(actions: np.ndarray, num_actions: int) -> "TabularPolicy":
        """Point-mass policy from an integer action per state."""
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.shape[0], num_actions))
        probs[np.arange(actions.shape[0]), actions] = 1.0
        return TabularPolicy(probs)

    @staticmethod
    def uniform(num_states: int, num_actions: int) -> "TabularPolicy":
        return TabularPolicy(np.full((num_states, num_actions), 1.0 / num_actions))


@dataclass(frozen=True)
class LinearFeedback:
    """Stationary affine controller u = K x + offset."""

    gain: np.ndarray
    offset: np.ndarray | None = None

    def __post_init__(self):
        gain = np.atleast_2d(np.asarray(self.gain, dtype=float))
        offset = self.offset
        if offset is None:
            offset = np.zeros(gain.shape[0])
        offset = np.asarray(offset, dtype=float).reshape(-1)
        if offset.shape[0] != gain.shape[0]:
            raise ValueError("offset length must match gain rows")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "offset", offset)

    def control(self, state: np.ndarray, t: int = 0) -> np.ndarray:
        # state may be (d,) or a batch (n, d); both map through the same affine law
        return state @ self.gain.T + self.offset


@dataclass(frozen=True)
class TimeVaryingAffine:
    """Per-step affine controller u_t = gains[t] x + offsets[t].

    Steps past the last entry reuse the final gain, so the controller stays
    defined on episodes longer than it was synthesized for.
    """

    gains: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        offsets = np.asarray(self.offsets, dtype=float)
        if gains.ndim != 3 or offsets.ndim != 2 or gains.shape[0] != offsets.shape[0]:
            raise ValueError("need gains (H, k, d) and offsets (H, k)")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "offsets", offsets)

    @property
    def horizon(self) -> int:
        return self.gains.shape[0]

    def control(self, state: np.ndarray, t: int) -> np.ndarray:
        i = min(t, self.horizon - 1)
        return state @ self.gains[i].T + self.offsets[i]


@dataclass(frozen=True)
class MixturePolicy:
    """Uniform mixture: one member is drawn per trajectory and kept throughout."""

    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("mixture needs at least one member policy")
        object.__setattr__(self, "members", members)

    def pick(self, rng: np.random.Generator):
        return self.members[int(rng.integers(len(self.members)))]


Policy = TabularPolicy | LinearFeedback | TimeVaryingAffine | MixturePolicy
