"""Transition-model classes and their follow-the-leader / ridge fitters.

Dataset aggregation makes follow-the-leader the online update rule: the
model used at iteration n is the loss minimizer over all samples seen so
far.  Each fitter here is the exact minimizer of its class's training
objective on the aggregate, so refitting on the growing dataset *is* the
no-regret update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import SampleBlock, TransitionDataset

_ROW_TOL = 1e-12


# ---------------------------------------------------------------------------
# model variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TabularModel:
    """Per-(state, action) estimated next-state distributions."""

    probs: np.ndarray
    counts: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if np.max(np.abs(probs.sum(axis=2) - 1.0)) > _ROW_TOL:
            raise ValueError("model rows must sum to 1 within 1e-12")

    def as_tensor(self) -> np.ndarray:
        return self.probs

    def row(self, s: int, a: int) -> np.ndarray:
        return self.probs[s, a]


@dataclass(frozen=True)
class AliasedTabularModel:
    """Tabular model constrained to predict identically within state blocks.

    ``partition[s]`` is the block id of state ``s``; all states of a block
    share one predicted next-state distribution per action.  This is the
    representational bottleneck that makes the class agnostic.
    """

    partition: np.ndarray
    block_probs: np.ndarray

    def __post_init__(self):
        partition = np.asarray(self.partition, dtype=int)
        bp = np.asarray(self.block_probs, dtype=float)
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "block_probs", bp)
        if np.max(np.abs(bp.sum(axis=2) - 1.0)) > _ROW_TOL:
            raise ValueError("block rows must sum to 1 within 1e-12")

    def as_tensor(self) -> np.ndarray:
        return self.block_probs[self.partition]

    def row(self, s: int, a: int) -> np.ndarray:
        return self.block_probs[self.partition[s], a]


@dataclass(frozen=True)
class LinearOffsetModel:
    """Stationary linear model (A + A', B + B') around a fixed base pair.

    Predictions are deviations; the declared noise covariance (identity by
    default) fixes the Gaussian log-likelihood used for KL-style losses.
    """

    base_a: np.ndarray
    base_b: np.ndarray
    off_a: np.ndarray
    off_b: np.ndarray
    noise_cov: np.ndarray | None = None

    def __post_init__(self):
        d, k = np.asarray(self.base_b).shape
        object.__setattr__(self, "base_a", np.asarray(self.base_a, dtype=float))
        object.__setattr__(self, "base_b", np.asarray(self.base_b, dtype=float))
        object.__setattr__(self, "off_a", np.asarray(self.off_a, dtype=float))
        object.__setattr__(self, "off_b", np.asarray(self.off_b, dtype=float))
        cov = np.eye(d) if self.noise_cov is None else np.asarray(self.noise_cov, dtype=float)
        object.__setattr__(self, "noise_cov", cov)

    @property
    def a_hat(self) -> np.ndarray:
        return self.base_a + self.off_a

    @property
    def b_hat(self) -> np.ndarray:
        return self.base_b + self.off_b

    def predict(self, t, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        return states @ self.a_hat.T + controls @ self.b_hat.T


@dataclass(frozen=True)
class TimeVaryingOffsetModel:
    """Per-step offsets (A'_t, B'_t) plus the reference-motion drift term."""

    base_a: np.ndarray
    base_b: np.ndarray
    off_a: np.ndarray   # (H, d, d)
    off_b: np.ndarray   # (H, d, k)
    reference: np.ndarray | None = None   # (H + 1, d)
    noise_cov: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.base_a).shape[0]
        object.__setattr__(self, "base_a", np.asarray(self.base_a, dtype=float))
        object.__setattr__(self, "base_b", np.asarray(self.base_b, dtype=float))
        object.__setattr__(self, "off_a", np.asarray(self.off_a, dtype=float))
        object.__setattr__(self, "off_b", np.asarray(self.off_b, dtype=float))
        ref = None if self.reference is None else np.asarray(self.reference, dtype=float)
        object.__setattr__(self, "reference", ref)
        cov = np.eye(d) if self.noise_cov is None else np.asarray(self.noise_cov, dtype=float)
        object.__setattr__(self, "noise_cov", cov)

    @property
    def horizon(self) -> int:
        return self.off_a.shape[0]

    def a_hat(self, t: int) -> np.ndarray:
        return self.base_a + self.off_a[min(t, self.horizon - 1)]

    def b_hat(self, t: int) -> np.ndarray:
        return self.base_b + self.off_b[min(t, self.horizon - 1)]

    def drift(self, t: int) -> np.ndarray:
        if self.reference is None:
            return np.zeros(self.base_a.shape[0])
        i = min(t, self.horizon - 1)
        return self.reference[i + 1] - self.reference[i]

    def predict(self, t, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=int), (states.shape[0],))
        idx = np.minimum(t, self.horizon - 1)
        pred = (np.einsum("nij,nj->ni", self.base_a + self.off_a[idx], states)
                + np.einsum("nij,nj->ni", self.base_b + self.off_b[idx], controls))
        if self.reference is not None:
            pred = pred + (self.reference[idx + 1] - self.reference[idx])
        return pred


TransitionModel = TabularModel | AliasedTabularModel | LinearOffsetModel | TimeVaryingOffsetModel


# ---------------------------------------------------------------------------
# fitters
# ---------------------------------------------------------------------------

def _tabular_counts(block: SampleBlock, num_states: int, num_actions: int) -> np.ndarray:
    counts = np.zeros((num_states, num_actions, num_states))
    np.add.at(counts, (block.states, block.actions, block.next_states), 1.0)
    return counts


def _normalize_rows(counts: np.ndarray, smoothing: float) -> np.ndarray:
    S = counts.shape[-1]
    num = counts + smoothing
    den = num.sum(axis=-1, keepdims=True)
    probs = np.divide(num, den, out=np.full_like(num, 1.0 / S), where=den > 0)
    return probs


def fit_tabular_ftl(dataset: TransitionDataset, num_states: int, num_actions: int,
                    smoothing: float = 0.0) -> TabularModel:
    """Empirical (optionally Laplace-smoothed) estimator on all data so far.

    Per pair: (count(s,a,s') + alpha) / (count(s,a) + alpha * S); pairs with
    no data fall back to the uniform distribution.
    """
    counts = _tabular_counts(dataset.block(), num_states, num_actions)
    return TabularModel(_normalize_rows(counts, smoothing), counts)


def fit_aliased_ftl(dataset: TransitionDataset, partition: np.ndarray, num_actions: int,
                    smoothing: float = 0.0) -> AliasedTabularModel:
    """Pooled empirical estimator per (state-block, action)."""
    partition = np.asarray(partition, dtype=int)
    num_states = partition.shape[0]
    num_blocks = int(partition.max()) + 1
    block = dataset.block()
    counts = np.zeros((num_blocks, num_actions, num_states))
    np.add.at(counts, (partition[block.states], block.actions, block.next_states), 1.0)
    return AliasedTabularModel(partition, _normalize_rows(counts, smoothing))


@dataclass(frozen=True)
class RidgeDiagnostics:
    mean_squared_residual: float
    mean_raw_residual: float   # unsquared norm, reported for reference
    objective: float


def _ridge_solve(targets: np.ndarray, regressors: np.ndarray, lam: float) -> np.ndarray:
    """Minimize (1/n)||targets - Theta z||^2(rows) + (lam/sqrt(n))||Theta||_F^2."""
    n = targets.shape[0]
    gram = regressors.T @ regressors / n
    cross = targets.T @ regressors / n
    reg = (lam / math.sqrt(n)) * np.eye(gram.shape[0])
    return np.linalg.solve(gram + reg, cross.T).T


def fit_linear_ridge(dataset: TransitionDataset, base_a: np.ndarray, base_b: np.ndarray,
                     lam: float, noise_cov: np.ndarray | None = None,
                     diagnostics: dict | None = None) -> LinearOffsetModel:
    """Closed-form ridge fit of stationary offsets around (base_a, base_b).

    Minimizes the squared-residual objective
        (1/n) sum_i ||x'_i - (A+A')x_i - (B+B')u_i||^2
            + (lam/sqrt(n)) (||A'||_F^2 + ||B'||_F^2).
    """
    if lam <= 0:
        raise ValueError("ridge regularizer lam must be positive")
    base_a = np.asarray(base_a, dtype=float)
    base_b = np.asarray(base_b, dtype=float)
    block = dataset.block()
    n = len(block)
    if n < 1:
        return LinearOffsetModel(base_a, base_b, np.zeros_like(base_a),
                                 np.zeros_like(base_b), noise_cov)
    resid = block.next_states - block.states @ base_a.T - block.actions @ base_b.T
    z = np.concatenate([block.states, block.actions], axis=1)
    theta = _ridge_solve(resid, z, lam)
    d = base_a.shape[0]
    off_a, off_b = theta[:, :d], theta[:, d:]
    if diagnostics is not None:
        err = resid - z @ theta.T
        norms = np.linalg.norm(err, axis=1)
        diagnostics["mean_squared_residual"] = float(np.mean(norms ** 2))
        diagnostics["mean_raw_residual"] = float(np.mean(norms))
        diagnostics["objective"] = float(np.mean(norms ** 2)
                                         + lam / math.sqrt(n) * np.sum(theta ** 2))
    return LinearOffsetModel(base_a, base_b, off_a, off_b, noise_cov)


def fit_time_varying(dataset: TransitionDataset, base_a: np.ndarray, base_b: np.ndarray,
                     lam: float, horizon: int, reference: np.ndarray | None = None,
                     noise_cov: np.ndarray | None = None) -> TimeVaryingOffsetModel:
    """Per-timestep ridge fits; steps without samples keep zero offsets.

    The reference-motion term ref[t+1] - ref[t] is subtracted from the
    regression target, matching the model's own drift term.
    """
    if lam <= 0:
        raise ValueError("ridge regularizer lam must be positive")
    base_a = np.asarray(base_a, dtype=float)
    base_b = np.asarray(base_b, dtype=float)
    d, k = base_b.shape
    off_a = np.zeros((horizon, d, d))
    off_b = np.zeros((horizon, d, k))
    block = dataset.block()
    if len(block):
        if block.t.max() >= horizon:
            raise ValueError("sample timestep tag exceeds the model horizon")
        for t in np.unique(block.t):
            sel = block.t == t
            s, a, s2 = block.states[sel], block.actions[sel], block.next_states[sel]
            if reference is not None:
                s2 = s2 - (reference[t + 1] - reference[t])
            resid = s2 - s @ base_a.T - a @ base_b.T
            theta = _ridge_solve(resid, np.concatenate([s, a], axis=1), lam)
            off_a[t], off_b[t] = theta[:, :d], theta[:, d:]
    return TimeVaryingOffsetModel(base_a, base_b, off_a, off_b, reference, noise_cov)


# ---------------------------------------------------------------------------
# online learner wrappers (follow-the-leader via dataset aggregation)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TabularFtlLearner:
    num_states: int
    num_actions: int
    smoothing: float = 0.0

    def initial(self) -> TabularModel:
        S, A = self.num_states, self.num_actions
        return TabularModel(np.full((S, A, S), 1.0 / S), np.zeros((S, A, S)))

    def fit(self, dataset: TransitionDataset) -> TabularModel:
        return fit_tabular_ftl(dataset, self.num_states, self.num_actions, self.smoothing)


@dataclass(frozen=True)
class AliasedFtlLearner:
    partition: np.ndarray
    num_actions: int
    smoothing: float = 0.0

    def initial(self) -> AliasedTabularModel:
        partition = np.asarray(self.partition, dtype=int)
        S = partition.shape[0]
        blocks = int(partition.max()) + 1
        return AliasedTabularModel(partition, np.full((blocks, self.num_actions, S), 1.0 / S))

    def fit(self, dataset: TransitionDataset) -> AliasedTabularModel:
        return fit_aliased_ftl(dataset, self.partition, self.num_actions, self.smoothing)


@dataclass(frozen=True)
class RidgeOffsetLearner:
    base_a: np.ndarray
    base_b: np.ndarray
    lam: float = 1e-3
    noise_cov: np.ndarray | None = None

    def initial(self) -> LinearOffsetModel:
        return LinearOffsetModel(self.base_a, self.base_b, np.zeros_like(np.asarray(self.base_a)),
                                 np.zeros_like(np.asarray(self.base_b)), self.noise_cov)

    def fit(self, dataset: TransitionDataset) -> LinearOffsetModel:
        return fit_linear_ridge(dataset, self.base_a, self.base_b, self.lam, self.noise_cov)


@dataclass(frozen=True)
class TimeVaryingRidgeLearner:
    base_a: np.ndarray
    base_b: np.ndarray
    horizon: int
    lam: float = 1e-3
    reference: np.ndarray | None = None
    noise_cov: np.ndarray | None = None

    def initial(self) -> TimeVaryingOffsetModel:
        d, k = np.asarray(self.base_b).shape
        return TimeVaryingOffsetModel(self.base_a, self.base_b,
                                      np.zeros((self.horizon, d, d)),
                                      np.zeros((self.horizon, d, k)),
                                      self.reference, self.noise_cov)

    def fit(self, dataset: TransitionDataset) -> TimeVaryingOffsetModel:
        return fit_time_varying(dataset, self.base_a, self.base_b, self.lam,
                                self.horizon, self.reference, self.noise_cov)
