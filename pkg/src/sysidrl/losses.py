"""Sample-based training losses and the empirical regret audit.

The KL-style loss is the per-sample negative log-likelihood (minimizing it
is maximum likelihood); the classification loss is the 0-1 error of the
model's most likely next state.  The L1 distance is *not* evaluable from
samples and is rejected here; exact L1 quantities live in the audit module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import SampleBlock, TransitionDataset
from .models import (AliasedTabularModel, LinearOffsetModel, TabularModel,
                     TimeVaryingOffsetModel)

KL = "kl"
CLASSIFICATION = "cls"
L1 = "l1"

_LOG_FLOOR = 1e-300


def _gaussian_nll(resid: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = cov.shape[0]
    inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    quad = np.einsum("ni,ij,nj->n", resid, inv, resid)
    return 0.5 * (quad + d * math.log(2.0 * math.pi) + logdet)


def empirical_loss(model, block: SampleBlock, kind: str,
                   diagnostics: dict | None = None) -> float:
    """Mean per-sample loss of ``model`` on the given samples.

    KL losses hitting a zero-probability observed next state are floored at
    log(1e-300) and counted in ``diagnostics['floored_events']``.
    """
    if kind == L1:
        raise ValueError("the L1 loss is not evaluable from samples; "
                         "use the exact audit quantities instead")
    if kind not in (KL, CLASSIFICATION):
        raise ValueError(f"unknown loss kind: {kind!r}")
    if len(block) == 0:
        raise ValueError("cannot evaluate a loss on an empty slice")

    if isinstance(model, (TabularModel, AliasedTabularModel)):
        tensor = model.as_tensor()
        rows = tensor[block.states, block.actions]
        if kind == KL:
            p = rows[np.arange(len(block)), block.next_states]
            floored = int((p < _LOG_FLOOR).sum())
            if diagnostics is not None and floored:
                diagnostics["floored_events"] = diagnostics.get("floored_events", 0) + floored
            return float(-np.log(np.maximum(p, _LOG_FLOOR)).mean())
        pred = np.argmax(rows, axis=1)
        return float((pred != block.next_states).mean())

    if isinstance(model, (LinearOffsetModel, TimeVaryingOffsetModel)):
        if kind == CLASSIFICATION:
            raise ValueError("classification loss requires a finite state space")
        pred = model.predict(block.t, block.states, block.actions)
        return float(_gaussian_nll(block.next_states - pred, model.noise_cov).mean())

    raise TypeError(f"unsupported model type {type(model).__name__}")


def dataset_from_blocks(blocks: list[SampleBlock], discrete: bool) -> TransitionDataset:
    """Assemble an aggregate dataset from per-iteration sample blocks."""
    if discrete:
        ds = TransitionDataset(discrete=True)
    else:
        first = next(b for b in blocks if len(b))
        ds = TransitionDataset(discrete=False, state_dim=first.states.shape[1],
                               action_dim=first.actions.shape[1])
    for i, b in enumerate(blocks):
        if len(b):
            ds.append_batch(i, 0, b.t, b.states, b.actions, b.next_states)
    return ds


@dataclass(frozen=True)
class RegretReport:
    """Average online loss vs the best fixed model in hindsight."""

    per_iteration_losses: np.ndarray
    hindsight_loss: float
    average_regret: float
    prefix_average_regret: np.ndarray
    floored_events: int = 0


def regret_audit(model_sequence, loss_slices: list[SampleBlock], kind: str,
                 learner, discrete: bool | None = None) -> RegretReport:
    """Empirical average regret of a model sequence on its loss slices.

    ``model_sequence[i]`` must have been chosen before slice ``i`` was
    observed.  The best model in hindsight is the learner's fit on the full
    aggregate (exact for follow-the-leader classes).  Prefix regrets are
    reported for decay plots: entry k is the average regret over the first
    k+1 rounds against the prefix hindsight fit.
    """
    if len(model_sequence) != len(loss_slices):
        raise ValueError("model sequence and loss slices must have equal length")
    if discrete is None:
        discrete = loss_slices[0].states.ndim == 1
    diag: dict = {}
    losses = np.array([empirical_loss(m, b, kind, diag)
                       for m, b in zip(model_sequence, loss_slices)])
    prefix = np.empty(len(loss_slices))
    hindsight = math.nan
    for n in range(1, len(loss_slices) + 1):
        best = learner.fit(dataset_from_blocks(loss_slices[:n], discrete))
        hindsight = float(np.mean([empirical_loss(best, b, kind, diag)
                                   for b in loss_slices[:n]]))
        prefix[n - 1] = float(losses[:n].mean()) - hindsight
    return RegretReport(losses, hindsight, float(prefix[-1]), prefix,
                        diag.get("floored_events", 0))
