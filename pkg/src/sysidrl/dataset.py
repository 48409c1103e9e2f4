"""Aggregated transition datasets with provenance tags and text import/export.

A dataset is append-only: each learning iteration appends one slice of
samples tagged with the iteration index and a provenance label (exploration
draw vs on-policy draw), so any per-iteration slice can be reconstructed
exactly afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXPLORATION = 0
ON_POLICY = 1
_PROVENANCE_NAMES = {EXPLORATION: "exploration", ON_POLICY: "on_policy"}
_PROVENANCE_IDS = {v: k for k, v in _PROVENANCE_NAMES.items()}


@dataclass(frozen=True)
class SampleBlock:
    """A read-only block of samples (columnar)."""

    t: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray

    def __len__(self) -> int:
        return self.t.shape[0]


class TransitionDataset:
    """Aggregated (state, action, next_state) samples.

    Discrete datasets store integer state/action ids; continuous ones store
    float vectors of fixed width.  Samples carry an iteration index
    (non-decreasing), a provenance tag, and a timestep tag ``t`` (used by
    time-varying model fits; 0 when irrelevant).
    """

    def __init__(self, discrete: bool, state_dim: int = 1, action_dim: int = 1):
        self.discrete = bool(discrete)
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self._iters: list[np.ndarray] = []
        self._prov: list[np.ndarray] = []
        self._t: list[np.ndarray] = []
        self._s: list[np.ndarray] = []
        self._a: list[np.ndarray] = []
        self._s2: list[np.ndarray] = []
        self._last_iteration = -1

    def __len__(self) -> int:
        return sum(arr.shape[0] for arr in self._iters)

    def append_batch(self, iteration: int, provenance, t, states, actions, next_states):
        """Append one batch of samples collected at ``iteration``."""
        if iteration < self._last_iteration:
            raise ValueError("iteration indices must be non-decreasing")
        self._last_iteration = max(self._last_iteration, iteration)
        if self.discrete:
            s = np.asarray(states, dtype=np.int64).reshape(-1)
            a = np.asarray(actions, dtype=np.int64).reshape(-1)
            s2 = np.asarray(next_states, dtype=np.int64).reshape(-1)
        else:
            s = np.asarray(states, dtype=float).reshape(-1, self.state_dim)
            a = np.asarray(actions, dtype=float).reshape(-1, self.action_dim)
            s2 = np.asarray(next_states, dtype=float).reshape(-1, self.state_dim)
        n = s.shape[0]
        if a.shape[0] != n or s2.shape[0] != n:
            raise ValueError("state/action/next_state batches must have equal length")
        prov = np.broadcast_to(np.asarray(provenance, dtype=np.int64), (n,)).copy()
        tt = np.broadcast_to(np.asarray(t, dtype=np.int64), (n,)).copy()
        self._iters.append(np.full(n, iteration, dtype=np.int64))
        self._prov.append(prov)
        self._t.append(tt)
        self._s.append(s)
        self._a.append(a)
        self._s2.append(s2)

    # -- columnar access ----------------------------------------------------

    def _cat(self, blocks, width=None):
        if not blocks:
            if self.discrete or width is None:
                return np.zeros(0, dtype=np.int64)
            return np.zeros((0, width))
        return np.concatenate(blocks, axis=0)

    @property
    def iterations(self) -> np.ndarray:
        return self._cat(self._iters)

    @property
    def provenance(self) -> np.ndarray:
        return self._cat(self._prov)

    def block(self, mask=None) -> SampleBlock:
        t = self._cat(self._t)
        s = self._cat(self._s, self.state_dim)
        a = self._cat(self._a, self.action_dim)
        s2 = self._cat(self._s2, self.state_dim)
        if mask is not None:
            t, s, a, s2 = t[mask], s[mask], a[mask], s2[mask]
        return SampleBlock(t, s, a, s2)

    def iteration_slice(self, iteration: int) -> SampleBlock:
        return self.block(self.iterations == iteration)

    def iteration_slices(self) -> list[SampleBlock]:
        its = self.iterations
        if its.size == 0:
            return []
        return [self.block(its == i) for i in range(its.min(), its.max() + 1)]

    def provenance_counts(self, iteration: int) -> dict:
        mask = self.iterations == iteration
        prov = self.provenance[mask]
        return {name: int((prov == pid).sum()) for pid, name in _PROVENANCE_NAMES.items()}

    # -- plain-text round-trip ----------------------------------------------

    def export_text(self, path) -> None:
        """One sample per line; floats at 17 significant digits (bit-stable)."""
        cols = self.block()
        its, prov = self.iterations, self.provenance
        with open(path, "w") as fh:
            fh.write("# sysidrl transition dataset v1\n")
            fh.write(f"# discrete={int(self.discrete)} state_dim={self.state_dim} "
                     f"action_dim={self.action_dim}\n")
            fh.write("# columns: iteration provenance t state... action... next_state...\n")
            for i in range(len(self)):
                parts = [str(int(its[i])), _PROVENANCE_NAMES[int(prov[i])], str(int(cols.t[i]))]
                if self.discrete:
                    parts += [str(int(cols.states[i])), str(int(cols.actions[i])),
                              str(int(cols.next_states[i]))]
                else:
                    parts += [f"{v:.17g}" for v in cols.states[i]]
                    parts += [f"{v:.17g}" for v in cols.actions[i]]
                    parts += [f"{v:.17g}" for v in cols.next_states[i]]
                fh.write(" ".join(parts) + "\n")

    @staticmethod
    def import_text(path) -> "TransitionDataset":
        with open(path) as fh:
            lines = fh.readlines()
        if not lines or not lines[0].startswith("# sysidrl transition dataset v1"):
            raise ValueError(f"{path}: not a sysidrl dataset file")
        meta = dict(part.split("=") for part in lines[1][1:].split())
        ds = TransitionDataset(discrete=bool(int(meta["discrete"])),
                               state_dim=int(meta["state_dim"]),
                               action_dim=int(meta["action_dim"]))
        d, k = ds.state_dim, ds.action_dim
        for line in lines[2:]:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split()
            it, prov, t = int(parts[0]), _PROVENANCE_IDS[parts[1]], int(parts[2])
            rest = parts[3:]
            if ds.discrete:
                s, a, s2 = int(rest[0]), int(rest[1]), int(rest[2])
            else:
                vals = [float(v) for v in rest]
                s = vals[:d]
                a = vals[d:d + k]
                s2 = vals[d + k:d + k + d]
            ds.append_batch(it, prov, t, [s], [a], [s2])
        return ds
