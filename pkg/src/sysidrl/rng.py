"""Named random streams derived from a single root seed.

Every experiment owns one integer root seed. All randomness is drawn from
generators derived as ``stream(root, name)`` where ``name`` identifies the
purpose ("env-noise", "stop-coin", "branch-coin", "init-state", ...).
Streams with different names are statistically independent, and drawing more
samples from one stream never shifts the values produced by another.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(root_seed: int, name: str) -> np.random.Generator:
    """Return the generator for the named stream under ``root_seed``.

    The same (root_seed, name) pair always yields an identical sequence,
    independent of construction order or of any other stream.
    """
    if not isinstance(root_seed, (int, np.integer)):
        raise TypeError(f"root seed must be an integer, got {type(root_seed).__name__}")
    tag = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFFFFFF, tag])
    return np.random.default_rng(ss)


def substream(root_seed: int, *parts: object) -> np.random.Generator:
    """``stream`` with the name built by joining ``parts`` with '/'."""
    return stream(root_seed, "/".join(str(p) for p in parts))
