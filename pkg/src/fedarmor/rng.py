"""Derivation of independent, reproducible RNG streams from one master seed.

Every stochastic component draws from its own stream, derived from the
master seed plus a structural path such as ``("round", 3, "uplink", 1)``.
Results are therefore independent of client scheduling order and stable
across runs and platforms. String path parts are hashed with SHA-256, so
derivation does not depend on Python's per-process hash randomization.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _encode(part: int | str) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream path parts must be int or str, got {type(part).__name__}")


def stream(master_seed: int, *path: int | str) -> np.random.Generator:
    """Return a fresh Generator keyed by (master_seed, *path).

    Identical arguments always yield a generator in the same initial state;
    distinct paths yield statistically independent streams.
    """
    entropy = [int(master_seed) & _MASK64] + [_encode(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(master_seed: int, *path: int | str) -> int:
    """Collapse (master_seed, *path) to a stable 64-bit integer seed."""
    h = hashlib.sha256()
    h.update(str(int(master_seed) & _MASK64).encode())
    for part in path:
        h.update(b"/")
        h.update(str(_encode(part)).encode())
    return int.from_bytes(h.digest()[:8], "little")
