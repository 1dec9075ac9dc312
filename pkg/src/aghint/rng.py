"""Per-purpose random streams derived from one root seed.

Each purpose ("synthesis", "init", "dropout", "shuffle", ...) gets its own
Philox key, so changing how one subsystem consumes randomness never shifts
another subsystem's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def purpose_key(root_seed: int, purpose: str) -> int:
    tag = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "little")
    return (int(root_seed) & _MASK64) | (tag << 64)


def stream(root_seed: int, purpose: str, counter: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=purpose_key(root_seed, purpose),
                                                counter=counter))


def sub_seed(root_seed: int, purpose: str) -> int:
    """A 63-bit integer seed for APIs that want a plain int."""
    return int(stream(root_seed, purpose).integers(0, 2**63 - 1))
