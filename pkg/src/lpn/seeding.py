"""Deterministic derivation of per-lane RNG seeds.

Every randomized stage of the harness draws from its own generator,
seeded by hashing the master seed together with a short lane label.
That keeps lanes independent of each other and of consumption order:
adding draws to one lane never shifts another.
"""

from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(master: int, label: str) -> int:
    """Map (master seed, lane label) to a 64-bit seed via SHA-256."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
