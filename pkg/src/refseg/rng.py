"""Deterministic named RNG substreams.

Every stochastic component draws from its own stream derived from
(master_seed, name). Toggling one component on or off therefore never
perturbs the random numbers another component sees, which is what makes
ablation runs share identical data order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator keyed by (master_seed, name)."""
    seq = np.random.SeedSequence([int(master_seed) & _MASK64, _name_key(name)])
    return np.random.Generator(np.random.PCG64(seq))


def child_seed(master_seed: int, name: str) -> int:
    """Stable non-negative integer seed for APIs that take a plain seed."""
    return int(substream(master_seed, name).integers(0, 2**63 - 1))
