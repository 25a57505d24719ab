"""Deterministic seed derivation for run components.

Every random decision in a run draws from a generator seeded by the
master seed plus a label path, so sub-streams are independent and adding
draws to one component never perturbs another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *labels) -> int:
    """Stable 64-bit sub-seed for (master_seed, label path)."""
    key = "/".join([str(int(master_seed))] + [str(l) for l in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master_seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *labels))
