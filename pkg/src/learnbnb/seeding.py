"""Deterministic seed derivation for named random substreams."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *labels: object) -> int:
    """Derive a child seed from a root seed and a path of labels.

    Stable across runs, platforms, and Python versions, so every random
    stream in an experiment is addressable as (root seed, name, indices...).
    """
    key = f"{root_seed}:" + "/".join(str(x) for x in labels)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root_seed: int, *labels: object) -> np.random.Generator:
    """Generator seeded by `derive_seed(root_seed, *labels)`."""
    return np.random.default_rng(derive_seed(root_seed, *labels))
