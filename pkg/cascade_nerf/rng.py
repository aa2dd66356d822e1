"""Seed fan-out: every random stream derives from one run seed."""

import hashlib

import numpy as np


def _label_entropy(label: object) -> int:
    if isinstance(label, int) and label >= 0:
        return label
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(seed: int, *labels: object) -> np.random.SeedSequence:
    """Independent, reproducible seed sequence for (seed, label, label, ...)."""
    entropy = [_label_entropy(seed if seed >= 0 else f"neg{seed}")]
    entropy.extend(_label_entropy(label) for label in labels)
    return np.random.SeedSequence(entropy)


def make_rng(seed: int, *labels: object) -> np.random.Generator:
    """Generator for one derived stream."""
    return np.random.default_rng(derive_seed(seed, *labels))
