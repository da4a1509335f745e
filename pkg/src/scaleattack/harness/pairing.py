from __future__ import annotations

from typing import Sequence

import numpy as np


def random_derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random permutation of ``range(n)`` without fixed points.

    Rejection sampling: about e draws are needed on average.
    """
    if n < 2:
        raise ValueError("a derangement needs at least 2 elements")
    idx = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == idx):
            return perm


def pair_corpus(paths: Sequence, seed: int) -> list[tuple]:
    """Pair every path once as carrier and once as small, never with itself."""
    paths = list(paths)
    if len(paths) < 2:
        raise ValueError(f"need at least 2 images to pair, got {len(paths)}")
    perm = random_derangement(len(paths), np.random.default_rng(seed))
    return [(paths[k], paths[int(perm[k])]) for k in range(len(paths))]
