"""Deterministic seed derivation.

Every source of randomness in a run is drawn from a torch.Generator whose
seed is derived from the experiment seed plus a string/integer key path.
This keeps independent random streams (training, evaluation, replay) from
interfering with each other while staying bitwise reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np
import torch


def derive_seed(root: int, *keys: int | str) -> int:
    """Derive a 63-bit seed from a root seed and a key path."""
    parts = [int(root) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            parts.append(zlib.crc32(key.encode("utf-8")))
        else:
            parts.append(int(key) & 0xFFFFFFFF)
    state = np.random.SeedSequence(parts).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def make_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


def spawn(root: int, *keys: int | str) -> torch.Generator:
    """Generator seeded from a derived seed."""
    return make_generator(derive_seed(root, *keys))
