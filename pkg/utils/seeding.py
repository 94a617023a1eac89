"""
Counter-based random stream derivation.

A master seed plus a tuple of keys (stream names and counters) identifies one
independent numpy Generator. Adding trials or episodes never perturbs the
streams of earlier ones, which is what keeps every command reproducible.
"""

import hashlib
import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"Seed keys must be non-negative, got {key}")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed_sequence(master_seed: int, *keys: Key) -> np.random.SeedSequence:
    """Return the SeedSequence addressed by ``keys`` under ``master_seed``."""
    return np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=tuple(_key_to_int(k) for k in keys),
    )


def derive_rng(master_seed: int, *keys: Key) -> np.random.Generator:
    """Return an independent Generator for the stream ``keys``."""
    return np.random.default_rng(derive_seed_sequence(master_seed, *keys))


def derive_int_seed(master_seed: int, *keys: Key) -> int:
    """Return a 63-bit integer seed for APIs that want a plain int."""
    state = derive_seed_sequence(master_seed, *keys).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def array_digest(*arrays: np.ndarray) -> str:
    """SHA-256 over the raw bytes of the given arrays (shape-sensitive)."""
    digest = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        digest.update(str(arr.shape).encode("ascii"))
        digest.update(str(arr.dtype).encode("ascii"))
        digest.update(arr.tobytes())
    return digest.hexdigest()
