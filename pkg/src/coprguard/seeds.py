"""Deterministic seed and key derivation.

Every pseudo-random stream in the toolkit is keyed by hashing a context label
plus integer coordinates into a Philox counter-based generator. Streams are
therefore independent of evaluation order and worker count.
"""

import hashlib

import numpy as np


def _encode(parts) -> bytes:
    blob = bytearray()
    for p in parts:
        if isinstance(p, bool):
            raise TypeError("bool is ambiguous in seed derivation")
        if isinstance(p, int):
            if p < 0:
                raise ValueError("seed parts must be non-negative")
            blob += b"i" + p.to_bytes(16, "little")
        elif isinstance(p, str):
            raw = p.encode("utf-8")
            blob += b"s" + len(raw).to_bytes(4, "little") + raw
        else:
            raise TypeError(f"cannot derive from {type(p).__name__}")
    return bytes(blob)


def derive_key128(*parts) -> int:
    """128-bit integer derived from the parts, for keying Philox directly."""
    digest = hashlib.blake2b(_encode(parts), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def derive_seed(*parts) -> int:
    """64-bit sub-seed derived from the parts."""
    digest = hashlib.blake2b(_encode(parts), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_from(*parts) -> np.random.Generator:
    """Counter-based generator keyed on the given context."""
    return np.random.Generator(np.random.Philox(key=derive_key128(*parts)))
