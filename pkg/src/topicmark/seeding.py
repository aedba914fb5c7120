"""Deterministic seed derivation for repeated trials."""

import hashlib


def derive_seed(base: int, *parts) -> int:
    """Stable 63-bit seed from a base seed and any hashable labels.

    Uses sha256 rather than Python's ``hash`` so the same inputs give
    the same seed across processes and platforms.
    """
    h = hashlib.sha256()
    h.update(str(int(base)).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1
