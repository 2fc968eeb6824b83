"""Small shared helpers."""

from __future__ import annotations

import hashlib


def derive_seed(*parts) -> int:
    """Stable 63-bit seed derived from a tuple of hashable parts.

    Uses sha256 of the repr so results are identical across runs and
    platforms, unlike the builtin hash().
    """
    payload = "|".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little") >> 1
