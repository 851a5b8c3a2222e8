"""Stable seed derivation so parallel or re-ordered work cannot change results."""

import hashlib


def derive_seed(*parts) -> int:
    """Hash the parts into a 63-bit seed. Stable across processes and platforms."""
    key = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
