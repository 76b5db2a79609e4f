"""Per-component seed derivation from one global seed."""

import hashlib


def derive_seed(seed: int, name: str) -> int:
    """Stable 64-bit seed for ``name``; adding a component never shifts another's stream."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")
