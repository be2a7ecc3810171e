"""
Seed derivation: every random stream in a run is keyed by the run seed and
the names of what it feeds, so adding or reordering work never shifts the
streams of anything else.
"""
import hashlib


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any sequence of str/int parts."""
    text = "\x1f".join(str(part) for part in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
