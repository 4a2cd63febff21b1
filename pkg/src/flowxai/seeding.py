"""Stable seed derivation so parallel and serial runs agree."""

import hashlib


def derive_seed(master_seed: int, *labels) -> int:
    """Derive a child seed from a master seed and a label path.

    Uses SHA-256 rather than ``hash()`` so the mapping is stable across
    processes and Python versions. Labels may be strings or ints.
    """
    key = ":".join([str(master_seed)] + [str(l) for l in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**32)
