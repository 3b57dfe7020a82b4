from __future__ import annotations

import hashlib
import zlib
from pathlib import Path


def derive_seed(base: int, name: str) -> int:
    """Stable sub-seed for a named stage (independent of PYTHONHASHSEED)."""
    return (int(base) * 1_000_003 + zlib.crc32(name.encode("utf-8"))) % (2**32)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def relpath(path, root) -> str:
    return Path(path).resolve().relative_to(Path(root).resolve()).as_posix()
