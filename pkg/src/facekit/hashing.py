"""64-bit content checksums.

Used for checkpoint and sidecar block checksums, manifest file digests,
and the annotation service's mask version tokens. The checksum is the
8-byte BLAKE2b digest of the payload, read as a little-endian unsigned
64-bit integer. Stable, fast, and reproducible across implementations;
integrity check only, not an authentication mechanism.
"""

from __future__ import annotations

import hashlib
import os


def digest64(data: bytes) -> int:
    raw = hashlib.blake2b(data, digest_size=8).digest()
    return int.from_bytes(raw, "little")


def digest64_hex(data: bytes) -> str:
    return f"{digest64(data):016x}"


def file_digest(path: str | os.PathLike) -> str:
    with open(path, "rb") as fh:
        return digest64_hex(fh.read())
