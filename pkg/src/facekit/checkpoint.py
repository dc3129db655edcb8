"""Binary checkpoint format (magic "FPKT", version 1).

Layout, all integers little-endian:

    magic      4 bytes  b"FPKT"
    version    u32      1
    spec_len   u64      length of the spec blob
    spec_blob  bytes    canonical JSON: {"network": ..., "meta": ...}
    n_blocks   u32
    per block:
        name_len  u32
        name      utf-8 bytes
        count     u64
        data      count x f32 (32-bit storage; compute stays 64-bit)
        checksum  u64   blake2b-64 of the raw f32 bytes

Round trips are byte-stable: loading yields float64 parameters whose
values are exactly the stored f32s, so save(load(save(x))) reproduces
identical bytes. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from facekit.errors import (
    ChecksumError,
    CompatibilityError,
    FormatError,
    TruncatedError,
    VersionError,
)
from facekit.hashing import digest64
from facekit.netspec import NetworkSpec, canonical_json, spec_from_dict, spec_to_dict

MAGIC = b"FPKT"
VERSION = 1


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: dict[str, np.ndarray]  # float64 values, exactly representable in f32
    meta: dict


def save_checkpoint(path, spec: NetworkSpec, params: dict[str, np.ndarray],
                    meta: dict | None = None) -> None:
    path = Path(path)
    blob = canonical_json({"network": spec_to_dict(spec), "meta": meta or {}}).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(blob)), blob,
              struct.pack("<I", len(params))]
    for name, values in params.items():
        raw = np.asarray(values, dtype="<f4").tobytes()
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<Q", np.asarray(values).size))
        chunks.append(raw)
        chunks.append(struct.pack("<Q", digest64(raw)))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"{self.path}: file ends at byte {len(self.data)}, "
                f"needed {self.pos + n}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    blob = r.take(r.u64())
    try:
        doc = json.loads(blob.decode("utf-8"))
        spec = spec_from_dict(doc["network"])
        meta = doc.get("meta", {})
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: malformed spec blob ({exc})") from exc
    params: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        count = r.u64()
        raw = r.take(count * 4)
        stored = r.u64()
        actual = digest64(raw)
        if stored != actual:
            raise ChecksumError(
                f"{path}: block {name!r} checksum mismatch "
                f"(stored {stored:016x}, computed {actual:016x})"
            )
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return Checkpoint(spec=spec, params=params, meta=meta)


def check_compatible(loaded: NetworkSpec, expected: NetworkSpec) -> None:
    """Reject checkpoints whose architecture does not match an expected spec."""
    if loaded.class_count != expected.class_count:
        raise CompatibilityError(
            f"checkpoint has class_count {loaded.class_count}, "
            f"expected {expected.class_count}"
        )
    if loaded.input_shape != expected.input_shape:
        raise CompatibilityError(
            f"checkpoint input shape {loaded.input_shape} differs from "
            f"expected {expected.input_shape}"
        )
    if len(loaded.layers) != len(expected.layers) or any(
        a.kind != b.kind or a.feature_maps != b.feature_maps
        for a, b in zip(loaded.layers, expected.layers)
    ):
        raise CompatibilityError("checkpoint layer stack differs from expected spec")


def load_network_params(path, spec: NetworkSpec | None = None):
    """Load a checkpoint and reshape flat blocks to the spec's shapes."""
    from facekit.network import parameter_shapes

    ckpt = load_checkpoint(path)
    if spec is not None:
        check_compatible(ckpt.spec, spec)
    shapes = parameter_shapes(ckpt.spec)
    reshaped = {}
    for name, shape in shapes.items():
        if name not in ckpt.params:
            raise CompatibilityError(f"checkpoint missing parameter block {name}")
        flat = ckpt.params[name]
        if flat.size != int(np.prod(shape)):
            raise CompatibilityError(
                f"block {name}: {flat.size} values, spec needs {int(np.prod(shape))}"
            )
        reshaped[name] = flat.reshape(shape)
    return ckpt.spec, reshaped, ckpt.meta
