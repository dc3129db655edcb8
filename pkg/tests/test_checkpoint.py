"""Checkpoint format tests: round trips, corruption, compatibility."""

import struct

import numpy as np
import pytest

from facekit.checkpoint import (
    check_compatible,
    load_checkpoint,
    load_network_params,
    save_checkpoint,
)
from facekit.errors import (
    ChecksumError,
    CompatibilityError,
    FormatError,
    TruncatedError,
    VersionError,
)
from facekit.netspec import NetworkSpec
from facekit.network import init_parameters
from facekit.profiles import load_profile


@pytest.fixture
def spec():
    return load_profile("toy").resolved_seg_network()


@pytest.fixture
def saved(tmp_path, spec):
    params = init_parameters(spec, 5)
    path = tmp_path / "model.fpkt"
    save_checkpoint(path, spec, params, {"kind": "segmentation-model", "seed": 5})
    return path, spec, params


class TestRoundTrip:
    def test_byte_stable(self, tmp_path, saved):
        path, spec, _ = saved
        ckpt = load_checkpoint(path)
        second = tmp_path / "again.fpkt"
        save_checkpoint(second, ckpt.spec, ckpt.params, ckpt.meta)
        assert path.read_bytes() == second.read_bytes()

    def test_values_survive_f32_storage(self, saved):
        path, spec, params = saved
        _, loaded, _ = load_network_params(path, spec)
        for name, original in params.items():
            np.testing.assert_array_equal(
                loaded[name], original.astype(np.float32).astype(np.float64)
            )

    def test_meta_survives(self, saved):
        path, _, _ = saved
        assert load_checkpoint(path).meta["kind"] == "segmentation-model"

    def test_no_temp_file_left(self, saved):
        path, _, _ = saved
        assert not path.with_name(path.name + ".tmp").exists()


class TestCorruption:
    def test_flipped_payload_byte_fails_checksum(self, saved):
        path, _, _ = saved
        data = bytearray(path.read_bytes())
        data[-100] ^= 0xFF  # inside the last block's f32 payload
        path.write_bytes(bytes(data))
        with pytest.raises(ChecksumError, match="checksum"):
            load_checkpoint(path)

    def test_truncated_file(self, saved):
        path, _, _ = saved
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(TruncatedError):
            load_checkpoint(path)

    def test_bad_magic(self, saved):
        path, _, _ = saved
        data = bytearray(path.read_bytes())
        data[:4] = b"NOPE"
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_unsupported_version(self, saved):
        path, _, _ = saved
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(VersionError, match="99"):
            load_checkpoint(path)


class TestCompatibility:
    def test_class_count_mismatch(self, saved):
        path, spec, _ = saved
        other = NetworkSpec(
            input_shape=spec.input_shape,
            layers=spec.layers,
            class_count=4,
        )
        # same layer stack but a different head width is still incompatible
        with pytest.raises(CompatibilityError, match="class_count"):
            check_compatible(load_checkpoint(path).spec, other)

    def test_input_shape_mismatch(self, saved):
        path, spec, _ = saved
        other = NetworkSpec(
            input_shape=(3, 33, 33), layers=spec.layers, class_count=spec.class_count
        )
        with pytest.raises(CompatibilityError, match="input shape"):
            check_compatible(load_checkpoint(path).spec, other)

    def test_matching_spec_accepted(self, saved):
        path, spec, _ = saved
        check_compatible(load_checkpoint(path).spec, spec)
