"""Network spec tests: padding resolution, shape inference, profiles."""

import pytest

from facekit.errors import DomainError, ShapeError
from facekit.netspec import (
    LayerSpec,
    NetworkSpec,
    conv_pool_cells,
    infer_shapes,
    resolve_padding,
    spec_from_dict,
    spec_to_dict,
)
from facekit.profiles import load_profile
from facekit.tensor import conv_output_extent


def conv(k, s, maps, out=None, padding=None):
    return LayerSpec(kind="conv", kernel=(k, k), stride=(s, s), feature_maps=maps,
                     declared_output=(out, out) if out else None, padding=padding)


def pool(k, s, out=None, padding=None):
    return LayerSpec(kind="maxpool", kernel=(k, k), stride=(s, s),
                     declared_output=(out, out) if out else None, padding=padding)


RELU = LayerSpec(kind="relu")
HEAD = LayerSpec(kind="softmax-head")


def dense(width):
    return LayerSpec(kind="dense", feature_maps=width)


class TestResolvePadding:
    def test_reference_profile_first_layer(self):
        # 250 -> 124 with k=5, s=2 needs total padding 1, split bottom-heavy
        spec = NetworkSpec(
            input_shape=(1, 250, 250), class_count=2,
            layers=(conv(5, 2, 8, out=124), dense(2), HEAD),
        )
        resolved = resolve_padding(spec)
        assert resolved.layers[0].padding == (0, 1, 0, 1)

    def test_zero_padding_when_already_exact(self):
        spec = NetworkSpec(
            input_shape=(1, 32, 32), class_count=2,
            layers=(conv(5, 2, 4, out=14), dense(2), HEAD),
        )
        assert resolve_padding(spec).layers[0].padding == (0, 0, 0, 0)

    def test_unreachable_output_rejected_naming_layer(self):
        spec = NetworkSpec(
            input_shape=(1, 32, 32), class_count=2,
            layers=(conv(5, 2, 4, out=30), dense(2), HEAD),
        )
        with pytest.raises(ShapeError, match="layer 0"):
            resolve_padding(spec)

    def test_idempotent(self):
        profile = load_profile("paper")
        once = resolve_padding(profile.network)
        twice = resolve_padding(once)
        assert once == twice

    def test_full_reference_profile_paddings(self):
        # minimal-total rule: every declared cell reachable with total <= 1
        # except the 6->4 conv (total 5); splits are top/left-light
        resolved = resolve_padding(load_profile("paper").network)
        paddings = [l.padding for l in resolved.layers if l.kind in ("conv", "maxpool")]
        assert paddings == [
            (0, 1, 0, 1),  # 250 -> 124 conv
            (0, 1, 0, 1),  # 124 -> 62 pool
            (0, 1, 0, 1),  # 62 -> 30 conv
            (0, 1, 0, 1),  # 30 -> 15 pool
            (0, 1, 0, 1),  # 15 -> 12 conv
            (0, 1, 0, 1),  # 12 -> 6 pool
            (0, 5, 0, 5),  # 6 -> 4 conv (minimal equivalent of (3,3,3,3))
            (0, 1, 0, 1),  # 4 -> 2 pool (minimal total 1)
        ]

    def test_explicit_padding_kept(self):
        spec = NetworkSpec(
            input_shape=(1, 10, 10), class_count=2,
            layers=(conv(3, 1, 4, padding=(1, 1, 1, 1)), dense(2), HEAD),
        )
        assert resolve_padding(spec).layers[0].padding == (1, 1, 1, 1)


class TestInferShapes:
    def test_reference_profile_cells(self):
        resolved = resolve_padding(load_profile("paper").network)
        cells = conv_pool_cells(resolved)
        assert cells == [
            (124, 96), (62, 96), (30, 256), (15, 256),
            (12, 316), (6, 316), (4, 512), (2, 512),
        ]

    def test_toy_profile_strictly_decreasing(self):
        resolved = resolve_padding(load_profile("toy").network)
        sizes = [size for size, _ in conv_pool_cells(resolved)]
        assert sizes == sorted(sizes, reverse=True)
        assert len(set(sizes)) == len(sizes)

    def test_dense_only_spec(self):
        spec = NetworkSpec(
            input_shape=(1, 4, 4), class_count=3,
            layers=(dense(8), RELU, dense(3), HEAD),
        )
        shapes = [s for _, s in infer_shapes(spec)]
        assert shapes == [(8,), (8,), (3,), (3,)]

    def test_head_requires_class_count_logits(self):
        spec = NetworkSpec(
            input_shape=(1, 4, 4), class_count=3,
            layers=(dense(5), HEAD),
        )
        with pytest.raises(ShapeError, match="softmax-head"):
            infer_shapes(spec)

    def test_output_extent_formula_across_profile(self):
        resolved = resolve_padding(load_profile("paper").network)
        h = resolved.input_shape[1]
        for layer, shape in infer_shapes(resolved):
            if layer.kind in ("conv", "maxpool"):
                top, bottom, _, _ = layer.padding
                expected = conv_output_extent(
                    h, layer.kernel[0], layer.stride[0], top + bottom
                )
                assert shape[1] == expected
                h = shape[1]


class TestSpecValidation:
    def test_exactly_one_head_last(self):
        with pytest.raises(DomainError, match="softmax-head"):
            NetworkSpec(input_shape=(1, 4, 4), class_count=2,
                        layers=(dense(2),))
        with pytest.raises(DomainError, match="softmax-head"):
            NetworkSpec(input_shape=(1, 4, 4), class_count=2,
                        layers=(HEAD, dense(2), HEAD))

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            LayerSpec(kind="avgpool", kernel=(2, 2), stride=(2, 2))

    def test_json_round_trip(self):
        spec = resolve_padding(load_profile("toy").network)
        assert spec_from_dict(spec_to_dict(spec)) == spec


class TestProfiles:
    def test_shipped_profiles_load(self):
        for name in ("paper", "toy"):
            profile = load_profile(name)
            assert profile.name == name

    def test_paper_train_values(self):
        profile = load_profile("paper")
        cfg = profile.seg_train
        assert cfg.epochs == 50
        assert cfg.learning_rate == 1e-5
        assert cfg.momentum == 0.8
        assert cfg.batch_size == 250

    def test_attribute_network_has_5_channels(self):
        profile = load_profile("toy")
        spec = profile.attribute_network(3)
        assert spec.input_shape[0] == 5
        assert spec.class_count == 3
        shapes = [s for _, s in infer_shapes(spec)]
        assert shapes[-1] == (3,)

    def test_unknown_profile_rejected(self):
        from facekit.errors import DataError
        with pytest.raises(DataError):
            load_profile("nonexistent-profile")
