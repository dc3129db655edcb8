"""Second-stage classifier tests: feature stacking, training, inference."""

import numpy as np
import pytest

from facekit.attrclass import (
    AttributeScheme,
    FeatureVector,
    build_feature_vector,
    classify,
    load_attribute_model,
    load_feature_vector,
    save_attribute_model,
    save_feature_vector,
    train_attribute_model,
)
from facekit.errors import DataError, DomainError, ShapeError
from facekit.faceseg import ProbabilityMaps
from facekit.palette import CLASS_COUNT
from facekit.profiles import load_profile
from facekit.rng import Stream, derive
from facekit.synth import default_config, generate_face
from facekit.train import TrainConfig


def one_hot_pms(mask: np.ndarray) -> ProbabilityMaps:
    planes = np.zeros((CLASS_COUNT, *mask.shape))
    for cls in range(CLASS_COUNT):
        planes[cls][mask == cls] = 1.0
    return ProbabilityMaps(planes=planes)


def synthetic_features(n, seed, size=32):
    """Feature vectors straight from ground-truth masks of both families."""
    cfg = default_config(size=size, seed=seed)
    out = []
    for i in range(n):
        fam = i % 2
        _, mask = generate_face(cfg, fam, Stream(derive(seed, "face", i)))
        fv = build_feature_vector(one_hot_pms(mask), (size, size))
        out.append((fv, f"family{'ab'[fam]}"))
    return out


@pytest.fixture(scope="module")
def scheme():
    return AttributeScheme(name="style-family", labels=("familya", "familyb"))


class TestBuildFeatureVector:
    def test_uniform_pms(self):
        pms = ProbabilityMaps(planes=np.full((7, 8, 8), 1.0 / 7.0))
        fv = build_feature_vector(pms, (8, 8))
        assert fv.planes.shape == (5, 8, 8)
        np.testing.assert_allclose(fv.planes, 1.0 / 7.0)

    def test_identity_target_bitwise(self):
        stream = Stream(3)
        planes = stream.uniform(7 * 6 * 6).reshape(7, 6, 6)
        planes /= planes.sum(axis=0, keepdims=True)
        pms = ProbabilityMaps(planes=planes)
        fv = build_feature_vector(pms, (6, 6))
        for k, cls in enumerate((2, 3, 4, 5, 6)):
            assert np.array_equal(fv.planes[k], planes[cls])

    def test_back_and_skin_planes_ignored(self):
        stream = Stream(5)
        planes = stream.uniform(7 * 6 * 6).reshape(7, 6, 6)
        pms = ProbabilityMaps(planes=planes.copy())
        fv_a = build_feature_vector(pms, (4, 4))
        perturbed = planes.copy()
        perturbed[0] = stream.uniform(36).reshape(6, 6)
        perturbed[1] = stream.uniform(36).reshape(6, 6)
        fv_b = build_feature_vector(ProbabilityMaps(planes=perturbed), (4, 4))
        np.testing.assert_array_equal(fv_a.planes, fv_b.planes)

    def test_degenerate_target_rejected(self):
        pms = ProbabilityMaps(planes=np.full((7, 4, 4), 1.0 / 7.0))
        with pytest.raises(DomainError):
            build_feature_vector(pms, (0, 4))

    def test_resampling_stays_in_range(self):
        stream = Stream(8)
        planes = stream.uniform(7 * 9 * 9).reshape(7, 9, 9)
        fv = build_feature_vector(ProbabilityMaps(planes=planes), (5, 13))
        assert fv.planes.min() >= 0.0 and fv.planes.max() <= 1.0


class TestTrainAndClassify:
    def test_separable_families_reach_full_training_accuracy(self, scheme):
        profile = load_profile("toy")
        examples = synthetic_features(24, seed=21)
        spec = profile.attribute_network(scheme.class_count)
        config = TrainConfig(epochs=50, learning_rate=0.05, momentum=0.8,
                             batch_size=8, seed=4)
        model, history = train_attribute_model(examples, spec, scheme, config)
        assert history[-1].accuracy == 1.0
        assert any(h.accuracy == 1.0 for h in history[:50])

    def test_label_with_one_example_rejected(self, scheme):
        profile = load_profile("toy")
        examples = synthetic_features(24, seed=21)
        lone = [e for e in examples if e[1] == "familyb"][:1]
        rest = [e for e in examples if e[1] == "familya"]
        spec = profile.attribute_network(scheme.class_count)
        config = TrainConfig(epochs=1, learning_rate=0.05, momentum=0.8,
                             batch_size=8, seed=4)
        with pytest.raises(DataError, match="familyb"):
            train_attribute_model(rest + lone, spec, scheme, config)

    def test_untrained_zero_model_uniform(self, scheme):
        profile = load_profile("toy")
        spec = profile.attribute_network(scheme.class_count)
        from facekit.attrclass import AttributeModel
        from facekit.network import parameter_shapes

        zero = {n: np.zeros(s) for n, s in parameter_shapes(spec).items()}
        model = AttributeModel(spec=spec, params=zero, scheme=scheme)
        fv = FeatureVector(planes=np.full((5, 32, 32), 0.3))
        label, probs = classify(model, fv)
        assert label == "familya"  # ties to lowest index
        np.testing.assert_allclose(probs, 0.5, atol=1e-15)

    def test_probabilities_sum_to_one(self, scheme):
        profile = load_profile("toy")
        examples = synthetic_features(12, seed=33)
        spec = profile.attribute_network(scheme.class_count)
        config = TrainConfig(epochs=5, learning_rate=0.05, momentum=0.8,
                             batch_size=8, seed=4)
        model, _ = train_attribute_model(examples, spec, scheme, config)
        for fv, _ in examples[:4]:
            _, probs = classify(model, fv)
            assert abs(probs.sum() - 1.0) <= 1e-9

    def test_shape_mismatch_rejected(self, scheme):
        profile = load_profile("toy")
        examples = synthetic_features(8, seed=40)
        spec = profile.attribute_network(scheme.class_count)
        config = TrainConfig(epochs=1, learning_rate=0.05, momentum=0.8,
                             batch_size=8, seed=4)
        model, _ = train_attribute_model(examples, spec, scheme, config)
        with pytest.raises(ShapeError):
            classify(model, FeatureVector(planes=np.zeros((5, 16, 16))))

    def test_deterministic_model_bytes(self, scheme, tmp_path):
        profile = load_profile("toy")
        examples = synthetic_features(12, seed=50)
        spec = profile.attribute_network(scheme.class_count)
        config = TrainConfig(epochs=3, learning_rate=0.05, momentum=0.8,
                             batch_size=8, seed=4)
        for name in ("a", "b"):
            model, _ = train_attribute_model(examples, spec, scheme, config)
            save_attribute_model(tmp_path / f"{name}.fpkt", model)
        assert (tmp_path / "a.fpkt").read_bytes() == (tmp_path / "b.fpkt").read_bytes()

    def test_model_round_trip(self, scheme, tmp_path):
        profile = load_profile("toy")
        examples = synthetic_features(8, seed=60)
        spec = profile.attribute_network(scheme.class_count)
        config = TrainConfig(epochs=2, learning_rate=0.05, momentum=0.8,
                             batch_size=8, seed=4)
        model, _ = train_attribute_model(examples, spec, scheme, config)
        save_attribute_model(tmp_path / "m.fpkt", model)
        loaded = load_attribute_model(tmp_path / "m.fpkt")
        assert loaded.scheme == scheme
        fv = examples[0][0]
        # loaded params are f32-rounded, so compare labels, not raw probs
        assert classify(loaded, fv)[0] in scheme.labels


class TestScheme:
    def test_validation(self):
        with pytest.raises(DomainError):
            AttributeScheme(name="x", labels=("only",))
        with pytest.raises(DomainError):
            AttributeScheme(name="x", labels=("a", "a"))
        with pytest.raises(DomainError):
            AttributeScheme(name="x", labels=("a", ""))

    def test_index_lookup(self):
        scheme = AttributeScheme(name="x", labels=("p", "q", "r"))
        assert scheme.index("q") == 1
        with pytest.raises(DataError):
            scheme.index("missing")


class TestFeatureVectorIO:
    def test_sidecar_round_trip(self, tmp_path):
        stream = Stream(77)
        fv = FeatureVector(planes=stream.uniform(5 * 8 * 8).reshape(5, 8, 8))
        save_feature_vector(tmp_path / "f.fppm", fv)
        loaded = load_feature_vector(tmp_path / "f.fppm")
        assert np.array_equal(loaded.planes, fv.planes)
