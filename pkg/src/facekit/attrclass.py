"""Second-stage attribute classification over probability-map stacks.

The feature vector stacks the five selected class planes (hair, eyes,
brows, nose, mouth) at a common resolution; skin and back planes never
enter it. Attribute schemes are configuration, not code: the toolkit
ships no label set and no trained attribute model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from facekit import layers as L
from facekit.checkpoint import load_network_params, save_checkpoint
from facekit.dataio import resize_plane
from facekit.errors import DataError, DomainError, ShapeError
from facekit.faceseg import ProbabilityMaps, load_planes, save_planes
from facekit.netspec import NetworkSpec
from facekit.network import Network
from facekit.palette import CLASS_NAMES, FEATURE_CLASS_INDICES
from facekit.train import TrainConfig, train

FEATURE_PLANE_NAMES = tuple(CLASS_NAMES[i] for i in FEATURE_CLASS_INDICES)
FEATURE_PLANE_COUNT = len(FEATURE_CLASS_INDICES)


@dataclass(frozen=True)
class AttributeScheme:
    """Named, ordered label set (k >= 2); labels must be unique, non-empty."""

    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise DomainError("attribute scheme needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels) or any(not l for l in self.labels):
            raise DomainError("attribute labels must be unique and non-empty")

    @property
    def class_count(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"label {label!r} not in scheme {list(self.labels)}") from None

    def to_dict(self) -> dict:
        return {"name": self.name, "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "AttributeScheme":
        return cls(name=d["name"], labels=tuple(d["labels"]))


@dataclass
class FeatureVector:
    """5 ordered planes (hair, eyes, brows, nose, mouth) in [0,1]."""

    planes: np.ndarray  # [5, H, W]
    image_id: str = ""

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3 or self.planes.shape[0] != FEATURE_PLANE_COUNT:
            raise ShapeError(
                f"feature vector must be [{FEATURE_PLANE_COUNT},H,W], "
                f"got {self.planes.shape}"
            )


def build_feature_vector(pms: ProbabilityMaps, target_size: tuple[int, int]) -> FeatureVector:
    """Select planes hair/eyes/brows/nose/mouth and resample bilinearly.

    A target equal to the source size is an identity (planes copied
    bitwise); perturbing the back or skin planes never changes the result.
    """
    th, tw = int(target_size[0]), int(target_size[1])
    if th < 1 or tw < 1:
        raise DomainError(f"degenerate feature target size {target_size}")
    stack = np.stack(
        [resize_plane(pms.planes[idx], (th, tw)) for idx in FEATURE_CLASS_INDICES]
    )
    return FeatureVector(planes=stack, image_id=pms.image_id)


@dataclass
class AttributeModel:
    spec: NetworkSpec          # input channels = 5, class_count = k
    params: dict
    scheme: AttributeScheme

    def __post_init__(self):
        if self.spec.input_shape[0] != FEATURE_PLANE_COUNT:
            raise DomainError(
                f"attribute model must take {FEATURE_PLANE_COUNT} input channels, "
                f"got {self.spec.input_shape[0]}"
            )
        if self.spec.class_count != self.scheme.class_count:
            raise DomainError(
                f"model class_count {self.spec.class_count} does not match "
                f"scheme with {self.scheme.class_count} labels"
            )


def train_attribute_model(
    examples: list[tuple[FeatureVector, str]],
    spec: NetworkSpec,
    scheme: AttributeScheme,
    config: TrainConfig,
) -> tuple[AttributeModel, list]:
    """Train the second-stage classifier on (feature vector, label) pairs.

    Every label needs at least 2 examples; shapes must agree with the
    spec. Deterministic per config seed.
    """
    counts: dict[str, int] = {}
    for _, label in examples:
        counts[label] = counts.get(label, 0) + 1
    for extra in sorted(set(counts) - set(scheme.labels)):
        raise DataError(f"label {extra!r} not in scheme {list(scheme.labels)}")
    # every label that appears must appear at least twice; scheme labels
    # with no examples are allowed (degenerate but trainable)
    for label in sorted(counts):
        if counts[label] < 2:
            raise DataError(f"label {label!r} has {counts[label]} examples; need >= 2")
    if not counts:
        raise DataError("no training examples")

    expect = tuple(spec.input_shape)
    xs = []
    ys = []
    for fv, label in examples:
        if tuple(fv.planes.shape) != expect:
            raise ShapeError(
                f"feature vector {fv.planes.shape} does not match spec input {expect}"
            )
        xs.append(fv.planes)
        ys.append(scheme.index(label))
    from facekit.network import init_parameters

    params = init_parameters(spec, config.seed)
    trained, history = train(spec, params, (np.stack(xs), np.array(ys)), config)
    return AttributeModel(spec=spec, params=trained, scheme=scheme), history


def classify(model: AttributeModel, fv: FeatureVector) -> tuple[str, np.ndarray]:
    """Label and softmax probabilities for one feature vector.

    The returned label is the argmax; ties break to the lowest index.
    """
    if tuple(fv.planes.shape) != tuple(model.spec.input_shape):
        raise ShapeError(
            f"feature vector {fv.planes.shape} does not match model input "
            f"{tuple(model.spec.input_shape)}"
        )
    net = Network(model.spec, model.params)
    probs = L.softmax_batch(net.forward_logits(fv.planes[None]))[0]
    return model.scheme.labels[int(probs.argmax())], probs


def classify_batch(model: AttributeModel, fvs: list[FeatureVector]) -> list[tuple[str, np.ndarray]]:
    net = Network(model.spec, model.params)
    stack = np.stack([fv.planes for fv in fvs])
    probs = L.softmax_batch(net.forward_logits(stack))
    return [(model.scheme.labels[int(p.argmax())], p) for p in probs]


# ---------------------------------------------------------------------------
# persistence


def save_attribute_model(path, model: AttributeModel, extra_meta: dict | None = None) -> None:
    meta = {"kind": "attribute-model", "scheme": model.scheme.to_dict()}
    meta.update(extra_meta or {})
    save_checkpoint(path, model.spec, model.params, meta)


def load_attribute_model(path) -> AttributeModel:
    spec, params, meta = load_network_params(path)
    if meta.get("kind") != "attribute-model" or "scheme" not in meta:
        raise DataError(f"{path}: checkpoint does not contain an attribute model")
    return AttributeModel(
        spec=spec, params=params, scheme=AttributeScheme.from_dict(meta["scheme"])
    )


def save_feature_vector(path, fv: FeatureVector) -> None:
    save_planes(path, fv.planes)


def load_feature_vector(path, image_id: str = "") -> FeatureVector:
    planes = load_planes(path)
    if planes.shape[0] != FEATURE_PLANE_COUNT:
        raise DataError(
            f"{path}: expected {FEATURE_PLANE_COUNT} planes, found {planes.shape[0]}"
        )
    return FeatureVector(planes=planes, image_id=image_id)
