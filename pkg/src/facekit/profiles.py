"""Named configuration bundles for the whole pipeline.

A profile carries the network family, the patch-classifier variant used
for segmentation, train configs for both stages, the patch plan, and the
feature resolution. Two profiles ship as structured-text files:

  * ``paper``: the full-scale reference architecture (250x250 family,
    96/256/316/512 maps) with its reference training parameters.
  * ``toy``:   a small 32x32 family for tests and desk-scale runs.

Profiles load from the shipped names or from a profile JSON path, and
validate fully before any stage runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from facekit.errors import DataError, DomainError
from facekit.faceseg import PatchPlan
from facekit.netspec import (
    NetworkSpec,
    canonical_json,
    infer_shapes,
    resolve_padding,
    spec_from_dict,
    spec_to_dict,
)
from facekit.train import TrainConfig

PROFILE_FORMAT = "facekit-profile/1"
SHIPPED_PROFILES = ("paper", "toy")


@dataclass(frozen=True)
class Profile:
    name: str
    network: NetworkSpec       # named family (also the attribute-net template)
    seg_network: NetworkSpec   # patch classifier; input = patch size
    seg_train: TrainConfig
    attr_train: TrainConfig
    patch: PatchPlan
    feature_size: tuple[int, int]
    patch_quota: int
    normalize_illumination: bool = False
    # optional default label set; a manifest's own scheme takes precedence
    attribute_scheme: dict | None = None

    def __post_init__(self):
        # validate everything up front: resolved specs must infer end to end
        infer_shapes(resolve_padding(self.network))
        seg = resolve_padding(self.seg_network)
        infer_shapes(seg)
        c, h, w = seg.input_shape
        if (h, w) != (self.patch.size, self.patch.size):
            raise DomainError(
                f"profile {self.name!r}: seg network input {h}x{w} does not "
                f"match patch size {self.patch.size}"
            )
        th, tw = self.feature_size
        _, nh, nw = self.network.input_shape
        if (th, tw) != (nh, nw):
            raise DomainError(
                f"profile {self.name!r}: feature size {self.feature_size} does "
                f"not match network template input {nh}x{nw}"
            )
        if self.patch_quota < 1:
            raise DomainError("patch_quota must be >= 1")
        if self.attribute_scheme is not None:
            from facekit.attrclass import AttributeScheme

            AttributeScheme.from_dict(self.attribute_scheme)

    def resolved_seg_network(self) -> NetworkSpec:
        return resolve_padding(self.seg_network)

    def attribute_network(self, class_count: int) -> NetworkSpec:
        """The family template with 5 input channels and k output classes."""
        if class_count < 2:
            raise DomainError(f"attribute class count must be >= 2, got {class_count}")
        layers = list(self.network.layers)
        dense_positions = [i for i, l in enumerate(layers) if l.kind == "dense"]
        last = dense_positions[-1]
        layers[last] = replace(layers[last], feature_maps=class_count)
        spec = NetworkSpec(
            input_shape=(5, *self.feature_size),
            layers=tuple(layers),
            class_count=class_count,
        )
        return resolve_padding(spec)


def profile_to_dict(profile: Profile) -> dict:
    return {
        "format": PROFILE_FORMAT,
        "name": profile.name,
        "network": spec_to_dict(profile.network),
        "seg_network": spec_to_dict(profile.seg_network),
        "seg_train": profile.seg_train.to_dict(),
        "attr_train": profile.attr_train.to_dict(),
        "patch": {
            "size": profile.patch.size,
            "train_stride": profile.patch.train_stride,
            "border": profile.patch.border,
        },
        "feature_size": list(profile.feature_size),
        "patch_quota": profile.patch_quota,
        "normalize_illumination": profile.normalize_illumination,
        "attribute_scheme": profile.attribute_scheme,
    }


def profile_from_dict(doc: dict) -> Profile:
    if doc.get("format") != PROFILE_FORMAT:
        raise DataError(f"unknown profile format {doc.get('format')!r}")
    patch = doc["patch"]
    return Profile(
        name=doc["name"],
        network=spec_from_dict(doc["network"]),
        seg_network=spec_from_dict(doc["seg_network"]),
        seg_train=TrainConfig.from_dict(doc["seg_train"]),
        attr_train=TrainConfig.from_dict(doc["attr_train"]),
        patch=PatchPlan(
            size=int(patch["size"]),
            train_stride=int(patch.get("train_stride", 1)),
            border=patch.get("border", "reflect"),
        ),
        feature_size=tuple(doc["feature_size"]),
        patch_quota=int(doc["patch_quota"]),
        normalize_illumination=bool(doc.get("normalize_illumination", False)),
        attribute_scheme=doc.get("attribute_scheme"),
    )


def load_profile(name_or_path: str) -> Profile:
    """Load a shipped profile by name or any profile JSON by path."""
    if name_or_path in SHIPPED_PROFILES:
        text = (
            resources.files("facekit").joinpath(f"profiles/{name_or_path}.json")
            .read_text("utf-8")
        )
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise DataError(
                f"profile {name_or_path!r} is neither a shipped name "
                f"{list(SHIPPED_PROFILES)} nor an existing file"
            )
        text = path.read_text("utf-8")
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise DataError(f"profile {name_or_path!r} is not valid JSON ({exc})") from exc
    return profile_from_dict(doc)


def save_profile(profile: Profile, path) -> None:
    Path(path).write_text(canonical_json(profile_to_dict(profile)), "utf-8")
