"""Image and mask ingestion, preprocessing, manifests, and fold plans.

Rasters are 8-bit PNG (PPM/PGM accepted as a debug convenience): RGB for
images, single-channel for masks with class indices 0..6. Loaders reject
malformed files with named errors; nothing is silently coerced.
"""

from __future__ import annotations

import io
import json
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from facekit.errors import DataError, DomainError
from facekit.hashing import file_digest
from facekit.netspec import canonical_json
from facekit.palette import CLASS_COUNT
from facekit.rng import Stream, derive
from facekit.tensor import Tensor

_RASTER_SUFFIXES = {".png", ".ppm", ".pgm"}

MANIFEST_FORMAT = "facekit-manifest/1"


# ---------------------------------------------------------------------------
# raster io


def _open_raster(path) -> Image.Image:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file does not exist")
    if path.suffix.lower() not in _RASTER_SUFFIXES:
        raise DataError(f"{path}: unsupported raster format {path.suffix!r}")
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise DataError(f"{path}: cannot decode image ({exc})") from exc
    return img


def load_image(path) -> Tensor:
    """8-bit RGB raster -> float64 tensor [3,H,W] scaled to [0,1]."""
    img = _open_raster(path)
    if img.mode != "RGB":
        raise DataError(f"{path}: expected an 8-bit RGB image, got mode {img.mode!r}")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def load_mask(path, expect_size: tuple[int, int] | None = None) -> np.ndarray:
    """Single-channel 8-bit raster -> uint8 label mask [H,W], values 0..6."""
    img = _open_raster(path)
    if img.mode != "L":
        raise DataError(
            f"{path}: expected a single-channel 8-bit mask, got mode {img.mode!r}"
        )
    mask = np.asarray(img, dtype=np.uint8)
    if mask.max(initial=0) >= CLASS_COUNT:
        ys, xs = np.nonzero(mask >= CLASS_COUNT)
        y, x = int(ys[0]), int(xs[0])
        raise DataError(
            f"{path}: mask value {int(mask[y, x])} at pixel (y={y}, x={x}) "
            f"exceeds class range 0..{CLASS_COUNT - 1}"
        )
    if expect_size is not None and mask.shape != tuple(expect_size):
        raise DataError(
            f"{path}: mask is {mask.shape}, paired image is {tuple(expect_size)}"
        )
    return mask


def image_to_bytes(image: Tensor) -> bytes:
    """Quantize [3,H,W] floats (round half up) and encode as PNG bytes."""
    levels = np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    pil = Image.fromarray(levels.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def mask_to_bytes(mask: np.ndarray) -> bytes:
    pil = Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def _write_atomic(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_image(path, image: Tensor) -> None:
    _write_atomic(path, image_to_bytes(image))


def save_mask(path, mask: np.ndarray) -> None:
    if np.asarray(mask).max(initial=0) >= CLASS_COUNT:
        raise DataError(f"mask values exceed class range 0..{CLASS_COUNT - 1}")
    _write_atomic(path, mask_to_bytes(mask))


# ---------------------------------------------------------------------------
# resizing


def resize_plane(plane: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of one [H,W] float plane (half-pixel centers)."""
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise DomainError(f"degenerate resize target {target}")
    h, w = plane.shape
    if (th, tw) == (h, w):
        return plane.copy()
    ys = np.clip((np.arange(th) + 0.5) * (h / th) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(tw) + 0.5) * (w / tw) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = plane[np.ix_(y0, x0)] * (1 - wx) + plane[np.ix_(y0, x1)] * wx
    bottom = plane[np.ix_(y1, x0)] * (1 - wx) + plane[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def resize_image(image: Tensor, target: tuple[int, int]) -> Tensor:
    """Bilinear resample of a [C,H,W] image."""
    return np.stack([resize_plane(image[c], target) for c in range(image.shape[0])])


def resize_mask(mask: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resample; class indices are never blended."""
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise DomainError(f"degenerate resize target {target}")
    h, w = mask.shape
    if (th, tw) == (h, w):
        return mask.copy()
    ys = np.minimum((((np.arange(th) + 0.5) * (h / th))).astype(np.int64), h - 1)
    xs = np.minimum((((np.arange(tw) + 0.5) * (w / tw))).astype(np.int64), w - 1)
    return mask[np.ix_(ys, xs)]


# ---------------------------------------------------------------------------
# illumination normalization


_BT601 = np.array([0.299, 0.587, 0.114])


def normalize_illumination(image: Tensor) -> Tensor:
    """Histogram-equalize the luminance channel, preserving chroma.

    Luminance (ITU-R BT.601 weights) is quantized to 256 levels and
    remapped through its cumulative histogram; each pixel's RGB is then
    scaled by the luminance ratio and clipped to [0,1]. A single-level
    (constant-luminance) image is returned unchanged.
    """
    y = np.tensordot(_BT601, image, axes=(0, 0))
    levels = np.floor(np.clip(y, 0.0, 1.0) * 255.0 + 0.5).astype(np.int64)
    hist = np.bincount(levels.ravel(), minlength=256)
    cdf = np.cumsum(hist) / levels.size
    cdf_min = cdf[np.nonzero(hist)[0][0]]
    if cdf_min >= 1.0:
        return image.copy()
    mapped = (cdf - cdf_min) / (1.0 - cdf_min)
    y_eq = mapped[levels]
    scale = np.ones_like(y)
    live = y > 1e-12
    scale[live] = y_eq[live] / y[live]
    return np.clip(image * scale[None, :, :], 0.0, 1.0)


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image: str
    mask: str | None = None
    label: str | None = None
    digests: dict = field(default_factory=dict)


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry]
    scheme: dict | None = None  # {"name": ..., "labels": [...]}

    def entry(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise DataError(f"unknown image id {entry_id!r}")

    def image_path(self, e: ManifestEntry) -> Path:
        return self.root / e.image

    def mask_path(self, e: ManifestEntry) -> Path | None:
        return self.root / e.mask if e.mask else None

    def labels(self) -> list[str]:
        return [e.label for e in self.entries if e.label is not None]


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "attribute_scheme": manifest.scheme,
        "entries": [
            {
                "id": e.id,
                "image": e.image,
                "mask": e.mask,
                "label": e.label,
                "digests": e.digests,
            }
            for e in sorted(manifest.entries, key=lambda e: e.id)
        ],
    }
    _write_atomic(path, canonical_json(doc).encode("utf-8"))


def load_manifest(path, verify: bool = True) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: manifest does not exist")
    try:
        doc = json.loads(path.read_text("utf-8"))
    except ValueError as exc:
        raise DataError(f"{path}: manifest is not valid JSON ({exc})") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise DataError(f"{path}: unknown manifest format {doc.get('format')!r}")
    root = path.parent
    scheme = doc.get("attribute_scheme")
    labels_allowed = set(scheme["labels"]) if scheme else None

    entries = []
    seen = set()
    for raw in doc.get("entries", []):
        e = ManifestEntry(
            id=raw["id"],
            image=raw["image"],
            mask=raw.get("mask"),
            label=raw.get("label"),
            digests=raw.get("digests", {}),
        )
        if e.id in seen:
            raise DataError(f"{path}: duplicate image id {e.id!r}")
        seen.add(e.id)
        for kind, rel in (("image", e.image), ("mask", e.mask)):
            if rel is None:
                continue
            target = root / rel
            if not target.exists():
                raise DataError(f"{path}: entry {e.id!r} {kind} {rel!r} does not exist")
            if verify and kind in e.digests and e.digests[kind]:
                actual = file_digest(target)
                if actual != e.digests[kind]:
                    raise DataError(
                        f"{path}: entry {e.id!r} {kind} digest mismatch "
                        f"(manifest {e.digests[kind]}, file {actual})"
                    )
        if e.label is not None and labels_allowed is not None and e.label not in labels_allowed:
            raise DataError(
                f"{path}: entry {e.id!r} label {e.label!r} not in scheme "
                f"{sorted(labels_allowed)}"
            )
        entries.append(e)
    return DatasetManifest(root=root, entries=entries, scheme=scheme)


# ---------------------------------------------------------------------------
# k-fold plans


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    assignment: dict  # entry id -> fold index
    stratified: bool

    def fold_ids(self, fold: int) -> list[str]:
        return sorted(eid for eid, f in self.assignment.items() if f == fold)

    def train_ids(self, fold: int) -> list[str]:
        return sorted(eid for eid, f in self.assignment.items() if f != fold)


def make_folds(manifest: DatasetManifest, k: int, seed: int) -> FoldPlan:
    """Seed-deterministic partition into k folds, stratified by label.

    Fold sizes differ by at most one. Stratification applies when every
    label has at least k entries; otherwise the plan falls back to an
    unstratified split with a warning.
    """
    ids = sorted(e.id for e in manifest.entries)
    n = len(ids)
    if k < 2 or k > n:
        raise DomainError(f"fold count {k} must lie in [2, {n}]")
    by_label: dict = {}
    labeled = all(e.label is not None for e in manifest.entries)
    if labeled:
        for e in manifest.entries:
            by_label.setdefault(e.label, []).append(e.id)
    stratified = labeled and len(by_label) >= 1 and all(
        len(v) >= k for v in by_label.values()
    )
    if labeled and not stratified:
        rare = sorted(l for l, v in by_label.items() if len(v) < k)
        warnings.warn(
            f"labels {rare} have fewer than {k} entries; folds are unstratified",
            stacklevel=2,
        )

    assignment: dict = {}
    stream = Stream(derive(seed, "folds", k))
    if stratified:
        offset = 0
        for label in sorted(by_label):
            group = sorted(by_label[label])
            order = stream.permutation(len(group))
            for pos, gi in enumerate(order):
                assignment[group[gi]] = (offset + pos) % k
            offset = (offset + len(group)) % k
    else:
        order = stream.permutation(n)
        for pos, idx in enumerate(order):
            assignment[ids[idx]] = pos % k
    return FoldPlan(k=k, seed=seed, assignment=assignment, stratified=stratified)
