"""Procedural face-like image generator for desk-scale verification.

Draws a skin ellipse on a background, a hair cap, two eyes with brows,
a nose, and a mouth, producing a pixel-exact label mask alongside each
image. Two (or more) style families share every major-class range and
differ only in minor-class geometry (eye/brow/nose/mouth shape and
placement), so the family label is recoverable from minor-class layout
but not from skin/back statistics. Generation is a pure function of
(config, seed, n).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from facekit.dataio import DatasetManifest, ManifestEntry, save_image, save_manifest, save_mask
from facekit.errors import DomainError
from facekit.hashing import file_digest
from facekit.palette import CLASS_COUNT
from facekit.rng import Stream, derive

BACK, SKIN, HAIR, EYES, BROWS, NOSE, MOUTH = range(7)


@dataclass(frozen=True)
class Range:
    lo: float
    hi: float

    def draw(self, stream: Stream) -> float:
        return float(stream.uniform(1, self.lo, self.hi)[0])


@dataclass(frozen=True)
class FamilyGeometry:
    """Minor-class geometry ranges for one style family (units: fraction
    of image size, except ratios)."""

    eye_dx: Range          # horizontal eye offset from face center
    eye_rx: Range          # eye half-width
    eye_aspect: Range      # eye half-height / half-width
    brow_halfwidth: Range
    brow_halfheight: Range
    nose_halfwidth: Range
    nose_halfheight: Range
    mouth_halfwidth: Range
    mouth_halfheight: Range


@dataclass(frozen=True)
class SynthConfig:
    size: int = 32
    seed: int = 0
    families: tuple[FamilyGeometry, ...] = ()
    # shared major-class geometry
    face_rx: Range = Range(0.31, 0.36)
    face_ry: Range = Range(0.36, 0.41)
    hair_line: Range = Range(0.42, 0.50)   # fraction of face_ry above center
    hair_trim: float = 0.055               # hair shell thickness (fraction of size)
    skin_tone: Range = Range(0.78, 0.88)   # red channel; green/blue derived
    noise: float = 0.02

    def __post_init__(self):
        if self.size < 24:
            raise DomainError("synthetic image size must be >= 24")
        if len(self.families) < 2:
            raise DomainError("at least two style families are required")
        s = self.size
        checks = []
        for i, fam in enumerate(self.families):
            checks += [
                (f"family {i} eye radius", fam.eye_rx.lo * s, 0.8),
                (f"family {i} brow halfwidth", fam.brow_halfwidth.lo * s, 0.8),
                (f"family {i} nose halfwidth", fam.nose_halfwidth.lo * s, 0.5),
                (f"family {i} mouth halfwidth", fam.mouth_halfwidth.lo * s, 0.8),
            ]
        for name, pixels, minimum in checks:
            if pixels < minimum:
                raise DomainError(
                    f"{name} ({pixels:.2f}px) too small: class would vanish"
                )


def default_families() -> tuple[FamilyGeometry, FamilyGeometry]:
    """Two families with area-matched minor classes in different shapes."""
    round_eyed = FamilyGeometry(
        eye_dx=Range(0.115, 0.130),
        eye_rx=Range(0.060, 0.068),
        eye_aspect=Range(0.92, 1.00),
        brow_halfwidth=Range(0.082, 0.094),
        brow_halfheight=Range(0.020, 0.026),
        nose_halfwidth=Range(0.048, 0.056),
        nose_halfheight=Range(0.066, 0.076),
        mouth_halfwidth=Range(0.108, 0.122),
        mouth_halfheight=Range(0.032, 0.038),
    )
    narrow_eyed = FamilyGeometry(
        eye_dx=Range(0.165, 0.180),
        eye_rx=Range(0.088, 0.098),
        eye_aspect=Range(0.42, 0.50),
        brow_halfwidth=Range(0.052, 0.060),
        brow_halfheight=Range(0.034, 0.042),
        nose_halfwidth=Range(0.032, 0.038),
        nose_halfheight=Range(0.100, 0.115),
        mouth_halfwidth=Range(0.070, 0.080),
        mouth_halfheight=Range(0.050, 0.058),
    )
    return round_eyed, narrow_eyed


def default_config(size: int = 32, seed: int = 0) -> SynthConfig:
    return SynthConfig(size=size, seed=seed, families=default_families())


def _fill_ellipse(mask, cx, cy, rx, ry, value):
    h, w = mask.shape
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    inside = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
    mask[inside] = value
    return inside


def _render(mask: np.ndarray, skin_red: float, noise: float, stream: Stream) -> np.ndarray:
    """Image from mask: per-class base colors plus gaussian pixel noise."""
    skin = np.array([skin_red, skin_red - 0.13, skin_red - 0.24])
    colors = np.stack([
        np.array([0.38, 0.42, 0.47]),     # back
        skin,                              # skin
        np.array([0.23, 0.15, 0.09]),      # hair
        np.array([0.07, 0.07, 0.10]),      # eyes
        np.array([0.13, 0.10, 0.07]),      # brows
        skin * 0.82,                       # nose: darker skin tone
        np.array([0.70, 0.26, 0.30]),      # mouth
    ])
    h, w = mask.shape
    img = colors[mask].transpose(2, 0, 1).astype(np.float64)
    jitter = stream.normal(3 * h * w).reshape(3, h, w)
    return np.clip(img + noise * jitter, 0.0, 1.0)


def generate_face(config: SynthConfig, family_index: int, stream: Stream):
    """One (image, mask) pair for a family; consumes the given stream."""
    s = config.size
    fam = config.families[family_index]
    mask = np.zeros((s, s), dtype=np.uint8)

    cx = s / 2 + stream.uniform(1, -0.02, 0.02)[0] * s
    cy = s * 0.53 + stream.uniform(1, -0.02, 0.02)[0] * s
    face_rx = config.face_rx.draw(stream) * s
    face_ry = config.face_ry.draw(stream) * s
    _fill_ellipse(mask, cx, cy, face_rx, face_ry, SKIN)

    # hair: shell around the upper face plus the strip above the hairline
    hair_line = cy - config.hair_line.draw(stream) * face_ry
    shell = config.hair_trim * s
    ys = np.arange(s)[:, None]
    xs = np.arange(s)[None, :]
    outer = ((xs - cx) / (face_rx + shell)) ** 2 + ((ys - cy) / (face_ry + shell)) ** 2 <= 1.0
    mask[outer & (ys < hair_line)] = HAIR

    eye_y = cy - 0.18 * face_ry
    eye_dx = fam.eye_dx.draw(stream) * s
    eye_rx = fam.eye_rx.draw(stream) * s
    eye_ry = max(eye_rx * fam.eye_aspect.draw(stream), 0.6)
    for side in (-1, 1):
        _fill_ellipse(mask, cx + side * eye_dx, eye_y, eye_rx, eye_ry, EYES)

    brow_y = eye_y - eye_ry - max(0.045 * s, 1.2)
    brow_rx = fam.brow_halfwidth.draw(stream) * s
    brow_ry = max(fam.brow_halfheight.draw(stream) * s, 0.55)
    for side in (-1, 1):
        _fill_ellipse(mask, cx + side * eye_dx, brow_y, brow_rx, brow_ry, BROWS)

    nose_rx = max(fam.nose_halfwidth.draw(stream) * s, 0.55)
    nose_ry = fam.nose_halfheight.draw(stream) * s
    _fill_ellipse(mask, cx, cy + 0.10 * face_ry, nose_rx, nose_ry, NOSE)

    mouth_rx = fam.mouth_halfwidth.draw(stream) * s
    mouth_ry = max(fam.mouth_halfheight.draw(stream) * s, 0.7)
    _fill_ellipse(mask, cx, cy + 0.52 * face_ry, mouth_rx, mouth_ry, MOUTH)

    present = set(np.unique(mask).tolist())
    if present != set(range(CLASS_COUNT)):
        missing = sorted(set(range(CLASS_COUNT)) - present)
        raise DomainError(
            f"generated mask lost classes {missing}; geometry ranges too tight"
        )

    skin_red = config.skin_tone.draw(stream)
    image = _render(mask, skin_red, config.noise, stream)
    return image, mask


def generate_synthetic(config: SynthConfig, n: int, out_dir) -> DatasetManifest:
    """Write n image/mask pairs plus a manifest under out_dir."""
    if n < 1:
        raise DomainError(f"need n >= 1 synthetic faces, got {n}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    family_names = [f"family{chr(ord('a') + i)}" for i in range(len(config.families))]

    entries = []
    for i in range(n):
        fam_idx = i % len(config.families)
        stream = Stream(derive(config.seed, "face", i))
        image, mask = generate_face(config, fam_idx, stream)
        eid = f"face_{i:04d}"
        image_rel = f"images/{eid}.png"
        mask_rel = f"masks/{eid}.png"
        save_image(out / image_rel, image)
        save_mask(out / mask_rel, mask)
        entries.append(
            ManifestEntry(
                id=eid,
                image=image_rel,
                mask=mask_rel,
                label=family_names[fam_idx],
                digests={
                    "image": file_digest(out / image_rel),
                    "mask": file_digest(out / mask_rel),
                },
            )
        )
    manifest = DatasetManifest(
        root=out,
        entries=entries,
        scheme={"name": "style-family", "labels": family_names},
    )
    save_manifest(manifest, out / "manifest.json")
    return manifest
