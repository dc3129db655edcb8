"""Patch-based per-pixel face parsing and probability-map construction.

The segmentation network is a patch classifier: it labels the center
pixel of an odd-sized window. Dense (stride-1) inference slides that
window over every pixel, producing 7 per-class probability planes. The
batched fast path shares the first convolution across overlapping
patches and evaluates the rest in chunks; by construction it matches the
naive per-pixel loop bitwise (see facekit.layers).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import struct

import numpy as np

from facekit import layers as L
from facekit.dataio import mask_to_bytes, _write_atomic
from facekit.errors import (
    ChecksumError,
    DataError,
    DomainError,
    FormatError,
    ShapeError,
    TruncatedError,
    VersionError,
)
from facekit.hashing import digest64, digest64_hex
from facekit.network import Network, layer_name
from facekit.palette import CLASS_COUNT, CLASS_NAMES
from facekit.rng import Stream, derive
from facekit.tensor import ConvGeometry, Tensor

PM_MAGIC = b"FPPM"
PM_VERSION = 1


@dataclass(frozen=True)
class PatchPlan:
    """Window geometry for patch sampling and sliding inference.

    size must be odd so a center pixel exists. train_stride subsamples
    candidate training centers on a grid (1 = every pixel). Borders are
    reflect-padded; "reflect" is the only supported policy.
    """

    size: int
    train_stride: int = 1
    border: str = "reflect"

    def __post_init__(self):
        if self.size < 3 or self.size % 2 == 0:
            raise DomainError(f"patch size must be odd and >= 3, got {self.size}")
        if self.train_stride < 1:
            raise DomainError(f"train_stride must be >= 1, got {self.train_stride}")
        if self.border != "reflect":
            raise DomainError(f"unsupported border policy {self.border!r}")

    @property
    def radius(self) -> int:
        return self.size // 2


@dataclass
class ProbabilityMaps:
    """7 per-pixel class-probability planes for one image."""

    planes: np.ndarray  # [7, H, W] float64
    model_id: str = ""
    image_id: str = ""

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3 or self.planes.shape[0] != CLASS_COUNT:
            raise ShapeError(
                f"probability maps must be [{CLASS_COUNT},H,W], got {self.planes.shape}"
            )

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def validate(self, tolerance: float = 1e-9) -> None:
        if self.planes.min() < 0:
            raise DomainError("probability maps contain negative values")
        sums = self.planes.sum(axis=0)
        worst = float(np.abs(sums - 1.0).max())
        if worst > tolerance:
            raise DomainError(f"plane sums deviate from 1 by {worst:.3e}")


def model_fingerprint(params: dict[str, np.ndarray]) -> str:
    """Stable id over parameter bytes, for PM provenance."""
    chunks = []
    for name in sorted(params):
        chunks.append(name.encode("utf-8"))
        chunks.append(np.ascontiguousarray(params[name], dtype="<f8").tobytes())
    return digest64_hex(b"".join(chunks))


# ---------------------------------------------------------------------------
# training patch sampling


def _padded(image: Tensor, radius: int) -> Tensor:
    if min(image.shape[1], image.shape[2]) < radius + 1:
        raise DataError(
            f"image {image.shape[1]}x{image.shape[2]} too small to reflect-pad "
            f"by {radius}"
        )
    return np.pad(image, ((0, 0), (radius, radius), (radius, radius)), mode="reflect")


def sample_training_patches(
    image: Tensor,
    mask: np.ndarray,
    plan: PatchPlan,
    seed: int,
    per_class_quota: int,
) -> tuple[list[tuple[Tensor, int]], dict[int, int]]:
    """Class-balanced patch sampling around seed-deterministic centers.

    Draws up to `per_class_quota` centers per class (without replacement,
    restricted to the train_stride grid), reflect-padding at borders.
    Returns (patches, report) where report maps class index -> count; a
    class absent from the mask simply contributes zero patches.
    """
    if per_class_quota < 1:
        raise DomainError(f"per_class_quota must be >= 1, got {per_class_quota}")
    if mask.shape != image.shape[1:]:
        raise ShapeError(
            f"mask {mask.shape} does not match image planes {image.shape[1:]}"
        )
    radius = plan.radius
    padded = _padded(image, radius)
    patches: list[tuple[Tensor, int]] = []
    report: dict[int, int] = {}
    grid = np.zeros_like(mask, dtype=bool)
    grid[:: plan.train_stride, :: plan.train_stride] = True
    for cls in range(CLASS_COUNT):
        ys, xs = np.nonzero((mask == cls) & grid)
        if ys.size == 0:
            ys, xs = np.nonzero(mask == cls)  # off-grid fallback keeps rare classes
        count = min(per_class_quota, ys.size)
        report[cls] = count
        if count == 0:
            continue
        stream = Stream(derive(seed, "patch-centers", cls))
        chosen = stream.sample(range(ys.size), count)
        for pick in chosen:
            y, x = int(ys[pick]), int(xs[pick])
            patch = padded[:, y : y + plan.size, x : x + plan.size].copy()
            patches.append((patch, cls))
    return patches, report


# ---------------------------------------------------------------------------
# dense inference


def segment_naive(network: Network, image: Tensor, plan: PatchPlan) -> ProbabilityMaps:
    """Reference per-pixel loop: one forward pass per patch center."""
    _check_segment_inputs(network, image, plan)
    c, h, w = image.shape
    padded = _padded(image, plan.radius)
    planes = np.empty((CLASS_COUNT, h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            patch = padded[:, y : y + plan.size, x : x + plan.size]
            logits = network.forward_logits(patch[None])
            planes[:, y, x] = L.softmax_batch(logits)[0]
    return ProbabilityMaps(
        planes=planes, model_id=model_fingerprint(network.params), image_id=""
    )


def _check_segment_inputs(network: Network, image: Tensor, plan: PatchPlan) -> None:
    if network.spec.class_count != CLASS_COUNT:
        raise DomainError(
            f"segmentation model must have {CLASS_COUNT} classes, "
            f"got {network.spec.class_count}"
        )
    c_model, ph, pw = network.spec.input_shape
    if (ph, pw) != (plan.size, plan.size):
        raise ShapeError(
            f"model input {ph}x{pw} does not match patch size {plan.size}"
        )
    if image.ndim != 3 or image.shape[0] != c_model:
        raise ShapeError(
            f"image {image.shape} does not match model channels {c_model}"
        )
    if image.shape[1] < plan.size or image.shape[2] < plan.size:
        raise DataError(
            f"image {image.shape[1]}x{image.shape[2]} is smaller than one "
            f"{plan.size}x{plan.size} patch"
        )


def segment(
    network: Network,
    image: Tensor,
    plan: PatchPlan,
    image_id: str = "",
    chunk: int = 2048,
) -> ProbabilityMaps:
    """Probability maps via sliding-window inference (batched fast path).

    When the first layer is an unpadded convolution, its stride-1
    response over the whole padded image is computed once and gathered
    per patch; remaining layers run on patch chunks. Results are bitwise
    identical to segment_naive.
    """
    _check_segment_inputs(network, image, plan)
    c, h, w = image.shape
    radius = plan.radius
    padded = _padded(image, radius)
    spec = network.spec

    first = spec.layers[0]
    share_first = (
        first.kind == "conv"
        and first.padding == (0, 0, 0, 0)
    )
    planes = np.empty((CLASS_COUNT, h, w), dtype=np.float64)
    centers = [(y, x) for y in range(h) for x in range(w)]

    if share_first:
        # stride-1 response over the whole padded image; each patch's own
        # stride-s conv output is a strided gather from it, computed with
        # the identical per-element accumulation order
        name = layer_name(0, first)
        dense_geom = ConvGeometry(kernel=first.kernel, stride=(1, 1))
        full = L.conv2d_forward_batch(
            padded[None], network.params[f"{name}.w"], network.params[f"{name}.b"],
            dense_geom,
        )[0]
        resume = 1
        if len(spec.layers) > 1 and spec.layers[1].kind == "relu":
            full = L.relu_forward(full)
            resume = 2
        sh, sw = first.stride
        out_h = (plan.size - first.kernel[0]) // sh + 1
        out_w = (plan.size - first.kernel[1]) // sw + 1
        iy = np.arange(out_h) * sh
        ix = np.arange(out_w) * sw
        for start in range(0, len(centers), chunk):
            batch = centers[start : start + chunk]
            ys = np.array([p[0] for p in batch])
            xs = np.array([p[1] for p in batch])
            rows = ys[:, None] + iy[None, :]
            cols = xs[:, None] + ix[None, :]
            gathered = full[:, rows[:, :, None], cols[:, None, :]]
            acts = np.ascontiguousarray(gathered.transpose(1, 0, 2, 3))
            logits = network.forward_logits(acts, from_layer=resume)
            probs = L.softmax_batch(logits)
            for i, (y, x) in enumerate(batch):
                planes[:, y, x] = probs[i]
    else:
        for start in range(0, len(centers), chunk):
            batch = centers[start : start + chunk]
            stack = np.stack(
                [padded[:, y : y + plan.size, x : x + plan.size] for y, x in batch]
            )
            probs = L.softmax_batch(network.forward_logits(stack))
            for i, (y, x) in enumerate(batch):
                planes[:, y, x] = probs[i]

    return ProbabilityMaps(
        planes=planes, model_id=model_fingerprint(network.params), image_id=image_id
    )


def argmax_mask(pms: ProbabilityMaps) -> np.ndarray:
    """Most likely class per pixel; ties break to the lowest class index."""
    return pms.planes.argmax(axis=0).astype(np.uint8)


# ---------------------------------------------------------------------------
# export: grayscale PNGs plus a lossless sidecar


def quantize_probability(p: np.ndarray) -> np.ndarray:
    """p -> round(255 * p), round half up, as uint8."""
    return np.floor(np.clip(p, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def export_pms(pms: ProbabilityMaps, directory) -> list[Path]:
    """Write pm_<class>.png for all 7 classes plus the pms.fppm sidecar."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for idx, cls in enumerate(CLASS_NAMES):
            path = directory / f"pm_{cls}.png"
            _write_atomic(path, mask_to_bytes(quantize_probability(pms.planes[idx])))
            written.append(path)
        sidecar = directory / "pms.fppm"
        save_planes(sidecar, pms.planes)
        written.append(sidecar)
        return written
    except OSError as exc:
        raise DataError(f"cannot write probability maps under {directory}: {exc}") from exc


def save_planes(path, planes: np.ndarray) -> None:
    """FPPM sidecar: magic, version, width, height, plane count, f64 planes,
    blake2b-64 checksum over the raw plane bytes. Little-endian throughout."""
    planes = np.asarray(planes, dtype=np.float64)
    if planes.ndim != 3:
        raise ShapeError(f"sidecar planes must be [K,H,W], got {planes.shape}")
    k, h, w = planes.shape
    raw = np.ascontiguousarray(planes, dtype="<f8").tobytes()
    blob = b"".join([
        PM_MAGIC,
        struct.pack("<I", PM_VERSION),
        struct.pack("<I", w),
        struct.pack("<I", h),
        struct.pack("<I", k),
        raw,
        struct.pack("<Q", digest64(raw)),
    ])
    _write_atomic(path, blob)


def load_planes(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    head = struct.calcsize("<4sIIII")
    if len(data) < head:
        raise TruncatedError(f"{path}: too short for a sidecar header")
    magic, version, w, h, k = struct.unpack("<4sIIII", data[:head])
    if magic != PM_MAGIC:
        raise FormatError(f"{path}: not a probability-map sidecar (bad magic)")
    if version != PM_VERSION:
        raise VersionError(f"{path}: unsupported sidecar version {version}")
    payload = k * h * w * 8
    if len(data) != head + payload + 8:
        raise TruncatedError(
            f"{path}: expected {head + payload + 8} bytes, found {len(data)}"
        )
    raw = data[head : head + payload]
    (stored,) = struct.unpack("<Q", data[head + payload :])
    actual = digest64(raw)
    if stored != actual:
        raise ChecksumError(
            f"{path}: sidecar checksum mismatch (stored {stored:016x}, "
            f"computed {actual:016x})"
        )
    return np.frombuffer(raw, dtype="<f8").reshape(k, h, w).copy()
