"""Data-driven network descriptions: layer specs, shape inference, padding.

A network is an ordered list of layer specs ending in a softmax head.
Conv and pool layers may declare an expected spatial output; padding is
then resolved by searching totals 0, 1, 2, ... (and, within a total,
splits with the smaller top/left first) for the first padding that
reproduces the declared size. This keeps the window math conventional
while hitting every declared output exactly, including profiles whose
declared sizes are unreachable with symmetric padding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from facekit.errors import DomainError, ShapeError
from facekit.tensor import ConvGeometry, conv_output_extent

LAYER_KINDS = ("conv", "maxpool", "relu", "dense", "softmax-head")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a network description.

    conv:    kernel, stride, optional padding, feature_maps, optional
             declared_output (H, W)
    maxpool: kernel, stride, optional padding, optional declared_output
    dense:   feature_maps = output width
    relu / softmax-head: no fields
    """

    kind: str
    kernel: tuple[int, int] | None = None
    stride: tuple[int, int] | None = None
    padding: tuple[int, int, int, int] | None = None
    feature_maps: int | None = None
    declared_output: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise DomainError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "maxpool"):
            if self.kernel is None or self.stride is None:
                raise DomainError(f"{self.kind} layer requires kernel and stride")
            if self.kind == "conv" and not self.feature_maps:
                raise DomainError("conv layer requires feature_maps")
        elif self.kind == "dense":
            if not self.feature_maps:
                raise DomainError("dense layer requires feature_maps (output width)")
        else:
            if self.kernel or self.feature_maps or self.declared_output:
                raise DomainError(f"{self.kind} layer carries no geometry")

    def geometry(self) -> ConvGeometry:
        if self.padding is None:
            raise DomainError(f"{self.kind} layer padding is unresolved")
        return ConvGeometry(kernel=self.kernel, stride=self.stride, padding=self.padding)


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape, ordered layers, and the class count of the softmax head."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise DomainError(f"input_shape must be (C,H,W) >= 1, got {self.input_shape}")
        if self.class_count < 2:
            raise DomainError(f"class_count must be >= 2, got {self.class_count}")
        heads = [i for i, l in enumerate(self.layers) if l.kind == "softmax-head"]
        if heads != [len(self.layers) - 1]:
            raise DomainError("network must end with exactly one softmax-head")


def _search_pad_total(extent: int, kernel: int, stride: int, declared: int,
                      limit: int) -> int | None:
    for total in range(limit + 1):
        if extent + total - kernel >= 0:
            if conv_output_extent(extent, kernel, stride, total) == declared:
                return total
    return None


def _split_light_first(total: int) -> tuple[int, int]:
    # smaller leading (top/left) side first; all splits of one total give
    # the same output extent, so the first candidate wins
    return 0, total


def resolve_padding(spec: NetworkSpec) -> NetworkSpec:
    """Fill in unresolved conv/pool paddings.

    Layers with a declared output get the minimal-total padding that
    reproduces it (search order: total 0,1,2,... up to 2*kernel; within a
    total, smaller top/left first). Layers without a declaration keep an
    explicit padding if present and default to zero otherwise. Idempotent.
    """
    c, h, w = spec.input_shape
    cur_h, cur_w = h, w
    resolved = []
    for idx, layer in enumerate(spec.layers):
        if layer.kind in ("conv", "maxpool"):
            kh, kw = layer.kernel
            sh, sw = layer.stride
            if layer.padding is not None:
                pad = layer.padding
            elif layer.declared_output is not None:
                want_h, want_w = layer.declared_output
                tot_h = _search_pad_total(cur_h, kh, sh, want_h, 2 * kh)
                tot_w = _search_pad_total(cur_w, kw, sw, want_w, 2 * kw)
                if tot_h is None or tot_w is None:
                    raise ShapeError(
                        f"layer {idx} ({layer.kind}): no padding in [0, 2k] maps "
                        f"{cur_h}x{cur_w} to declared output {want_h}x{want_w}"
                    )
                top, bottom = _split_light_first(tot_h)
                left, right = _split_light_first(tot_w)
                pad = (top, bottom, left, right)
            else:
                pad = (0, 0, 0, 0)
            geom = ConvGeometry(kernel=layer.kernel, stride=layer.stride, padding=pad)
            out_h, out_w = geom.output_extent(cur_h, cur_w)
            if layer.declared_output is not None and (out_h, out_w) != tuple(layer.declared_output):
                raise ShapeError(
                    f"layer {idx} ({layer.kind}): padding {pad} yields {out_h}x{out_w}, "
                    f"declared {layer.declared_output}"
                )
            resolved.append(replace(layer, padding=pad))
            cur_h, cur_w = out_h, out_w
        else:
            resolved.append(layer)
    return replace(spec, layers=tuple(resolved))


def infer_shapes(spec: NetworkSpec) -> list[tuple[LayerSpec, tuple]]:
    """Output shape after every layer; requires resolved padding.

    Conv/pool shapes are (maps, H, W); dense output is (width,); the
    softmax head preserves the (class_count,) logits shape.
    """
    c, h, w = spec.input_shape
    shape: tuple = (c, h, w)
    out = []
    for idx, layer in enumerate(spec.layers):
        if layer.kind == "conv":
            _, cur_h, cur_w = shape
            out_h, out_w = layer.geometry().output_extent(cur_h, cur_w)
            shape = (layer.feature_maps, out_h, out_w)
        elif layer.kind == "maxpool":
            maps, cur_h, cur_w = shape
            out_h, out_w = layer.geometry().output_extent(cur_h, cur_w)
            shape = (maps, out_h, out_w)
        elif layer.kind == "dense":
            shape = (int(layer.feature_maps),)
        elif layer.kind == "relu":
            pass
        elif layer.kind == "softmax-head":
            if shape != (spec.class_count,):
                raise ShapeError(
                    f"softmax-head expects ({spec.class_count},) logits, "
                    f"network produces {shape}"
                )
        if min(shape) < 1:
            raise ShapeError(f"layer {idx} ({layer.kind}) yields non-positive shape {shape}")
        out.append((layer, shape))
    return out


def conv_pool_cells(spec: NetworkSpec) -> list[tuple[int, int]]:
    """(spatial size, feature maps) per conv/pool layer, in order."""
    cells = []
    for layer, shape in infer_shapes(spec):
        if layer.kind in ("conv", "maxpool"):
            cells.append((shape[1], shape[0]))
    return cells


# ---------------------------------------------------------------------------
# canonical JSON form (used by profile files and checkpoint spec blobs)


def layer_to_dict(layer: LayerSpec) -> dict:
    d: dict = {"kind": layer.kind}
    if layer.kernel is not None:
        d["kernel"] = list(layer.kernel)
        d["stride"] = list(layer.stride)
        d["padding"] = list(layer.padding) if layer.padding is not None else None
    if layer.feature_maps is not None:
        d["feature_maps"] = layer.feature_maps
    if layer.declared_output is not None:
        d["declared_output"] = list(layer.declared_output)
    return d


def layer_from_dict(d: dict) -> LayerSpec:
    def tup(v):
        return tuple(v) if v is not None else None

    return LayerSpec(
        kind=d["kind"],
        kernel=tup(d.get("kernel")),
        stride=tup(d.get("stride")),
        padding=tup(d.get("padding")),
        feature_maps=d.get("feature_maps"),
        declared_output=tup(d.get("declared_output")),
    )


def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_shape": list(spec.input_shape),
        "class_count": spec.class_count,
        "layers": [layer_to_dict(l) for l in spec.layers],
    }


def spec_from_dict(d: dict) -> NetworkSpec:
    return NetworkSpec(
        input_shape=tuple(d["input_shape"]),
        layers=tuple(layer_from_dict(ld) for ld in d["layers"]),
        class_count=int(d["class_count"]),
    )


def canonical_json(obj) -> str:
    """Stable structured-text serialization: sorted keys, 2-space indent."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
