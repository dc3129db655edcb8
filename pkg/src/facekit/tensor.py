"""Dense tensors and convolution geometry.

Tensors are plain numpy float64 arrays in canonical image order
(channels x height x width, with an optional leading batch extent);
all layer math in :mod:`facekit.layers` computes in 64-bit. 32-bit
values appear only as checkpoint storage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from facekit.errors import ShapeError

Tensor = np.ndarray


def as_tensor(data, shape=None) -> Tensor:
    """Validate and return a float64 tensor.

    Rejects non-finite-shaped input: every extent must be >= 1 and, when
    an explicit shape is given, the flat element count must match it.
    """
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        expected = int(np.prod(shape)) if shape else 1
        if arr.size != expected:
            raise ShapeError(
                f"cannot shape {arr.size} elements into {shape} "
                f"({expected} elements)"
            )
        arr = arr.reshape(shape)
    if arr.ndim > 0 and min(arr.shape, default=1) < 1:
        raise ShapeError(f"all extents must be >= 1, got shape {arr.shape}")
    return arr


def require_shape(name: str, arr: np.ndarray, shape: tuple) -> None:
    if tuple(arr.shape) != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {tuple(arr.shape)}")


def conv_output_extent(extent: int, kernel: int, stride: int, pad_total: int) -> int:
    """Output extent of a windowed op: floor((in + pad - k) / s) + 1."""
    return (extent + pad_total - kernel) // stride + 1


@dataclass(frozen=True)
class ConvGeometry:
    """Window geometry for conv and pooling layers.

    kernel:  (kh, kw) pixels
    stride:  (sh, sw) pixels
    padding: (top, bottom, left, right) pixels, zero-filled for conv and
             minus-infinity sentinel for max pooling
    """

    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int, int, int] = (0, 0, 0, 0)

    def __post_init__(self):
        kh, kw = self.kernel
        sh, sw = self.stride
        if kh < 1 or kw < 1:
            raise ShapeError(f"kernel extents must be >= 1, got {self.kernel}")
        if sh < 1 or sw < 1:
            raise ShapeError(f"stride extents must be >= 1, got {self.stride}")
        if min(self.padding) < 0:
            raise ShapeError(f"padding extents must be >= 0, got {self.padding}")

    def output_extent(self, height: int, width: int) -> tuple[int, int]:
        top, bottom, left, right = self.padding
        out_h = conv_output_extent(height, self.kernel[0], self.stride[0], top + bottom)
        out_w = conv_output_extent(width, self.kernel[1], self.stride[1], left + right)
        if out_h < 1 or out_w < 1:
            raise ShapeError(
                f"non-positive output extent {out_h}x{out_w} for input "
                f"{height}x{width} with {self}"
            )
        return out_h, out_w
