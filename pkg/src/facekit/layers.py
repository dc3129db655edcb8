"""Forward and backward passes for every layer primitive the network uses.

All functions are pure and compute in float64. The batched variants
(`*_batch`) and the single-sample wrappers produce bitwise-identical
values for the same sample: accumulation loops run over kernel entries
or input features in a fixed order, and every array op inside the loop
is elementwise, so results do not depend on the batch extent. That
property is what lets sliding-window inference batch patches while
matching the naive per-pixel loop exactly.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from facekit.errors import DomainError, ShapeError
from facekit.tensor import ConvGeometry, Tensor


def _pad_zeros(x: Tensor, padding) -> Tensor:
    top, bottom, left, right = padding
    if top == bottom == left == right == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + top + bottom, w + left + right), dtype=np.float64)
    out[:, :, top : top + h, left : left + w] = x
    return out


# ---------------------------------------------------------------------------
# convolution


def conv2d_forward_batch(x: Tensor, weights: Tensor, bias: Tensor, geom: ConvGeometry) -> Tensor:
    """Convolve a batch [N,C,H,W] with kernels [F,C,kh,kw] -> [N,F,H',W'].

    Each output element is bias plus the window inner product accumulated
    in fixed (channel, row, col) kernel order.
    """
    n, c, h, w = x.shape
    f, cw, kh, kw = weights.shape
    if cw != c:
        raise ShapeError(
            f"weight channels do not match input channels: weights {weights.shape} "
            f"vs input {x.shape}"
        )
    if (kh, kw) != tuple(geom.kernel):
        raise ShapeError(f"weights kernel {(kh, kw)} does not match geometry {geom.kernel}")
    if bias.shape != (f,):
        raise ShapeError(f"bias: expected shape {(f,)}, got {bias.shape}")
    out_h, out_w = geom.output_extent(h, w)
    sh, sw = geom.stride
    xp = _pad_zeros(x, geom.padding)

    out = np.empty((n, f, out_h, out_w), dtype=np.float64)
    out[:] = bias.reshape(1, f, 1, 1)
    for ci in range(c):
        for u in range(kh):
            for v in range(kw):
                patch = xp[:, ci, u : u + sh * out_h : sh, v : v + sw * out_w : sw]
                out += weights[None, :, ci, u, v, None, None] * patch[:, None, :, :]
    return out


def conv2d_forward(x: Tensor, weights: Tensor, bias: Tensor, geom: ConvGeometry) -> Tensor:
    if x.ndim != 3:
        raise ShapeError(f"conv2d_forward expects [C,H,W], got {x.shape}")
    if weights.shape[1] != x.shape[0]:
        raise ShapeError(
            f"weight channels do not match input channels: weights {weights.shape} "
            f"vs input {x.shape}"
        )
    return conv2d_forward_batch(x[None], weights, bias, geom)[0]


def conv2d_backward_batch(
    x: Tensor, weights: Tensor, geom: ConvGeometry, upstream: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Exact gradients of conv2d_forward_batch w.r.t. input, weights, bias."""
    n, c, h, w = x.shape
    f, _, kh, kw = weights.shape
    out_h, out_w = geom.output_extent(h, w)
    if upstream.shape != (n, f, out_h, out_w):
        raise ShapeError(
            f"upstream: expected shape {(n, f, out_h, out_w)}, got {upstream.shape}"
        )
    sh, sw = geom.stride
    top, bottom, left, right = geom.padding
    xp = _pad_zeros(x, geom.padding)

    grad_bias = upstream.sum(axis=(0, 2, 3))
    grad_weights = np.zeros_like(weights)
    grad_xp = np.zeros_like(xp)
    for ci in range(c):
        for u in range(kh):
            for v in range(kw):
                patch = xp[:, ci, u : u + sh * out_h : sh, v : v + sw * out_w : sw]
                grad_weights[:, ci, u, v] = (upstream * patch[:, None, :, :]).sum(axis=(0, 2, 3))
                grad_xp[:, ci, u : u + sh * out_h : sh, v : v + sw * out_w : sw] += (
                    upstream * weights[None, :, ci, u, v, None, None]
                ).sum(axis=1)
    grad_x = grad_xp[:, :, top : top + h, left : left + w]
    return grad_x, grad_weights, grad_bias


def conv2d_backward(x, weights, geom, upstream):
    gx, gw, gb = conv2d_backward_batch(x[None], weights, geom, upstream[None])
    return gx[0], gw, gb


# ---------------------------------------------------------------------------
# max pooling


def maxpool_forward_batch(x: Tensor, geom: ConvGeometry) -> tuple[Tensor, np.ndarray]:
    """Max over each window; returns (output, argmax record).

    The record holds, per output element, the flat index of the winning
    source cell in the padded input plane. Padding participates with a
    minus-infinity sentinel so it never wins; a window made entirely of
    padding is rejected. Ties break to the lowest flat index.
    """
    n, c, h, w = x.shape
    kh, kw = geom.kernel
    sh, sw = geom.stride
    out_h, out_w = geom.output_extent(h, w)
    top, bottom, left, right = geom.padding
    hp, wp = h + top + bottom, w + left + right
    if top or bottom or left or right:
        xp = np.full((n, c, hp, wp), -np.inf, dtype=np.float64)
        xp[:, :, top : top + h, left : left + w] = x
    else:
        xp = np.asarray(x, dtype=np.float64)

    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, :: sh, :: sw][:, :, :out_h, :out_w]
    flat = windows.reshape(n, c, out_h, out_w, kh * kw)
    win_idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, win_idx[..., None], axis=-1)[..., 0]
    if np.isneginf(out).any():
        raise ShapeError("max-pool window lies entirely inside padding")

    base_y = np.arange(out_h)[:, None] * sh
    base_x = np.arange(out_w)[None, :] * sw
    record = (base_y[None, None] + win_idx // kw) * wp + (base_x[None, None] + win_idx % kw)
    return out, record.astype(np.int64)


def maxpool_forward(x: Tensor, geom: ConvGeometry) -> tuple[Tensor, np.ndarray]:
    if x.ndim != 3:
        raise ShapeError(f"maxpool_forward expects [C,H,W], got {x.shape}")
    out, record = maxpool_forward_batch(x[None], geom)
    return out[0], record[0]


def maxpool_backward_batch(
    record: np.ndarray, input_shape: tuple, geom: ConvGeometry, upstream: Tensor
) -> Tensor:
    """Scatter upstream gradient back to the winning source cells."""
    n, c, h, w = input_shape
    if upstream.shape != record.shape:
        raise ShapeError(f"upstream: expected shape {record.shape}, got {upstream.shape}")
    top, bottom, left, right = geom.padding
    hp, wp = h + top + bottom, w + left + right
    grad_p = np.zeros((n, c, hp * wp), dtype=np.float64)
    flat_idx = record.reshape(n, c, -1)
    np.add.at(grad_p, (np.arange(n)[:, None, None], np.arange(c)[None, :, None], flat_idx),
              upstream.reshape(n, c, -1))
    grad_p = grad_p.reshape(n, c, hp, wp)
    return grad_p[:, :, top : top + h, left : left + w]


def maxpool_backward(record, input_shape, geom, upstream):
    return maxpool_backward_batch(record[None], (1, *input_shape), geom, upstream[None])[0]


# ---------------------------------------------------------------------------
# relu


def relu_forward(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(x: Tensor, upstream: Tensor) -> Tensor:
    """Pass upstream where input > 0; the subgradient at exactly 0 is 0."""
    if upstream.shape != x.shape:
        raise ShapeError(f"upstream: expected shape {x.shape}, got {upstream.shape}")
    return np.where(x > 0.0, upstream, 0.0)


# ---------------------------------------------------------------------------
# dense (affine)


def dense_forward_batch(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map for a batch [N,n] with weights [m,n], bias [m] -> [N,m].

    Accumulates over input features in fixed ascending order (elementwise
    ops only) so results are independent of the batch extent.
    """
    n_batch, n_in = x.shape
    m, n_w = weights.shape
    if n_w != n_in:
        raise ShapeError(
            f"weight width does not match input: weights {weights.shape} vs input {x.shape}"
        )
    if bias.shape != (m,):
        raise ShapeError(f"bias: expected shape {(m,)}, got {bias.shape}")
    out = np.empty((n_batch, m), dtype=np.float64)
    out[:] = bias
    for k in range(n_in):
        out += x[:, k, None] * weights[None, :, k]
    return out


def dense_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    if x.ndim != 1:
        raise ShapeError(f"dense_forward expects a vector, got {x.shape}")
    return dense_forward_batch(x[None], weights, bias)[0]


def dense_backward_batch(
    x: Tensor, weights: Tensor, upstream: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    n_batch, n_in = x.shape
    m = weights.shape[0]
    if upstream.shape != (n_batch, m):
        raise ShapeError(f"upstream: expected shape {(n_batch, m)}, got {upstream.shape}")
    grad_bias = upstream.sum(axis=0)
    grad_w = np.empty_like(weights)
    grad_x = np.empty_like(x)
    for k in range(n_in):
        grad_w[:, k] = (upstream * x[:, k, None]).sum(axis=0)
        grad_x[:, k] = (upstream * weights[None, :, k]).sum(axis=1)
    return grad_x, grad_w, grad_bias


def dense_backward(x, weights, upstream):
    gx, gw, gb = dense_backward_batch(x[None], weights, upstream[None])
    return gx[0], gw, gb


# ---------------------------------------------------------------------------
# softmax + cross-entropy head


def softmax_batch(logits: Tensor) -> Tensor:
    """Max-subtraction stabilized softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy_batch(
    logits: Tensor, labels: np.ndarray
) -> tuple[Tensor, Tensor, Tensor]:
    """Per-sample losses, probabilities and logit gradients for [N,k] logits."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels: expected shape {(n,)}, got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        bad = int(labels[(labels < 0) | (labels >= k)][0])
        raise DomainError(f"class index {bad} out of range [0, {k})")
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    e = np.exp(shifted)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    # loss = log(sum exp(shifted)) - shifted[true]; avoids log(0) underflow
    rows = np.arange(n)
    losses = np.log(z[:, 0]) - shifted[rows, labels]
    grads = probs.copy()
    grads[rows, labels] -= 1.0
    return losses, probs, grads


def softmax_cross_entropy(logits: Tensor, true_class: int) -> tuple[float, Tensor, Tensor]:
    """Stabilized softmax cross-entropy for one logit vector.

    Returns (loss, probs, grad_logits) with grad = probs - onehot(true).
    """
    if logits.ndim != 1:
        raise ShapeError(f"softmax_cross_entropy expects a vector, got {logits.shape}")
    true_class = int(true_class)
    if not 0 <= true_class < logits.shape[0]:
        raise DomainError(
            f"class index {true_class} out of range [0, {logits.shape[0]})"
        )
    losses, probs, grads = softmax_cross_entropy_batch(logits[None], np.array([true_class]))
    return float(losses[0]), probs[0], grads[0]
