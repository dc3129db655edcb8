"""Assembled runtime networks: parameter init, forward pass, backprop.

Parameters live in a flat dict keyed by block name (``l00_conv.w`` etc).
Weights draw from a zero-mean uniform distribution scaled by fan-in
(bound = sqrt(6 / fan_in)); biases start at zero. Every block has its
own derived splitmix64 stream, so initialization is a pure function of
(spec, seed) regardless of evaluation order.
"""

from __future__ import annotations

import math

import numpy as np

from facekit import layers as L
from facekit.errors import ShapeError
from facekit.netspec import LayerSpec, NetworkSpec, infer_shapes
from facekit.rng import Stream, derive
from facekit.tensor import Tensor


def layer_name(index: int, layer: LayerSpec) -> str:
    kind = layer.kind.replace("softmax-head", "softmax")
    return f"l{index:02d}_{kind}"


def parameter_shapes(spec: NetworkSpec) -> dict[str, tuple]:
    """Block name -> shape, in canonical layer order."""
    shapes: dict[str, tuple] = {}
    in_shape = spec.input_shape
    for idx, (layer, out_shape) in enumerate(infer_shapes(spec)):
        name = layer_name(idx, layer)
        if layer.kind == "conv":
            c = in_shape[0]
            kh, kw = layer.kernel
            shapes[f"{name}.w"] = (layer.feature_maps, c, kh, kw)
            shapes[f"{name}.b"] = (layer.feature_maps,)
        elif layer.kind == "dense":
            n_in = int(np.prod(in_shape))
            shapes[f"{name}.w"] = (layer.feature_maps, n_in)
            shapes[f"{name}.b"] = (layer.feature_maps,)
        in_shape = out_shape
    return shapes


def _fan_in(shape: tuple) -> int:
    return int(np.prod(shape[1:]))


def init_parameters(spec: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases, derived stream per block."""
    params: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(spec).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            bound = math.sqrt(6.0 / _fan_in(shape))
            stream = Stream(derive(seed, "init", name))
            params[name] = stream.uniform(int(np.prod(shape)), -bound, bound).reshape(shape)
    return params


class Network:
    """A resolved spec bound to a parameter dict, with batched passes."""

    def __init__(self, spec: NetworkSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        self.params = params
        self._shapes = [spec.input_shape] + [s for _, s in infer_shapes(spec)]
        expected = parameter_shapes(spec)
        for name, shape in expected.items():
            if name not in params:
                raise ShapeError(f"missing parameter block {name}")
            if tuple(params[name].shape) != shape:
                raise ShapeError(
                    f"parameter block {name}: expected shape {shape}, got {params[name].shape}"
                )

    @classmethod
    def initialized(cls, spec: NetworkSpec, seed: int) -> "Network":
        return cls(spec, init_parameters(spec, seed))

    # -- forward -----------------------------------------------------------

    def forward_logits(self, x: Tensor, from_layer: int = 0, caches: list | None = None) -> Tensor:
        """Logits for a batch [N,...]; optionally record per-layer caches.

        `from_layer` lets sliding-window inference resume after a prefix
        that was computed once and gathered per patch.
        """
        act = x
        for idx in range(from_layer, len(self.spec.layers)):
            layer = self.spec.layers[idx]
            name = layer_name(idx, layer)
            if layer.kind == "conv":
                if caches is not None:
                    caches.append(("conv", idx, act))
                act = L.conv2d_forward_batch(
                    act, self.params[f"{name}.w"], self.params[f"{name}.b"], layer.geometry()
                )
            elif layer.kind == "maxpool":
                out, record = L.maxpool_forward_batch(act, layer.geometry())
                if caches is not None:
                    caches.append(("maxpool", idx, (act.shape, record)))
                act = out
            elif layer.kind == "relu":
                if caches is not None:
                    caches.append(("relu", idx, act))
                act = L.relu_forward(act)
            elif layer.kind == "dense":
                flat = act.reshape(act.shape[0], -1)
                if caches is not None:
                    caches.append(("dense", idx, (act.shape, flat)))
                act = L.dense_forward_batch(
                    flat, self.params[f"{name}.w"], self.params[f"{name}.b"]
                )
            elif layer.kind == "softmax-head":
                pass  # logits; softmax applied by probs()/loss
        return act

    def probs(self, x: Tensor) -> Tensor:
        return L.softmax_batch(self.forward_logits(x))

    # -- loss + backprop ---------------------------------------------------

    def loss_and_grads(
        self, x: Tensor, labels: np.ndarray
    ) -> tuple[float, float, dict[str, np.ndarray]]:
        """Mean cross-entropy loss, accuracy, and mean parameter gradients."""
        caches: list = []
        logits = self.forward_logits(x, caches=caches)
        losses, probs, grad_logits = L.softmax_cross_entropy_batch(logits, labels)
        n = x.shape[0]
        loss = float(losses.sum() / n)
        accuracy = float((probs.argmax(axis=1) == np.asarray(labels)).sum() / n)

        grads = {name: np.zeros_like(v) for name, v in self.params.items()}
        upstream = grad_logits / n
        for kind, idx, cache in reversed(caches):
            layer = self.spec.layers[idx]
            name = layer_name(idx, layer)
            if kind == "conv":
                gx, gw, gb = L.conv2d_backward_batch(
                    cache, self.params[f"{name}.w"], layer.geometry(), upstream
                )
                grads[f"{name}.w"] += gw
                grads[f"{name}.b"] += gb
                upstream = gx
            elif kind == "maxpool":
                in_shape, record = cache
                upstream = L.maxpool_backward_batch(record, in_shape, layer.geometry(), upstream)
            elif kind == "relu":
                upstream = L.relu_backward(cache, upstream)
            elif kind == "dense":
                in_shape, flat = cache
                gx, gw, gb = L.dense_backward_batch(flat, self.params[f"{name}.w"], upstream)
                grads[f"{name}.w"] += gw
                grads[f"{name}.b"] += gb
                upstream = gx.reshape(in_shape)
        return loss, accuracy, grads

    def input_gradient(self, x: Tensor, labels: np.ndarray) -> np.ndarray:
        """Mean loss gradient w.r.t. the input batch (for gradient checks)."""
        caches: list = []
        logits = self.forward_logits(x, caches=caches)
        losses, _, grad_logits = L.softmax_cross_entropy_batch(logits, labels)
        upstream = grad_logits / x.shape[0]
        for kind, idx, cache in reversed(caches):
            layer = self.spec.layers[idx]
            name = layer_name(idx, layer)
            if kind == "conv":
                upstream, _, _ = L.conv2d_backward_batch(
                    cache, self.params[f"{name}.w"], layer.geometry(), upstream
                )
            elif kind == "maxpool":
                in_shape, record = cache
                upstream = L.maxpool_backward_batch(record, in_shape, layer.geometry(), upstream)
            elif kind == "relu":
                upstream = L.relu_backward(cache, upstream)
            elif kind == "dense":
                in_shape, flat = cache
                gx, _, _ = L.dense_backward_batch(flat, self.params[f"{name}.w"], upstream)
                upstream = gx.reshape(in_shape)
        return upstream
