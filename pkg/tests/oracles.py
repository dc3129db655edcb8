"""Independent reference implementations used to compute expected values.

These stay deliberately naive (nested loops, direct definitions) and are
kept in the suite so every numeric expectation remains re-derivable. They
must not share code with the implementations they check.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_reference(x, weights, bias, kernel, stride, padding):
    """Direct nested-loop convolution over a zero-padded [C,H,W] input."""
    c, h, w = x.shape
    f = weights.shape[0]
    kh, kw = kernel
    sh, sw = stride
    top, bottom, left, right = padding
    hp, wp = h + top + bottom, w + left + right
    xp = np.zeros((c, hp, wp))
    xp[:, top : top + h, left : left + w] = x
    out_h = (hp - kh) // sh + 1
    out_w = (wp - kw) // sw + 1
    out = np.zeros((f, out_h, out_w))
    for fi in range(f):
        for i in range(out_h):
            for j in range(out_w):
                acc = bias[fi]
                for ci in range(c):
                    for u in range(kh):
                        for v in range(kw):
                            acc += weights[fi, ci, u, v] * xp[ci, i * sh + u, j * sw + v]
                out[fi, i, j] = acc
    return out


def maxpool_reference(x, kernel, stride, padding):
    """Direct max over windows; padded cells hold -inf."""
    c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    top, bottom, left, right = padding
    hp, wp = h + top + bottom, w + left + right
    xp = np.full((c, hp, wp), -math.inf)
    xp[:, top : top + h, left : left + w] = x
    out_h = (hp - kh) // sh + 1
    out_w = (wp - kw) // sw + 1
    out = np.zeros((c, out_h, out_w))
    for ci in range(c):
        for i in range(out_h):
            for j in range(out_w):
                out[ci, i, j] = xp[ci, i * sh : i * sh + kh, j * sw : j * sw + kw].max()
    return out


def argmax_mask_reference(planes):
    """Per-pixel scan over [K,H,W] planes; ties to the lowest class index."""
    k, h, w = planes.shape
    mask = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            best, best_c = planes[0, y, x], 0
            for c in range(1, k):
                if planes[c, y, x] > best:
                    best, best_c = planes[c, y, x], c
            mask[y, x] = best_c
    return mask


def summary_reference(planes):
    """Straight-loop per-class mean/std/area statistics over [7,H,W] planes."""
    k, h, w = planes.shape
    n = h * w
    values = []
    counts = [0] * k
    for y in range(h):
        for x in range(w):
            best, best_c = planes[0, y, x], 0
            for c in range(1, k):
                if planes[c, y, x] > best:
                    best, best_c = planes[c, y, x], c
            counts[best_c] += 1
    for c in range(k):
        total = 0.0
        for y in range(h):
            for x in range(w):
                total += planes[c, y, x]
        mean = total / n
        sq = 0.0
        for y in range(h):
            for x in range(w):
                sq += (planes[c, y, x] - mean) ** 2
        std = math.sqrt(sq / n)
        values.extend([mean, std, counts[c] / n])
    return np.array(values)


def confusion_reference(pred, truth, k):
    """Per-pixel tally; rows are truth classes, columns predictions."""
    cm = np.zeros((k, k), dtype=np.int64)
    for y in range(truth.shape[0]):
        for x in range(truth.shape[1]):
            cm[truth[y, x], pred[y, x]] += 1
    return cm


def momentum_closed_form(grads, lr, momentum):
    """v_t = -lr * sum_{i<=t} momentum^(t-i) * g_i, evaluated stepwise."""
    v = 0.0
    trace = []
    for g in grads:
        v = momentum * v - lr * g
        trace.append(v)
    return trace
