"""Naive float64 reference implementations used as verification oracles.

These deliberately avoid the fast kernels' code paths: convolution sums
taps directly per output element, pooling uses exact fsum accumulation,
resizing evaluates the coordinate formula scalar by scalar. They are slow
and only run on small shapes inside self-test and the test suite.
"""

from __future__ import annotations

import math

import numpy as np

from .ops import ConvSpec


def conv2d_reference(
    x: np.ndarray,
    spec: ConvSpec,
    weights: np.ndarray,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """Direct-summation convolution, one output element at a time, in float64."""
    x = np.asarray(x, np.float64)
    weights = np.asarray(weights, np.float64)
    b, c, h, w = x.shape
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.padding
    ho, wo = spec.out_hw(h, w)
    g = spec.groups
    cg = spec.in_channels // g
    ocg = spec.out_channels // g

    xp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), np.float64)
    xp[:, :, ph : ph + h, pw : pw + w] = x
    out = np.zeros((b, spec.out_channels, ho, wo), np.float64)
    for bi in range(b):
        for oc in range(spec.out_channels):
            gi = oc // ocg
            src = xp[bi, gi * cg : (gi + 1) * cg]
            kernel = weights[oc]
            for oh in range(ho):
                for ow in range(wo):
                    window = src[:, oh * sh : oh * sh + kh, ow * sw : ow * sw + kw]
                    out[bi, oc, oh, ow] = float(np.sum(window * kernel))
    if bias is not None:
        out += np.asarray(bias, np.float64)[None, :, None, None]
    return out


def batchnorm_reference(x: np.ndarray, gamma, beta, mean, var, eps: float) -> np.ndarray:
    """Elementwise scalar formula evaluated directly in float64."""
    x = np.asarray(x, np.float64)
    gamma = np.asarray(gamma, np.float64)[None, :, None, None]
    beta = np.asarray(beta, np.float64)[None, :, None, None]
    mean = np.asarray(mean, np.float64)[None, :, None, None]
    var = np.asarray(var, np.float64)[None, :, None, None]
    return gamma * (x - mean) / np.sqrt(var + eps) + beta


def global_avg_pool_reference(x: np.ndarray) -> np.ndarray:
    """Exact per-channel mean via math.fsum."""
    x = np.asarray(x, np.float64)
    b, c = x.shape[:2]
    out = np.zeros((b, c, 1, 1), np.float64)
    area = x.shape[2] * x.shape[3]
    for bi in range(b):
        for ci in range(c):
            out[bi, ci, 0, 0] = math.fsum(x[bi, ci].ravel().tolist()) / area
    return out


def bilinear_reference(x: np.ndarray, h_out: int, w_out: int) -> np.ndarray:
    """Half-pixel-center bilinear sampling evaluated scalar by scalar."""
    x = np.asarray(x, np.float64)
    b, c, h, w = x.shape
    out = np.zeros((b, c, h_out, w_out), np.float64)
    for i in range(h_out):
        sy = min(max((i + 0.5) * h / h_out - 0.5, 0.0), h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        dy = sy - y0
        for j in range(w_out):
            sx = min(max((j + 0.5) * w / w_out - 0.5, 0.0), w - 1.0)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            dx = sx - x0
            top = x[:, :, y0, x0] * (1 - dx) + x[:, :, y0, x1] * dx
            bot = x[:, :, y1, x0] * (1 - dx) + x[:, :, y1, x1] * dx
            out[:, :, i, j] = top * (1 - dy) + bot * dy
    return out


def bce_reference(logits: np.ndarray, target: np.ndarray) -> float:
    """Literal -[t ln p + (1-t) ln(1-p)] mean in float64 (not overflow-safe)."""
    z = np.asarray(logits, np.float64)
    t = np.asarray(target, np.float64)
    p = 1.0 / (1.0 + np.exp(-z))
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def dice_iou_pixel_count(pred: np.ndarray, gt: np.ndarray, eps: float) -> tuple[float, float]:
    """Brute-force pixel counting over binary masks, then the two formulas."""
    inter = p_count = g_count = 0
    for pv, gv in zip(np.asarray(pred).ravel().tolist(), np.asarray(gt).ravel().tolist()):
        p_count += pv > 0.5
        g_count += gv > 0.5
        inter += (pv > 0.5) and (gv > 0.5)
    dice = (2.0 * inter + eps) / (p_count + g_count + eps)
    iou = (inter + eps) / (p_count + g_count - inter + eps)
    return dice, iou


def finite_difference_grad(loss_fn, logits: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. every logit, float64."""
    z = np.asarray(logits, np.float64)
    grad = np.zeros_like(z)
    it = np.nditer(z, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        zp = z.copy()
        zp[idx] += h
        zm = z.copy()
        zm[idx] -= h
        grad[idx] = (loss_fn(zp) - loss_fn(zm)) / (2.0 * h)
        it.iternext()
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Infinity-norm relative error: max|a-b| / max(max|b|, tiny)."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    denom = max(float(np.max(np.abs(b))), 1e-12)
    return float(np.max(np.abs(a - b))) / denom
