"""Dense NCHW float32 kernels: convolution, batch norm, resize, pooling.

Every higher-level block composes these functions. All kernels are pure:
identical inputs give bitwise-identical outputs for a fixed BLAS thread
count, and finite inputs always produce finite outputs.

Tensors are plain numpy arrays of shape (batch, channels, height, width),
float32, C-contiguous with width fastest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import GeometryError, ShapeError

Tensor = np.ndarray


def check_tensor(x: np.ndarray, name: str = "x") -> Tensor:
    """Coerce to a contiguous float32 NCHW tensor, rejecting bad ranks/extents."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"{name} must have 4 dims (B, C, H, W), got {x.ndim}")
    if min(x.shape) < 1:
        raise ShapeError(f"{name} has an empty dimension: shape {x.shape}")
    return np.ascontiguousarray(x, dtype=np.float32)


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one 2-d convolution layer."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    groups: int = 1
    has_bias: bool = False

    def validate(self) -> None:
        if self.in_channels < 1 or self.out_channels < 1:
            raise ShapeError(
                f"channels must be >= 1, got in={self.in_channels} out={self.out_channels}"
            )
        if self.groups < 1:
            raise ShapeError(f"groups must be >= 1, got {self.groups}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ShapeError(
                f"bad kernel/stride/padding: {self.kernel}/{self.stride}/{self.padding}"
            )

    @property
    def is_depthwise(self) -> bool:
        return self.groups > 1 and self.groups == self.in_channels == self.out_channels

    @property
    def is_pointwise(self) -> bool:
        return self.groups == 1 and self.kernel == (1, 1)

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, *self.kernel)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        """floor((dim + 2*pad - kernel)/stride) + 1; raises if it drops below 1."""
        kh, kw = self.kernel
        sh, sw = self.stride
        ph, pw = self.padding
        ho = (h + 2 * ph - kh) // sh + 1
        wo = (w + 2 * pw - kw) // sw + 1
        if ho < 1 or wo < 1:
            raise GeometryError(
                f"conv output size {ho}x{wo} < 1 for input {h}x{w}, "
                f"kernel {kh}x{kw}, stride {sh}x{sw}, padding {ph}x{pw}"
            )
        return ho, wo


@dataclass(frozen=True)
class BnParams:
    """Inference-mode batch-norm parameters, one scalar per channel."""

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def validate(self, channels: int) -> None:
        for name in ("gamma", "beta", "mean", "var"):
            v = getattr(self, name)
            if np.asarray(v).shape != (channels,):
                raise ShapeError(
                    f"bn.{name} must have length {channels}, got shape {np.asarray(v).shape}"
                )
        if self.eps <= 0:
            raise ShapeError(f"bn.eps must be > 0, got {self.eps}")
        if np.any(np.asarray(self.var) < 0):
            raise ShapeError("bn.var must be >= 0 elementwise")


def _pad_input(x: Tensor, ph: int, pw: int) -> Tensor:
    if ph == 0 and pw == 0:
        return x
    b, c, h, w = x.shape
    out = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=np.float32)
    out[:, :, ph : ph + h, pw : pw + w] = x
    return out


def _strided_patches(xp: Tensor, kh, kw, sh, sw, ho, wo) -> np.ndarray:
    """(B, C, kh, kw, Ho, Wo) read-only window view over the padded input."""
    b, c = xp.shape[:2]
    sb, sc, srow, scol = xp.strides
    return as_strided(
        xp,
        shape=(b, c, kh, kw, ho, wo),
        strides=(sb, sc, srow, scol, sh * srow, sw * scol),
        writeable=False,
    )


def conv2d(
    x: Tensor,
    spec: ConvSpec,
    weights: np.ndarray,
    bias: np.ndarray | None = None,
) -> Tensor:
    """Direct 2-d convolution with zero padding.

    Fast paths: 1x1 convs go straight to a strided GEMM, depthwise convs
    accumulate over the k*k taps, everything else is im2col + GEMM. The
    bias is applied whenever one is passed; `spec.has_bias` only drives
    planning (weight-file layout, parameter counting).
    """
    x = check_tensor(x)
    spec.validate()
    b, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"input has {c} channels, spec.in_channels is {spec.in_channels}")
    weights = np.ascontiguousarray(weights, dtype=np.float32)
    if weights.shape != spec.weight_shape:
        raise ShapeError(
            f"weights shape {weights.shape} does not match required {spec.weight_shape}"
        )
    if bias is not None:
        bias = np.ascontiguousarray(bias, dtype=np.float32)
        if bias.shape != (spec.out_channels,):
            raise ShapeError(
                f"bias length {bias.shape} does not match out_channels {spec.out_channels}"
            )

    ho, wo = spec.out_hw(h, w)
    kh, kw = spec.kernel
    sh, sw = spec.stride
    g = spec.groups
    oc = spec.out_channels

    xp = _pad_input(x, *spec.padding)

    if g == 1 and kh == 1 and kw == 1:
        cols = xp[:, :, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]
        cols = np.ascontiguousarray(cols).reshape(b, c, ho * wo)
        out = np.matmul(weights.reshape(oc, c), cols)
    elif spec.is_depthwise:
        out = np.zeros((b, c, ho, wo), dtype=np.float32)
        patches = _strided_patches(xp, kh, kw, sh, sw, ho, wo)
        for i in range(kh):
            for j in range(kw):
                out += weights[:, 0, i, j][None, :, None, None] * patches[:, :, i, j]
    elif g == 1:
        patches = _strided_patches(xp, kh, kw, sh, sw, ho, wo)
        cols = patches.reshape(b, c * kh * kw, ho * wo)
        out = np.matmul(weights.reshape(oc, -1), cols)
    else:
        cg, ocg = c // g, oc // g
        out = np.empty((b, oc, ho * wo), dtype=np.float32)
        for gi in range(g):
            patches = _strided_patches(
                np.ascontiguousarray(xp[:, gi * cg : (gi + 1) * cg]), kh, kw, sh, sw, ho, wo
            )
            cols = patches.reshape(b, cg * kh * kw, ho * wo)
            wg = weights[gi * ocg : (gi + 1) * ocg].reshape(ocg, -1)
            out[:, gi * ocg : (gi + 1) * ocg] = np.matmul(wg, cols)

    out = np.ascontiguousarray(out.reshape(b, oc, ho, wo))
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def batchnorm_infer(x: Tensor, bn: BnParams) -> Tensor:
    """y = gamma * (x - mean) / sqrt(var + eps) + beta, per channel."""
    x = check_tensor(x)
    bn.validate(x.shape[1])
    scale = np.asarray(bn.gamma, np.float64) / np.sqrt(np.asarray(bn.var, np.float64) + bn.eps)
    shift = np.asarray(bn.beta, np.float64) - np.asarray(bn.mean, np.float64) * scale
    scale32 = scale.astype(np.float32)[None, :, None, None]
    shift32 = shift.astype(np.float32)[None, :, None, None]
    return x * scale32 + shift32


def fold_bn_into_conv(
    weights: np.ndarray,
    bias: np.ndarray | None,
    bn: BnParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Absorb an inference-mode BN into the preceding conv's weights and bias.

    conv(x, w', b') == bn(conv(x, w, b)) within float32 rounding.
    """
    weights = np.asarray(weights, dtype=np.float32)
    out_channels = weights.shape[0]
    bn.validate(out_channels)
    scale = np.asarray(bn.gamma, np.float64) / np.sqrt(np.asarray(bn.var, np.float64) + bn.eps)
    folded_w = (weights.astype(np.float64) * scale[:, None, None, None]).astype(np.float32)
    b0 = np.zeros(out_channels, np.float64) if bias is None else np.asarray(bias, np.float64)
    if b0.shape != (out_channels,):
        raise ShapeError(f"bias length {b0.shape} does not match out_channels {out_channels}")
    folded_b = (np.asarray(bn.beta, np.float64) + (b0 - np.asarray(bn.mean, np.float64)) * scale)
    return folded_w, folded_b.astype(np.float32)


def relu(x: Tensor) -> Tensor:
    return np.maximum(np.asarray(x, dtype=np.float32), np.float32(0))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; sigmoid(x) + sigmoid(-x) == 1 exactly."""
    x = np.asarray(x, dtype=np.float32)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean, accumulated in float64, shape (B, C, 1, 1)."""
    x = check_tensor(x)
    return x.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(np.float32)


def bilinear_resize(x: Tensor, h_out: int, w_out: int) -> Tensor:
    """Bilinear resample with half-pixel centers and edge clamping.

    Source coordinate for output row i is clamp((i+0.5)*H/H_out - 0.5, 0, H-1),
    analogously for columns; the four neighbours are blended in float64.
    """
    x = check_tensor(x)
    if h_out < 1 or w_out < 1:
        raise GeometryError(f"resize target {h_out}x{w_out} < 1")
    b, c, h, w = x.shape
    if (h_out, w_out) == (h, w):
        return x.copy()

    # Coordinates and weights in float64; the blend itself runs in float32,
    # which stays ~1e-7 of the scalar float64 oracle.
    ys = np.clip((np.arange(h_out, dtype=np.float64) + 0.5) * (h / h_out) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(w_out, dtype=np.float64) + 0.5) * (w / w_out) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[None, None, :, None]
    wx = (xs - x0).astype(np.float32)[None, None, None, :]

    rows = x[:, :, y0, :] * (1.0 - wy) + x[:, :, y1, :] * wy
    out = rows[:, :, :, x0] * (1.0 - wx) + rows[:, :, :, x1] * wx
    return np.ascontiguousarray(out)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack `b`'s channels after `a`'s; batch and spatial dims must agree."""
    a = check_tensor(a, "a")
    b = check_tensor(b, "b")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(
            f"concat inputs disagree outside channels: {a.shape} vs {b.shape}"
        )
    return np.ascontiguousarray(np.concatenate([a, b], axis=1))


def elementwise_add(a: Tensor, b: Tensor) -> Tensor:
    a = check_tensor(a, "a")
    b = check_tensor(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"add inputs must match: {a.shape} vs {b.shape}")
    return a + b


def channel_scale(x: Tensor, gate: Tensor) -> Tensor:
    """Broadcast-multiply x by a per-channel gate of shape (B, C, 1, 1)."""
    x = check_tensor(x)
    gate = check_tensor(gate, "gate")
    if gate.shape != (x.shape[0], x.shape[1], 1, 1):
        raise ShapeError(
            f"gate shape {gate.shape} must be (B, C, 1, 1) = {(x.shape[0], x.shape[1], 1, 1)}"
        )
    return x * gate
