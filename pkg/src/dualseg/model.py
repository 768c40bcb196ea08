"""Forward execution of the layer plan, whole-model and per-block.

Every forward here interprets Node lists from `graph`, calling the ops
kernels in a fixed order (conv, then BN, then ReLU), so running a block
through `run_graph` is bitwise identical to composing the kernels by hand.
Intermediate tensors are freed after their last use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import LayerError, ShapeError
from .graph import (
    F4,
    F8,
    F16_REF,
    F32,
    INPUT,
    LOGITS,
    S8,
    X8P,
    Node,
    arm_nodes,
    build_model_graph,
    context_path_nodes,
    decoder_nodes,
    dsconv_nodes,
    fold_graph,
    global_context_nodes,
    spatial_path_nodes,
)
from .ops import (
    ConvSpec,
    Tensor,
    batchnorm_infer,
    bilinear_resize,
    channel_scale,
    check_tensor,
    concat_channels,
    conv2d,
    elementwise_add,
    fold_bn_into_conv,
    global_avg_pool,
    relu,
    sigmoid,
)
from .weights import BlockWeights, validate_weights


@dataclass
class ContextFeatures:
    """Context-path outputs at the four reduction ratios (f16_ref post-merge)."""

    f4: Tensor
    f8: Tensor
    f16_ref: Tensor
    f32: Tensor


def _apply_node(node: Node, inputs: list[Tensor], weights: BlockWeights, eps: float) -> Tensor:
    if node.op == "conv":
        w, b = weights.conv(node.path)
        try:
            out = conv2d(inputs[0], node.spec, w, b)
        except ShapeError as exc:
            raise LayerError(node.path, str(exc)) from None
        if node.bn:
            out = batchnorm_infer(out, weights.bn(node.path, eps))
        if node.relu:
            out = relu(out)
        return out
    if node.op == "gap":
        return global_avg_pool(inputs[0])
    if node.op == "gate":
        return channel_scale(inputs[0], sigmoid(inputs[1]))
    if node.op == "resize":
        h, w = inputs[0].shape[2:]
        th, tw = node.target_hw if node.target_hw else (h * node.scale, w * node.scale)
        return bilinear_resize(inputs[0], th, tw)
    if node.op == "concat":
        return concat_channels(inputs[0], inputs[1])
    if node.op == "add":
        return elementwise_add(inputs[0], inputs[1])
    raise ShapeError(f"unknown op {node.op}")


def run_graph(
    nodes,
    weights: BlockWeights,
    seeds: dict[str, Tensor],
    eps: float,
    keep: tuple[str, ...],
) -> dict[str, Tensor]:
    """Execute `nodes` over the seeded slots; returns the kept slots only."""
    last_use: dict[str, int] = {}
    for i, node in enumerate(nodes):
        for name in node.inputs:
            last_use[name] = i
    slots = dict(seeds)
    out: dict[str, Tensor] = {k: slots[k] for k in keep if k in slots}
    for i, node in enumerate(nodes):
        try:
            inputs = [slots[name] for name in node.inputs]
        except KeyError as exc:
            raise LayerError(node.path, f"missing input slot {exc}") from None
        value = _apply_node(node, inputs, weights, eps)
        slots[node.path] = value
        if node.path in keep:
            out[node.path] = value
        for name in node.inputs:
            if last_use[name] == i and name not in keep:
                slots.pop(name, None)
    return out


def context_path_forward(x: Tensor, cfg: ModelConfig, weights: BlockWeights) -> ContextFeatures:
    x = _check_model_input(x, cfg)
    got = run_graph(
        context_path_nodes(cfg), weights, {INPUT: x}, cfg.bn_epsilon, keep=(F4, F8, F16_REF, F32)
    )
    return ContextFeatures(f4=got[F4], f8=got[F8], f16_ref=got[F16_REF], f32=got[F32])


def spatial_path_forward(x: Tensor, cfg: ModelConfig, weights: BlockWeights) -> Tensor:
    x = _check_model_input(x, cfg)
    return run_graph(spatial_path_nodes(cfg), weights, {INPUT: x}, cfg.bn_epsilon, keep=(S8,))[S8]


def arm_forward(f: Tensor, weights: BlockWeights, prefix: str, eps: float = 1e-5) -> Tensor:
    """Attention refinement on any (B, C, H, W) tensor, weights under `prefix`."""
    f = check_tensor(f, "f")
    nodes = arm_nodes(prefix, "in", f.shape[1])
    gate = f"{prefix}.gate"
    return run_graph(nodes, weights, {"in": f}, eps, keep=(gate,))[gate]


def global_context_forward(
    f32_arm: Tensor,
    weights: BlockWeights,
    target_hw: tuple[int, int],
    prefix: str = "cp.gc",
    eps: float = 1e-5,
) -> Tensor:
    """Global-context field at `target_hw`; the caller adds it to the /16 tensor."""
    f32_arm = check_tensor(f32_arm, "f32_arm")
    out_channels = weights[f"{prefix}.proj.weight"].shape[0]
    nodes = global_context_nodes(prefix, "in", f32_arm.shape[1], out_channels, target_hw)
    proj = f"{prefix}.proj"
    return run_graph(nodes, weights, {"in": f32_arm}, eps, keep=(proj,))[proj]


def fuse_spatial(
    f8: Tensor, s8: Tensor, weights: BlockWeights, prefix: str = "fuse", eps: float = 1e-5
) -> Tensor:
    """Concatenate the /8 context and spatial tensors and project to the skip width."""
    f8 = check_tensor(f8, "f8")
    s8 = check_tensor(s8, "s8")
    fuse_channels = weights[f"{prefix}.proj.weight"].shape[0]
    nodes = [
        Node(path=f"{prefix}.cat", op="concat", inputs=("a", "b")),
        Node(
            path=f"{prefix}.proj",
            op="conv",
            inputs=(f"{prefix}.cat",),
            spec=ConvSpec(f8.shape[1] + s8.shape[1], fuse_channels, kernel=(1, 1)),
            bn=True,
            relu=True,
        ),
    ]
    proj = f"{prefix}.proj"
    return run_graph(nodes, weights, {"a": f8, "b": s8}, eps, keep=(proj,))[proj]


def dsconv_block(x: Tensor, weights: BlockWeights, prefix: str, eps: float = 1e-5) -> Tensor:
    """Depthwise 3x3 + pointwise 1x1 (BN+ReLU after each); spatial size preserved."""
    x = check_tensor(x)
    cout = weights[f"{prefix}.pw.weight"].shape[0]
    nodes = dsconv_nodes(prefix, "in", x.shape[1], cout)
    pw = f"{prefix}.pw"
    return run_graph(nodes, weights, {"in": x}, eps, keep=(pw,))[pw]


def decoder_forward(
    ctx: ContextFeatures, x8p: Tensor, cfg: ModelConfig, weights: BlockWeights
) -> Tensor:
    seeds = {F4: ctx.f4, F16_REF: ctx.f16_ref, F32: ctx.f32, X8P: x8p}
    return run_graph(decoder_nodes(cfg), weights, seeds, cfg.bn_epsilon, keep=(LOGITS,))[LOGITS]


def model_forward(x: Tensor, cfg: ModelConfig, weights: BlockWeights) -> Tensor:
    """Full forward pass; returns raw logits at the exact input resolution."""
    x = _check_model_input(x, cfg)
    nodes = build_model_graph(cfg)
    return run_graph(nodes, weights, {INPUT: x}, cfg.bn_epsilon, keep=(LOGITS,))[LOGITS]


def _check_model_input(x: Tensor, cfg: ModelConfig) -> Tensor:
    x = check_tensor(x)
    cfg.validate()
    expected = (cfg.in_channels, *cfg.input_size)
    if x.shape[1:] != expected:
        raise ShapeError(f"model input {x.shape[1:]} does not match config {expected}")
    return x


def fold_model(
    cfg: ModelConfig, weights: BlockWeights
) -> tuple[tuple[Node, ...], BlockWeights]:
    """BN-folded plan + weights; outputs match the unfolded model to ~1e-4.

    Returns (nodes, weights) where every conv absorbed its BN and now
    carries a bias; run them with `run_graph` seeded at INPUT.
    """
    nodes = build_model_graph(cfg)
    validate_weights(weights, nodes)
    updates: dict[str, np.ndarray] = {}
    dropped: set[str] = set()
    for node in nodes:
        if node.op != "conv" or not node.bn:
            continue
        w, b = weights.conv(node.path)
        fw, fb = fold_bn_into_conv(w, b, weights.bn(node.path, cfg.bn_epsilon))
        updates[f"{node.path}.weight"] = fw
        updates[f"{node.path}.bias"] = fb
        for part in ("gamma", "beta", "mean", "var"):
            dropped.add(f"{node.path}.bn.{part}")
    return fold_graph(nodes), weights.replaced(updates, dropped)
