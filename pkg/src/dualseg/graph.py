"""Layer-plan builder: the single source of truth for the network topology.

The forward executor, the cost analyzer, weight initialization/validation,
and the peak-memory model all walk the same node list produced here, so
they can never disagree about which layers exist or what shapes they take.

Topology: a five-stage context path (each stage a stride-2 then a stride-1
3x3 conv+BN+ReLU) with channel-attention refinement at the /16 and /32
features, a global-context head folded into the /16 feature, a shallow
three-stage spatial path ending in a 1x1 projection at /8, a single 1x1
fusion of the two /8 tensors, and a decoder of three depthwise-separable
blocks over concatenated skips followed by a 1x1 prediction head and a
resize back to the input size.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import ModelConfig
from .errors import ShapeError
from .ops import ConvSpec

INPUT = "input"
F4 = "cp.stage2.conv"
F8 = "cp.stage3.conv"
F16_REF = "cp.f16.merge"
F32 = "cp.arm32.gate"
S8 = "sp.proj"
X8P = "fuse.proj"
LOGITS = "dec.resize_out"


@dataclass(frozen=True)
class Node:
    """One executable step; `path` doubles as the output slot name.

    op is one of:
      conv    - conv2d, optionally followed by batch norm and ReLU
      gap     - global average pool to (B, C, 1, 1)
      gate    - sigmoid(inputs[1]) broadcast-multiplied onto inputs[0]
      resize  - bilinear resize, either by integer `scale` or to `target_hw`
      concat  - channel concatenation of inputs[0] then inputs[1]
      add     - elementwise sum of two tensors
    """

    path: str
    op: str
    inputs: tuple[str, ...]
    spec: ConvSpec | None = None
    bn: bool = False
    relu: bool = False
    scale: int = 0
    target_hw: tuple[int, int] | None = None


def conv_node(
    path: str,
    inp: str,
    cin: int,
    cout: int,
    k: int = 3,
    s: int = 1,
    groups: int = 1,
    bias: bool = False,
    bn: bool = True,
    act: bool = True,
) -> Node:
    spec = ConvSpec(
        in_channels=cin,
        out_channels=cout,
        kernel=(k, k),
        stride=(s, s),
        padding=(k // 2, k // 2),
        groups=groups,
        has_bias=bias,
    )
    return Node(path=path, op="conv", inputs=(inp,), spec=spec, bn=bn, relu=act)


def arm_nodes(prefix: str, inp: str, channels: int) -> list[Node]:
    """Attention refinement: local 3x3 conv, then a squeeze gate over it."""
    local = f"{prefix}.local"
    gap = f"{prefix}.gap"
    squeeze = f"{prefix}.squeeze"
    return [
        conv_node(local, inp, channels, channels, k=3),
        Node(path=gap, op="gap", inputs=(local,)),
        conv_node(squeeze, gap, channels, channels, k=1, act=False),
        Node(path=f"{prefix}.gate", op="gate", inputs=(local, squeeze)),
    ]


def global_context_nodes(
    prefix: str, inp: str, channels: int, out_channels: int, target_hw: tuple[int, int]
) -> list[Node]:
    """Squeeze to (1,1), broadcast back up, then project to the /16 width."""
    gap = f"{prefix}.gap"
    squeeze = f"{prefix}.squeeze"
    up = f"{prefix}.up"
    return [
        Node(path=gap, op="gap", inputs=(inp,)),
        conv_node(squeeze, gap, channels, channels, k=1, act=False),
        Node(path=up, op="resize", inputs=(squeeze,), target_hw=target_hw),
        conv_node(
            f"{prefix}.proj", up, channels, out_channels, k=1, bias=True, bn=False, act=False
        ),
    ]


def dsconv_nodes(prefix: str, inp: str, cin: int, cout: int) -> list[Node]:
    """Depthwise 3x3 then pointwise 1x1, each with BN and ReLU."""
    dw = f"{prefix}.dw"
    return [
        conv_node(dw, inp, cin, cin, k=3, groups=cin),
        conv_node(f"{prefix}.pw", dw, cin, cout, k=1),
    ]


def context_path_nodes(cfg: ModelConfig) -> list[Node]:
    h, w = cfg.input_size
    c16, c32 = cfg.cp_widths[3], cfg.cp_widths[4]
    nodes: list[Node] = []
    prev, cin = INPUT, cfg.in_channels
    for i, width in enumerate(cfg.cp_widths, start=1):
        down = f"cp.stage{i}.down"
        keep = f"cp.stage{i}.conv"
        nodes.append(conv_node(down, prev, cin, width, k=3, s=2))
        nodes.append(conv_node(keep, down, width, width, k=3, s=1))
        prev, cin = keep, width
    nodes += arm_nodes("cp.arm16", "cp.stage4.conv", c16)
    nodes += arm_nodes("cp.arm32", "cp.stage5.conv", c32)
    nodes += global_context_nodes("cp.gc", F32, c32, c16, (h // 16, w // 16))
    nodes.append(Node(path=F16_REF, op="add", inputs=("cp.arm16.gate", "cp.gc.proj")))
    return nodes


def spatial_path_nodes(cfg: ModelConfig) -> list[Node]:
    w1, w2, w3 = cfg.sp_widths
    return [
        conv_node("sp.stage1", INPUT, cfg.in_channels, w1, k=7, s=2),
        conv_node("sp.stage2", "sp.stage1", w1, w2, k=3, s=2),
        conv_node("sp.stage3", "sp.stage2", w2, w3, k=3, s=2),
        conv_node(S8, "sp.stage3", w3, cfg.sp_proj_channels, k=1, bias=True, bn=False, act=False),
    ]


def fusion_nodes(cfg: ModelConfig) -> list[Node]:
    cat_channels = cfg.cp_widths[2] + cfg.sp_proj_channels
    return [
        Node(path="fuse.cat", op="concat", inputs=(F8, S8)),
        conv_node(X8P, "fuse.cat", cat_channels, cfg.fuse8_channels, k=1),
    ]


def decoder_nodes(cfg: ModelConfig) -> list[Node]:
    h, w = cfg.input_size
    c4, c16, c32 = cfg.cp_widths[1], cfg.cp_widths[3], cfg.cp_widths[4]
    d1, d2, d3 = cfg.decoder_widths
    nodes = [
        Node(path="dec.up1", op="resize", inputs=(F32,), scale=2),
        Node(path="dec.cat1", op="concat", inputs=("dec.up1", F16_REF)),
        *dsconv_nodes("dec.block1", "dec.cat1", c32 + c16, d1),
        Node(path="dec.up2", op="resize", inputs=("dec.block1.pw",), scale=2),
        Node(path="dec.cat2", op="concat", inputs=("dec.up2", X8P)),
        *dsconv_nodes("dec.block2", "dec.cat2", d1 + cfg.fuse8_channels, d2),
        Node(path="dec.up3", op="resize", inputs=("dec.block2.pw",), scale=2),
        Node(path="dec.cat3", op="concat", inputs=("dec.up3", F4)),
        *dsconv_nodes("dec.block3", "dec.cat3", d2 + c4, d3),
        Node(path="dec.up4", op="resize", inputs=("dec.block3.pw",), scale=2),
        conv_node("dec.head", "dec.up4", d3, cfg.num_classes, k=1, bias=True, bn=False, act=False),
        Node(path=LOGITS, op="resize", inputs=("dec.head",), target_hw=(h, w)),
    ]
    return nodes


def build_model_graph(cfg: ModelConfig) -> tuple[Node, ...]:
    cfg.validate()
    nodes = (
        context_path_nodes(cfg)
        + spatial_path_nodes(cfg)
        + fusion_nodes(cfg)
        + decoder_nodes(cfg)
    )
    seen = set()
    for node in nodes:
        if node.path in seen:
            raise ShapeError(f"duplicate node path {node.path}")
        seen.add(node.path)
    return tuple(nodes)


def infer_shapes(
    nodes: tuple[Node, ...] | list[Node], inputs: dict[str, tuple[int, int, int]]
) -> dict[str, tuple[int, int, int]]:
    """Static (C, H, W) per slot, walking the plan in order."""
    shapes = dict(inputs)
    for node in nodes:
        src = [shapes[name] for name in node.inputs]
        if node.op == "conv":
            c, h, w = src[0]
            if c != node.spec.in_channels:
                raise ShapeError(
                    f"{node.path}: input has {c} channels, spec wants {node.spec.in_channels}"
                )
            shapes[node.path] = (node.spec.out_channels, *node.spec.out_hw(h, w))
        elif node.op == "gap":
            shapes[node.path] = (src[0][0], 1, 1)
        elif node.op == "gate":
            shapes[node.path] = src[0]
        elif node.op == "resize":
            c, h, w = src[0]
            th, tw = node.target_hw if node.target_hw else (h * node.scale, w * node.scale)
            shapes[node.path] = (c, th, tw)
        elif node.op == "concat":
            (ca, ha, wa), (cb, hb, wb) = src
            if (ha, wa) != (hb, wb):
                raise ShapeError(f"{node.path}: concat spatial mismatch {src}")
            shapes[node.path] = (ca + cb, ha, wa)
        elif node.op == "add":
            if src[0] != src[1]:
                raise ShapeError(f"{node.path}: add shape mismatch {src}")
            shapes[node.path] = src[0]
        else:
            raise ShapeError(f"unknown op {node.op}")
    return shapes


def conv_nodes(nodes) -> list[Node]:
    return [n for n in nodes if n.op == "conv"]


def required_weight_shapes(nodes) -> dict[str, tuple[int, ...]]:
    """Ordered map of every weight-file entry name to its exact array shape."""
    required: dict[str, tuple[int, ...]] = {}
    for node in conv_nodes(nodes):
        spec = node.spec
        required[f"{node.path}.weight"] = spec.weight_shape
        if spec.has_bias:
            required[f"{node.path}.bias"] = (spec.out_channels,)
        if node.bn:
            for part in ("gamma", "beta", "mean", "var"):
                required[f"{node.path}.bn.{part}"] = (spec.out_channels,)
    return required


def node_kind(node: Node) -> str:
    """LayerReport kind for a node."""
    if node.op == "conv":
        if node.spec.is_depthwise:
            return "depthwise"
        if node.spec.is_pointwise:
            return "pointwise"
        return "conv"
    return {
        "gap": "pool",
        "gate": "activation",
        "resize": "resize",
        "concat": "concat",
        "add": "add",
    }[node.op]


def fold_graph(nodes) -> tuple[Node, ...]:
    """The same plan with every conv's BN folded away (bias takes its place)."""
    folded = []
    for node in nodes:
        if node.op == "conv" and node.bn:
            folded.append(
                replace(node, bn=False, spec=replace(node.spec, has_bias=True))
            )
        else:
            folded.append(node)
    return tuple(folded)
