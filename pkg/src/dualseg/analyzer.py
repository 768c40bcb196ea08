"""Static per-layer parameter and MAC accounting from a ModelConfig.

Counting convention: one MAC is one multiply-accumulate, so a conv layer
costs out_ch * H_out * W_out * (in_ch/groups) * k_h * k_w MACs; BN,
activations, pooling, resizing, concat and add cost 0 MACs. Params count
trainable scalars only: conv weights, biases, and BN gamma/beta (running
statistics are not trainable). All totals are exact integer sums.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .config import ModelConfig
from .graph import INPUT, build_model_graph, infer_shapes, node_kind
from .ops import ConvSpec

KINDS = ("conv", "depthwise", "pointwise", "bn", "resize", "pool", "activation", "concat", "add")


@dataclass(frozen=True)
class LayerReport:
    layer_path: str
    kind: str
    out_shape: tuple[int, int, int]
    params: int
    macs: int


@dataclass(frozen=True)
class CostReport:
    layers: tuple[LayerReport, ...]
    total_params: int
    total_macs: int
    input_size: tuple[int, int]


def count_layer(
    spec: ConvSpec,
    out_hw: tuple[int, int],
    bn_present: bool,
    layer_path: str = "",
) -> LayerReport:
    """Exact counts for one conv layer at the given output size."""
    spec.validate()
    kh, kw = spec.kernel
    per_filter = (spec.in_channels // spec.groups) * kh * kw
    params = spec.out_channels * per_filter
    if spec.has_bias:
        params += spec.out_channels
    if bn_present:
        params += 2 * spec.out_channels
    macs = spec.out_channels * out_hw[0] * out_hw[1] * per_filter
    if spec.is_depthwise:
        kind = "depthwise"
    elif spec.is_pointwise:
        kind = "pointwise"
    else:
        kind = "conv"
    return LayerReport(
        layer_path=layer_path,
        kind=kind,
        out_shape=(spec.out_channels, *out_hw),
        params=params,
        macs=macs,
    )


def analyze_model(cfg: ModelConfig) -> CostReport:
    """Walk the exact layer sequence the forward pass executes and sum counts."""
    cfg.validate()
    nodes = build_model_graph(cfg)
    shapes = infer_shapes(nodes, {INPUT: (cfg.in_channels, *cfg.input_size)})
    layers = []
    for node in nodes:
        out_shape = shapes[node.path]
        if node.op == "conv":
            layers.append(count_layer(node.spec, out_shape[1:], node.bn, node.path))
        else:
            layers.append(
                LayerReport(
                    layer_path=node.path,
                    kind=node_kind(node),
                    out_shape=out_shape,
                    params=0,
                    macs=0,
                )
            )
    return CostReport(
        layers=tuple(layers),
        total_params=sum(l.params for l in layers),
        total_macs=sum(l.macs for l in layers),
        input_size=cfg.input_size,
    )


def _shape_str(shape: tuple[int, int, int]) -> str:
    return "x".join(str(d) for d in shape)


def render_text(report: CostReport) -> str:
    rows = [("layer", "kind", "out_shape", "params", "macs")]
    for layer in report.layers:
        rows.append(
            (
                layer.layer_path,
                layer.kind,
                _shape_str(layer.out_shape),
                f"{layer.params:,}",
                f"{layer.macs:,}",
            )
        )
    rows.append(
        ("total", "", f"@{report.input_size[0]}x{report.input_size[1]}",
         f"{report.total_params:,}", f"{report.total_macs:,}")
    )
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = []
    for i, row in enumerate(rows):
        lines.append(
            "  ".join(
                cell.ljust(widths[j]) if j < 3 else cell.rjust(widths[j])
                for j, cell in enumerate(row)
            )
        )
        if i == 0 or i == len(rows) - 2:
            lines.append("  ".join("-" * w for w in widths))
    summary = (
        f"params {report.total_params / 1e6:.3f} M, "
        f"macs {report.total_macs / 1e9:.3f} G at {report.input_size[0]}x{report.input_size[1]}"
    )
    return "\n".join(lines) + "\n" + summary + "\n"


def render_csv(report: CostReport) -> str:
    lines = ["layer,kind,out_shape,params,macs"]
    for layer in report.layers:
        lines.append(
            f"{layer.layer_path},{layer.kind},{_shape_str(layer.out_shape)},"
            f"{layer.params},{layer.macs}"
        )
    lines.append(f"total,,,{report.total_params},{report.total_macs}")
    return "\n".join(lines) + "\n"


def render_json(report: CostReport) -> str:
    doc = {
        "input_size": list(report.input_size),
        "total_params": report.total_params,
        "total_macs": report.total_macs,
        "layers": [
            {
                "layer": l.layer_path,
                "kind": l.kind,
                "out_shape": list(l.out_shape),
                "params": l.params,
                "macs": l.macs,
            }
            for l in report.layers
        ],
    }
    return json.dumps(doc, indent=2) + "\n"
