"""Built-in verification suite behind `dualseg selftest`.

Runs the kernel oracles, analyzer cross-checks, and gradient checks on
small shapes and prints one pass/fail line per check. Kernels are looked
up through the ops module at call time so a fault injected there (e.g. by
a test monkeypatching ops.conv2d) is caught and named.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from . import ops
from .analyzer import analyze_model, count_layer
from .bench import report_from_times, simulate_peak
from .config import ModelConfig
from .data import SamplePair, split_dataset
from .graph import INPUT, build_model_graph, conv_node, required_weight_shapes
from .metrics import bce_loss, combined_loss, dice_score, iou_score, loss_grad_logits
from .ops import BnParams, ConvSpec
from .reference import (
    batchnorm_reference,
    bce_reference,
    bilinear_reference,
    conv2d_reference,
    dice_iou_pixel_count,
    finite_difference_grad,
    global_avg_pool_reference,
    rel_error,
)
from .weights import init_weights

SMALL_CFG = ModelConfig(
    input_size=(64, 64),
    cp_widths=(8, 12, 16, 24, 32),
    sp_widths=(8, 8, 12),
    sp_proj_channels=12,
    fuse8_channels=16,
    decoder_widths=(24, 16, 8),
)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def check_conv_identity() -> None:
    x = _rng(0).standard_normal((2, 3, 5, 5)).astype(np.float32)
    spec = ConvSpec(3, 3, kernel=(1, 1))
    w = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
    out = ops.conv2d(x, spec, w)
    assert np.array_equal(out, x), "1x1 identity conv must return its input"


def check_conv_known_sum() -> None:
    x = np.ones((1, 1, 3, 3), np.float32)
    spec = ConvSpec(1, 1, kernel=(3, 3), padding=(1, 1))
    out = ops.conv2d(x, spec, np.ones((1, 1, 3, 3), np.float32))
    expected = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], np.float32)
    assert np.array_equal(out[0, 0], expected), f"got {out[0, 0]}"


def check_conv_oracle() -> None:
    rng = _rng(7)
    for case in range(8):
        cin = int(rng.integers(1, 8))
        cout = int(rng.integers(1, 8))
        groups = 1
        if case % 3 == 1:
            groups = cin = cout = int(rng.integers(2, 8))
        k = int(rng.choice([1, 3]))
        spec = ConvSpec(
            cin, cout, kernel=(k, k), stride=(int(rng.integers(1, 3)),) * 2,
            padding=(int(rng.integers(0, 2)),) * 2, groups=groups,
        )
        h = int(rng.integers(k, 12))
        w = int(rng.integers(k, 12))
        x = rng.standard_normal((2, cin, h, w)).astype(np.float32)
        wts = rng.standard_normal(spec.weight_shape).astype(np.float32)
        bias = rng.standard_normal(cout).astype(np.float32)
        err = rel_error(ops.conv2d(x, spec, wts, bias), conv2d_reference(x, spec, wts, bias))
        assert err <= 1e-5, f"conv case {case}: rel err {err:.2e} > 1e-5"


def check_depthwise_delta() -> None:
    x = _rng(3).standard_normal((1, 4, 6, 6)).astype(np.float32)
    spec = ConvSpec(4, 4, kernel=(3, 3), padding=(1, 1), groups=4)
    w = np.zeros((4, 1, 3, 3), np.float32)
    w[:, 0, 1, 1] = 1.0
    err = rel_error(ops.conv2d(x, spec, w), x)
    assert err <= 1e-6, f"depthwise delta rel err {err:.2e}"


def check_batchnorm_oracle() -> None:
    rng = _rng(11)
    x = rng.standard_normal((2, 5, 4, 4)).astype(np.float32)
    bn = BnParams(
        gamma=rng.standard_normal(5).astype(np.float32),
        beta=rng.standard_normal(5).astype(np.float32),
        mean=rng.standard_normal(5).astype(np.float32),
        var=rng.uniform(0.1, 2.0, 5).astype(np.float32),
        eps=1e-5,
    )
    ref = batchnorm_reference(x, bn.gamma, bn.beta, bn.mean, bn.var, bn.eps)
    err = rel_error(ops.batchnorm_infer(x, bn), ref)
    assert err <= 1e-5, f"batchnorm rel err {err:.2e}"


def check_bn_folding() -> None:
    rng = _rng(13)
    spec = ConvSpec(4, 6, kernel=(3, 3), padding=(1, 1))
    x = rng.standard_normal((1, 4, 8, 8)).astype(np.float32)
    w = rng.standard_normal(spec.weight_shape).astype(np.float32)
    bn = BnParams(
        gamma=rng.standard_normal(6).astype(np.float32),
        beta=rng.standard_normal(6).astype(np.float32),
        mean=rng.standard_normal(6).astype(np.float32),
        var=rng.uniform(0.1, 2.0, 6).astype(np.float32),
        eps=1e-5,
    )
    unfolded = ops.batchnorm_infer(ops.conv2d(x, spec, w), bn)
    fw, fb = ops.fold_bn_into_conv(w, None, bn)
    err = rel_error(ops.conv2d(x, spec, fw, fb), unfolded)
    assert err <= 1e-5, f"bn folding rel err {err:.2e}"


def check_resize_oracle() -> None:
    x = np.array([[0.0, 1.0], [2.0, 3.0]], np.float32).reshape(1, 1, 2, 2)
    err = rel_error(ops.bilinear_resize(x, 4, 4), bilinear_reference(x, 4, 4))
    assert err <= 1e-6, f"bilinear 2x2 rel err {err:.2e}"
    y = _rng(17).standard_normal((1, 2, 5, 7)).astype(np.float32)
    err = rel_error(ops.bilinear_resize(y, 9, 3), bilinear_reference(y, 9, 3))
    assert err <= 1e-6, f"bilinear random rel err {err:.2e}"


def check_gap_oracle() -> None:
    x = _rng(19).standard_normal((2, 6, 9, 5)).astype(np.float32)
    err = rel_error(ops.global_avg_pool(x), global_avg_pool_reference(x))
    assert err <= 1e-6, f"gap rel err {err:.2e}"


def check_sigmoid_symmetry() -> None:
    x = _rng(23).standard_normal((1, 2, 8, 8)).astype(np.float32) * 6
    total = ops.sigmoid(x) + ops.sigmoid(-x)
    assert float(np.max(np.abs(total - 1.0))) <= 1e-6, "sigmoid(x)+sigmoid(-x) != 1"


def check_analyzer_hand_counts() -> None:
    r = count_layer(ConvSpec(3, 24, kernel=(3, 3), stride=(2, 2), padding=(1, 1)), (128, 128), True)
    assert (r.params, r.macs) == (696, 10_616_832), f"got {(r.params, r.macs)}"
    r = count_layer(ConvSpec(384, 384, kernel=(3, 3), padding=(1, 1), groups=384), (16, 16), True)
    assert (r.params, r.macs) == (3456 + 768, 884_736), f"got {(r.params, r.macs)}"
    r = count_layer(ConvSpec(16, 16, kernel=(1, 1), has_bias=True), (8, 8), False)
    assert r.params == 16 * 16 + 16, f"got {r.params}"


def check_analyzer_vs_weights() -> None:
    report = analyze_model(SMALL_CFG)
    weights = init_weights(SMALL_CFG, seed=1)
    assert report.total_params == weights.trainable_scalars(), (
        f"analyzer {report.total_params} != weights {weights.trainable_scalars()}"
    )
    required = set(required_weight_shapes(build_model_graph(SMALL_CFG)))
    assert required == set(weights.names()), "weight entry names diverge from the plan"


def check_loss_values() -> None:
    rng = _rng(29)
    t = (rng.uniform(size=(1, 1, 4, 4)) > 0.5).astype(np.float32)
    z = np.zeros((1, 1, 4, 4), np.float32)
    assert abs(bce_loss(z, t) - np.log(2.0)) <= 1e-7, "bce(0, t) != ln 2"
    z = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
    assert abs(bce_loss(z, t) - bce_reference(z, t)) <= 1e-9, "stable vs naive bce"


def check_loss_gradient() -> None:
    rng = _rng(31)
    for _ in range(5):
        z = rng.standard_normal((1, 1, 3, 5)).astype(np.float32) * 2
        t = (rng.uniform(size=z.shape) > 0.5).astype(np.float32)
        grad = loss_grad_logits(z, t, w_dice=0.6, w_bce=0.4).astype(np.float64)
        fd = finite_difference_grad(lambda q: combined_loss(q, t, 0.6, 0.4), z)
        mask = np.abs(fd) > 1e-6
        err = float(np.max(np.abs(grad[mask] - fd[mask]) / np.abs(fd[mask])))
        assert err <= 1e-4, f"gradient rel err {err:.2e}"


def check_metric_identity() -> None:
    rng = _rng(37)
    for _ in range(20):
        pred = (rng.uniform(size=(8, 8)) > 0.5).astype(np.float32)
        gt = (rng.uniform(size=(8, 8)) > 0.5).astype(np.float32)
        d = dice_score(pred, gt)
        i = iou_score(pred, gt)
        assert abs(i - d / (2.0 - d)) <= 1e-6, "iou != dice/(2-dice)"
        bd, bi = dice_iou_pixel_count(pred, gt, eps=1e-6)
        assert d == bd and i == bi, "metric disagrees with pixel-count oracle"


def check_split_determinism() -> None:
    from pathlib import Path

    pairs = [
        SamplePair(stem=f"s{i:04d}", image_path=Path(f"i{i}"), mask_path=Path(f"m{i}"))
        for i in range(1000)
    ]
    a = split_dataset(pairs, seed=42)
    b = split_dataset(pairs, seed=42)
    sizes = (len(a.train), len(a.val), len(a.test))
    assert sizes == (700, 150, 150), f"got {sizes}"
    assert [p.stem for p in a.train] == [p.stem for p in b.train], "split not deterministic"


def check_peak_memory_model() -> None:
    node = conv_node("solo", INPUT, 3, 8, k=3, s=1, bn=False, act=False)
    weight_bytes = 4 * (8 * 3 * 3 * 3)
    peak = simulate_peak([node], {INPUT: (3, 256, 256)}, weight_bytes)
    assert peak == 786_432 + 2_097_152 + weight_bytes, f"got {peak}"


def check_bench_arithmetic() -> None:
    report = report_from_times([30.86] * 5, input_size=(256, 256), threads=1, warmup_iters=0)
    assert abs(report.fps - 32.40) < 0.005, f"fps {report.fps}"
    assert abs(report.fps * report.mean_ms - 1000.0) <= 1.0, "fps * mean_ms != 1000"


CHECKS = [
    ("conv-identity", check_conv_identity),
    ("conv-known-sum", check_conv_known_sum),
    ("conv-vs-oracle", check_conv_oracle),
    ("depthwise-delta", check_depthwise_delta),
    ("batchnorm-vs-oracle", check_batchnorm_oracle),
    ("bn-folding", check_bn_folding),
    ("bilinear-vs-oracle", check_resize_oracle),
    ("gap-vs-oracle", check_gap_oracle),
    ("sigmoid-symmetry", check_sigmoid_symmetry),
    ("analyzer-hand-counts", check_analyzer_hand_counts),
    ("analyzer-vs-weights", check_analyzer_vs_weights),
    ("loss-values", check_loss_values),
    ("loss-gradient-fd", check_loss_gradient),
    ("metric-identities", check_metric_identity),
    ("split-determinism", check_split_determinism),
    ("peak-memory-model", check_peak_memory_model),
    ("bench-arithmetic", check_bench_arithmetic),
]


def run_selftest(stream=None) -> bool:
    """Run every check, print a pass/fail table, return overall success."""
    stream = stream or sys.stdout
    all_ok = True
    width = max(len(name) for name, _ in CHECKS)
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            fn()
            status, detail = "PASS", ""
        except AssertionError as exc:
            status, detail = "FAIL", f"  {exc}"
            all_ok = False
        except Exception as exc:  # noqa: BLE001 - a crash is a failure, name it
            status, detail = "FAIL", f"  {type(exc).__name__}: {exc}"
            all_ok = False
        elapsed = time.perf_counter() - start
        print(f"{name.ljust(width)}  {status}  {elapsed * 1000:7.1f} ms{detail}", file=stream)
    print("selftest:", "PASS" if all_ok else "FAIL", file=stream)
    return all_ok
