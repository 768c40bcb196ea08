"""Benchmark harness tests: report arithmetic, determinism, peak-memory model."""

import pytest

from dualseg.bench import (
    bench_input,
    forward_checksum,
    peak_memory,
    report_from_times,
    run_benchmark,
    simulate_peak,
)
from dualseg.errors import ShapeError
from dualseg.graph import INPUT, LOGITS, build_model_graph, conv_node, decoder_nodes, infer_shapes
from dualseg.model import model_forward
from dualseg.weights import init_weights


class TestReportArithmetic:
    def test_fps_is_reciprocal_mean(self):
        report = report_from_times([10.0, 20.0, 30.0], (64, 64), 1, 0)
        assert report.mean_ms == pytest.approx(20.0)
        assert report.fps * report.mean_ms == pytest.approx(1000.0, rel=1e-3)

    def test_table_pairing_3086ms(self):
        report = report_from_times([30.86] * 10, (256, 256), 1, 0)
        assert round(report.fps, 2) == 32.40

    def test_reverse_pairing_3048fps(self):
        # 1000/30.48 FPS corresponds to a 32.81 ms mean latency
        mean = 1000.0 / 30.48
        report = report_from_times([mean] * 4, (256, 256), 1, 0)
        assert round(report.mean_ms, 2) == 32.81
        assert round(report.fps, 2) == 30.48

    def test_percentile_ordering(self, rng):
        times = rng.uniform(5.0, 50.0, 100).tolist()
        report = report_from_times(times, (64, 64), 1, 0)
        assert report.p50_ms <= report.p95_ms
        assert len(report.per_iter_ms) == report.measured_iters == 100

    def test_empty_times_rejected(self):
        with pytest.raises(ShapeError):
            report_from_times([], (64, 64), 1, 0)


class TestRunBenchmark:
    def test_report_contract(self, tiny_cfg):
        weights = init_weights(tiny_cfg, seed=1)
        report = run_benchmark(tiny_cfg, weights, warmup=1, iters=5, threads=1)
        assert report.measured_iters == 5
        assert len(report.per_iter_ms) == 5
        assert report.fps * report.mean_ms == pytest.approx(1000.0, rel=1e-3)
        assert report.peak_tensor_bytes > 0
        recomputed = report_from_times(report.per_iter_ms, report.input_size, 1, 1)
        assert recomputed.fps == pytest.approx(report.fps)

    def test_checksum_deterministic_across_runs(self, tiny_cfg):
        weights = init_weights(tiny_cfg, seed=1)
        a = run_benchmark(tiny_cfg, weights, warmup=0, iters=2, threads=1, seed=9)
        b = run_benchmark(tiny_cfg, weights, warmup=0, iters=2, threads=1, seed=9)
        assert a.checksum == b.checksum

    def test_checksum_matches_plain_forward(self, tiny_cfg):
        weights = init_weights(tiny_cfg, seed=1)
        report = run_benchmark(tiny_cfg, weights, warmup=0, iters=1, threads=1, seed=4)
        x = bench_input(tiny_cfg, 4)
        assert report.checksum == forward_checksum(model_forward(x, tiny_cfg, weights))

    def test_invalid_iters(self, tiny_cfg):
        with pytest.raises(ShapeError):
            run_benchmark(tiny_cfg, None, iters=0)

    def test_threads_clamped_to_cpus(self, tiny_cfg):
        import os

        weights = init_weights(tiny_cfg, seed=1)
        report = run_benchmark(tiny_cfg, weights, warmup=0, iters=1, threads=512)
        assert report.threads <= len(os.sched_getaffinity(0))


class TestPeakMemory:
    def test_single_conv_closed_form(self):
        node = conv_node("solo", INPUT, 3, 8, k=3, s=1, bn=False, act=False)
        weight_bytes = 4 * (8 * 3 * 3 * 3)
        peak = simulate_peak([node], {INPUT: (3, 256, 256)}, weight_bytes)
        # input 1x3x256x256 and output 1x8x256x256 live simultaneously
        assert peak == 786_432 + 2_097_152 + weight_bytes

    def test_doubling_area_at_least_doubles_activation_peak(self, tiny_cfg):
        weights = init_weights(tiny_cfg, seed=2)
        weight_bytes = weights.total_bytes()
        small = peak_memory(tiny_cfg, weights) - weight_bytes
        grown = tiny_cfg.with_input_size(
            tiny_cfg.input_size[0] * 2, tiny_cfg.input_size[1]
        )
        large = peak_memory(grown, weights) - weight_bytes
        assert large >= 2 * small

    def test_weights_resident_in_peak(self, tiny_cfg):
        weights = init_weights(tiny_cfg, seed=2)
        assert peak_memory(tiny_cfg, weights) > weights.total_bytes()

    def test_schedule_invariance_on_decoder(self, tiny_cfg):
        """Two valid topological orders of the decoder give the same peak."""
        cfg = tiny_cfg
        nodes = list(decoder_nodes(cfg))
        full = build_model_graph(cfg)
        shapes = infer_shapes(full, {INPUT: (cfg.in_channels, *cfg.input_size)})
        seeds = {name: shapes[name] for name in ("cp.stage2.conv", "cp.f16.merge", "cp.arm32.gate", "fuse.proj")}

        baseline = simulate_peak(nodes, seeds, weight_bytes=0)

        # dec.up1 only depends on the f32 seed: legal to hoist to the front;
        # the rest of the chain is order-forced.
        up1 = next(i for i, n in enumerate(nodes) if n.path == "dec.up1")
        order = [up1] + [i for i in range(len(nodes)) if i != up1]
        hoisted = simulate_peak(nodes, seeds, weight_bytes=0, order=order)
        assert hoisted == baseline

    def test_non_topological_order_rejected(self, tiny_cfg):
        nodes = list(decoder_nodes(tiny_cfg))
        full = build_model_graph(tiny_cfg)
        shapes = infer_shapes(full, {INPUT: (3, *tiny_cfg.input_size)})
        seeds = {name: shapes[name] for name in ("cp.stage2.conv", "cp.f16.merge", "cp.arm32.gate", "fuse.proj")}
        order = list(range(len(nodes)))
        order[0], order[-1] = order[-1], order[0]
        with pytest.raises(ShapeError, match="topological"):
            simulate_peak(nodes, seeds, weight_bytes=0, order=order)

    def test_logits_slot_is_final_node(self, tiny_cfg):
        assert build_model_graph(tiny_cfg)[-1].path == LOGITS
