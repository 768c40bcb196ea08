"""Cost-accounting tests: closed-form layer counts, plan consistency, scaling."""

import json

import numpy as np
import pytest

from conftest import TINY_CFG
from dualseg.analyzer import analyze_model, count_layer, render_csv, render_json, render_text
from dualseg.config import ModelConfig
from dualseg.errors import ConfigError
from dualseg.graph import build_model_graph, required_weight_shapes
from dualseg.ops import ConvSpec
from dualseg.weights import init_weights

DEFAULT_CFG = ModelConfig()


class TestCountLayer:
    def test_stem_conv_hand_count(self):
        spec = ConvSpec(3, 24, kernel=(3, 3), stride=(2, 2), padding=(1, 1))
        r = count_layer(spec, (128, 128), bn_present=True)
        assert r.params == 24 * 3 * 9 + 48 == 696
        assert r.macs == 24 * 128 * 128 * 27 == 10_616_832
        assert r.kind == "conv"

    def test_identity_pointwise_with_bias(self):
        c = 16
        spec = ConvSpec(c, c, kernel=(1, 1), has_bias=True)
        r = count_layer(spec, (8, 8), bn_present=False)
        assert r.params == c * c + c
        assert r.kind == "pointwise"

    def test_depthwise_hand_count(self):
        spec = ConvSpec(384, 384, kernel=(3, 3), padding=(1, 1), groups=384)
        r = count_layer(spec, (16, 16), bn_present=True)
        assert r.params == 3456 + 768
        assert r.macs == 384 * 256 * 9 == 884_736
        assert r.kind == "depthwise"

    def test_pointwise_projection_hand_count(self):
        spec = ConvSpec(384, 128, kernel=(1, 1))
        r = count_layer(spec, (16, 16), bn_present=True)
        assert r.params == 384 * 128 + 2 * 128 == 49_408
        assert r.macs == 128 * 16 * 16 * 384 == 12_582_912

    def test_wide_kernel_hand_count(self):
        spec = ConvSpec(3, 32, kernel=(7, 7), stride=(2, 2), padding=(3, 3))
        r = count_layer(spec, (128, 128), bn_present=True)
        assert r.params == 32 * 3 * 49 + 64 == 4_768
        assert r.macs == 32 * 128 * 128 * 3 * 49 == 77_070_336

    def test_quadratic_width_scaling(self):
        base = ConvSpec(16, 32, kernel=(3, 3), padding=(1, 1))
        doubled = ConvSpec(32, 64, kernel=(3, 3), padding=(1, 1))
        rb = count_layer(base, (10, 10), bn_present=False)
        rd = count_layer(doubled, (10, 10), bn_present=False)
        assert rd.params == 4 * rb.params
        assert rd.macs == 4 * rb.macs


class TestAnalyzeModel:
    def test_default_config_cost_band(self):
        report = analyze_model(DEFAULT_CFG)
        assert 2_000_000 <= report.total_params <= 3_000_000
        assert 600_000_000 <= report.total_macs <= 1_300_000_000

    def test_totals_are_exact_sums(self):
        report = analyze_model(TINY_CFG)
        assert report.total_params == sum(l.params for l in report.layers)
        assert report.total_macs == sum(l.macs for l in report.layers)

    def test_non_conv_layers_cost_zero_macs(self):
        report = analyze_model(TINY_CFG)
        for layer in report.layers:
            if layer.kind not in ("conv", "depthwise", "pointwise"):
                assert layer.macs == 0
                assert layer.params == 0

    def test_total_params_equals_init_weights_scalars(self):
        for cfg in (TINY_CFG, DEFAULT_CFG):
            report = analyze_model(cfg)
            weights = init_weights(cfg, seed=3)
            assert report.total_params == weights.trainable_scalars()

    def test_layer_paths_match_required_weight_entries(self):
        report = analyze_model(TINY_CFG)
        required = required_weight_shapes(build_model_graph(TINY_CFG))
        by_layer: dict[str, dict[str, tuple]] = {}
        for name, shape in required.items():
            if name.endswith(".bn.mean") or name.endswith(".bn.var"):
                continue
            if name.endswith(".weight"):
                path, part = name[: -len(".weight")], "weight"
            elif name.endswith(".bias"):
                path, part = name[: -len(".bias")], "bias"
            else:
                path, part = name.rsplit(".bn.", 1)
            by_layer.setdefault(path, {})[part] = shape
        conv_layers = {
            l.layer_path: l for l in report.layers if l.kind in ("conv", "depthwise", "pointwise")
        }
        assert set(conv_layers) == set(by_layer)
        for path, parts in by_layer.items():
            expected = sum(int(np.prod(s)) for s in parts.values())
            assert conv_layers[path].params == expected

    def test_macs_scale_with_area(self):
        at256 = analyze_model(DEFAULT_CFG.with_input_size(256, 256))
        at320 = analyze_model(DEFAULT_CFG.with_input_size(320, 320))
        for small, large in zip(at256.layers, at320.layers):
            assert small.layer_path == large.layer_path
            if small.kind in ("conv", "depthwise", "pointwise") and small.out_shape[1:] != (1, 1):
                # (320/256)^2 == 25/16 exactly
                assert large.macs * 16 == small.macs * 25
            assert small.params == large.params

    def test_doubled_widths_land_near_4x(self):
        doubled = ModelConfig(
            cp_widths=tuple(2 * w for w in DEFAULT_CFG.cp_widths),
            sp_widths=tuple(2 * w for w in DEFAULT_CFG.sp_widths),
            sp_proj_channels=2 * DEFAULT_CFG.sp_proj_channels,
            fuse8_channels=2 * DEFAULT_CFG.fuse8_channels,
            decoder_widths=tuple(2 * w for w in DEFAULT_CFG.decoder_widths),
        )
        base = analyze_model(DEFAULT_CFG)
        big = analyze_model(doubled)
        ratio = big.total_macs / base.total_macs
        # stem convs keep 3 input channels and depthwise scales linearly,
        # so the whole-model ratio sits just under the quadratic 4x
        assert 3.4 <= ratio <= 4.0

    def test_invalid_config_names_field(self):
        with pytest.raises(ConfigError, match="input_size"):
            analyze_model(ModelConfig(input_size=(100, 100)))


class TestRendering:
    def test_csv_header_and_total_row(self):
        text = render_csv(analyze_model(TINY_CFG))
        lines = text.strip().splitlines()
        assert lines[0] == "layer,kind,out_shape,params,macs"
        assert lines[-1].startswith("total,")

    def test_text_contains_totals(self):
        report = analyze_model(TINY_CFG)
        text = render_text(report)
        assert f"{report.total_params:,}" in text
        assert f"{report.total_macs:,}" in text

    def test_json_round_trips(self):
        report = analyze_model(TINY_CFG)
        doc = json.loads(render_json(report))
        assert doc["total_params"] == report.total_params
        assert doc["total_macs"] == report.total_macs
        assert len(doc["layers"]) == len(report.layers)
