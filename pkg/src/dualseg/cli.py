"""Command-line interface: analyze, infer, eval, bench, init-weights, split, selftest.

Exit codes: 0 success, 1 check/verification failure, 2 usage/configuration
error, 3 I/O error. Reporting commands print to stdout; with --out they
also write the delimited report and render a PNG figure alongside it
(suppress with --no-plot).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analyzer, bench, metrics
from .config import ModelConfig, load_config
from .data import (
    AugmentConfig,
    pair_dataset,
    split_dataset,
    write_manifest,
    write_skip_log,
)
from .errors import (
    ConfigError,
    DecodeError,
    DualSegError,
    EvaluationError,
    WeightIOError,
)
from .metrics import evaluate_split
from .model import model_forward
from .ops import sigmoid
from .selftest import run_selftest
from .weights import init_weights, load_weights, save_tensor, save_weights

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


@dataclass
class RunConfig:
    """Validated run state assembled from flags; all paths checked up front."""

    config_path: Path | None = None
    weights_path: Path | None = None
    images_dir: Path | None = None
    masks_dir: Path | None = None
    output_path: Path | None = None
    input_size: tuple[int, int] | None = None
    seed: int = 42
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    threads: int = 1
    report_format: str = "text"

    def validate(self) -> "RunConfig":
        for name in ("config_path", "weights_path"):
            path = getattr(self, name)
            if path is not None and not path.is_file():
                raise ConfigError(name.replace("_path", ""), f"file not found: {path}")
        for name in ("images_dir", "masks_dir"):
            path = getattr(self, name)
            if path is not None and not path.is_dir():
                raise ConfigError(name.replace("_dir", ""), f"directory not found: {path}")
        if self.input_size is not None:
            h, w = self.input_size
            if h % 32 or w % 32:
                raise ConfigError("input_size", f"{h}x{w} must be divisible by 32")
        if self.report_format not in ("text", "csv", "json"):
            raise ConfigError("format", f"unknown format {self.report_format!r}")
        return self


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        if len(parts) == 1:
            side = int(parts[0])
            return side, side
        if len(parts) == 2:
            return int(parts[0]), int(parts[1])
    except ValueError:
        pass
    raise ConfigError("input_size", f"expected N or HxW, got {text!r}")


def _model_config(run: RunConfig) -> ModelConfig:
    cfg = load_config(run.config_path) if run.config_path else ModelConfig()
    if run.input_size is not None:
        cfg = cfg.with_input_size(*run.input_size)
    return cfg.validate()


def _write_report(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")
        print(f"wrote {out}")


def _figure_path(out: Path) -> Path:
    return out.with_suffix(".png")


def cmd_analyze(args: argparse.Namespace) -> int:
    run = RunConfig(
        config_path=_opt_path(args.config),
        input_size=_parse_size(args.input_size) if args.input_size else None,
        report_format=args.format,
        output_path=_opt_path(args.out),
    ).validate()
    report = analyzer.analyze_model(_model_config(run))
    render = {
        "text": analyzer.render_text,
        "csv": analyzer.render_csv,
        "json": analyzer.render_json,
    }[run.report_format]
    _write_report(render(report), run.output_path)
    if run.output_path is not None and not args.no_plot:
        from .plots import save_cost_figure

        print(f"wrote {save_cost_figure(report, _figure_path(run.output_path))}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    run = RunConfig(
        config_path=_opt_path(args.config),
        weights_path=_req_path(args.weights, "weights"),
    ).validate()
    image_path = _req_path(args.image, "image")
    if not image_path.is_file():
        raise ConfigError("image", f"file not found: {image_path}")
    cfg = _model_config(run)
    weights = load_weights(run.weights_path, cfg)

    from .data import load_image_normalized

    x = load_image_normalized(image_path, cfg.input_size)
    probs = sigmoid(model_forward(x, cfg, weights))[0, 0]

    from PIL import Image

    mask = np.where(probs > 0.5, 255, 0).astype(np.uint8)
    Image.fromarray(mask, mode="L").save(args.out)
    print(f"wrote {args.out}")
    if args.prob_out:
        quantized = np.round(probs * 255.0).astype(np.uint8)
        Image.fromarray(quantized, mode="L").save(args.prob_out)
        print(f"wrote {args.prob_out}")
    if args.raw:
        save_tensor(probs[None, None], "prob", args.raw)
        print(f"wrote {args.raw}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    run = RunConfig(
        config_path=_opt_path(args.config),
        weights_path=_req_path(args.weights, "weights"),
        images_dir=_req_path(args.images, "images"),
        masks_dir=_req_path(args.masks, "masks"),
        seed=args.seed,
        report_format=args.format,
        output_path=_opt_path(args.out),
    ).validate()
    cfg = _model_config(run)
    weights = load_weights(run.weights_path, cfg)
    pairs, skipped = pair_dataset(run.images_dir, run.masks_dir)
    if not pairs:
        raise ConfigError("images", "no image/mask pairs found")
    split = split_dataset(pairs, seed=run.seed)
    if args.manifest_out:
        write_manifest(split, args.manifest_out)
        print(f"wrote {args.manifest_out}")
    if args.skip_log:
        write_skip_log(skipped, args.skip_log)
        print(f"wrote {args.skip_log}")
    scores = evaluate_split(split.section(args.split), cfg, weights)
    render = {
        "text": lambda s: f"dice {s.dice:.4f}  iou {s.iou:.4f}  images {len(s.per_image)}\n",
        "csv": metrics.scores_csv,
        "json": metrics.scores_json,
    }[run.report_format]
    _write_report(render(scores), run.output_path)
    print(
        f"split {args.split}: dice {scores.dice:.4f}, iou {scores.iou:.4f}, "
        f"{len(scores.per_image)} images, {len(scores.skipped)} skipped"
    )
    if run.output_path is not None and not args.no_plot:
        from .plots import save_eval_figure

        print(f"wrote {save_eval_figure(scores, _figure_path(run.output_path))}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    run = RunConfig(
        config_path=_opt_path(args.config),
        weights_path=_opt_path(args.weights),
        threads=args.threads,
        report_format=args.format,
        output_path=_opt_path(args.out),
    ).validate()
    if args.iters < 1:
        raise ConfigError("iters", f"must be >= 1, got {args.iters}")
    if args.warmup < 0:
        raise ConfigError("warmup", f"must be >= 0, got {args.warmup}")
    cfg = _model_config(run)
    weights = load_weights(run.weights_path, cfg) if run.weights_path else None
    report = bench.run_benchmark(
        cfg,
        weights,
        warmup=args.warmup,
        iters=args.iters,
        threads=run.threads,
        seed=args.seed,
    )
    render = {
        "text": bench.render_text,
        "csv": bench.render_csv,
        "json": bench.render_json,
    }[run.report_format]
    _write_report(render(report), run.output_path)
    print(
        f"{report.fps:.2f} FPS, mean {report.mean_ms:.2f} ms, p95 {report.p95_ms:.2f} ms, "
        f"peak tensors {report.peak_tensor_bytes / (1024 * 1024):.1f} MB"
    )
    if args.rss:
        rss = bench.process_peak_rss_bytes()
        label = f"{rss / (1024 * 1024):.1f} MB" if rss else "unavailable"
        print(f"process peak RSS (OS-reported, not the modeled metric): {label}")
    if run.output_path is not None and not args.no_plot:
        from .plots import save_bench_figure

        print(f"wrote {save_bench_figure(report, _figure_path(run.output_path))}")
    return EXIT_OK


def cmd_init_weights(args: argparse.Namespace) -> int:
    run = RunConfig(config_path=_opt_path(args.config)).validate()
    cfg = _model_config(run)
    weights = init_weights(cfg, seed=args.seed)
    save_weights(weights, args.out)
    print(f"wrote {args.out} ({len(weights)} tensors, {weights.trainable_scalars():,} params)")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    run = RunConfig(
        images_dir=_req_path(args.images, "images"),
        masks_dir=_req_path(args.masks, "masks"),
        seed=args.seed,
        ratios=_parse_ratios(args.ratios),
    ).validate()
    pairs, skipped = pair_dataset(run.images_dir, run.masks_dir)
    if not pairs:
        raise ConfigError("images", "no image/mask pairs found")
    split = split_dataset(pairs, seed=run.seed, ratios=run.ratios)
    write_manifest(split, args.out)
    print(
        f"wrote {args.out}: {len(split.train)}/{len(split.val)}/{len(split.test)} "
        f"train/val/test of {len(pairs)} pairs"
    )
    if args.skip_log:
        write_skip_log(skipped, args.skip_log)
        print(f"wrote {args.skip_log} ({len(skipped)} skipped files)")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    return EXIT_OK if run_selftest() else EXIT_CHECK_FAILED


def _parse_ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise ConfigError("ratios", f"expected three comma-separated floats, got {text!r}")
    if len(parts) != 3:
        raise ConfigError("ratios", f"expected three values, got {len(parts)}")
    return parts


def _opt_path(value: str | None) -> Path | None:
    return Path(value) if value else None


def _req_path(value: str, flag: str) -> Path:
    if not value:
        raise ConfigError(flag, "required")
    return Path(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualseg",
        description="Dual-path segmentation: inference, cost analysis, benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=("text", "csv", "json"), default="text")
        p.add_argument("--out", help="write the report here (PNG figure rendered alongside)")
        p.add_argument("--no-plot", action="store_true", help="skip the figure")

    p = sub.add_parser("analyze", help="static per-layer params/MACs report")
    p.add_argument("--config", help="model config file (defaults used if omitted)")
    p.add_argument("--input-size", help="override input size, N or HxW")
    add_format(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("infer", help="segment one image")
    p.add_argument("--config")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="binary mask PNG (pixels 0 or 255)")
    p.add_argument("--prob-out", help="8-bit quantized probability map PNG")
    p.add_argument("--raw", help="full-precision probability tensor (BSUW)")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="evaluate a seeded split section")
    p.add_argument("--config")
    p.add_argument("--weights", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--manifest-out", help="write the three-section split manifest")
    p.add_argument("--skip-log", help="write unmatched file paths, one per line")
    add_format(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("bench", help="latency/FPS benchmark (batch 1)")
    p.add_argument("--config")
    p.add_argument("--weights", help="BSUW file; seeded init used if omitted")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="benchmark input seed")
    p.add_argument("--rss", action="store_true", help="also print OS-reported peak RSS")
    add_format(p)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("init-weights", help="write deterministic He-initialized weights")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_init_weights)

    p = sub.add_parser("split", help="write the seeded split manifest and skip log")
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--ratios", default="0.70,0.15,0.15")
    p.add_argument("--out", required=True)
    p.add_argument("--skip-log")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("selftest", help="run the built-in verification suite")
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WeightIOError, DecodeError, EvaluationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DualSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
