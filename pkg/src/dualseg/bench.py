"""Latency/FPS measurement and the modeled peak-memory accounting.

The memory figure is a deterministic tensor-liveness model (4 bytes per
live activation element plus resident weight bytes under a
free-after-last-use schedule), not the OS process footprint; process peak
RSS can be sampled separately where the platform exposes it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import ShapeError
from .graph import INPUT, LOGITS, Node, build_model_graph, infer_shapes
from .model import run_graph
from .rng import splitmix64_array, uniform_open01
from .weights import BlockWeights, init_weights

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - declared dependency, belt and braces
    threadpool_limits = None


@dataclass
class BenchReport:
    input_size: tuple[int, int]
    threads: int
    warmup_iters: int
    measured_iters: int
    per_iter_ms: list[float]
    mean_ms: float
    p50_ms: float
    p95_ms: float
    fps: float
    peak_tensor_bytes: int
    checksum: float


def report_from_times(
    per_iter_ms: list[float],
    input_size: tuple[int, int],
    threads: int,
    warmup_iters: int,
    peak_tensor_bytes: int = 0,
    checksum: float = 0.0,
) -> BenchReport:
    """Assemble the report statistics from raw per-iteration timings."""
    if not per_iter_ms:
        raise ShapeError("per_iter_ms must be nonempty")
    times = np.asarray(per_iter_ms, np.float64)
    mean_ms = float(times.mean())
    return BenchReport(
        input_size=input_size,
        threads=threads,
        warmup_iters=warmup_iters,
        measured_iters=len(per_iter_ms),
        per_iter_ms=[float(t) for t in per_iter_ms],
        mean_ms=mean_ms,
        p50_ms=float(np.percentile(times, 50)),
        p95_ms=float(np.percentile(times, 95)),
        fps=1000.0 / mean_ms,
        peak_tensor_bytes=peak_tensor_bytes,
        checksum=checksum,
    )


def bench_input(cfg: ModelConfig, seed: int = 0) -> np.ndarray:
    """Deterministic uniform(-1, 1) batch-1 input for the given config."""
    h, w = cfg.input_size
    n = cfg.in_channels * h * w
    u = uniform_open01(splitmix64_array(seed, n))
    return (2.0 * u - 1.0).astype(np.float32).reshape(1, cfg.in_channels, h, w)


def forward_checksum(logits: np.ndarray) -> float:
    """Order-stable consumption of the output so the forward cannot be elided."""
    return float(np.sum(logits, dtype=np.float64))


def run_benchmark(
    cfg: ModelConfig,
    weights: BlockWeights | None = None,
    warmup: int = 10,
    iters: int = 100,
    threads: int = 1,
    seed: int = 0,
) -> BenchReport:
    """Time `iters` single-image forwards after `warmup` untimed ones.

    `threads` is clamped to the CPUs this process may run on; BLAS
    oversubscription would otherwise swamp the measurement.
    """
    if iters < 1:
        raise ShapeError(f"iters must be >= 1, got {iters}")
    if warmup < 0:
        raise ShapeError(f"warmup must be >= 0, got {warmup}")
    if threads < 1:
        raise ShapeError(f"threads must be >= 1, got {threads}")
    threads = min(threads, _available_cpus())
    cfg.validate()
    if weights is None:
        weights = init_weights(cfg, seed=42)
    nodes = build_model_graph(cfg)
    x = bench_input(cfg, seed)

    def one_forward() -> float:
        out = run_graph(nodes, weights, {INPUT: x}, cfg.bn_epsilon, keep=(LOGITS,))[LOGITS]
        return forward_checksum(out)

    checksum = 0.0
    per_iter_ms: list[float] = []
    limiter = (
        threadpool_limits(limits=threads) if threadpool_limits is not None else _NullContext()
    )
    with limiter:
        for _ in range(warmup):
            checksum = one_forward()
        for _ in range(iters):
            start = time.perf_counter_ns()
            checksum = one_forward()
            per_iter_ms.append((time.perf_counter_ns() - start) / 1e6)
    return report_from_times(
        per_iter_ms,
        input_size=cfg.input_size,
        threads=threads,
        warmup_iters=warmup,
        peak_tensor_bytes=peak_memory(cfg, weights),
        checksum=checksum,
    )


class _NullContext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def _available_cpus() -> int:
    try:
        import os

        return max(1, len(os.sched_getaffinity(0)))
    except (ImportError, AttributeError, OSError):  # pragma: no cover - POSIX only
        import os

        return max(1, os.cpu_count() or 1)


def simulate_peak(
    nodes: tuple[Node, ...] | list[Node],
    input_shapes: dict[str, tuple[int, int, int]],
    weight_bytes: int,
    batch: int = 1,
    order: list[int] | None = None,
) -> int:
    """Max concurrent live tensor bytes over a free-after-last-use schedule.

    `order` optionally permutes the node list; it must stay a valid
    topological order of the dataflow.
    """
    nodes = list(nodes)
    if order is not None:
        if sorted(order) != list(range(len(nodes))):
            raise ShapeError("order must be a permutation of the node indices")
        produced = set(input_shapes)
        reordered = []
        for idx in order:
            node = nodes[idx]
            for name in node.inputs:
                if name not in produced:
                    raise ShapeError(f"order is not topological: {node.path} before {name}")
            produced.add(node.path)
            reordered.append(node)
        nodes = reordered
    shapes = infer_shapes(nodes, input_shapes)
    elems = {name: batch * int(np.prod(shape)) for name, shape in shapes.items()}

    last_use = {name: -1 for name in input_shapes}
    for i, node in enumerate(nodes):
        for name in node.inputs:
            last_use[name] = i
    live = {name: 4 * elems[name] for name in input_shapes}
    peak = weight_bytes + sum(live.values())
    for i, node in enumerate(nodes):
        live[node.path] = 4 * elems[node.path]
        peak = max(peak, weight_bytes + sum(live.values()))
        for name in node.inputs:
            if last_use.get(name) == i:
                live.pop(name, None)
    return peak


def peak_memory(cfg: ModelConfig, weights: BlockWeights | None = None, batch: int = 1) -> int:
    """Modeled peak live bytes for one forward: activations + resident weights."""
    cfg.validate()
    nodes = build_model_graph(cfg)
    if weights is not None:
        weight_bytes = weights.total_bytes()
    else:
        from .graph import required_weight_shapes

        weight_bytes = 4 * sum(
            int(np.prod(s)) for s in required_weight_shapes(nodes).values()
        )
    return simulate_peak(
        nodes, {INPUT: (cfg.in_channels, *cfg.input_size)}, weight_bytes, batch=batch
    )


def process_peak_rss_bytes() -> int | None:
    """OS-reported peak RSS of this process, or None if unavailable."""
    try:
        import resource
    except ImportError:  # pragma: no cover - POSIX only
        return None
    usage = resource.getrusage(resource.RUSAGE_SELF)
    return int(usage.ru_maxrss) * 1024


_FIELDS = (
    "input_size",
    "threads",
    "warmup_iters",
    "measured_iters",
    "per_iter_ms",
    "mean_ms",
    "p50_ms",
    "p95_ms",
    "fps",
    "peak_tensor_bytes",
    "checksum",
)


def _field_str(report: BenchReport, name: str) -> str:
    value = getattr(report, name)
    if name == "input_size":
        return f"{value[0]}x{value[1]}"
    if name == "per_iter_ms":
        return ";".join(f"{t:.4f}" for t in value)
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render_text(report: BenchReport) -> str:
    lines = []
    for name in _FIELDS:
        if name == "per_iter_ms":
            continue
        lines.append(f"{name:18} {_field_str(report, name)}")
    lines.append(
        f"{'peak_tensor_mb':18} {report.peak_tensor_bytes / (1024 * 1024):.2f}"
    )
    return "\n".join(lines) + "\n"


def render_csv(report: BenchReport) -> str:
    header = ",".join(_FIELDS)
    row = ",".join(_field_str(report, name) for name in _FIELDS)
    return header + "\n" + row + "\n"


def render_json(report: BenchReport) -> str:
    import json

    doc = {name: getattr(report, name) for name in _FIELDS}
    doc["input_size"] = list(report.input_size)
    return json.dumps(doc, indent=2) + "\n"
