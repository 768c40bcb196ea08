"""Weight container: named float32 arrays, BSUW binary file, He initialization.

BSUW layout (all integers little-endian):
    magic   4 bytes  "BSUW"
    version u32      1
    count   u32      number of tensor records
    record  u16 name_len | name UTF-8 | u8 dtype (0 = float32) | u8 ndim
            | ndim x u32 dims | prod(dims) x f32 data
Names are unique and the file length is consumed exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import LayerError, WeightFormatError, WeightIOError
from .graph import Node, build_model_graph, conv_nodes, required_weight_shapes
from .ops import BnParams
from .rng import fnv1a64, normals

MAGIC = b"BSUW"
VERSION = 1
DTYPE_F32 = 0


class BlockWeights:
    """Immutable-by-convention map from entry name to float32 array."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self._arrays: dict[str, np.ndarray] = {}
        for name, arr in arrays.items():
            if name in self._arrays:
                raise LayerError(name, "duplicate entry")
            self._arrays[name] = np.ascontiguousarray(arr, dtype=np.float32)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._arrays[name]
        except KeyError:
            raise LayerError(name, "missing entry") from None

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self) -> list[str]:
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def conv(self, path: str) -> tuple[np.ndarray, np.ndarray | None]:
        bias = self._arrays.get(f"{path}.bias")
        return self[f"{path}.weight"], bias

    def bn(self, path: str, eps: float) -> BnParams:
        return BnParams(
            gamma=self[f"{path}.bn.gamma"],
            beta=self[f"{path}.bn.beta"],
            mean=self[f"{path}.bn.mean"],
            var=self[f"{path}.bn.var"],
            eps=eps,
        )

    def replaced(self, updates: dict[str, np.ndarray], dropped: set[str]) -> "BlockWeights":
        arrays = {n: a for n, a in self._arrays.items() if n not in dropped}
        arrays.update(updates)
        return BlockWeights(arrays)

    def trainable_scalars(self) -> int:
        """Conv weights, biases, and BN gamma/beta; running stats excluded."""
        return sum(
            arr.size
            for name, arr in self._arrays.items()
            if not (name.endswith(".bn.mean") or name.endswith(".bn.var"))
        )

    def total_bytes(self) -> int:
        return sum(arr.nbytes for arr in self._arrays.values())


def validate_weights(weights: BlockWeights, nodes: tuple[Node, ...] | list[Node]) -> None:
    """Every required entry present with its exact shape; no orphans."""
    required = required_weight_shapes(nodes)
    for name, shape in required.items():
        if name not in weights:
            raise LayerError(name, "required by the model but absent")
        got = weights[name].shape
        if got != shape:
            raise LayerError(name, f"shape {got} does not match required {shape}")
    for name in weights.names():
        if name not in required:
            raise LayerError(name, "orphan entry not declared by the model")


def init_weights(cfg: ModelConfig, seed: int) -> BlockWeights:
    """He-initialized weights: conv ~ N(0, 2/fan_in), biases/beta 0, gamma 1.

    Each conv layer draws from its own SplitMix64 substream seeded by
    `seed XOR fnv1a64(layer_path)`, so file or build order cannot change
    the result.
    """
    cfg.validate()
    arrays: dict[str, np.ndarray] = {}
    for node in conv_nodes(build_model_graph(cfg)):
        spec = node.spec
        fan_in = (spec.in_channels // spec.groups) * spec.kernel[0] * spec.kernel[1]
        std = float(np.sqrt(2.0 / fan_in))
        draws = normals(seed ^ fnv1a64(node.path), int(np.prod(spec.weight_shape)))
        arrays[f"{node.path}.weight"] = (draws * std).reshape(spec.weight_shape)
        if spec.has_bias:
            arrays[f"{node.path}.bias"] = np.zeros(spec.out_channels, np.float32)
        if node.bn:
            c = spec.out_channels
            arrays[f"{node.path}.bn.gamma"] = np.ones(c, np.float32)
            arrays[f"{node.path}.bn.beta"] = np.zeros(c, np.float32)
            arrays[f"{node.path}.bn.mean"] = np.zeros(c, np.float32)
            arrays[f"{node.path}.bn.var"] = np.ones(c, np.float32)
    return BlockWeights(arrays)


def save_weights(weights: BlockWeights, path: str | Path) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(weights))]
    for name, arr in weights.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise WeightFormatError(f"entry name too long: {name!r}")
        if arr.ndim < 1:
            arr = arr.reshape(1)
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", DTYPE_F32, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4", copy=False).tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise WeightIOError(f"truncated file while reading {what}", self.offset)
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_weight_file(path: str | Path) -> BlockWeights:
    """Parse a BSUW file without validating against any model."""
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4, "magic") != MAGIC:
        raise WeightFormatError(f"bad magic in {path}; expected {MAGIC!r}")
    (version, count) = reader.unpack("<II", "header")
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version}; expected {VERSION}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H", "name length")
        name = reader.take(name_len, "name").decode("utf-8")
        (dtype, ndim) = reader.unpack("<BB", f"{name} dtype/ndim")
        if dtype != DTYPE_F32:
            raise WeightFormatError(f"entry {name!r}: unsupported dtype {dtype}")
        dims = reader.unpack(f"<{ndim}I", f"{name} dims")
        size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        raw = reader.take(4 * size, f"{name} data")
        if name in arrays:
            raise WeightFormatError(f"duplicate entry {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if reader.offset != len(reader.data):
        raise WeightFormatError(
            f"{len(reader.data) - reader.offset} trailing bytes after the last record"
        )
    return BlockWeights(arrays)


def load_weights(path: str | Path, cfg: ModelConfig) -> BlockWeights:
    """Read a BSUW file and validate every entry against the model plan."""
    weights = read_weight_file(path)
    validate_weights(weights, build_model_graph(cfg))
    return weights


def save_tensor(arr: np.ndarray, name: str, path: str | Path) -> None:
    """Write a single named array in the same container format."""
    save_weights(BlockWeights({name: np.asarray(arr, dtype=np.float32)}), path)
