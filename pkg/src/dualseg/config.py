"""ModelConfig: the single source of truth for one network instance.

Serialized as a UTF-8 `key = value` document; tuple fields are written as
comma-separated integers. Missing keys fall back to the shipped defaults,
unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    input_size: tuple[int, int] = (256, 256)
    in_channels: int = 3
    cp_widths: tuple[int, int, int, int, int] = (24, 32, 64, 128, 256)
    sp_widths: tuple[int, int, int] = (32, 32, 64)
    sp_proj_channels: int = 64
    fuse8_channels: int = 64
    decoder_widths: tuple[int, int, int] = (128, 64, 32)
    num_classes: int = 1
    bn_epsilon: float = 1e-5

    def validate(self) -> "ModelConfig":
        h, w = self.input_size
        if h < 32 or w < 32 or h % 32 or w % 32:
            raise ConfigError("input_size", f"{h}x{w} must be divisible by 32")
        if self.in_channels < 1:
            raise ConfigError("in_channels", "must be >= 1")
        for name, count in (("cp_widths", 5), ("sp_widths", 3), ("decoder_widths", 3)):
            widths = getattr(self, name)
            if len(widths) != count:
                raise ConfigError(name, f"needs exactly {count} entries, got {len(widths)}")
            if min(widths) < 1:
                raise ConfigError(name, "all widths must be >= 1")
        for name in ("sp_proj_channels", "fuse8_channels", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if self.bn_epsilon <= 0:
            raise ConfigError("bn_epsilon", "must be > 0")
        return self

    def with_input_size(self, h: int, w: int) -> "ModelConfig":
        return replace(self, input_size=(h, w))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        known = {f.name: f for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in known:
                raise ConfigError(key, "unknown field")
            try:
                values[key] = _parse_value(key, val)
            except ValueError as exc:
                raise ConfigError(key, f"cannot parse {val!r}: {exc}") from None
        return cls(**values).validate()


def _parse_value(key: str, val: str):
    if key in ("input_size", "cp_widths", "sp_widths", "decoder_widths"):
        return tuple(int(v.strip()) for v in val.split(","))
    if key == "bn_epsilon":
        return float(val)
    return int(val)


def load_config(path: str | Path) -> ModelConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    return ModelConfig.from_text(text)


def save_config(cfg: ModelConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.to_text(), encoding="utf-8")
