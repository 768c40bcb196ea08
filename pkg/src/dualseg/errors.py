"""Exception types shared across the library.

The CLI maps these onto exit codes: configuration/usage problems exit 2,
verification failures exit 1, I/O problems exit 3.
"""


class DualSegError(Exception):
    """Base class for all library errors."""


class ShapeError(DualSegError, ValueError):
    """An argument's shape or length is inconsistent with the operation."""


class GeometryError(DualSegError, ValueError):
    """A convolution/resize geometry produces an output dimension < 1."""


class ConfigError(DualSegError, ValueError):
    """A ModelConfig (or run configuration) field is invalid."""

    def __init__(self, field: str, message: str):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


class LayerError(DualSegError, ValueError):
    """A weight entry is missing, orphaned, or has the wrong shape."""

    def __init__(self, layer_path: str, message: str):
        super().__init__(f"layer '{layer_path}': {message}")
        self.layer_path = layer_path


class WeightFormatError(DualSegError, ValueError):
    """A weight container violates the BSUW format."""


class WeightIOError(DualSegError, IOError):
    """A weight container is truncated or unreadable; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class DecodeError(DualSegError, ValueError):
    """An image or mask file could not be decoded."""


class EvaluationError(DualSegError, RuntimeError):
    """Too many samples failed while evaluating a split."""
