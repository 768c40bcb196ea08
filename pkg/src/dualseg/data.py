"""Dataset handling: stem pairing, seeded 70/15/15 split, loading, augmentation.

Images are resized bilinearly (same kernel as the network), scaled to
[0, 1] and normalized with ImageNet statistics; masks are resized with
nearest-neighbour and binarized at the 127/255 midpoint so their values
stay exactly in {0.0, 1.0}.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ShapeError
from .ops import Tensor, bilinear_resize, check_tensor
from .rng import fisher_yates

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png"}

AUGMENT_OPS = ("hflip", "vflip", "rot90", "rot180", "rot270", "jitter")


@dataclass(frozen=True)
class SamplePair:
    """One image/mask pair matched by filename stem."""

    stem: str
    image_path: Path
    mask_path: Path


@dataclass
class DatasetSplit:
    train: list[SamplePair]
    val: list[SamplePair]
    test: list[SamplePair]
    seed: int

    def section(self, name: str) -> list[SamplePair]:
        if name not in ("train", "val", "test"):
            raise ShapeError(f"unknown split section {name!r}")
        return getattr(self, name)


@dataclass
class AugmentConfig:
    """Per-op application probabilities and jitter ranges for a run config."""

    p_hflip: float = 0.5
    p_vflip: float = 0.5
    p_rotate: float = 0.5
    p_jitter: float = 0.5
    brightness_range: tuple[float, float] = (-0.1, 0.1)
    contrast_range: tuple[float, float] = (0.8, 1.2)


def _list_by_stem(directory: Path) -> dict[str, Path]:
    by_stem: dict[str, Path] = {}
    for entry in directory.iterdir():
        if not entry.is_file() or entry.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        if entry.stem in by_stem:
            raise ShapeError(
                f"duplicate stem {entry.stem!r} in {directory}: "
                f"{by_stem[entry.stem].name} vs {entry.name}"
            )
        by_stem[entry.stem] = entry
    return by_stem


def pair_dataset(
    images_dir: str | Path, masks_dir: str | Path
) -> tuple[list[SamplePair], list[Path]]:
    """Match images to masks by stem; returns (pairs sorted by stem, skipped files)."""
    images_dir, masks_dir = Path(images_dir), Path(masks_dir)
    for d in (images_dir, masks_dir):
        if not d.is_dir():
            raise IOError(f"not a readable directory: {d}")
    images = _list_by_stem(images_dir)
    masks = _list_by_stem(masks_dir)
    stems = sorted(images.keys() & masks.keys(), key=lambda s: s.encode("utf-8"))
    pairs = [SamplePair(stem=s, image_path=images[s], mask_path=masks[s]) for s in stems]
    skipped = [p for s, p in sorted(images.items()) if s not in masks]
    skipped += [p for s, p in sorted(masks.items()) if s not in images]
    return pairs, skipped


def split_dataset(
    pairs: list[SamplePair],
    seed: int,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
) -> DatasetSplit:
    """Seeded Fisher-Yates shuffle of the stem-sorted pairs, sliced 70/15/15.

    n_train = floor(ratio*N) with a 1e-9 guard so binary-float ratios like
    0.70 never floor one short of the exact value.
    """
    if not pairs:
        raise ShapeError("cannot split an empty pair list")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ShapeError(f"ratios must sum to 1, got {ratios}")
    ordered = sorted(pairs, key=lambda p: p.stem.encode("utf-8"))
    shuffled = fisher_yates(ordered, seed)
    n = len(shuffled)
    n_train = int(ratios[0] * n + 1e-9)
    n_val = int(ratios[1] * n + 1e-9)
    return DatasetSplit(
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


def _decode(path: str | Path, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert(mode))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from None


def load_image_normalized(path: str | Path, target_hw: tuple[int, int]) -> Tensor:
    """Decode RGB, bilinear-resize, scale by 1/255, normalize per channel."""
    rgb = _decode(path, "RGB").astype(np.float32)
    x = np.ascontiguousarray(rgb.transpose(2, 0, 1))[None]
    x = bilinear_resize(x, *target_hw)
    x /= 255.0
    mean = np.asarray(IMAGENET_MEAN, np.float32)[None, :, None, None]
    std = np.asarray(IMAGENET_STD, np.float32)[None, :, None, None]
    return (x - mean) / std


def nearest_resize(x: Tensor, h_out: int, w_out: int) -> Tensor:
    """Nearest-neighbour resample (pixel-area index mapping); keeps values exact."""
    x = check_tensor(x)
    b, c, h, w = x.shape
    if (h_out, w_out) == (h, w):
        return x.copy()
    ys = np.minimum(((np.arange(h_out) + 0.5) * (h / h_out)).astype(np.intp), h - 1)
    xs = np.minimum(((np.arange(w_out) + 0.5) * (w / w_out)).astype(np.intp), w - 1)
    return np.ascontiguousarray(x[:, :, ys[:, None], xs[None, :]])


def load_mask(path: str | Path, target_hw: tuple[int, int]) -> Tensor:
    """Decode grayscale (RGB collapsed by luma), nearest-resize, binarize at >127."""
    gray = _decode(path, "L").astype(np.float32)
    m = nearest_resize(gray[None, None], *target_hw)
    return (m > 127.0).astype(np.float32)


def normalized_bounds(
    mean: tuple[float, ...] = IMAGENET_MEAN, std: tuple[float, ...] = IMAGENET_STD
) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel images of 0 and 1 under (v - mean)/std: the clamp range."""
    mean = np.asarray(mean, np.float64)
    std = np.asarray(std, np.float64)
    return ((0.0 - mean) / std).astype(np.float32), ((1.0 - mean) / std).astype(np.float32)


def augment(
    x: Tensor,
    m: Tensor,
    op: str,
    *,
    brightness: float = 0.0,
    contrast: float = 1.0,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[Tensor, Tensor]:
    """Apply one augmentation to an image/mask pair.

    Flips and rotations are exact pixel permutations applied to both
    tensors; jitter rescales the image around its per-channel mean
    (y = clamp(mean + (x - mean)*contrast + brightness)) and leaves the
    mask untouched. rot90 is counterclockwise.
    """
    x = check_tensor(x)
    m = check_tensor(m, "m")
    if x.shape[2:] != m.shape[2:] or x.shape[0] != m.shape[0]:
        raise ShapeError(f"image/mask misaligned: {x.shape} vs {m.shape}")
    if op == "hflip":
        flip = lambda t: np.ascontiguousarray(t[:, :, :, ::-1])
        return flip(x), flip(m)
    if op == "vflip":
        flip = lambda t: np.ascontiguousarray(t[:, :, ::-1, :])
        return flip(x), flip(m)
    if op in ("rot90", "rot180", "rot270"):
        k = {"rot90": 1, "rot180": 2, "rot270": 3}[op]
        rot = lambda t: np.ascontiguousarray(np.rot90(t, k=k, axes=(2, 3)))
        return rot(x), rot(m)
    if op == "jitter":
        lo, hi = bounds if bounds is not None else normalized_bounds()
        lo = lo[None, :, None, None]
        hi = hi[None, :, None, None]
        mean_c = x.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(np.float32)
        y = mean_c + (x - mean_c) * np.float32(contrast) + np.float32(brightness)
        return np.clip(y, lo, hi), m.copy()
    raise ShapeError(f"unknown augmentation {op!r}; expected one of {AUGMENT_OPS}")


def write_manifest(split: DatasetSplit, path: str | Path) -> None:
    """Three-section audit manifest, one stem per line."""
    lines = []
    for name in ("train", "val", "test"):
        lines.append(f"[{name}]")
        lines.extend(p.stem for p in split.section(name))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], [])
        elif current is not None:
            current.append(line)
        else:
            raise ShapeError(f"manifest line outside any section: {line!r}")
    return sections


def write_skip_log(skipped: list[Path], path: str | Path) -> None:
    Path(path).write_text("".join(f"{p}\n" for p in skipped), encoding="utf-8")
