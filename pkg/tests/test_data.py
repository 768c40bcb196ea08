"""Dataset pipeline tests: pairing, seeded splitting, loading, augmentations."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from dualseg.data import (
    SamplePair,
    augment,
    load_image_normalized,
    load_mask,
    nearest_resize,
    normalized_bounds,
    pair_dataset,
    read_manifest,
    split_dataset,
    write_manifest,
)
from dualseg.errors import DecodeError, ShapeError


def make_pairs(n: int) -> list[SamplePair]:
    return [
        SamplePair(stem=f"case{i:04d}", image_path=Path(f"i{i}.jpg"), mask_path=Path(f"m{i}.png"))
        for i in range(n)
    ]


def write_rgb(path: Path, value=(128, 128, 128), size=(8, 8)):
    arr = np.full((size[0], size[1], 3), value, np.uint8)
    Image.fromarray(arr, "RGB").save(path)


def write_gray(path: Path, arr: np.ndarray):
    Image.fromarray(arr.astype(np.uint8), "L").save(path)


class TestPairing:
    def test_unmatched_files_skipped(self, tmp_path):
        images = tmp_path / "images"
        masks = tmp_path / "masks"
        images.mkdir()
        masks.mkdir()
        write_rgb(images / "a.jpg")
        write_rgb(images / "b.jpg")
        write_gray(masks / "a.png", np.zeros((8, 8)))
        pairs, skipped = pair_dataset(images, masks)
        assert [p.stem for p in pairs] == ["a"]
        assert [p.name for p in skipped] == ["b.jpg"]

    def test_empty_directories(self, tmp_path):
        (tmp_path / "images").mkdir()
        (tmp_path / "masks").mkdir()
        pairs, skipped = pair_dataset(tmp_path / "images", tmp_path / "masks")
        assert pairs == [] and skipped == []

    def test_many_matched(self, tmp_path):
        images = tmp_path / "images"
        masks = tmp_path / "masks"
        images.mkdir()
        masks.mkdir()
        for i in range(25):
            write_rgb(images / f"s{i:03d}.jpg")
            write_gray(masks / f"s{i:03d}.png", np.zeros((4, 4)))
        pairs, skipped = pair_dataset(images, masks)
        assert len(pairs) == 25 and not skipped

    def test_thousand_matched_files(self, tmp_path):
        images = tmp_path / "images"
        masks = tmp_path / "masks"
        images.mkdir()
        masks.mkdir()
        tiny_img = np.zeros((2, 2, 3), np.uint8)
        tiny_mask = np.zeros((2, 2), np.uint8)
        for i in range(1000):
            Image.fromarray(tiny_img, "RGB").save(images / f"f{i:05d}.jpg")
            Image.fromarray(tiny_mask, "L").save(masks / f"f{i:05d}.png")
        pairs, skipped = pair_dataset(images, masks)
        assert len(pairs) == 1000 and not skipped
        split = split_dataset(pairs, seed=42)
        assert (len(split.train), len(split.val), len(split.test)) == (700, 150, 150)

    def test_pairs_sorted_by_stem_bytes(self, tmp_path):
        images = tmp_path / "images"
        masks = tmp_path / "masks"
        images.mkdir()
        masks.mkdir()
        for stem in ("zebra", "Alpha", "mid"):
            write_rgb(images / f"{stem}.jpg")
            write_gray(masks / f"{stem}.png", np.zeros((4, 4)))
        pairs, _ = pair_dataset(images, masks)
        stems = [p.stem for p in pairs]
        assert stems == sorted(stems, key=lambda s: s.encode("utf-8"))

    def test_duplicate_stem_rejected(self, tmp_path):
        images = tmp_path / "images"
        masks = tmp_path / "masks"
        images.mkdir()
        masks.mkdir()
        write_rgb(images / "a.jpg")
        write_rgb(images / "a.png")
        write_gray(masks / "a.png", np.zeros((4, 4)))
        with pytest.raises(ShapeError, match="duplicate stem"):
            pair_dataset(images, masks)

    def test_unreadable_directory(self, tmp_path):
        with pytest.raises(IOError):
            pair_dataset(tmp_path / "missing", tmp_path / "missing")


class TestSplit:
    def test_1000_seed42_sizes(self):
        split = split_dataset(make_pairs(1000), seed=42)
        assert (len(split.train), len(split.val), len(split.test)) == (700, 150, 150)

    def test_n10_floor_arithmetic(self):
        split = split_dataset(make_pairs(10), seed=42)
        assert (len(split.train), len(split.val), len(split.test)) == (7, 1, 2)

    def test_deterministic(self):
        a = split_dataset(make_pairs(321), seed=42)
        b = split_dataset(make_pairs(321), seed=42)
        for sec in ("train", "val", "test"):
            assert [p.stem for p in a.section(sec)] == [p.stem for p in b.section(sec)]

    def test_seed_changes_partition(self):
        a = split_dataset(make_pairs(200), seed=42)
        b = split_dataset(make_pairs(200), seed=43)
        assert [p.stem for p in a.train] != [p.stem for p in b.train]

    @pytest.mark.parametrize(
        "n",
        [3, 7, 16, 99, 317, 1000, 2000]
        + np.random.default_rng(2718).integers(3, 2001, 10).tolist(),
    )
    def test_disjoint_union_and_sizes(self, n):
        pairs = make_pairs(n)
        split = split_dataset(pairs, seed=11)
        train = {p.stem for p in split.train}
        val = {p.stem for p in split.val}
        test = {p.stem for p in split.test}
        assert not (train & val) and not (train & test) and not (val & test)
        assert train | val | test == {p.stem for p in pairs}
        assert len(split.train) == int(0.70 * n + 1e-9)
        assert len(split.val) == int(0.15 * n + 1e-9)

    def test_input_order_does_not_matter(self):
        pairs = make_pairs(50)
        shuffled_input = list(reversed(pairs))
        a = split_dataset(pairs, seed=7)
        b = split_dataset(shuffled_input, seed=7)
        assert [p.stem for p in a.train] == [p.stem for p in b.train]

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            split_dataset([], seed=42)

    def test_bad_ratios_rejected(self):
        with pytest.raises(ShapeError):
            split_dataset(make_pairs(10), seed=42, ratios=(0.5, 0.2, 0.2))

    def test_manifest_round_trip(self, tmp_path):
        split = split_dataset(make_pairs(30), seed=42)
        path = tmp_path / "manifest.txt"
        write_manifest(split, path)
        sections = read_manifest(path)
        for name in ("train", "val", "test"):
            assert sections[name] == [p.stem for p in split.section(name)]


class TestImageLoading:
    def test_white_image_values(self, tmp_path):
        path = tmp_path / "white.png"
        write_rgb(path, value=(255, 255, 255), size=(10, 12))
        x = load_image_normalized(path, (8, 8))
        assert x.shape == (1, 3, 8, 8)
        expected = [(1 - 0.485) / 0.229, (1 - 0.456) / 0.224, (1 - 0.406) / 0.225]
        for c, e in enumerate(expected):
            assert abs(float(x[0, c].mean()) - e) <= 1e-4

    def test_black_image_values(self, tmp_path):
        path = tmp_path / "black.png"
        write_rgb(path, value=(0, 0, 0))
        x = load_image_normalized(path, (8, 8))
        expected = [-0.485 / 0.229, -0.456 / 0.224, -0.406 / 0.225]
        for c, e in enumerate(expected):
            assert abs(float(x[0, c].mean()) - e) <= 1e-4

    def test_shape_contract(self, tmp_path):
        path = tmp_path / "img.jpg"
        write_rgb(path, size=(33, 47))
        assert load_image_normalized(path, (64, 32)).shape == (1, 3, 64, 32)

    def test_decode_error_carries_path(self, tmp_path):
        path = tmp_path / "broken.png"
        path.write_bytes(b"not an image")
        with pytest.raises(DecodeError, match="broken.png"):
            load_image_normalized(path, (8, 8))


class TestMaskLoading:
    def test_all_white(self, tmp_path):
        path = tmp_path / "m.png"
        write_gray(path, np.full((6, 6), 255))
        m = load_mask(path, (6, 6))
        assert np.all(m == 1.0)

    def test_checkerboard_native_size(self, tmp_path):
        board = (np.indices((8, 8)).sum(axis=0) % 2) * 255
        path = tmp_path / "m.png"
        write_gray(path, board)
        m = load_mask(path, (8, 8))
        assert np.array_equal(m[0, 0], (board > 127).astype(np.float32))

    def test_threshold_rule(self, tmp_path):
        arr = np.array([[0, 127], [128, 255]], np.uint8)
        path = tmp_path / "m.png"
        write_gray(path, arr)
        m = load_mask(path, (2, 2))
        assert np.array_equal(m[0, 0], np.array([[0.0, 0.0], [1.0, 1.0]], np.float32))

    def test_values_stay_binary_after_resize(self, tmp_path):
        rng = np.random.default_rng(3)
        arr = (rng.uniform(size=(13, 9)) > 0.5).astype(np.uint8) * 255
        path = tmp_path / "m.png"
        write_gray(path, arr)
        m = load_mask(path, (32, 32))
        assert set(np.unique(m)).issubset({0.0, 1.0})

    def test_rgb_mask_collapsed_by_luma(self, tmp_path):
        arr = np.zeros((4, 4, 3), np.uint8)
        arr[:2] = 255
        path = tmp_path / "m.png"
        Image.fromarray(arr, "RGB").save(path)
        m = load_mask(path, (4, 4))
        assert np.all(m[0, 0, :2] == 1.0) and np.all(m[0, 0, 2:] == 0.0)


class TestNearestResize:
    def test_identity(self, rng):
        x = rng.standard_normal((1, 1, 5, 5)).astype(np.float32)
        assert np.array_equal(nearest_resize(x, 5, 5), x)

    def test_upsample_2x_repeats(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 1, 2, 2)
        out = nearest_resize(x, 4, 4)
        assert np.array_equal(out[0, 0], np.repeat(np.repeat(x[0, 0], 2, 0), 2, 1))


class TestAugment:
    @pytest.fixture
    def sample(self, rng):
        x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
        m = (rng.uniform(size=(1, 1, 8, 8)) > 0.5).astype(np.float32)
        return x, m

    def test_rot90_four_times_identity(self, sample):
        x, m = sample
        cx, cm = x, m
        for _ in range(4):
            cx, cm = augment(cx, cm, "rot90")
        assert np.array_equal(cx, x) and np.array_equal(cm, m)

    def test_hflip_involution(self, sample):
        x, m = sample
        cx, cm = augment(*augment(x, m, "hflip"), "hflip")
        assert np.array_equal(cx, x) and np.array_equal(cm, m)

    def test_vflip_involution(self, sample):
        x, m = sample
        cx, cm = augment(*augment(x, m, "vflip"), "vflip")
        assert np.array_equal(cx, x) and np.array_equal(cm, m)

    def test_dihedral_relations(self, sample):
        x, m = sample
        via_flips = augment(*augment(x, m, "hflip"), "vflip")
        via_rot = augment(x, m, "rot180")
        assert np.array_equal(via_flips[0], via_rot[0])
        assert np.array_equal(via_flips[1], via_rot[1])
        twice_90 = augment(*augment(x, m, "rot90"), "rot90")
        assert np.array_equal(twice_90[0], via_rot[0])

    def test_rot90_transposes_rectangles(self, rng):
        x = rng.standard_normal((1, 3, 4, 6)).astype(np.float32)
        m = np.zeros((1, 1, 4, 6), np.float32)
        cx, cm = augment(x, m, "rot90")
        assert cx.shape == (1, 3, 6, 4) and cm.shape == (1, 1, 6, 4)

    def test_jitter_identity_params(self, sample):
        x, m = sample
        cx, cm = augment(x, m, "jitter", brightness=0.0, contrast=1.0)
        assert np.allclose(cx, np.clip(x, *[b[None, :, None, None] for b in normalized_bounds()]))
        assert np.array_equal(cm, m)

    def test_jitter_clamps_to_normalized_range(self, sample):
        x, m = sample
        cx, _ = augment(x, m, "jitter", brightness=5.0, contrast=3.0)
        lo, hi = normalized_bounds()
        for c in range(3):
            assert float(cx[0, c].min()) >= float(lo[c]) - 1e-6
            assert float(cx[0, c].max()) <= float(hi[c]) + 1e-6

    def test_jitter_leaves_mask_untouched(self, sample):
        x, m = sample
        _, cm = augment(x, m, "jitter", brightness=0.05, contrast=1.1)
        assert np.array_equal(cm, m)

    def test_mask_binary_after_any_op(self, sample):
        x, m = sample
        for op in ("hflip", "vflip", "rot90", "rot180", "rot270", "jitter"):
            _, cm = augment(x, m, op)
            assert set(np.unique(cm)).issubset({0.0, 1.0})

    def test_shape_mismatch_rejected(self, rng):
        x = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
        m = np.zeros((1, 1, 4, 4), np.float32)
        with pytest.raises(ShapeError):
            augment(x, m, "hflip")

    def test_unknown_op_rejected(self, sample):
        with pytest.raises(ShapeError, match="unknown augmentation"):
            augment(*sample, "sharpen")
