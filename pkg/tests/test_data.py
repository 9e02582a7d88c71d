import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from refseg.data import (
    DatasetManifest,
    ManifestEntry,
    apply_geometric,
    generate_synthetic,
    invert_geometric,
    load_manifest,
    load_png_image,
    load_png_mask,
    make_overlay,
    save_png_image,
    save_png_mask,
    split_labeled,
    strong_augment,
    template_augment,
    validate_image,
    weak_augment,
)
from refseg.data.augment import AugmentedView

from conftest import random_label_mask


def _rand_image(rng, shape=(32, 32)):
    return rng.random(shape)


def _file_digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestPngRoundTrip:
    def test_image_quantized_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = np.round(rng.random((16, 16)) * 255) / 255
        save_png_image(tmp_path / "a.png", img)
        loaded = load_png_image(tmp_path / "a.png")
        assert np.allclose(loaded, img, atol=1e-7)

    def test_mask_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        mask = random_label_mask(rng, (16, 16), 3)
        save_png_mask(tmp_path / "m.png", mask)
        assert np.array_equal(load_png_mask(tmp_path / "m.png"), mask)

    def test_validate_image_rejects_bad_ranges(self):
        with pytest.raises(ValueError, match="intensities"):
            validate_image(np.full((8, 8), 1.5))
        with pytest.raises(ValueError, match="2-D"):
            validate_image(np.zeros((8, 8, 3)))
        with pytest.raises(ValueError, match=">= 8"):
            validate_image(np.zeros((4, 8)))


class TestManifest:
    def _write_corpus(self, root, entries, num_classes=2):
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(0)
        for e in entries:
            save_png_image(root / e["image"], rng.random((16, 16)))
            if e.get("mask"):
                save_png_mask(root / e["mask"], random_label_mask(rng, (16, 16), num_classes))
        payload = {"num_classes": num_classes, "classes": ["a", "b"], "entries": entries}
        with open(root / "manifest.json", "w") as f:
            json.dump(payload, f)

    def test_valid_ten_entry_manifest(self, tmp_path):
        entries = [
            {
                "image": f"images/p{i // 2}_{i % 2}.png",
                "mask": f"masks/p{i // 2}_{i % 2}.png",
                "patient": f"p{i // 2}",
                "split": "labeled" if i < 8 else "test",
            }
            for i in range(10)
        ]
        self._write_corpus(tmp_path, entries)
        manifest = load_manifest(tmp_path)
        assert len(manifest.entries) == 10
        assert manifest.num_classes == 2

    def test_labeled_entry_without_mask_rejected(self, tmp_path):
        entries = [
            {"image": "images/x.png", "mask": None, "patient": "p0", "split": "labeled"},
        ]
        self._write_corpus(tmp_path, entries)
        with pytest.raises(ValueError, match="images/x.png"):
            load_manifest(tmp_path)

    def test_missing_file_named(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="manifest"):
            load_manifest(tmp_path / "nope")

    def test_malformed_json(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{not json")
        with pytest.raises(ValueError, match="malformed"):
            load_manifest(tmp_path)

    def test_write_read_round_trip(self, tmp_path):
        manifest = generate_synthetic(
            seed=3, num_patients=4, slices_per_patient=2, num_classes=2, size=32, root=tmp_path
        )
        loaded = load_manifest(tmp_path)
        assert loaded.num_classes == manifest.num_classes
        assert loaded.classes == manifest.classes
        assert loaded.entries == manifest.entries


class TestGenerateSynthetic:
    def test_counts(self, tmp_path):
        manifest = generate_synthetic(
            seed=1, num_patients=20, slices_per_patient=4, num_classes=2, size=64, root=tmp_path
        )
        assert len(manifest.entries) == 80
        assert len(list((tmp_path / "images").glob("*.png"))) == 80
        assert len(list((tmp_path / "masks").glob("*.png"))) == 80

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for root in (a, b):
            generate_synthetic(seed=5, num_patients=3, slices_per_patient=2, num_classes=2, size=32, root=root)
        files_a = sorted(p.relative_to(a) for p in a.rglob("*.png"))
        files_b = sorted(p.relative_to(b) for p in b.rglob("*.png"))
        assert files_a == files_b
        for rel in files_a:
            assert _file_digest(a / rel) == _file_digest(b / rel), rel
        assert _file_digest(a / "manifest.json") == _file_digest(b / "manifest.json")

    def test_foreground_fraction_bounds(self, tmp_path):
        manifest = generate_synthetic(
            seed=2, num_patients=8, slices_per_patient=2, num_classes=4, size=64, root=tmp_path
        )
        fractions = {c: [] for c in range(1, 5)}
        for e in manifest.entries:
            mask = manifest.load_mask(e)
            for c in fractions:
                fractions[c].append((mask == c).mean())
        for c, vals in fractions.items():
            assert 0.02 <= np.mean(vals) <= 0.40, (c, np.mean(vals))

    def test_bad_args(self, tmp_path):
        with pytest.raises(ValueError, match="num_classes"):
            generate_synthetic(seed=1, num_patients=2, slices_per_patient=1, num_classes=5, size=64, root=tmp_path)
        with pytest.raises(ValueError, match="size"):
            generate_synthetic(seed=1, num_patients=2, slices_per_patient=1, num_classes=2, size=16, root=tmp_path)


class TestSplitLabeled:
    def _manifest(self, n_patients, root):
        entries = [
            ManifestEntry(image=f"images/p{p}_{s}.png", mask=f"masks/p{p}_{s}.png", patient=f"p{p:03d}", split="labeled")
            for p in range(n_patients)
            for s in range(2)
        ]
        return DatasetManifest(root=root, num_classes=2, classes=["a", "b"], entries=entries)

    def test_five_percent_of_twenty_gives_one(self, tmp_path):
        split = split_labeled(self._manifest(20, tmp_path), 0.05, seed=1)
        assert len(split.patients(("labeled",))) == 1
        assert len(split.patients(("unlabeled",))) == 19

    def test_ratio_one_all_labeled(self, tmp_path):
        split = split_labeled(self._manifest(7, tmp_path), 1.0, seed=1)
        assert len(split.patients(("labeled",))) == 7
        assert split.select("unlabeled") == []

    def test_different_seeds_different_choice(self, tmp_path):
        m = self._manifest(20, tmp_path)
        a = split_labeled(m, 0.10, seed=1)
        b = split_labeled(m, 0.10, seed=2)
        assert len(a.patients(("labeled",))) == len(b.patients(("labeled",))) == 2
        assert a.patients(("labeled",)) != b.patients(("labeled",))

    def test_no_patient_straddles_splits(self, tmp_path):
        split = split_labeled(self._manifest(10, tmp_path), 0.3, seed=3)
        lab = set(split.patients(("labeled",)))
        unl = set(split.patients(("unlabeled",)))
        assert not (lab & unl)

    def test_unlabeled_masks_dropped(self, tmp_path):
        split = split_labeled(self._manifest(10, tmp_path), 0.3, seed=3)
        assert all(e.mask is None for e in split.select("unlabeled"))
        assert all(e.mask is not None for e in split.select("labeled"))

    def test_bad_ratio(self, tmp_path):
        with pytest.raises(ValueError, match="ratio"):
            split_labeled(self._manifest(10, tmp_path), 0.0, seed=1)

    def test_patient_disjoint_after_generate(self, tmp_path):
        manifest = generate_synthetic(
            seed=4, num_patients=10, slices_per_patient=2, num_classes=2, size=32, root=tmp_path
        )
        split = split_labeled(manifest, 0.2, seed=4)
        groups = [set(split.patients((s,))) for s in ("labeled", "unlabeled", "test")]
        for i in range(3):
            for j in range(i + 1, 3):
                assert not (groups[i] & groups[j])


class TestWeakAugment:
    def test_flip_only_is_mirror(self):
        rng = np.random.default_rng(0)
        img = _rand_image(rng)
        for seed in range(200):
            view = weak_augment(img, seed)
            ops = [op["op"] for op in view.record]
            if ops == ["hflip"]:
                assert np.array_equal(view.image, img[:, ::-1])
                assert sorted(view.image.ravel()) == sorted(img.ravel())
                return
        pytest.fail("no flip-only draw in 200 seeds")

    def test_identity_draw(self):
        rng = np.random.default_rng(1)
        img = _rand_image(rng)
        for seed in range(200):
            view = weak_augment(img, seed)
            if not view.record:
                assert np.array_equal(view.image, img)
                return
        pytest.fail("no identity draw in 200 seeds")

    def test_flip_frequency(self):
        rng = np.random.default_rng(2)
        img = _rand_image(rng)
        flips = sum(
            any(op["op"] == "hflip" for op in weak_augment(img, seed).record) for seed in range(1000)
        )
        assert abs(flips / 1000 - 0.5) < 0.05

    def test_shift_bounded(self):
        rng = np.random.default_rng(3)
        img = _rand_image(rng, (40, 40))
        for seed in range(100):
            for op in weak_augment(img, seed).record:
                if op["op"] == "shift":
                    assert max(abs(op["dy"]), abs(op["dx"])) <= 2  # 5% of 40

    def test_determinism(self):
        rng = np.random.default_rng(4)
        img = _rand_image(rng)
        a = weak_augment(img, 123)
        b = weak_augment(img, 123)
        assert np.array_equal(a.image, b.image)
        assert a.record == b.record


class TestStrongAugment:
    def _view(self, seed=0):
        rng = np.random.default_rng(seed)
        return AugmentedView(image=_rand_image(rng), mask=random_label_mask(rng, (32, 32), 2), record=[])

    def test_mask_bit_identical(self):
        view = self._view()
        for seed in range(50):
            out = strong_augment(view, seed)
            assert np.array_equal(out.mask, view.mask)

    def test_cutout_constant_block(self):
        view = self._view(1)
        for seed in range(200):
            out = strong_augment(view, seed)
            cutouts = [op for op in out.record if op["op"] == "cutout"]
            if cutouts:
                op = cutouts[-1]  # the last block cannot have been overwritten
                block = out.image[op["y0"] : op["y0"] + op["h"], op["x0"] : op["x0"] + op["w"]]
                assert np.all(block == op["fill"])
                assert 0.0 <= op["fill"] <= 1.0
                return
        pytest.fail("no cutout draw in 200 seeds")

    def test_range_sweep(self):
        view = self._view(2)
        for seed in range(1000):
            out = strong_augment(view, seed)
            assert out.image.min() >= 0.0 and out.image.max() <= 1.0

    def test_determinism(self):
        view = self._view(3)
        a = strong_augment(view, 99)
        b = strong_augment(view, 99)
        assert np.array_equal(a.image, b.image)
        assert a.record == b.record


class TestTemplateAugment:
    def _pair(self, seed=0, shape=(32, 32)):
        rng = np.random.default_rng(seed)
        return _rand_image(rng, shape), random_label_mask(rng, shape, 2)

    def test_identity_draw(self):
        img, mask = self._pair()
        for seed in range(500):
            out = template_augment(img, mask, seed)
            if not out.record:
                assert np.array_equal(out.image, img)
                assert np.array_equal(out.mask, mask)
                return
        pytest.fail("no identity draw in 500 seeds")

    def test_mask_labels_subset(self):
        img, mask = self._pair(1)
        labels = set(np.unique(mask))
        for seed in range(100):
            out = template_augment(img, mask, seed)
            assert set(np.unique(out.mask)) <= labels

    def test_crop_scales_uniform(self):
        img, mask = self._pair(2)
        scales = []
        seed = 0
        while len(scales) < 1000:
            out = template_augment(img, mask, seed)
            seed += 1
            scales.extend(op["scale"] for op in out.record if op["op"] == "crop")
        result = stats.kstest(scales[:1000], stats.uniform(loc=0.7, scale=0.3).cdf)
        assert result.pvalue > 0.01

    def test_crop_keeps_present_classes_when_possible(self):
        # one small blob per class; crops that lose a class must be rare
        img = np.zeros((32, 32)) + 0.5
        mask = np.zeros((32, 32), dtype=np.int64)
        mask[4:9, 4:9] = 1
        mask[20:25, 20:25] = 2
        lost = 0
        for seed in range(300):
            out = template_augment(img, mask, seed)
            lost += {1, 2} - set(np.unique(out.mask)) != set()
        assert lost / 300 < 0.05

    def test_geometric_replay_reproduces_mask(self):
        img, mask = self._pair(3)
        for seed in range(50):
            out = template_augment(img, mask, seed)
            replayed = apply_geometric(out.record, mask, is_mask=True)
            assert np.array_equal(replayed, out.mask)

    def test_determinism(self):
        img, mask = self._pair(4)
        a = template_augment(img, mask, 7)
        b = template_augment(img, mask, 7)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.mask, b.mask)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_weak_record_replays_on_masks(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((24, 24))
    mask = random_label_mask(rng, (24, 24), 2)
    view = weak_augment(img, seed)
    moved = apply_geometric(view.record, mask, is_mask=True)
    restored = invert_geometric(view.record, moved, is_mask=True)
    interior = apply_geometric(view.record, np.ones_like(mask), is_mask=True) > 0
    restored_interior = invert_geometric(view.record, interior.astype(np.int64), is_mask=True) > 0
    # inversion restores everything that never left the canvas
    assert np.array_equal(restored[restored_interior], mask[restored_interior])


class TestMakeOverlay:
    def test_empty_mask_three_identical_channels(self):
        rng = np.random.default_rng(0)
        img = _rand_image(rng, (16, 16))
        mask = np.zeros((16, 16), dtype=np.int64)
        rgb = make_overlay(img, mask, 1)
        assert np.array_equal(rgb[:, :, 0], rgb[:, :, 1])
        assert np.array_equal(rgb[:, :, 1], rgb[:, :, 2])
        assert np.array_equal(rgb[:, :, 0], img)

    def test_full_foreground_blend(self):
        rng = np.random.default_rng(1)
        img = _rand_image(rng, (16, 16))
        mask = np.ones((16, 16), dtype=np.int64)
        rgb = make_overlay(img, mask, 1, alpha=0.5)
        assert np.allclose(rgb[:, :, 1], 0.5 * img + 0.5, atol=1e-12)
        assert np.allclose(rgb[:, :, 0], 0.5 * img, atol=1e-12)

    def test_checkerboard_blend_exact(self):
        rng = np.random.default_rng(2)
        img = _rand_image(rng, (16, 16))
        mask = np.indices((16, 16)).sum(axis=0) % 2
        rgb = make_overlay(img, mask, 1, alpha=0.5)
        fg = mask == 1
        assert np.allclose(rgb[fg, 1], 0.5 * img[fg] + 0.5, atol=1e-12)
        assert np.allclose(rgb[~fg, 1], img[~fg], atol=1e-12)
        assert np.allclose(rgb[~fg, 0], img[~fg], atol=1e-12)
