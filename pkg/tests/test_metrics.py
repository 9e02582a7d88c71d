import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refseg.metrics import (
    MetricReport,
    boundary_pixels,
    dice,
    evaluate,
    hd95,
    iou,
    read_report_csv,
    write_report_csv,
)

from conftest import random_label_mask


def hd95_bruteforce(pred, truth, class_id):
    """O(n^2) all-pairs oracle for the pooled directed boundary distances."""
    bp = boundary_pixels(np.asarray(pred) == class_id).astype(np.float64)
    bt = boundary_pixels(np.asarray(truth) == class_id).astype(np.float64)
    if len(bp) == 0 or len(bt) == 0:
        return None
    d2 = ((bp[:, None, :] - bt[None, :, :]) ** 2).sum(-1)
    pooled = np.concatenate([np.sqrt(d2.min(axis=1)), np.sqrt(d2.min(axis=0))])
    return float(np.percentile(pooled, 95))


class TestDice:
    def test_identical(self):
        m = np.array([[0, 1], [1, 0]])
        assert dice(m, m, 1) == 1.0

    def test_disjoint_equal_size(self):
        a = np.zeros((4, 4), dtype=int)
        b = np.zeros((4, 4), dtype=int)
        a[:2] = 1
        b[2:] = 1
        assert dice(a, b, 1) == 0.0

    def test_half_versus_full(self):
        pred = np.zeros((8, 8), dtype=int)
        pred[:, :4] = 1
        truth = np.ones((8, 8), dtype=int)
        assert dice(pred, truth, 1) == pytest.approx(2 / 3, abs=1e-12)

    def test_both_empty(self):
        z = np.zeros((4, 4), dtype=int)
        assert dice(z, z, 1) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            dice(np.zeros((4, 4), dtype=int), np.zeros((4, 5), dtype=int), 1)


class TestIou:
    def test_identical(self):
        m = np.array([[1, 0], [0, 1]])
        assert iou(m, m, 1) == 1.0

    def test_half_versus_full(self):
        pred = np.zeros((8, 8), dtype=int)
        pred[:, :4] = 1
        truth = np.ones((8, 8), dtype=int)
        assert iou(pred, truth, 1) == 0.5

    def test_dice_identity_random(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a = random_label_mask(rng, (16, 16), 1)
            b = random_label_mask(rng, (16, 16), 1)
            d, j = dice(a, b, 1), iou(a, b, 1)
            assert d == pytest.approx(2 * j / (1 + j), abs=1e-12)


class TestHd95:
    def test_identical(self):
        rng = np.random.default_rng(1)
        m = random_label_mask(rng, (16, 16), 1)
        assert hd95(m, m, 1) == 0.0

    def test_two_single_pixels(self):
        a = np.zeros((8, 8), dtype=int)
        b = np.zeros((8, 8), dtype=int)
        a[0, 0] = 1
        b[3, 4] = 1
        assert hd95(a, b, 1) == pytest.approx(5.0, abs=0)

    def test_either_empty_undefined(self):
        z = np.zeros((8, 8), dtype=int)
        m = z.copy()
        m[2, 2] = 1
        assert hd95(m, z, 1) is None
        assert hd95(z, m, 1) is None

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(200):
            a = random_label_mask(rng, (32, 32), 2)
            b = random_label_mask(rng, (32, 32), 2)
            for c in (1, 2):
                got = hd95(a, b, c)
                want = hd95_bruteforce(a, b, c)
                if want is None:
                    assert got is None
                else:
                    assert got == want
                    checked += 1
        assert checked > 300

    def test_le_exact_hausdorff(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            a = random_label_mask(rng, (24, 24), 1)
            b = random_label_mask(rng, (24, 24), 1)
            bp = boundary_pixels(a == 1).astype(float)
            bt = boundary_pixels(b == 1).astype(float)
            if len(bp) == 0 or len(bt) == 0:
                continue
            d2 = ((bp[:, None, :] - bt[None, :, :]) ** 2).sum(-1)
            hd100 = math.sqrt(max(d2.min(axis=1).max(), d2.min(axis=0).max()))
            assert hd95(a, b, 1) <= hd100 + 1e-12


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_metric_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = random_label_mask(rng, (16, 16), 1)
    b = random_label_mask(rng, (16, 16), 1)
    assert dice(a, b, 1) == dice(b, a, 1)
    assert iou(a, b, 1) == iou(b, a, 1)
    assert hd95(a, b, 1) == hd95(b, a, 1)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
@settings(max_examples=25, deadline=None)
def test_translation_invariance(seed, dy, dx):
    rng = np.random.default_rng(seed)
    a = random_label_mask(rng, (12, 12), 1)
    b = random_label_mask(rng, (12, 12), 1)
    pad = ((dy, 4 - dy + 1), (dx, 4 - dx + 1))
    a2 = np.pad(a, pad)
    b2 = np.pad(b, pad)
    assert dice(a2, b2, 1) == dice(a, b, 1)
    assert iou(a2, b2, 1) == iou(a, b, 1)
    assert hd95(a2, b2, 1) == hd95(a, b, 1)


class TestEvaluate:
    def test_perfect_predictions(self):
        rng = np.random.default_rng(4)
        masks = [random_label_mask(rng, (16, 16), 2) for _ in range(3)]
        report = evaluate(masks, masks, 2)
        for c in (1, 2):
            assert report.per_class[c].dice == 1.0
            assert report.per_class[c].iou == 1.0
            assert report.per_class[c].hd95 == 0.0
        assert report.mean_dice == 1.0

    def test_single_slice_equals_slice_metrics(self):
        rng = np.random.default_rng(5)
        a = random_label_mask(rng, (16, 16), 2)
        b = random_label_mask(rng, (16, 16), 2)
        report = evaluate([a], [b], 2)
        for c in (1, 2):
            assert report.per_class[c].dice == dice(a, b, c)
            assert report.per_class[c].iou == iou(a, b, c)
            assert report.per_class[c].hd95 == hd95(a, b, c)

    def test_two_slice_means_match_hand_computation(self):
        # slice 1: pred = left half, truth = full -> dice 2/3, iou 1/2
        # slice 2: pred == truth = top half    -> dice 1, iou 1, hd 0
        p1 = np.zeros((8, 8), dtype=int)
        p1[:, :4] = 1
        t1 = np.ones((8, 8), dtype=int)
        p2 = np.zeros((8, 8), dtype=int)
        p2[:4] = 1
        report = evaluate([p1, p2], [t1, p2], 1)
        m = report.per_class[1]
        assert m.dice == pytest.approx((2 / 3 + 1.0) / 2, abs=1e-12)
        assert m.iou == pytest.approx((0.5 + 1.0) / 2, abs=1e-12)
        h1 = hd95(p1, t1, 1)
        assert m.hd95 == pytest.approx((h1 + 0.0) / 2, abs=1e-12)
        assert m.n == 2 and m.undefined_hd95 == 0

    def test_undefined_hd95_excluded_and_counted(self):
        empty = np.zeros((8, 8), dtype=int)
        full = np.ones((8, 8), dtype=int)
        report = evaluate([empty, full], [full, full], 1)
        m = report.per_class[1]
        assert m.undefined_hd95 == 1
        assert m.hd95 == 0.0  # only the defined slice contributes

    def test_misaligned_sets(self):
        z = np.zeros((8, 8), dtype=int)
        with pytest.raises(ValueError, match="misaligned"):
            evaluate([z], [z, z], 1)

    def test_iou_le_dice(self):
        rng = np.random.default_rng(6)
        preds = [random_label_mask(rng, (16, 16), 2) for _ in range(4)]
        truths = [random_label_mask(rng, (16, 16), 2) for _ in range(4)]
        report = evaluate(preds, truths, 2)
        for m in report.per_class.values():
            assert m.iou <= m.dice + 1e-12


def test_report_csv_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    preds = [random_label_mask(rng, (16, 16), 2) for _ in range(3)]
    truths = [random_label_mask(rng, (16, 16), 2) for _ in range(3)]
    report = evaluate(preds, truths, 2)
    path = tmp_path / "metrics.csv"
    write_report_csv(path, report, header_comment="config_hash=test")
    loaded = read_report_csv(path)
    for c in (1, 2):
        assert loaded.per_class[c] == report.per_class[c]
