import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from difd.errors import DataError
from difd.metrics import ConfusionMatrix, accumulate_confusion, macro_mean


class TestAccumulation:
    def test_identical_maps_hit_the_diagonal(self):
        cm = accumulate_confusion(np.full((2, 2), 2), np.full((2, 2), 2), 5)
        assert cm.counts[2, 2] == 4
        assert cm.total() == 4

    def test_all_wrong(self):
        cm = accumulate_confusion(np.zeros(10, int), np.ones(10, int), 3)
        assert cm.counts[1, 0] == 10

    def test_matches_counting_oracle_on_random_pairs(self):
        rng = np.random.default_rng(0)
        cm = ConfusionMatrix(5)
        total = np.zeros((5, 5), dtype=np.int64)
        for _ in range(100):
            pred = rng.integers(0, 5, size=(16, 16))
            true = rng.integers(0, 5, size=(16, 16))
            cm.update(pred, true)
            total += O.confusion_counting(pred, true, 5)
        np.testing.assert_array_equal(cm.counts, total)

    def test_out_of_range_label_names_value(self):
        cm = ConfusionMatrix(3)
        with pytest.raises(DataError, match="7"):
            cm.update(np.array([0, 7]), np.array([0, 1]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DataError):
            ConfusionMatrix(3).update(np.zeros(3, int), np.zeros(4, int))

    @given(seed=st.integers(0, 2**16), parts=st.integers(2, 5))
    @settings(max_examples=25, deadline=None)
    def test_merge_is_order_independent(self, seed, parts):
        rng = np.random.default_rng(seed)
        chunks = [(rng.integers(0, 4, 30), rng.integers(0, 4, 30))
                  for _ in range(parts)]
        forward = ConfusionMatrix(4)
        for p, t in chunks:
            forward = forward.merge(ConfusionMatrix(4).update(p, t))
        backward = ConfusionMatrix(4)
        for p, t in reversed(chunks):
            backward = backward.merge(ConfusionMatrix(4).update(p, t))
        assert forward == backward


class TestIouF1:
    def test_perfect_prediction(self):
        labels = np.random.default_rng(1).integers(0, 5, size=(32, 32))
        cm = accumulate_confusion(labels, labels, 5)
        np.testing.assert_allclose(cm.iou_per_class(), 1.0)
        assert cm.mean_iou() == 1.0
        assert cm.mean_f1() == 1.0

    def test_counted_example(self):
        # one class with TP=6, FP=2, FN=4 inside a 2-class map
        pred = np.array([1] * 6 + [1] * 2 + [0] * 4 + [0] * 20)
        true = np.array([1] * 6 + [0] * 2 + [1] * 4 + [0] * 20)
        cm = accumulate_confusion(pred, true, 2)
        assert cm.iou_per_class()[1] == 0.5
        assert abs(cm.f1_per_class()[1] - 2.0 / 3.0) < 1e-12

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(2)
        pred = rng.integers(0, 5, size=(16, 16))
        true = rng.integers(0, 5, size=(16, 16))
        cm = accumulate_confusion(pred, true, 5)
        iou, f1 = O.iou_f1_counting(pred, true, 5)
        np.testing.assert_array_equal(cm.iou_per_class(), iou)
        np.testing.assert_array_equal(cm.f1_per_class(), f1)

    def test_missed_class_scores_zero(self):
        # ground truth contains class 1, prediction never does
        pred = np.zeros(10, int)
        true = np.array([0] * 6 + [1] * 4)
        cm = accumulate_confusion(pred, true, 3)
        assert cm.iou_per_class()[1] == 0.0

    def test_absent_class_excluded_from_mean(self):
        pred = np.zeros(10, int)
        true = np.zeros(10, int)
        cm = accumulate_confusion(pred, true, 3)
        vals = cm.iou_per_class()
        assert vals[0] == 1.0 and np.isnan(vals[1]) and np.isnan(vals[2])
        assert cm.mean_iou() == 1.0

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=40, deadline=None)
    def test_f1_dominates_iou(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.integers(0, 4, size=200)
        true = rng.integers(0, 4, size=200)
        cm = accumulate_confusion(pred, true, 4)
        iou = cm.iou_per_class()
        f1 = cm.f1_per_class()
        seen = ~np.isnan(iou)
        assert np.all(f1[seen] >= iou[seen])
        assert np.all((iou[seen] >= 0) & (f1[seen] <= 1))
        # algebraic identity F1 = 2*IoU / (1 + IoU)
        np.testing.assert_allclose(f1[seen], 2 * iou[seen] / (1 + iou[seen]),
                                   atol=1e-12)
        assert cm.mean_iou() <= cm.mean_f1()


def test_macro_mean_exclusion():
    vals = [1.0, np.nan, 0.5, 0.25, 0.25]
    assert macro_mean(vals) == 0.5
    assert macro_mean(vals, exclude=(0,)) == pytest.approx(1.0 / 3.0)
    assert np.isnan(macro_mean([np.nan, np.nan]))
