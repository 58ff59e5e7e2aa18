import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from fuseqa.metrics import (
    MACRO, MICRO, WEIGHTED, ClassCounts, aggregate, count_stats, f_beta, hamming_distance, match_ratio,
    metric_report, per_class_f_beta, vqa_accuracy,
)
from fuseqa.taxonomy import class_frequencies


def test_count_stats_examples():
    gt = np.array([[1, 0], [0, 1], [1, 1]])
    c = count_stats(gt, gt)
    assert c.fp.sum() == 0 and c.fn.sum() == 0
    c = count_stats(np.ones((3, 2)), np.zeros((3, 2)))
    np.testing.assert_array_equal(c.fp, [3, 3])
    c = count_stats(np.zeros((3, 2)), gt)
    np.testing.assert_allclose(c.occurrences, class_frequencies(gt) * 3)
    with pytest.raises(ValueError):
        count_stats(np.zeros((3, 2)), np.zeros((2, 2)))


def test_f_beta_examples():
    assert f_beta(0.37, 0.37, 2.0) == pytest.approx(0.37)
    assert f_beta(0.5, 1.0, 2.0) == pytest.approx(2.5 / 3)
    assert f_beta(0.0, 0.0, 2.0) == 0.0


def test_aggregate_examples():
    dummy = ClassCounts(np.array([3, 1]), np.zeros(2, int), np.zeros(2, int), np.zeros(2, int))
    assert aggregate(np.array([0.2, 0.8]), dummy, MACRO) == pytest.approx(0.5)
    counts = ClassCounts(np.array([3, 0]), np.zeros(2, int), np.array([0, 1]), np.zeros(2, int))
    assert aggregate(np.array([1.0, 0.0]), counts, WEIGHTED) == pytest.approx(0.75)
    pooled = ClassCounts(np.array([1, 0]), np.array([1, 0]), np.array([0, 1]), np.zeros(2, int))
    assert aggregate(None, pooled, MICRO, beta=1.0) == pytest.approx(0.5)


def test_weighted_needs_occurrences():
    counts = ClassCounts(np.zeros(2, int), np.ones(2, int), np.zeros(2, int), np.zeros(2, int))
    with pytest.raises(ValueError):
        aggregate(np.zeros(2), counts, WEIGHTED)


def test_match_ratio_examples():
    gt = np.array([[1, 0, 1]] * 4)
    assert match_ratio(gt, gt) == 1.0
    assert match_ratio(np.array([[1, 0, 1], [0, 0, 0]]), gt[:2]) == 0.5
    pred = gt.copy()
    pred[2, 1] = 1
    assert match_ratio(pred, gt) == 0.75
    with pytest.raises(ValueError):
        match_ratio(np.zeros((0, 3)), np.zeros((0, 3)))


def test_hamming_examples():
    gt = np.array([[1, 0, 1]])
    assert hamming_distance(gt, gt) == 0
    assert hamming_distance(np.array([[1, 1, 1]]), gt) == 1
    ones = np.ones((1, 61))
    assert hamming_distance(ones, 1 - ones) == 61


def test_vqa_accuracy_examples():
    r = vqa_accuracy(["yes", "no", "yes", "yes"], ["yes", "no", "yes", "no"], ["yes_no"] * 4)
    assert r["yes_no"] == 0.75 and r["land_cover"] is None
    r = vqa_accuracy(["a"], ["a"], ["land_cover"])
    assert r["global"] == 1.0
    with pytest.raises(ValueError):
        vqa_accuracy([], [], [])


label_pairs = st.integers(1, 10).flatmap(lambda n: st.integers(1, 50).flatmap(
    lambda q: st.tuples(hnp.arrays(np.uint8, (q, n), elements=st.integers(0, 1)),
                        hnp.arrays(np.uint8, (q, n), elements=st.integers(0, 1)))))


@given(label_pairs, st.sampled_from([0.5, 1.0, 2.0]))
def test_against_loop_oracle(pair, beta):
    pred, gt = pair
    c = count_stats(pred, gt)
    s = per_class_f_beta(c, beta)
    assert aggregate(s, c, MACRO, beta) == pytest.approx(oracles.macro(pred, gt, beta), abs=1e-9)
    assert aggregate(s, c, MICRO, beta) == pytest.approx(oracles.micro(pred, gt, beta), abs=1e-9)
    if c.occurrences.sum():
        assert aggregate(s, c, WEIGHTED, beta) == pytest.approx(oracles.weighted(pred, gt, beta), abs=1e-9)
    assert match_ratio(pred, gt) == pytest.approx(oracles.match_ratio(pred, gt), abs=1e-12)
    assert hamming_distance(pred, gt) == pytest.approx(oracles.hamming(pred, gt), abs=1e-12)


@given(label_pairs, st.randoms(use_true_random=False))
def test_macro_class_order_and_micro_sample_order(pair, rnd):
    pred, gt = pair
    cols = list(range(gt.shape[1]))
    rows = list(range(gt.shape[0]))
    rnd.shuffle(cols)
    rnd.shuffle(rows)
    a = metric_report(pred, gt, [str(i) for i in range(gt.shape[1])])
    b = metric_report(pred[:, cols], gt[:, cols], [str(i) for i in cols])
    c = metric_report(pred[rows], gt[rows], [str(i) for i in range(gt.shape[1])])
    assert a.macro == pytest.approx(b.macro, abs=1e-12)
    assert a.micro == pytest.approx(c.micro, abs=1e-12)
    assert (a.match_ratio == 1.0) == (a.hamming == 0.0)
    assert 0 <= a.hamming <= gt.shape[1]


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 4))
def test_f_beta_monotone(p, r, dp, beta):
    assert f_beta(min(p + dp, 1.0), r, beta) >= f_beta(p, r, beta) - 1e-12
    assert f_beta(p, min(r + dp, 1.0), beta) >= f_beta(p, r, beta) - 1e-12


def test_report_serialisation():
    gt = np.array([[1, 0], [0, 1]])
    rep = metric_report(gt, gt, ["a", "b"])
    d = rep.to_dict()
    assert d["f_beta_macro"] == 1.0 and d["hamming_distance"] == 0.0
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0] == "row,precision,recall,f_beta,f1"
    assert len(csv_text.splitlines()) == 1 + 2 + 5
    assert not math.isnan(d["f1_micro"])
