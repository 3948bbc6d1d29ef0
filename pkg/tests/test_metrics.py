import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pkleval import (
    ErrorModel,
    ThresholdTable,
    apply_thresholds,
    average_precision,
    f1_optimal_threshold,
    identity_submission,
    match_boxes,
    mean_ap,
    simulate_detector,
    spearman_rank_correlation,
)

from conftest import car, toy_dataset, toy_submission


from oracles import brute_ap, brute_f1_threshold, brute_match, random_instance


# ---------------------------------------------------------------- matching

def test_match_exact_center():
    res = match_boxes([car(0, 0)], [car(0, 0, 0.5)], "car", 2.0)
    assert res.pairs == ((0, 0, 0.0),)
    assert res.unmatched_gt == () and res.unmatched_pred == ()


def test_match_threshold_exclusion():
    res = match_boxes([car(0, 0)], [car(3, 0, 0.5)], "car", 2.0)
    assert res.pairs == ()
    assert res.unmatched_gt == (0,) and res.unmatched_pred == (0,)


def test_match_greedy_order():
    gt = [car(0, 0), car(1, 0)]
    pred = [car(0.4, 0, 0.9), car(0.6, 0, 0.8)]
    res = match_boxes(gt, pred, "car", 2.0)
    assert [(g, p) for g, p, _ in res.pairs] == [(0, 0), (1, 1)]
    assert [d for _, _, d in res.pairs] == pytest.approx([0.4, 0.4])
    assert brute_match(gt, pred, "car", 2.0) == [(0, 0), (1, 1)]


def test_match_ignores_other_classes():
    res = match_boxes([car(0, 0, cls="truck")], [car(0, 0, 0.9)], "car", 2.0)
    assert res.pairs == () and res.unmatched_gt == () and res.unmatched_pred == (0,)


def test_match_tie_prefers_lower_gt_index():
    res = match_boxes([car(-1, 0), car(1, 0)], [car(0, 0, 0.5)], "car", 2.0)
    assert res.pairs[0][0] == 0


def test_match_rejects_nonpositive_threshold():
    with pytest.raises(ValueError):
        match_boxes([], [], "car", 0.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 1.0, 2.0, 4.0]))
def test_match_invariants_and_oracle(seed, thr):
    rng = np.random.default_rng(seed)
    gts, preds = random_instance(rng, n_samples=1, max_boxes=12)
    res = match_boxes(gts[0], preds[0], "car", thr)
    g = [p[0] for p in res.pairs]
    q = [p[1] for p in res.pairs]
    assert len(set(g)) == len(g) and len(set(q)) == len(q)
    assert all(d <= thr for _, _, d in res.pairs)
    assert [(a, b) for a, b, _ in res.pairs] == brute_match(gts[0], preds[0], "car", thr)


# ---------------------------------------------------------------- AP / mAP

def test_ap_perfect():
    gts = [[car(0, 0), car(5, 5)], [car(2, 2)]]
    ds = toy_dataset(gts)
    assert average_precision(ds, identity_submission(ds), "car", 2.0) == pytest.approx(1.0)
    assert mean_ap(ds, identity_submission(ds)) == pytest.approx(1.0)


def test_ap_no_predictions():
    ds = toy_dataset([[car(0, 0)]])
    assert average_precision(ds, toy_submission([[]]), "car", 2.0) == 0.0


def test_ap_tp_then_fp():
    ds = toy_dataset([[car(0, 0)]])
    sub = toy_submission([[car(0, 0, 0.9), car(8, 8, 0.8)]])
    # oracle: points (recall 1, precision 1) then (1, 0.5); envelope is 1 everywhere
    assert brute_ap([[car(0, 0)]], [[car(0, 0, 0.9), car(8, 8, 0.8)]], "car", 2.0) == pytest.approx(1.0)
    assert average_precision(ds, sub, "car", 2.0) == pytest.approx(1.0)


def test_ap_class_without_gt_or_preds_is_zero():
    ds = toy_dataset([[car(0, 0)]])
    assert average_precision(ds, identity_submission(ds), "truck", 2.0) == 0.0


def test_mean_ap_only_classes_present():
    ds = toy_dataset([[car(0, 0)]])
    sub = toy_submission([[car(0, 0, 0.9)]])
    assert mean_ap(ds, sub) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        mean_ap(ds, sub, [])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 2.0, 4.0]))
def test_ap_matches_brute_force(seed, thr):
    rng = np.random.default_rng(seed)
    gts, preds = random_instance(rng)
    ds, sub = toy_dataset(gts), toy_submission(preds)
    for cls in ("car", "pedestrian"):
        assert average_precision(ds, sub, cls, thr) == pytest.approx(brute_ap(gts, preds, cls, thr), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["square", "affine", "sqrt"]))
def test_ap_invariant_under_monotone_rescaling(seed, kind):
    rng = np.random.default_rng(seed)
    gts, preds = random_instance(rng)
    f = {"square": lambda s: s * s, "affine": lambda s: 0.5 * s + 0.1, "sqrt": math.sqrt}[kind]
    rescaled = [[b.with_score(f(b.score)) for b in p] for p in preds]
    ds = toy_dataset(gts)
    for cls in ("car", "pedestrian"):
        a = average_precision(ds, toy_submission(preds), cls, 2.0)
        b = average_precision(ds, toy_submission(rescaled), cls, 2.0)
        assert a == pytest.approx(b, abs=1e-12)


def test_mean_ap_decreases_with_drop_rate(small_dataset):
    values = []
    for rate in (0.0, 0.25, 0.5, 0.75):
        sub = simulate_detector(small_dataset, ErrorModel(drop_rate=rate, lateral_noise_sigma_m=0.2), seed=5)
        values.append(mean_ap(small_dataset, sub))
    assert all(b < a for a, b in zip(values, values[1:]))
    assert 0.0 < values[2] < 1.0


# ---------------------------------------------------------------- F1 threshold

def test_f1_example():
    gts = [[car(0, 0), car(10, 0)]]
    preds = [[car(0, 0, 0.9), car(20, 20, 0.8), car(10, 0, 0.4)]]
    assert brute_f1_threshold(gts, preds, "car", 2.0) == 0.4
    assert f1_optimal_threshold(toy_dataset(gts), toy_submission(preds), "car") == 0.4


def test_f1_tie_goes_to_larger_threshold():
    gts = [[car(0, 0), car(10, 0)]]
    preds = [[car(0, 0, 0.7), car(10, 0, 0.7)]]
    assert f1_optimal_threshold(toy_dataset(gts), toy_submission(preds), "car") == 0.7


def test_f1_no_predictions_is_zero():
    ds = toy_dataset([[car(0, 0)]])
    assert f1_optimal_threshold(ds, toy_submission([[]]), "car") == 0.0


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_f1_matches_exhaustive_sweep(seed, distinct):
    rng = np.random.default_rng(seed)
    gts, preds = random_instance(rng, distinct=distinct)
    ds, sub = toy_dataset(gts), toy_submission(preds)
    for cls in ("car", "pedestrian"):
        assert f1_optimal_threshold(ds, sub, cls) == brute_f1_threshold(gts, preds, cls, 2.0)


# ---------------------------------------------------------------- thresholds

def test_apply_zero_thresholds_is_identity():
    sub = toy_submission([[car(0, 0, 0.1), car(1, 1, 0.0)]])
    out = apply_thresholds(sub, {"car": 0.0})
    assert out.boxes == sub.boxes


def test_threshold_table_range():
    with pytest.raises(ValueError):
        ThresholdTable({"car": 1.01})
    with pytest.raises(ValueError):
        ThresholdTable({"car": -0.1})


def test_apply_threshold_boundary_inclusive():
    sub = toy_submission([[car(0, 0, 0.4), car(1, 1, 0.5), car(2, 2, 0.6)], []])
    out = apply_thresholds(sub, {"car": 0.5})
    assert [b.score for b in out.boxes["s0"]] == [0.5, 0.6]
    assert out.boxes["s1"] == ()


def test_apply_missing_class_raises():
    sub = toy_submission([[car(0, 0, 0.4, cls="truck")]])
    with pytest.raises(KeyError):
        apply_thresholds(sub, {"car": 0.5})


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1))
def test_apply_thresholds_idempotent(seed, tc, tp):
    rng = np.random.default_rng(seed)
    _, preds = random_instance(rng)
    table = ThresholdTable({"car": tc, "pedestrian": tp})
    once = apply_thresholds(toy_submission(preds), table)
    assert apply_thresholds(once, table).boxes == once.boxes


# ---------------------------------------------------------------- Spearman

def rank_formula(xs, ys):
    rx, ry = stats.rankdata(xs), stats.rankdata(ys)
    n = len(xs)
    return 1 - 6 * float(np.sum((rx - ry) ** 2)) / (n * (n * n - 1))


def test_spearman_examples():
    assert spearman_rank_correlation([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman_rank_correlation([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0)
    assert abs(spearman_rank_correlation([1, 2, 3, 4], [2, 1, 4, 3]) - 0.6) <= 1e-12


def test_spearman_errors():
    with pytest.raises(ValueError):
        spearman_rank_correlation([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman_rank_correlation([1], [1])


def test_spearman_with_ties_matches_scipy():
    xs, ys = [1, 2, 2, 3, 5, 5], [3, 1, 4, 4, 2, 6]
    assert spearman_rank_correlation(xs, ys) == pytest.approx(stats.spearmanr(xs, ys)[0], abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30, unique=True), st.randoms())
def test_spearman_tie_free_equals_formula(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert spearman_rank_correlation(xs, ys) == rank_formula(xs, ys)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=2, max_size=20))
def test_spearman_self_is_one(xs):
    if len(set(xs)) < 2:
        return
    assert spearman_rank_correlation(xs, xs) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20),
       st.lists(st.floats(-1e3, 1e3), min_size=20, max_size=20, unique=True))
def test_spearman_antisymmetric_under_rank_reversal(xs, ys_pool):
    ys = ys_pool[: len(xs)]
    rho = spearman_rank_correlation(xs, ys)
    if math.isnan(rho):
        return
    # negating ys reverses its rank order
    assert spearman_rank_correlation(xs, [-y for y in ys]) == pytest.approx(-rho, abs=1e-12)
