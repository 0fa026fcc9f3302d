import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from oracles import ap_symbolic, match_reference
from rfident.boxes import Annotation, BoundingBox, Detection
from rfident.errors import NoGroundTruth
from rfident.evaluate import (MatchResult, ap_from_outcomes, average_precision, evaluate,
                              match_detections)
from rfident.synth import EmissionClass, SnrBucket

W, Z, B = EmissionClass.WIFI, EmissionClass.ZIGBEE, EmissionClass.BLUETOOTH
BOX = BoundingBox(0.5, 0.5, 0.2, 0.2)


def det(cls, box, conf):
    return Detection(cls, box, conf)


def test_perfect_detections_all_tp():
    truths = [Annotation(W, BOX), Annotation(Z, BoundingBox(0.2, 0.2, 0.1, 0.1))]
    dets = [det(t.cls, t.box, 0.9) for t in truths]
    m = match_detections(dets, truths, 0.5)
    assert all(e.tp for e in m.events)


def test_duplicate_detection_is_fp():
    m = match_detections([det(W, BOX, 0.9), det(W, BOX, 0.8)], [Annotation(W, BOX)], 0.5)
    assert [e.tp for e in m.ranked(W)] == [True, False]
    assert m.true_positives(W) == [0.9] and m.false_positives(W) == [0.8]


def test_wrong_class_is_fp():
    m = match_detections([det(Z, BOX, 0.9)], [Annotation(W, BOX)], 0.5)
    assert not m.events[0].tp
    assert average_precision(m, W) == 0.0


def test_ap_examples():
    assert ap_from_outcomes([True, True], 2) == 1.0
    assert ap_from_outcomes([False, False], 2) == 0.0
    assert ap_from_outcomes([True, False, True], 2) == pytest.approx(0.5 + 0.5 * 2 / 3)
    assert ap_from_outcomes([], 3) == 0.0


def test_no_ground_truth():
    with pytest.raises(NoGroundTruth):
        ap_from_outcomes([True], 0)
    with pytest.raises(NoGroundTruth):
        average_precision(MatchResult(), W)


def test_map_is_unweighted_mean_of_present_classes():
    other = BoundingBox(0.2, 0.2, 0.1, 0.1)
    images = [
        ([det(W, BOX, 0.9)], [Annotation(W, BOX)]),
        ([det(Z, other, 0.9)], [Annotation(Z, other), Annotation(Z, BoundingBox(0.8, 0.8, 0.1, 0.1))]),
    ]
    rep = evaluate(images, thresholds=(0.5,))
    assert rep.per_class_ap[W][0.5] == 1.0
    assert rep.per_class_ap[Z][0.5] == 0.5
    assert rep.map_at[0.5] == 0.75
    assert B not in rep.per_class_ap


def test_single_class_perfect_run():
    images = [([det(W, BOX, 0.5)], [Annotation(W, BOX)])] * 3
    rep = evaluate(images)
    assert all(v == 1.0 for v in rep.map_at.values())


def test_threshold_semantics_iou_06():
    # same width, vertically shifted so IoU = 0.6
    h = 0.2
    shift = h * (1 - 0.6) / (1 + 0.6)
    moved = BoundingBox(0.5, 0.5 + shift, 0.2, h)
    rep = evaluate([([det(W, moved, 0.9)], [Annotation(W, BOX)])])
    assert rep.map_at[0.25] == 1.0 and rep.map_at[0.5] == 1.0 and rep.map_at[0.75] == 0.0


def test_buckets_and_exports():
    truths = [Annotation(W, BOX, snr_db=30.0), Annotation(Z, BoundingBox(0.2, 0.2, 0.1, 0.1), snr_db=8.0)]
    rep = evaluate([([det(W, BOX, 0.9)], truths)])
    assert rep.per_bucket[SnrBucket.HIGH]["map_at"][0.5] == 1.0
    assert rep.per_bucket[SnrBucket.LOW]["map_at"][0.5] == 0.0
    d = json.loads(rep.to_json())
    assert d["map_at"]["0.5"] == 0.5
    assert "mAP" in rep.table()


# -- properties ---------------------------------------------------------------------

outcome_lists = st.lists(st.booleans(), max_size=5)


@given(outcome_lists, st.integers(1, 3))
def test_ap_matches_symbolic_oracle(outcomes, n_gt):
    if sum(outcomes) > n_gt:
        outcomes = outcomes[:n_gt] + [False] * (len(outcomes) - n_gt)
    assert ap_from_outcomes(outcomes, n_gt) == pytest.approx(float(ap_symbolic(outcomes, n_gt)), abs=1e-12)


def test_ap_oracle_exhaustive_orderings():
    for n_gt in range(1, 4):
        for n in range(0, 6):
            for outcomes in itertools.product([False, True], repeat=n):
                if sum(outcomes) > n_gt:
                    continue
                assert Fraction(ap_from_outcomes(outcomes, n_gt)).limit_denominator(10**6) == \
                    ap_symbolic(outcomes, n_gt)


box_st = st.builds(lambda x, y, w, h: BoundingBox(x, y, w, h),
                   st.floats(0.2, 0.8), st.floats(0.2, 0.8), st.floats(0.02, 0.3), st.floats(0.02, 0.3))
cls_st = st.sampled_from([W, Z])
det_st = st.lists(st.tuples(cls_st, box_st, st.floats(0.01, 1.0)), max_size=6, unique_by=lambda t: t[2])
truth_st = st.lists(st.tuples(cls_st, box_st), min_size=1, max_size=4)


@given(det_st, truth_st, st.sampled_from([0.25, 0.5, 0.75]))
def test_matching_agrees_with_reference(dets, truths, thr):
    m = match_detections([det(*d) for d in dets], [Annotation(c, b) for c, b in truths], thr)
    got = [(e.cls, e.tp) for e in sorted(m.events, key=lambda e: -e.confidence)]
    assert got == match_reference(dets, truths, thr)
    for c in (W, Z):
        assert len(m.true_positives(c)) <= sum(1 for tc, _ in truths if tc == c)


@given(det_st, truth_st)
def test_rank_only_dependence(dets, truths):
    images = [([det(*d) for d in dets], [Annotation(c, b) for c, b in truths])]
    warped = [([det(c, b, p ** 3 * 0.5) for c, b, p in dets], images[0][1])]
    a, b = evaluate(images, by_bucket=False), evaluate(warped, by_bucket=False)
    assert a.map_at == pytest.approx(b.map_at)


@given(det_st, truth_st)
def test_lower_threshold_never_scores_lower(dets, truths):
    rep = evaluate([([det(*d) for d in dets], [Annotation(c, b) for c, b in truths])], by_bucket=False)
    assert rep.map_at[0.25] >= rep.map_at[0.5] - 1e-12 >= rep.map_at[0.75] - 2e-12
    assert all(0.0 <= v <= 1.0 for v in rep.map_at.values())


@given(det_st, truth_st)
def test_duplicated_image_set_scores_the_same(dets, truths):
    img = ([det(*d) for d in dets], [Annotation(c, b) for c, b in truths])
    once, twice = evaluate([img], by_bucket=False), evaluate([img, img], by_bucket=False)
    assert once.map_at == pytest.approx(twice.map_at)
