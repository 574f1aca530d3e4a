"""Evaluation protocols: CLEAR with match persistence, Identity metrics,
HOTA, and cross-sequence averaging."""

import math

import numpy as np
import pytest

from motkit import (
    AnnotatedSequence,
    DataError,
    EmptyInput,
    FrameRangeMismatch,
    MetricReport,
    average_reports,
    clear_metrics,
    evaluate_sequence,
    hota,
    identity_metrics,
)

from _util import bx, mk_seq, sq


def test_sequence_validation():
    with pytest.raises(DataError):
        AnnotatedSequence("s", ((1, ((1, sq(0, 0)), (1, sq(20, 20)))),))
    with pytest.raises(DataError):
        AnnotatedSequence("s", ((2, ()), (1, ())))
    with pytest.raises(DataError):
        AnnotatedSequence("s", ((0, ((0, sq(0, 0)),)),))
    seq = mk_seq({0: [(1, sq(0, 0))], 3: [(1, sq(5, 0)), (2, sq(40, 0))]})
    assert seq.box_count() == 3
    assert seq.frame_indices() == (0, 3)


def test_perfect_tracking_scores_one():
    gt = mk_seq({f: [(1, sq(2 * f, 0)), (2, sq(50, 3 * f))] for f in range(6)})
    report = evaluate_sequence(gt, gt)
    assert report.mota == 1.0
    assert report.hota == 1.0
    assert report.deta == 1.0
    assert report.assa == 1.0
    assert report.idf1 == report.idp == report.idr == 1.0
    assert report.recall == report.precision == 1.0
    assert (report.fp, report.fn, report.idsw) == (0, 0, 0)
    assert report.gt_count == 12


def test_random_self_evaluation_is_perfect():
    rng = np.random.default_rng(59)
    for _ in range(10):
        frames = {}
        for f in range(int(rng.integers(1, 8))):
            entries = []
            for i in range(int(rng.integers(0, 5))):
                x, y = rng.uniform(0, 300, size=2)
                entries.append((i + 1, sq(float(x), float(y), 12.0)))
            frames[f] = entries
        gt = mk_seq(frames)
        report = evaluate_sequence(gt, gt)
        for name in ("mota", "hota", "deta", "assa", "idf1", "idp", "idr",
                     "recall", "precision"):
            assert getattr(report, name) == 1.0


def test_empty_prediction():
    gt = mk_seq({0: [(1, sq(0, 0))], 1: [(1, sq(0, 0))]})
    pred = mk_seq({0: [], 1: []})
    clear = clear_metrics(gt, pred)
    assert clear.mota == 0.0
    assert clear.fn == 2 and clear.fp == 0 and clear.idsw == 0
    assert clear.recall == 0.0
    assert clear.precision == 1.0
    idf1, idp, idr = identity_metrics(gt, pred)
    assert (idf1, idp, idr) == (0.0, 1.0, 0.0)
    h, deta, assa = hota(gt, pred)
    assert (h, deta, assa) == (0.0, 0.0, 0.0)


def test_empty_ground_truth_with_predictions():
    gt = mk_seq({0: [], 1: []})
    pred = mk_seq({0: [(1, sq(0, 0))], 1: [(1, sq(0, 0))]})
    clear = clear_metrics(gt, pred)
    assert clear.mota == 0.0
    assert clear.fp == 2 and clear.fn == 0
    assert clear.recall == 1.0
    assert clear.precision == 0.0
    idf1, idp, idr = identity_metrics(gt, pred)
    assert (idf1, idp, idr) == (0.0, 0.0, 1.0)


def test_both_empty_is_vacuously_perfect():
    gt = mk_seq({0: [], 1: []})
    report = evaluate_sequence(gt, gt)
    assert report.mota == 1.0
    assert report.hota == 1.0
    assert report.idf1 == 1.0
    assert report.gt_count == 0


def test_single_id_switch_halves_the_scores():
    box = sq(0, 0)
    gt = mk_seq({0: [(1, box)], 1: [(1, box)]})
    pred = mk_seq({0: [(1, box)], 1: [(2, box)]})
    clear = clear_metrics(gt, pred)
    assert clear.idsw == 1
    assert clear.mota == 0.5
    idf1, idp, idr = identity_metrics(gt, pred)
    assert (idf1, idp, idr) == (0.5, 0.5, 0.5)
    h, deta, assa = hota(gt, pred)
    assert h == pytest.approx(math.sqrt(0.5), abs=1e-9)
    assert deta == 1.0
    assert assa == pytest.approx(0.5, abs=1e-12)


def test_persistence_keeps_previous_match_over_greedy_best():
    g = sq(0, 0)
    drifted = bx(2.5, 0, 12.5, 10)
    gt = mk_seq({0: [(1, g)], 1: [(1, g)]})
    pred = mk_seq({0: [(1, g)], 1: [(1, drifted), (2, g)]})
    clear = clear_metrics(gt, pred)
    # The sticky match to prediction 1 still clears the IoU threshold, so
    # no switch is charged and the perfect newcomer counts as a false
    # positive.
    assert clear.idsw == 0
    assert clear.fp == 1
    assert clear.fn == 0
    assert clear.mota == 0.5


def test_persistence_broken_below_threshold():
    g = sq(0, 0)
    far = bx(8, 0, 18, 10)
    gt = mk_seq({0: [(1, g)], 1: [(1, g)]})
    pred = mk_seq({0: [(1, g)], 1: [(1, far), (2, g)]})
    clear = clear_metrics(gt, pred)
    assert clear.idsw == 1
    assert clear.fp == 1


def test_id_switch_counted_across_gap():
    box = sq(0, 0)
    gt = mk_seq({0: [(1, box)], 1: [(1, box)], 2: [(1, box)]})
    pred = mk_seq({0: [(1, box)], 1: [], 2: [(2, box)]})
    clear = clear_metrics(gt, pred)
    assert clear.idsw == 1
    assert clear.fn == 1
    assert clear.mota == pytest.approx(1.0 - 2.0 / 3.0, abs=1e-15)


def test_negative_mota_allowed():
    gt = mk_seq({0: [(1, sq(0, 0))]})
    pred = mk_seq({0: [(1, sq(100, 100)), (2, sq(200, 200)), (3, sq(300, 300))]})
    clear = clear_metrics(gt, pred)
    assert clear.mota == -3.0
    report = evaluate_sequence(gt, pred)
    assert report.mota == -3.0


def test_metrics_invariant_under_pred_relabeling():
    rng = np.random.default_rng(61)
    for _ in range(20):
        frames_gt = {}
        frames_pred = {}
        for f in range(5):
            frames_gt[f] = [
                (i + 1, sq(float(rng.uniform(0, 100)), float(rng.uniform(0, 100))))
                for i in range(3)
            ]
            frames_pred[f] = [
                (i + 1, sq(float(rng.uniform(0, 100)), float(rng.uniform(0, 100))))
                for i in range(int(rng.integers(0, 4)))
            ]
        gt = mk_seq(frames_gt)
        pred = mk_seq(frames_pred)
        relabeled = mk_seq(
            {f: [(pid + 100, b) for pid, b in entries]
             for f, entries in frames_pred.items()}
        )
        assert evaluate_sequence(gt, pred) == evaluate_sequence(gt, relabeled)


def test_dropping_a_prediction_degrades_scores():
    gt = mk_seq({f: [(1, sq(0, 0)), (2, sq(50, 50))] for f in range(5)})
    full = evaluate_sequence(gt, gt)
    missing = mk_seq(
        {f: ([(1, sq(0, 0)), (2, sq(50, 50))] if f != 2 else [(1, sq(0, 0))])
         for f in range(5)}
    )
    degraded = evaluate_sequence(gt, missing)
    assert degraded.fn == 1
    assert degraded.mota == 1.0 - 1.0 / 10.0
    assert degraded.hota < full.hota
    assert degraded.idf1 < full.idf1
    assert degraded.recall < full.recall
    assert degraded.precision == 1.0


def test_hota_zero_overlap_is_zero():
    gt = mk_seq({0: [(1, sq(0, 0))]})
    pred = mk_seq({0: [(1, sq(500, 500))]})
    h, deta, assa = hota(gt, pred)
    assert (h, deta, assa) == (0.0, 0.0, 0.0)


def test_hota_alpha_sweep_spans_identity_overlap():
    a = bx(0, 0, 10, 10)
    c = bx(0, 2, 10, 12)  # IoU with a: 80/120 = 2/3
    gt = mk_seq({0: [(1, a)]})
    pred = mk_seq({0: [(1, c)]})
    h, deta, assa = hota(gt, pred)
    # 13 of 19 alphas (0.05 .. 0.65) accept the 2/3-overlap match.
    assert deta == pytest.approx(13.0 / 19.0, abs=1e-12)
    assert assa == pytest.approx(13.0 / 19.0, abs=1e-12)
    assert h == pytest.approx(13.0 / 19.0, abs=1e-12)


def test_frame_range_mismatch():
    gt = mk_seq({0: [(1, sq(0, 0))], 1: [(1, sq(0, 0))]})
    short = mk_seq({0: [(1, sq(0, 0))]})
    shifted = mk_seq({0: [(1, sq(0, 0))], 2: [(1, sq(0, 0))]})
    for pred in (short, shifted):
        with pytest.raises(FrameRangeMismatch):
            clear_metrics(gt, pred)
        with pytest.raises(FrameRangeMismatch):
            identity_metrics(gt, pred)
        with pytest.raises(FrameRangeMismatch):
            hota(gt, pred)


def test_identity_matching_is_globally_optimal():
    # Frame-greedy matching would lock identity 1 to prediction 9; the
    # global matching sacrifices it to collect the longer co-occurrences.
    box = sq(0, 0)
    other = sq(100, 100)
    frames = {}
    for f in range(4):
        frames[f] = [(1, box), (2, other)]
    gt = mk_seq(frames)
    pred = mk_seq({
        0: [(9, box), (8, other)],
        1: [(9, other), (8, box)],
        2: [(9, other), (8, box)],
        3: [(9, other), (8, box)],
    })
    idf1, idp, idr = identity_metrics(gt, pred)
    # Best pairing: gt1-pred8 (3 frames) + gt2-pred9 (3 frames) = 6 IDTP.
    assert idf1 == pytest.approx(2 * 6 / 16.0, abs=1e-15)
    assert idp == pytest.approx(6 / 8.0, abs=1e-15)
    assert idr == pytest.approx(6 / 8.0, abs=1e-15)


def test_average_reports_single_identity():
    gt = mk_seq({0: [(1, sq(0, 0))]})
    report = evaluate_sequence(gt, gt)
    assert average_reports([report]) == report


def test_average_reports_means_and_sums():
    r1 = MetricReport(hota=1.0, deta=1.0, assa=1.0, mota=1.0, idf1=1.0,
                      idp=1.0, idr=1.0, recall=1.0, precision=1.0,
                      fp=0, fn=0, idsw=0, gt_count=10)
    r2 = MetricReport(hota=0.5, deta=0.5, assa=0.5, mota=-1.0, idf1=0.0,
                      idp=0.0, idr=0.0, recall=0.0, precision=0.5,
                      fp=3, fn=4, idsw=2, gt_count=6)
    avg = average_reports([r1, r2])
    assert avg.hota == 0.75
    assert avg.mota == 0.0
    assert avg.idf1 == 0.5
    assert avg.precision == 0.75
    assert (avg.fp, avg.fn, avg.idsw, avg.gt_count) == (3, 4, 2, 16)


def test_average_reports_empty_input():
    with pytest.raises(EmptyInput):
        average_reports([])


def test_report_validation():
    with pytest.raises(DataError):
        MetricReport(hota=1.5, deta=1.0, assa=1.0, mota=1.0, idf1=1.0,
                     idp=1.0, idr=1.0, recall=1.0, precision=1.0,
                     fp=0, fn=0, idsw=0, gt_count=0)
    with pytest.raises(DataError):
        MetricReport(hota=1.0, deta=1.0, assa=1.0, mota=math.inf, idf1=1.0,
                     idp=1.0, idr=1.0, recall=1.0, precision=1.0,
                     fp=0, fn=0, idsw=0, gt_count=0)
    with pytest.raises(DataError):
        MetricReport(hota=1.0, deta=1.0, assa=1.0, mota=1.0, idf1=1.0,
                     idp=1.0, idr=1.0, recall=1.0, precision=1.0,
                     fp=-1, fn=0, idsw=0, gt_count=0)


def test_evaluate_sequence_composes_protocols():
    gt = mk_seq({0: [(1, sq(0, 0))], 1: [(1, sq(0, 0)), (2, sq(30, 30))]})
    pred = mk_seq({0: [(1, sq(0, 0))], 1: [(1, sq(0, 0))]})
    report = evaluate_sequence(gt, pred)
    clear = clear_metrics(gt, pred)
    idf1, idp, idr = identity_metrics(gt, pred)
    h, deta, assa = hota(gt, pred)
    assert (report.mota, report.fp, report.fn, report.idsw) == (
        clear.mota, clear.fp, clear.fn, clear.idsw
    )
    assert (report.idf1, report.idp, report.idr) == (idf1, idp, idr)
    assert (report.hota, report.deta, report.assa) == (h, deta, assa)
