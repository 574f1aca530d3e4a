"""Acceptance criteria, one test per criterion.

Each test prints a single PASS line once its assertions hold, so a verbose
run doubles as a checklist. Tolerances are pinned in the assertions.
"""

import math
import time

import numpy as np
import pytest

from motkit import (
    AnnotatedSequence,
    BoundingBox,
    Detection,
    DepthMap,
    KalmanState,
    LabelCandidate,
    LabelRecord,
    LabelThreshold,
    LumaImage,
    PipelineConfig,
    RelightCurves,
    ScenarioConfig,
    SubsampleSpec,
    Tracker,
    TrackerConfig,
    assignment,
    confidence_filter,
    default_curves,
    evaluate_sequence,
    format_labels,
    format_mot,
    generate,
    identity_metrics,
    initial_state,
    kalman_predict,
    kalman_update,
    parse_labels,
    parse_mot,
    read_depth_pgm,
    read_embeddings,
    read_luma_pgm,
    relight,
    subsample_indices,
    write_depth_pgm,
    write_embeddings,
    write_luma_pgm,
)
from motkit.cli import main

from _util import brute_force_assignment, brute_force_idtp, mk_seq, sq


RATE_FIELDS = ("hota", "deta", "assa", "mota", "idf1", "idp", "idr",
               "recall", "precision")


def report_row(path, name):
    lines = path.read_text().splitlines()
    for line in lines[1:]:
        fields = line.split()
        if fields and fields[0] == name:
            return [float(x) for x in fields[1:]]
    raise AssertionError(f"no row {name!r} in {path}")


def test_criterion_01_metrics_perfect_on_self_evaluation():
    started = time.monotonic()
    for seed in range(50):
        cfg = ScenarioConfig(
            num_foreground=1 + seed % 4,
            frame_count=6,
            image_width=160,
            image_height=120,
            motion_model="linear" if seed % 2 == 0 else "sinusoidal",
            seed=seed,
        )
        gt = generate(cfg).gt
        report = evaluate_sequence(gt, gt)
        for field in RATE_FIELDS:
            assert abs(getattr(report, field) - 1.0) <= 1e-12, (seed, field)
        assert report.fp == 0 and report.fn == 0 and report.idsw == 0
    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    print(f"criterion 01 metric perfection on 50 self-evaluations: "
          f"PASS ({elapsed:.2f}s)")


def test_criterion_02_assignment_matches_exhaustive_minimum():
    started = time.monotonic()
    rng = np.random.default_rng(1002)
    for case in range(500):
        m = int(rng.integers(1, 7))
        n = int(rng.integers(1, 7))
        cost = rng.uniform(-4.0, 10.0, size=(m, n))
        cost[rng.random((m, n)) < 0.3] = np.inf
        pairs = assignment(cost)
        total = math.fsum(float(cost[r, c]) for r, c in pairs)
        best_size, best_total = brute_force_assignment(cost)
        assert len(pairs) == best_size, case
        assert total == best_total, case
    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    print(f"criterion 02 assignment equals exhaustive optimum on 500 "
          f"matrices: PASS ({elapsed:.2f}s)")


def test_criterion_03_identity_metrics_match_exhaustive_oracle():
    started = time.monotonic()
    rng = np.random.default_rng(1003)
    for case in range(200):
        n_frames = int(rng.integers(1, 7))
        n_gt = int(rng.integers(0, 5))
        n_pred = int(rng.integers(0, 5))
        # Boxes live on a coarse cell grid, so any two boxes either
        # coincide (IoU 1) or are disjoint (IoU 0).
        gt_cells = {}
        pred_cells = {}
        gt_frames = {f: [] for f in range(n_frames)}
        pred_frames = {f: [] for f in range(n_frames)}
        for i in range(n_gt):
            for f in range(n_frames):
                if rng.random() < 0.7:
                    cell = int(rng.integers(0, 5))
                    gt_cells[(i, f)] = cell
                    gt_frames[f].append((i + 1, sq(50.0 * cell, 0.0)))
        for j in range(n_pred):
            for f in range(n_frames):
                if rng.random() < 0.7:
                    cell = int(rng.integers(0, 5))
                    pred_cells[(j, f)] = cell
                    pred_frames[f].append((j + 1, sq(50.0 * cell, 0.0)))

        gt = mk_seq(gt_frames)
        pred = mk_seq(pred_frames)
        idf1, idp, idr = identity_metrics(gt, pred)

        counts = np.zeros((n_gt, n_pred), dtype=np.int64)
        for i in range(n_gt):
            for j in range(n_pred):
                counts[i, j] = sum(
                    (i, f) in gt_cells
                    and (j, f) in pred_cells
                    and gt_cells[(i, f)] == pred_cells[(j, f)]
                    for f in range(n_frames)
                )
        idtp = brute_force_idtp(counts) if counts.size else 0
        n_gt_boxes = gt.box_count()
        n_pred_boxes = pred.box_count()
        want_idp = idtp / n_pred_boxes if n_pred_boxes else 1.0
        want_idr = idtp / n_gt_boxes if n_gt_boxes else 1.0
        total = n_gt_boxes + n_pred_boxes
        want_idf1 = 2 * idtp / total if total else 1.0
        assert (idf1, idp, idr) == (want_idf1, want_idp, want_idr), case
    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    print(f"criterion 03 identity metrics equal exhaustive oracle on 200 "
          f"sequences: PASS ({elapsed:.2f}s)")


def test_criterion_04_hota_and_mota_hand_case():
    box = sq(10, 10, 20)
    gt = mk_seq({0: [(1, box)], 1: [(1, box)]})
    pred = mk_seq({0: [(1, box)], 1: [(2, box)]})
    report = evaluate_sequence(gt, pred)
    assert abs(report.hota - math.sqrt(0.5)) <= 1e-9
    assert report.mota == 0.5
    print("criterion 04 one-switch hand case, HOTA=sqrt(0.5) "
          "and MOTA=0.5: PASS")


def test_criterion_05_depth_filter_ablation_direction(tmp_path, capsys):
    started = time.monotonic()
    scene = tmp_path / "scene"
    assert main(["synth", "--out-dir", str(scene), "--ablation",
                 "--fg", "4", "--bg", "3", "--frames", "25",
                 "--width", "240", "--height", "180", "--seed", "7"]) == 0

    raw_tracks = tmp_path / "tracks_raw.txt"
    assert main(["track", "--det", str(scene / "det.txt"),
                 "--out", str(raw_tracks)]) == 0
    raw_report = tmp_path / "report_raw.txt"
    assert main(["evaluate", "--gt", str(scene / "gt.txt"),
                 "--pred", str(raw_tracks), "--out", str(raw_report)]) == 0

    filtered_det = tmp_path / "det_filtered.txt"
    assert main(["filter-depth", "--det", str(scene / "det.txt"),
                 "--depth-dir", str(scene / "depth"),
                 "--out", str(filtered_det)]) == 0
    filtered_tracks = tmp_path / "tracks_filtered.txt"
    assert main(["track", "--det", str(filtered_det),
                 "--out", str(filtered_tracks)]) == 0
    filtered_report = tmp_path / "report_filtered.txt"
    assert main(["evaluate", "--gt", str(scene / "gt.txt"),
                 "--pred", str(filtered_tracks),
                 "--out", str(filtered_report)]) == 0
    capsys.readouterr()

    raw = report_row(raw_report, "seq")
    filtered = report_row(filtered_report, "seq")
    raw_mota, raw_prec = raw[4], raw[6]
    filt_mota, filt_prec = filtered[4], filtered[6]
    assert filt_prec > raw_prec
    assert filt_mota > raw_mota
    assert filt_prec - raw_prec >= 10.0
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    print(f"criterion 05 depth filtering lifts Precision by "
          f"{filt_prec - raw_prec:.1f}pp and MOTA by "
          f"{filt_mota - raw_mota:.1f}pp: PASS ({elapsed:.2f}s)")


def test_criterion_06_tracker_continuity():
    tracker = Tracker()
    gt_frames = {}
    pred_frames = {}
    ids = set()
    for f in range(100):
        box = sq(5.0 + 2.0 * f, 40.0, 20.0)
        det = Detection(frame_index=f, box=box, confidence=0.9)
        pairs = tracker.step([det], frame_index=f)
        assert len(pairs) == 1
        track_id, emitted = pairs[0]
        ids.add(track_id)
        gt_frames[f] = [(1, box)]
        pred_frames[f] = [(track_id, emitted.box)]
    assert ids == {1}
    report = evaluate_sequence(mk_seq(gt_frames), mk_seq(pred_frames))
    assert report.idsw == 0
    assert report.mota == 1.0

    crossing = Tracker(TrackerConfig(fusion_lambda=0.2))
    e_a = (1.0, 0.0, 0.0, 0.0)
    e_b = (0.0, 1.0, 0.0, 0.0)
    id_of = {}
    switches = 0
    for f in range(41):
        dets = [
            Detection(frame_index=f, box=sq(10.0 + 5.0 * f, 40.0, 20.0),
                      confidence=0.9, embedding=e_a),
            Detection(frame_index=f, box=sq(210.0 - 5.0 * f, 40.0, 20.0),
                      confidence=0.9, embedding=e_b),
        ]
        for track_id, det in crossing.step(dets, frame_index=f):
            key = det.embedding[0]
            if key in id_of and id_of[key] != track_id:
                switches += 1
            id_of[key] = track_id
    assert switches == 0
    assert len(set(id_of.values())) == 2
    print("criterion 06 single-object continuity and crossing without "
          "identity switches: PASS")


def test_criterion_07_kalman_properties():
    cfg = TrackerConfig()
    rng = np.random.default_rng(1007)
    for case in range(1000):
        a = rng.normal(0, rng.uniform(0.5, 20.0), size=(8, 8))
        cov = a @ a.T
        w, h = rng.uniform(5, 80, size=2)
        mean = [*rng.uniform(-50, 50, size=2), w, h, *rng.uniform(-3, 3, size=4)]
        s = KalmanState(np.array(mean), cov)
        z = BoundingBox.from_cxcywh(
            mean[0] + rng.normal(0, 5),
            mean[1] + rng.normal(0, 5),
            w * rng.uniform(0.5, 1.5),
            h * rng.uniform(0.5, 1.5),
        )
        u = kalman_update(s, z, cfg)
        prior = np.diag(s.covariance)[:4]
        post = np.diag(u.covariance)[:4]
        assert (post <= prior).all(), case

    s = initial_state(sq(0, 0, 30), cfg)
    trace = float(np.trace(s.covariance))
    for _ in range(100):
        s = kalman_predict(s, cfg)
        new_trace = float(np.trace(s.covariance))
        assert new_trace > trace
        trace = new_trace

    prior = KalmanState(
        np.array([0.0, 0.0, 10.0, 10.0, 0.0, 0.0, 0.0, 0.0]),
        np.diag([1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
    )
    u = kalman_update(prior, BoundingBox.from_cxcywh(1.0, 0.0, 10.0, 10.0),
                      cfg)
    assert abs(u.mean[0] - 0.5) <= 1e-12
    print("criterion 07 Kalman variance, trace growth, and scalar hand "
          "case: PASS")


def test_criterion_08_weak_label_arithmetic():
    rng = np.random.default_rng(1008)
    cases = [(0, 1), (1000000, 1), (999999, 1000), (5, 5), (4, 5)]
    cases += [
        (int(rng.integers(0, 1000001)), int(rng.integers(1, 1001)))
        for _ in range(300)
    ]
    for total, interval in cases:
        indices = subsample_indices(SubsampleSpec(total, interval))
        assert len(indices) == total // interval, (total, interval)

    tau_half = LabelThreshold(tau=0.5)
    at_boundary = LabelCandidate(box=sq(0, 0), logit=0.0, image_id="a")
    below = LabelCandidate(box=sq(0, 0), logit=-1e-9, image_id="a")
    assert confidence_filter([at_boundary, below], tau_half) == [at_boundary]

    assert PipelineConfig().interval == 5
    print("criterion 08 subsample count, inclusive sigmoid boundary, and "
          "default interval: PASS")


def test_criterion_09_relighting_properties():
    rng = np.random.default_rng(1009)
    identity = RelightCurves(
        alpha_knots=((0.0, 1.0), (255.0, 1.0)),
        beta_knots=((0.0, 1.0), (255.0, 1.0)),
    )
    curves = default_curves()
    for _ in range(100):
        h = int(rng.integers(4, 40))
        w = int(rng.integers(4, 40))
        pixels = rng.uniform(0.0, 255.0, size=(h, w))
        img = LumaImage(pixels)
        assert np.array_equal(relight(img, identity).pixels, pixels)
        out = relight(img, curves).pixels
        assert (out >= 0.0).all() and (out <= 255.0).all()

    for value in range(0, 256, 5):
        img = LumaImage(np.full((6, 9), float(value)))
        expected = curves.alpha(float(value)) * float(value)
        quantized = read_luma_pgm(write_luma_pgm(relight(img, curves)))
        assert abs(float(quantized.pixels.mean()) - expected) <= 0.5

    for knots in (curves.alpha_knots, curves.beta_knots):
        for (x1, f1), (x2, f2) in zip(knots, knots[1:]):
            assert x2 > x1
            assert f2 <= f1
    print("criterion 09 relighting passthrough, uniform-mean map, range, "
          "and monotone defaults: PASS")


def test_criterion_10_determinism_and_format_fixed_points(
    tmp_path, capsys, monkeypatch
):
    def run_all(root):
        root.mkdir()
        monkeypatch.chdir(root)
        assert main(["synth", "--out-dir", "scene", "--seed", "3",
                     "--fg", "3", "--frames", "15", "--width", "160",
                     "--height", "120"]) == 0
        assert main(["track", "--det", "scene/det.txt",
                     "--embeddings", "scene/embeddings.bin",
                     "--out", "tracks.txt"]) == 0
        assert main(["evaluate", "--gt", "scene/gt.txt",
                     "--pred", "tracks.txt", "--out", "report.txt"]) == 0
        capsys.readouterr()
        return {
            str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*"))
            if p.is_file()
        }

    first = run_all(tmp_path / "a")
    second = run_all(tmp_path / "b")
    assert first == second
    assert any(name.endswith("manifest.json") for name in first)

    rng = np.random.default_rng(1010)
    records = parse_mot(
        "".join(
            f"{f},{tid},{x:.6g},{y:.6g},{w:.6g},{h:.6g},{c:.6g},0,1\n"
            for f, tid, x, y, w, h, c in zip(
                rng.integers(1, 20, 40),
                rng.integers(1, 6, 40),
                rng.uniform(0, 300, 40),
                rng.uniform(0, 300, 40),
                rng.uniform(1, 60, 40),
                rng.uniform(1, 60, 40),
                rng.uniform(0, 1, 40),
            )
        )
    )
    text = format_mot(records)
    assert format_mot(parse_mot(text)) == text

    depth_blob = write_depth_pgm(
        DepthMap(rng.integers(0, 65536, size=(13, 17)))
    )
    assert write_depth_pgm(read_depth_pgm(depth_blob)) == depth_blob

    labels = [
        LabelRecord(
            class_id=int(rng.integers(0, 4)),
            cx=float(rng.uniform(0.3, 0.7)),
            cy=float(rng.uniform(0.3, 0.7)),
            w=float(rng.uniform(0.05, 0.2)),
            h=float(rng.uniform(0.05, 0.2)),
        )
        for _ in range(12)
    ]
    label_text = format_labels(labels)
    assert format_labels(parse_labels(label_text)) == label_text

    frames = [
        [tuple(map(float, rng.normal(size=8))) for _ in range(3)],
        [],
        [tuple(map(float, rng.normal(size=8))) for _ in range(2)],
    ]
    blob = write_embeddings(8, frames)
    assert write_embeddings(8, read_embeddings(blob, [3, 0, 2])) == blob
    print("criterion 10 byte-identical reruns and write-parse-write fixed "
          "points: PASS")
