"""Tracking evaluation: CLEAR (MOTA and its tallies), Identity metrics
(IDF1/IDP/IDR), and HOTA with the DetA/AssA decomposition, plus
cross-sequence averaging.

Conventions shared by all three protocols:
  - gt and pred must cover the same frame index set;
  - matching feasibility is IoU >= threshold (inclusive);
  - a ratio with a zero denominator counts as vacuously perfect (1.0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assign import min_cost_matching
from .errors import DataError
from .geometry import BoundingBox, iou_matrix


class FrameRangeMismatch(DataError):
    """Ground truth and prediction cover different frame index sets."""


class EmptyInput(DataError):
    """Operation requires at least one element."""


FrameEntries = tuple[tuple[int, BoundingBox], ...]


@dataclass(frozen=True)
class AnnotatedSequence:
    """Per-frame (identity_id, box) annotations, frames strictly increasing.

    The same shape serves ground truth and predictions.
    """

    sequence_id: str
    frames: tuple[tuple[int, FrameEntries], ...]

    def __post_init__(self):
        canon = []
        last_index = None
        for frame_index, entries in self.frames:
            if last_index is not None and frame_index <= last_index:
                raise DataError(
                    f"frame indices must be strictly increasing, "
                    f"{frame_index} after {last_index}"
                )
            last_index = frame_index
            seen = set()
            canon_entries = []
            for identity, box in entries:
                if identity <= 0:
                    raise DataError(f"identity ids must be positive, got {identity}")
                if identity in seen:
                    raise DataError(
                        f"identity {identity} appears twice in frame {frame_index}"
                    )
                seen.add(identity)
                canon_entries.append((int(identity), box))
            canon.append((int(frame_index), tuple(canon_entries)))
        object.__setattr__(self, "frames", tuple(canon))

    @classmethod
    def from_dict(
        cls, sequence_id: str, by_frame: dict[int, list[tuple[int, BoundingBox]]]
    ) -> "AnnotatedSequence":
        frames = tuple(
            (f, tuple(by_frame[f])) for f in sorted(by_frame)
        )
        return cls(sequence_id, frames)

    def box_count(self) -> int:
        return sum(len(entries) for _, entries in self.frames)

    def frame_indices(self) -> tuple[int, ...]:
        return tuple(f for f, _ in self.frames)


@dataclass(frozen=True)
class MetricReport:
    hota: float
    deta: float
    assa: float
    mota: float
    idf1: float
    idp: float
    idr: float
    recall: float
    precision: float
    fp: int
    fn: int
    idsw: int
    gt_count: int

    def __post_init__(self):
        for name in ("hota", "deta", "assa", "idf1", "idp", "idr",
                     "recall", "precision"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {v}")
        if not (math.isfinite(self.mota) and self.mota <= 1.0):
            raise DataError(f"mota must be finite and at most 1, got {self.mota}")
        for name in ("fp", "fn", "idsw", "gt_count"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be nonnegative")


def _check_frames(gt: AnnotatedSequence, pred: AnnotatedSequence) -> list[int]:
    if gt.frame_indices() != pred.frame_indices():
        raise FrameRangeMismatch(
            f"gt frames {gt.frame_indices()[:5]}... and pred frames "
            f"{pred.frame_indices()[:5]}... differ"
        )
    return list(gt.frame_indices())


def _ratio(num: float, den: float) -> float:
    # Vacuous cases (nothing to get wrong) count as perfect.
    if den == 0:
        return 1.0
    return num / den


@dataclass(frozen=True)
class ClearResult:
    mota: float
    fp: int
    fn: int
    idsw: int
    recall: float
    precision: float
    gt_count: int


def clear_metrics(
    gt: AnnotatedSequence, pred: AnnotatedSequence, iou_threshold: float = 0.5
) -> ClearResult:
    """CLEAR protocol tallies with match persistence.

    Per frame, a ground-truth identity first keeps its most recent matched
    prediction id when that prediction is present and still overlaps at or
    above the threshold; the remainder are matched by minimum-cost
    assignment on 1 - IoU. An ID switch is counted when a ground-truth
    identity's matched prediction id differs from its previous matched id.
    """
    frames = _check_frames(gt, pred)
    gt_by_frame = dict(gt.frames)
    pred_by_frame = dict(pred.frames)
    last_pred: dict[int, int] = {}
    tp = fp = fn = idsw = 0
    gt_total = gt.box_count()

    for f in frames:
        gts = list(gt_by_frame[f])
        preds = list(pred_by_frame[f])
        matches: list[tuple[int, int]] = []

        pred_ids = {pid: k for k, (pid, _) in enumerate(preds)}
        used_g = set()
        used_p = set()
        for i, (gid, gbox) in enumerate(gts):
            prev = last_pred.get(gid)
            if prev is None or prev not in pred_ids:
                continue
            k = pred_ids[prev]
            if k in used_p:
                continue
            iou = iou_matrix([gbox], [preds[k][1]])[0, 0]
            if iou >= iou_threshold:
                matches.append((i, k))
                used_g.add(i)
                used_p.add(k)

        free_g = [i for i in range(len(gts)) if i not in used_g]
        free_p = [k for k in range(len(preds)) if k not in used_p]
        if free_g and free_p:
            iou = iou_matrix(
                [gts[i][1] for i in free_g], [preds[k][1] for k in free_p]
            )
            cost = np.where(iou >= iou_threshold, 1.0 - iou, np.inf)
            for r, c in min_cost_matching(cost):
                matches.append((free_g[r], free_p[c]))

        tp += len(matches)
        fn += len(gts) - len(matches)
        fp += len(preds) - len(matches)
        for i, k in matches:
            gid = gts[i][0]
            pid = preds[k][0]
            if gid in last_pred and last_pred[gid] != pid:
                idsw += 1
            last_pred[gid] = pid

    if gt_total > 0:
        mota = 1.0 - (fn + fp + idsw) / gt_total
    else:
        mota = 1.0 if fp + fn + idsw == 0 else 0.0
    return ClearResult(
        mota=mota,
        fp=fp,
        fn=fn,
        idsw=idsw,
        recall=_ratio(tp, tp + fn),
        precision=_ratio(tp, tp + fp),
        gt_count=gt_total,
    )


def identity_metrics(
    gt: AnnotatedSequence, pred: AnnotatedSequence, iou_threshold: float = 0.5
) -> tuple[float, float, float]:
    """(idf1, idp, idr) from the best global trajectory matching.

    IDTP(g, p) counts frames where identities g and p co-occur with
    IoU >= threshold; the one-to-one trajectory matching maximizing total
    IDTP defines IDP = IDTP/|pred|, IDR = IDTP/|gt|,
    IDF1 = 2*IDTP/(|gt|+|pred|).
    """
    frames = _check_frames(gt, pred)
    gt_by_frame = dict(gt.frames)
    pred_by_frame = dict(pred.frames)

    gt_ids = sorted({gid for f in frames for gid, _ in gt_by_frame[f]})
    pred_ids = sorted({pid for f in frames for pid, _ in pred_by_frame[f]})
    g_index = {g: i for i, g in enumerate(gt_ids)}
    p_index = {p: j for j, p in enumerate(pred_ids)}

    idtp = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    for f in frames:
        gts = gt_by_frame[f]
        preds = pred_by_frame[f]
        if not gts or not preds:
            continue
        iou = iou_matrix([b for _, b in gts], [b for _, b in preds])
        hit = iou >= iou_threshold
        for i, (gid, _) in enumerate(gts):
            for k, (pid, _) in enumerate(preds):
                if hit[i, k]:
                    idtp[g_index[gid], p_index[pid]] += 1

    total_idtp = 0
    if idtp.size:
        pairs = min_cost_matching(-idtp.astype(np.float64))
        total_idtp = int(sum(idtp[r, c] for r, c in pairs))

    n_gt = gt.box_count()
    n_pred = pred.box_count()
    idp = _ratio(total_idtp, n_pred)
    idr = _ratio(total_idtp, n_gt)
    idf1 = _ratio(2 * total_idtp, n_gt + n_pred)
    return idf1, idp, idr


_HOTA_ALPHAS = tuple(round(0.05 * k, 2) for k in range(1, 20))


def hota(
    gt: AnnotatedSequence, pred: AnnotatedSequence
) -> tuple[float, float, float]:
    """(hota, deta, assa), each the arithmetic mean over the 19 thresholds
    alpha in {0.05, ..., 0.95}.

    Per alpha, frames are matched by maximum cardinality over pairs with
    IoU >= alpha, ties broken toward the larger IoU sum. With TPA the
    co-occurrence count of a matched (g, p) pair,
    A = TPA / (|g frames| + |p frames| - TPA), HOTA_alpha =
    sqrt(sum A / (TP+FN+FP)), DetA_alpha = TP/(TP+FN+FP), and
    AssA_alpha = sum A / TP.
    """
    frames = _check_frames(gt, pred)
    gt_by_frame = dict(gt.frames)
    pred_by_frame = dict(pred.frames)

    gt_sizes: dict[int, int] = {}
    pred_sizes: dict[int, int] = {}
    for f in frames:
        for gid, _ in gt_by_frame[f]:
            gt_sizes[gid] = gt_sizes.get(gid, 0) + 1
        for pid, _ in pred_by_frame[f]:
            pred_sizes[pid] = pred_sizes.get(pid, 0) + 1

    per_frame_iou = []
    for f in frames:
        gts = gt_by_frame[f]
        preds = pred_by_frame[f]
        iou = iou_matrix([b for _, b in gts], [b for _, b in preds])
        per_frame_iou.append((gts, preds, iou))

    hota_vals = []
    deta_vals = []
    assa_vals = []
    for alpha in _HOTA_ALPHAS:
        tp = fn = fp = 0
        tpa: dict[tuple[int, int], int] = {}
        for gts, preds, iou in per_frame_iou:
            pairs = []
            if len(gts) and len(preds):
                cost = np.where(iou >= alpha, -iou, np.inf)
                pairs = min_cost_matching(cost)
            tp += len(pairs)
            fn += len(gts) - len(pairs)
            fp += len(preds) - len(pairs)
            for r, c in pairs:
                key = (gts[r][0], preds[c][0])
                tpa[key] = tpa.get(key, 0) + 1

        denom = tp + fn + fp
        if denom == 0:
            hota_vals.append(1.0)
            deta_vals.append(1.0)
            assa_vals.append(1.0)
            continue
        ass_sum = 0.0
        for (gid, pid), count in tpa.items():
            union = gt_sizes[gid] + pred_sizes[pid] - count
            ass_sum += count * (count / union)
        hota_vals.append(math.sqrt(ass_sum / denom))
        deta_vals.append(tp / denom)
        assa_vals.append(ass_sum / tp if tp > 0 else 0.0)

    n = len(_HOTA_ALPHAS)
    return (
        math.fsum(hota_vals) / n,
        math.fsum(deta_vals) / n,
        math.fsum(assa_vals) / n,
    )


def evaluate_sequence(
    gt: AnnotatedSequence, pred: AnnotatedSequence, iou_threshold: float = 0.5
) -> MetricReport:
    """Full report combining CLEAR, Identity, and HOTA protocols."""
    clear = clear_metrics(gt, pred, iou_threshold)
    idf1, idp, idr = identity_metrics(gt, pred, iou_threshold)
    hota_val, deta, assa = hota(gt, pred)
    return MetricReport(
        hota=hota_val,
        deta=deta,
        assa=assa,
        mota=clear.mota,
        idf1=idf1,
        idp=idp,
        idr=idr,
        recall=clear.recall,
        precision=clear.precision,
        fp=clear.fp,
        fn=clear.fn,
        idsw=clear.idsw,
        gt_count=clear.gt_count,
    )


def average_reports(reports: list[MetricReport]) -> MetricReport:
    """Unweighted mean of rate fields; integer tallies are summed."""
    if not reports:
        raise EmptyInput("average_reports needs at least one report")
    n = len(reports)

    def mean(name: str) -> float:
        return math.fsum(getattr(r, name) for r in reports) / n

    return MetricReport(
        hota=mean("hota"),
        deta=mean("deta"),
        assa=mean("assa"),
        mota=mean("mota"),
        idf1=mean("idf1"),
        idp=mean("idp"),
        idr=mean("idr"),
        recall=mean("recall"),
        precision=mean("precision"),
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        idsw=sum(r.idsw for r in reports),
        gt_count=sum(r.gt_count for r in reports),
    )
