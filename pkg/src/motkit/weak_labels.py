"""Pseudo-label acquisition arithmetic.

Covers the three stages of turning raw per-frame detector output into a
training label set: uniform frame sub-sampling, sigmoid confidence
thresholding of logits, and export of the surviving boxes (plus optional
mask boundary polygons) as normalized label records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError
from .geometry import BoundingBox, Detection, EmptyMask, Mask, decode_mask


class DegenerateBox(DataError):
    """Box has zero area once clamped to the image rectangle."""


@dataclass(frozen=True)
class SubsampleSpec:
    """Uniform frame sub-sampling: keep every interval-th frame."""

    total_frames: int
    interval: int

    def __post_init__(self):
        if self.total_frames < 0:
            raise DataError(f"total_frames must be nonnegative, got {self.total_frames}")
        if self.interval < 1:
            raise DataError(f"interval must be at least 1, got {self.interval}")


@dataclass(frozen=True)
class LabelCandidate:
    box: BoundingBox
    logit: float
    image_id: str

    def __post_init__(self):
        if not math.isfinite(self.logit):
            raise DataError(f"logit must be finite, got {self.logit}")


@dataclass(frozen=True)
class LabelThreshold:
    tau: float = 0.35

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise DataError(f"tau must lie strictly inside (0, 1), got {self.tau}")


def subsample_indices(spec: SubsampleSpec) -> list[int]:
    """Indices {0, I, 2I, ..., (N-1)*I} with N = floor(T / I)."""
    n = spec.total_frames // spec.interval
    return [k * spec.interval for k in range(n)]


def sigmoid(logit: float) -> float:
    # Split on sign so the exponential never overflows.
    if logit >= 0.0:
        return 1.0 / (1.0 + math.exp(-logit))
    e = math.exp(logit)
    return e / (1.0 + e)


def threshold_logit(threshold: LabelThreshold) -> float:
    """The logit value whose sigmoid equals tau (inverse sigmoid)."""
    return math.log(threshold.tau / (1.0 - threshold.tau))


def confidence_filter(
    candidates: list[LabelCandidate], threshold: LabelThreshold
) -> list[LabelCandidate]:
    """Keep candidates whose sigmoid confidence is >= tau (inclusive),
    preserving input order."""
    return [c for c in candidates if sigmoid(c.logit) >= threshold.tau]


@dataclass(frozen=True)
class LabelRecord:
    """One exported training label, all values normalized to [0, 1].

    polygon is a flattened (x1, y1, x2, y2, ...) boundary ring, empty when
    the source detection carried no mask.
    """

    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    polygon: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.class_id < 0:
            raise DataError(f"class_id must be nonnegative, got {self.class_id}")
        values = (self.cx, self.cy, self.w, self.h) + tuple(self.polygon)
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise DataError("label record values must lie in [0, 1]")
        if len(self.polygon) % 2 != 0:
            raise DataError("polygon must hold an even count of coordinates")
        object.__setattr__(self, "polygon", tuple(self.polygon))


_TURN_PREFERENCE = (
    lambda dx, dy: (-dy, dx),  # right turn
    lambda dx, dy: (dx, dy),   # straight
    lambda dx, dy: (dy, -dx),  # left turn
)


def mask_boundary_polygon(mask: Mask) -> list[tuple[int, int]]:
    """Outer boundary ring of the largest 4-connected component.

    Vertices are pixel-corner coordinates (so a single pixel at (0, 0)
    yields [(0,0), (1,0), (1,1), (0,1)]), ordered with the filled region on
    the right of travel, starting from the topmost-leftmost corner.
    Collinear intermediate vertices are dropped. Interior holes are not
    reported.
    """
    grid = decode_mask(mask)
    if not grid.any():
        raise EmptyMask("mask has no set pixel")
    labels, count = ndimage.label(grid)
    if count > 1:
        sizes = np.bincount(labels.ravel())[1:]
        # argmax takes the first maximum, so ties resolve to scan order
        grid = labels == (int(np.argmax(sizes)) + 1)

    height, width = grid.shape
    padded = np.zeros((height + 2, width + 2), dtype=bool)
    padded[1:-1, 1:-1] = grid
    outgoing: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for y, x in np.argwhere(grid):
        x = int(x)
        y = int(y)
        if not padded[y, x + 1]:
            outgoing.setdefault((x, y), []).append((x + 1, y))
        if not padded[y + 1, x + 2]:
            outgoing.setdefault((x + 1, y), []).append((x + 1, y + 1))
        if not padded[y + 2, x + 1]:
            outgoing.setdefault((x + 1, y + 1), []).append((x, y + 1))
        if not padded[y + 1, x]:
            outgoing.setdefault((x, y + 1), []).append((x, y))

    start = min(outgoing, key=lambda v: (v[1], v[0]))
    # At the topmost-leftmost corner the single outgoing edge heads east.
    direction = (1, 0)
    ring = [start]
    current = start
    while True:
        candidates = outgoing[current]
        for turn in _TURN_PREFERENCE:
            d = turn(*direction)
            step = (current[0] + d[0], current[1] + d[1])
            if step in candidates:
                candidates.remove(step)
                direction = d
                current = step
                break
        else:
            raise DataError("boundary trace dead-ended; mask edges inconsistent")
        if current == start:
            break
        ring.append(current)

    simplified = []
    n = len(ring)
    for i, vertex in enumerate(ring):
        before = ring[(i - 1) % n]
        after = ring[(i + 1) % n]
        if (vertex[0] - before[0], vertex[1] - before[1]) != (
            after[0] - vertex[0],
            after[1] - vertex[1],
        ):
            simplified.append(vertex)
    return simplified


def export_labels(
    detections: list[Detection], image_width: int, image_height: int
) -> list[LabelRecord]:
    """Normalize detections into label records for one image.

    Boxes are clamped to the image rectangle first; a box with zero area
    after clamping (including boxes fully outside the image) raises
    DegenerateBox. Mask polygons are emitted when a mask is present and
    must match the image dimensions.
    """
    if image_width <= 0 or image_height <= 0:
        raise DataError(
            f"image dims must be positive, got {image_width}x{image_height}"
        )
    records = []
    for det in detections:
        box = det.box.clamped(float(image_width), float(image_height))
        if box.area == 0.0:
            raise DegenerateBox(f"box {det.box} has no area inside the image")
        cx, cy, w, h = box.to_cxcywh()
        polygon: tuple[float, ...] = ()
        if det.mask is not None:
            if (det.mask.width, det.mask.height) != (image_width, image_height):
                raise DataError(
                    f"mask is {det.mask.width}x{det.mask.height}, "
                    f"image is {image_width}x{image_height}"
                )
            ring = mask_boundary_polygon(det.mask)
            polygon = tuple(
                c / (image_width if i % 2 == 0 else image_height)
                for vertex in ring
                for i, c in enumerate(vertex)
            )
        records.append(
            LabelRecord(
                class_id=det.class_id,
                cx=cx / image_width,
                cy=cy / image_height,
                w=w / image_width,
                h=h / image_height,
                polygon=polygon,
            )
        )
    return records


def format_label_line(record: LabelRecord) -> str:
    """`class_id cx cy w h [x1 y1 x2 y2 ...]`, fixed 6-decimal floats."""
    parts = [str(record.class_id)]
    parts.extend(f"{v:.6f}" for v in (record.cx, record.cy, record.w, record.h))
    parts.extend(f"{v:.6f}" for v in record.polygon)
    return " ".join(parts)


def parse_label_line(line: str) -> LabelRecord:
    fields = line.split()
    if len(fields) < 5:
        raise DataError(f"label line needs at least 5 fields, got {len(fields)}")
    try:
        class_id = int(fields[0])
        values = [float(f) for f in fields[1:]]
    except ValueError as exc:
        raise DataError(f"bad label line {line!r}: {exc}") from None
    return LabelRecord(
        class_id=class_id,
        cx=values[0],
        cy=values[1],
        w=values[2],
        h=values[3],
        polygon=tuple(values[4:]),
    )


def merge_overrides(
    base: dict[str, list[LabelRecord]],
    overrides: dict[str, list[LabelRecord]],
) -> dict[str, list[LabelRecord]]:
    """Corrected labels replace the whole pseudo-label set of their image;
    images without an override pass through untouched."""
    merged = {image_id: list(records) for image_id, records in base.items()}
    for image_id, records in overrides.items():
        merged[image_id] = list(records)
    return merged
