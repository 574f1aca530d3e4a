"""Core geometry types: boxes, run-length masks, detections, tracks.

Boxes are half-open pixel rectangles [x_min, x_max) x [y_min, y_max) with the
origin at the top-left corner, so a single pixel (x, y) is the unit box
(x, y, x+1, y+1) and pixel-mask areas are exact. Coordinates are real-valued
and never rounded here.

Masks use run-length encoding over a column-major scan, starting with the
count of zeros (COCO-compatible), so external tooling can consume them.

Everything in this module is immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


class EmptyMask(DataError):
    """Mask contains no set pixel."""


class MaskFormatError(DataError):
    """Run-length data does not describe a valid binary grid."""


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise DataError(f"box coordinates must be finite, got {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise DataError(f"box corners out of order: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    @classmethod
    def from_cxcywh(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)

    def to_cxcywh(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        return cx, cy, self.width, self.height

    def clamped(self, width: float, height: float) -> "BoundingBox":
        """Intersect with the image rectangle [0, width) x [0, height)."""
        x1 = min(max(self.x_min, 0.0), width)
        y1 = min(max(self.y_min, 0.0), height)
        x2 = min(max(self.x_max, 0.0), width)
        y2 = min(max(self.y_max, 0.0), height)
        return BoundingBox(x1, y1, max(x1, x2), max(y1, y2))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0.0 when the union has no area."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(rows: list[BoundingBox], cols: list[BoundingBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(rows), len(cols))."""
    out = np.zeros((len(rows), len(cols)), dtype=np.float64)
    if not rows or not cols:
        return out
    ra = np.array([(b.x_min, b.y_min, b.x_max, b.y_max) for b in rows])
    ca = np.array([(b.x_min, b.y_min, b.x_max, b.y_max) for b in cols])
    ix = np.minimum(ra[:, None, 2], ca[None, :, 2]) - np.maximum(ra[:, None, 0], ca[None, :, 0])
    iy = np.minimum(ra[:, None, 3], ca[None, :, 3]) - np.maximum(ra[:, None, 1], ca[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_r = (ra[:, 2] - ra[:, 0]) * (ra[:, 3] - ra[:, 1])
    area_c = (ca[:, 2] - ca[:, 0]) * (ca[:, 3] - ca[:, 1])
    union = area_r[:, None] + area_c[None, :] - inter
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


@dataclass(frozen=True)
class Mask:
    """Binary grid in run-length form.

    ``runs`` alternates zero-count, one-count, zero-count, ... over a
    column-major scan of the grid (all rows of column 0, then column 1, ...).
    The first entry is the number of leading zeros and may be 0.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MaskFormatError(f"mask dims must be positive, got {self.width}x{self.height}")
        if any(r < 0 for r in self.runs):
            raise MaskFormatError("runs must be nonnegative")
        total = sum(self.runs)
        if total != self.width * self.height:
            raise MaskFormatError(
                f"run sum {total} does not cover a {self.width}x{self.height} grid"
            )

    def pixel_count(self) -> int:
        """Number of set pixels."""
        return sum(self.runs[1::2])


def encode_mask(grid: np.ndarray) -> Mask:
    """Encode a binary grid of shape (height, width) into a Mask."""
    arr = np.asarray(grid)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise MaskFormatError(f"expected a nonempty 2-d grid, got shape {arr.shape}")
    flat = (arr != 0).flatten(order="F")
    runs: list[int] = []
    value = False
    run = 0
    for bit in flat:
        if bit == value:
            run += 1
        else:
            runs.append(run)
            value = bit
            run = 1
    runs.append(run)
    return Mask(width=arr.shape[1], height=arr.shape[0], runs=tuple(runs))


def decode_mask(mask: Mask) -> np.ndarray:
    """Decode a Mask back into a bool grid of shape (height, width)."""
    flat = np.zeros(mask.width * mask.height, dtype=bool)
    pos = 0
    value = False
    for run in mask.runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape((mask.height, mask.width), order="F")


def mask_to_bbox(mask: Mask) -> BoundingBox:
    """Tightest box enclosing all set pixels (half-open, so a single pixel
    (x, y) yields (x, y, x+1, y+1))."""
    grid = decode_mask(mask)
    ys, xs = np.nonzero(grid)
    if len(xs) == 0:
        raise EmptyMask("mask has no set pixel")
    return BoundingBox(float(xs.min()), float(ys.min()), float(xs.max()) + 1.0, float(ys.max()) + 1.0)


@dataclass(frozen=True)
class Detection:
    """One candidate object in one frame."""

    frame_index: int
    box: BoundingBox
    confidence: float
    mask: Mask | None = None
    embedding: tuple[float, ...] | None = None
    class_id: int = 0

    def __post_init__(self):
        if self.frame_index < 0:
            raise DataError(f"frame_index must be nonnegative, got {self.frame_index}")
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.embedding is not None:
            emb = tuple(float(v) for v in self.embedding)
            norm = math.sqrt(math.fsum(v * v for v in emb))
            if abs(norm - 1.0) > 1e-6:
                raise DataError(f"embedding must be unit-norm, got norm {norm}")
            object.__setattr__(self, "embedding", emb)


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(frozen=True)
class Track:
    """An identity's trajectory: ordered (frame_index, Detection) observations."""

    track_id: int
    observations: tuple[tuple[int, Detection], ...]
    status: TrackStatus = field(default=TrackStatus.CONFIRMED)

    def __post_init__(self):
        if self.track_id <= 0:
            raise DataError(f"track_id must be positive, got {self.track_id}")
        frames = [f for f, _ in self.observations]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise DataError(f"track {self.track_id} frames must be strictly increasing")

    def __len__(self) -> int:
        return len(self.observations)
