"""Foreground/background classification of detections from dense depth maps.

An instance is foreground when its aggregate depth is below a threshold and
background otherwise; background detections are discarded before tracking.
Aggregate depth is the median of the nonzero depth readings under the
detection's mask (or under its box when no mask is present); a raw value of
0 means the sensor returned nothing for that pixel.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .geometry import Detection, decode_mask


class NoDepthSupport(DataError):
    """Every pixel covered by the detection lacks a depth reading."""


class DimensionMismatch(DataError):
    """Depth map dimensions disagree with the frame dimensions."""


@dataclass(frozen=True)
class DepthMap:
    """Per-frame dense depth in raw integer sensor units (millimeter scale)."""

    values: np.ndarray  # shape (height, width), nonnegative integers

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DataError(f"expected a nonempty 2-d depth grid, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise DataError(f"depth values must be integers, got dtype {arr.dtype}")
        if arr.min() < 0:
            raise DataError("depth values must be nonnegative")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DepthFilterConfig:
    tau_d: int = 1200

    def __post_init__(self):
        if self.tau_d <= 0:
            raise DataError(f"tau_d must be positive, got {self.tau_d}")


class DepthClass(enum.Enum):
    FOREGROUND = "foreground"
    BACKGROUND = "background"


def _low_median(values: np.ndarray) -> int:
    # Deterministic tie rule: lower of the two middle values for even counts.
    ordered = np.sort(values)
    return int(ordered[(len(ordered) - 1) // 2])


def instance_depth(depth: DepthMap, det: Detection) -> int:
    """Median nonzero depth under the detection's mask, or under its box
    interior when no mask is present.

    Raises NoDepthSupport when nothing under the detection has a reading.
    """
    if det.mask is not None:
        if (det.mask.width, det.mask.height) != (depth.width, depth.height):
            raise DimensionMismatch(
                f"mask is {det.mask.width}x{det.mask.height}, "
                f"depth is {depth.width}x{depth.height}"
            )
        covered = depth.values[decode_mask(det.mask)]
    else:
        b = det.box
        x0 = max(0, math.floor(b.x_min))
        x1 = min(depth.width, math.ceil(b.x_max))
        y0 = max(0, math.floor(b.y_min))
        y1 = min(depth.height, math.ceil(b.y_max))
        if x1 <= x0 or y1 <= y0:
            raise NoDepthSupport(f"box {b} covers no depth pixels")
        covered = depth.values[y0:y1, x0:x1].ravel()
    nonzero = covered[covered > 0]
    if len(nonzero) == 0:
        raise NoDepthSupport("no depth reading under detection")
    return _low_median(nonzero)


def classify(depth_value: int, cfg: DepthFilterConfig) -> DepthClass:
    """Foreground iff depth < tau_d; background iff depth >= tau_d."""
    if depth_value < 0:
        raise DataError(f"depth value must be nonnegative, got {depth_value}")
    if depth_value < cfg.tau_d:
        return DepthClass.FOREGROUND
    return DepthClass.BACKGROUND


@dataclass(frozen=True)
class DepthFilterResult:
    """Retained detections (in input order) plus the fail-open subset that
    had no depth support and was kept with a flag."""

    kept: tuple[Detection, ...]
    flagged: tuple[Detection, ...]


def filter_detections(
    dets: list[Detection], depth: DepthMap, cfg: DepthFilterConfig
) -> DepthFilterResult:
    """Drop background-classified detections, preserving input order.

    Detections without any depth reading are retained and flagged rather
    than dropped: the threshold protects precision, and discarding
    unmeasured instances would silently cost recall.
    """
    kept: list[Detection] = []
    flagged: list[Detection] = []
    for det in dets:
        try:
            d = instance_depth(depth, det)
        except NoDepthSupport:
            kept.append(det)
            flagged.append(det)
            continue
        if classify(d, cfg) is DepthClass.FOREGROUND:
            kept.append(det)
    return DepthFilterResult(kept=tuple(kept), flagged=tuple(flagged))
