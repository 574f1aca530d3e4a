"""Adaptive luminance and contrast adjustment for grayscale frames.

Each frame is rescaled from its own mean luminance L: a gain curve alpha(L)
scales overall brightness down when the frame is bright, and a spread curve
beta(L) scales contrast (pixel deviation from the frame mean) up when the
frame is dark. Color inputs must be converted to a luminance plane upstream
(BT.601 weights 0.299 R + 0.587 G + 0.114 B).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

Knots = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class LumaImage:
    """A single luminance plane with values in [0, 255]."""

    pixels: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DataError(f"expected a nonempty 2-d luminance plane, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 255.0:
            raise DataError("luminance values must be finite and within [0, 255]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _check_knots(name: str, knots: Knots) -> None:
    if len(knots) < 2:
        raise DataError(f"{name} needs at least two knots")
    lums = [l for l, _ in knots]
    factors = [f for _, f in knots]
    if any(b <= a for a, b in zip(lums, lums[1:])):
        raise DataError(f"{name} knot luminances must be strictly increasing")
    if lums[0] != 0.0 or lums[-1] != 255.0:
        raise DataError(f"{name} knots must span [0, 255], got [{lums[0]}, {lums[-1]}]")
    if any(f <= 0.0 for f in factors):
        raise DataError(f"{name} factors must be positive")
    if any(f2 > f1 for f1, f2 in zip(factors, factors[1:])):
        raise DataError(f"{name} factors must be non-increasing in luminance")


@dataclass(frozen=True)
class RelightCurves:
    """Piecewise-linear gain curves indexed by frame luminance."""

    alpha_knots: Knots
    beta_knots: Knots

    def __post_init__(self):
        alpha = tuple((float(l), float(f)) for l, f in self.alpha_knots)
        beta = tuple((float(l), float(f)) for l, f in self.beta_knots)
        _check_knots("alpha", alpha)
        _check_knots("beta", beta)
        object.__setattr__(self, "alpha_knots", alpha)
        object.__setattr__(self, "beta_knots", beta)

    def alpha(self, luminance: float) -> float:
        return _interp(self.alpha_knots, luminance)

    def beta(self, luminance: float) -> float:
        return _interp(self.beta_knots, luminance)


def _interp(knots: Knots, x: float) -> float:
    xs = [l for l, _ in knots]
    ys = [f for _, f in knots]
    return float(np.interp(x, xs, ys))


def default_curves() -> RelightCurves:
    """Stock curves: dim bright frames, add contrast to dark ones."""
    return RelightCurves(
        alpha_knots=((0.0, 1.0), (128.0, 1.0), (200.0, 0.9), (255.0, 0.7)),
        beta_knots=((0.0, 1.4), (80.0, 1.2), (128.0, 1.0), (255.0, 1.0)),
    )


def frame_luminance(img: LumaImage) -> float:
    """Arithmetic mean of all pixels."""
    return float(img.pixels.mean())


def relight(img: LumaImage, curves: RelightCurves) -> LumaImage:
    """Recenter pixel spread about the frame mean by beta(L), then scale by
    alpha(L): out = clamp(alpha * (L + beta * (p - L)), 0, 255).

    Uniform frames map their mean L to alpha(L) * L exactly; identity curves
    (alpha = beta = 1 everywhere) return the input pixels bit-exactly.
    """
    lum = frame_luminance(img)
    a = curves.alpha(lum)
    b = curves.beta(lum)
    if a == 1.0 and b == 1.0:
        return LumaImage(img.pixels)
    out = a * (lum + b * (img.pixels - lum))
    np.clip(out, 0.0, 255.0, out=out)
    return LumaImage(out)
