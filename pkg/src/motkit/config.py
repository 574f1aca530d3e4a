"""Central pipeline configuration: every tunable of the depth filter,
weak-label stage, relighting curves, tracker, and metrics, with one flat
text representation shared by config files, CLI flags, and run manifests.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .depth_filter import DepthFilterConfig
from .errors import UsageError
from .relight import RelightCurves, default_curves
from .tracker import TrackerConfig
from .weak_labels import LabelThreshold

Knots = tuple[tuple[float, float], ...]

_DEFAULT_CURVES = default_curves()


@dataclass(frozen=True)
class PipelineConfig:
    tau_d: int = 1200
    interval: int = 5
    label_tau: float = 0.35
    relight_alpha: Knots = _DEFAULT_CURVES.alpha_knots
    relight_beta: Knots = _DEFAULT_CURVES.beta_knots
    high_conf: float = 0.5
    low_conf: float = 0.1
    iou_gate: float = 0.7
    appearance_gate: float = 0.4
    fusion_lambda: float = 0.6
    max_age: int = 30
    min_hits: int = 3
    process_noise: float = 0.05
    measurement_noise: float = 0.1
    iou_threshold: float = 0.5

    def __post_init__(self):
        # Delegate range checks to the owning modules so the rules live in
        # one place each.
        self.depth_config()
        self.label_threshold()
        self.relight_curves()
        self.tracker_config()
        if not 0.0 < self.iou_threshold <= 1.0:
            raise UsageError(
                f"iou_threshold must lie in (0, 1], got {self.iou_threshold}"
            )
        if self.interval < 1:
            raise UsageError(f"interval must be at least 1, got {self.interval}")

    def depth_config(self) -> DepthFilterConfig:
        return DepthFilterConfig(tau_d=self.tau_d)

    def label_threshold(self) -> LabelThreshold:
        return LabelThreshold(tau=self.label_tau)

    def relight_curves(self) -> RelightCurves:
        return RelightCurves(
            alpha_knots=self.relight_alpha, beta_knots=self.relight_beta
        )

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            high_conf_threshold=self.high_conf,
            low_conf_threshold=self.low_conf,
            iou_gate=self.iou_gate,
            appearance_gate=self.appearance_gate,
            fusion_lambda=self.fusion_lambda,
            max_age=self.max_age,
            min_hits=self.min_hits,
            process_noise=self.process_noise,
            measurement_noise=self.measurement_noise,
        )


# Flat key "lambda" keeps the CLI flag and config key short; the dataclass
# field avoids the Python keyword.
_FLAT_ALIASES = {"fusion_lambda": "lambda"}
_FIELD_FOR_FLAT = {
    _FLAT_ALIASES.get(f.name, f.name): f.name for f in fields(PipelineConfig)
}


def format_knots(knots: Knots) -> str:
    return ",".join(f"{lum:g}:{factor:g}" for lum, factor in knots)


def parse_knots(text: str) -> Knots:
    knots = []
    for part in text.split(","):
        lum, sep, factor = part.partition(":")
        if not sep:
            raise UsageError(f"knot {part!r} must look like luminance:factor")
        try:
            knots.append((float(lum), float(factor)))
        except ValueError:
            raise UsageError(f"knot {part!r} has non-numeric fields") from None
    return tuple(knots)


def config_to_flat(cfg: PipelineConfig) -> dict[str, str]:
    flat = {}
    for f in fields(PipelineConfig):
        key = _FLAT_ALIASES.get(f.name, f.name)
        value = getattr(cfg, f.name)
        if f.name in ("relight_alpha", "relight_beta"):
            flat[key] = format_knots(value)
        elif isinstance(value, float):
            flat[key] = format(value, "g")
        else:
            flat[key] = str(value)
    return flat


def config_from_flat(
    values: dict[str, str], base: PipelineConfig | None = None
) -> PipelineConfig:
    """Apply flat key=value settings over a base config.

    Unknown keys and unparseable values are usage errors.
    """
    cfg = base if base is not None else PipelineConfig()
    updates = {}
    for key, raw in values.items():
        if key not in _FIELD_FOR_FLAT:
            raise UsageError(f"unknown config key {key!r}")
        name = _FIELD_FOR_FLAT[key]
        if name in ("relight_alpha", "relight_beta"):
            updates[name] = parse_knots(raw)
            continue
        current = getattr(cfg, name)
        try:
            if isinstance(current, int):
                updates[name] = int(raw)
            else:
                updates[name] = float(raw)
        except ValueError:
            raise UsageError(f"config key {key!r} has bad value {raw!r}") from None
    try:
        return replace(cfg, **updates)
    except Exception as exc:
        raise UsageError(str(exc)) from None
