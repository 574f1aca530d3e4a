"""Multi-object tracking toolkit for depth-aware orchard-style video.

The package covers the full pipeline: geometry primitives, confidence
pseudo-labels, luminance-adaptive relighting, depth-based background
rejection, two-stage IoU/appearance tracking with a constant-velocity
Kalman filter, CLEAR/Identity/HOTA evaluation, deterministic synthetic
scenario generation, and byte-stable file formats behind a CLI.
"""

from .assign import assignment, min_cost_matching
from .config import (
    PipelineConfig,
    config_from_flat,
    config_to_flat,
    format_knots,
    parse_knots,
)
from .depth_filter import (
    DepthClass,
    DepthFilterConfig,
    DepthFilterResult,
    DepthMap,
    DimensionMismatch,
    NoDepthSupport,
    classify,
    filter_detections,
    instance_depth,
)
from .errors import DataError, InternalError, MotkitError, UsageError
from .geometry import (
    BoundingBox,
    Detection,
    EmptyMask,
    Mask,
    Track,
    TrackStatus,
    decode_mask,
    encode_mask,
    iou,
    iou_matrix,
    mask_to_bbox,
)
from .io_formats import (
    FormatError,
    MotRecord,
    ParseError,
    atomic_write,
    detection_to_record,
    format_config_text,
    format_labels,
    format_mot,
    format_motion,
    format_override,
    group_records_by_frame,
    parse_config_text,
    parse_labels,
    parse_mot,
    parse_motion,
    parse_override,
    read_depth_pgm,
    read_embeddings,
    read_json,
    read_luma_pgm,
    record_to_detection,
    records_to_sequence,
    sha256_bytes,
    sha256_file,
    write_depth_pgm,
    write_embeddings,
    write_json,
    write_luma_pgm,
)
from .metrics import (
    AnnotatedSequence,
    ClearResult,
    EmptyInput,
    FrameRangeMismatch,
    MetricReport,
    average_reports,
    clear_metrics,
    evaluate_sequence,
    hota,
    identity_metrics,
)
from .relight import (
    LumaImage,
    RelightCurves,
    default_curves,
    frame_luminance,
    relight,
)
from .synth import (
    GeneratedScenario,
    InvalidConfig,
    PortableRng,
    ScenarioConfig,
    generate,
)
from .tracker import (
    AffineMotion,
    KalmanState,
    NonInvertibleMotion,
    NonMonotonicFrame,
    ShapeMismatch,
    SingularInnovation,
    Tracker,
    TrackerConfig,
    apply_camera_motion,
    fuse_costs,
    initial_state,
    kalman_predict,
    kalman_update,
)
from .weak_labels import (
    DegenerateBox,
    LabelCandidate,
    LabelRecord,
    LabelThreshold,
    SubsampleSpec,
    confidence_filter,
    export_labels,
    mask_boundary_polygon,
    merge_overrides,
    sigmoid,
    subsample_indices,
    threshold_logit,
)

__version__ = "0.1.0"

__all__ = [
    "AffineMotion",
    "AnnotatedSequence",
    "BoundingBox",
    "ClearResult",
    "DataError",
    "DegenerateBox",
    "DepthClass",
    "DepthFilterConfig",
    "DepthFilterResult",
    "DepthMap",
    "Detection",
    "DimensionMismatch",
    "EmptyInput",
    "EmptyMask",
    "FormatError",
    "FrameRangeMismatch",
    "GeneratedScenario",
    "InternalError",
    "InvalidConfig",
    "KalmanState",
    "LabelCandidate",
    "LabelRecord",
    "LabelThreshold",
    "LumaImage",
    "Mask",
    "MetricReport",
    "MotRecord",
    "MotkitError",
    "NoDepthSupport",
    "NonInvertibleMotion",
    "NonMonotonicFrame",
    "ParseError",
    "PipelineConfig",
    "PortableRng",
    "RelightCurves",
    "ScenarioConfig",
    "ShapeMismatch",
    "SingularInnovation",
    "SubsampleSpec",
    "Track",
    "TrackStatus",
    "Tracker",
    "TrackerConfig",
    "UsageError",
    "apply_camera_motion",
    "assignment",
    "atomic_write",
    "average_reports",
    "classify",
    "clear_metrics",
    "confidence_filter",
    "config_from_flat",
    "config_to_flat",
    "decode_mask",
    "default_curves",
    "detection_to_record",
    "encode_mask",
    "evaluate_sequence",
    "export_labels",
    "filter_detections",
    "format_config_text",
    "format_knots",
    "format_labels",
    "format_mot",
    "format_motion",
    "format_override",
    "frame_luminance",
    "fuse_costs",
    "generate",
    "group_records_by_frame",
    "hota",
    "identity_metrics",
    "initial_state",
    "instance_depth",
    "iou",
    "iou_matrix",
    "kalman_predict",
    "kalman_update",
    "mask_boundary_polygon",
    "mask_to_bbox",
    "merge_overrides",
    "min_cost_matching",
    "parse_config_text",
    "parse_knots",
    "parse_labels",
    "parse_mot",
    "parse_motion",
    "parse_override",
    "read_depth_pgm",
    "read_embeddings",
    "read_json",
    "read_luma_pgm",
    "record_to_detection",
    "records_to_sequence",
    "relight",
    "sha256_bytes",
    "sha256_file",
    "sigmoid",
    "subsample_indices",
    "threshold_logit",
    "write_depth_pgm",
    "write_embeddings",
    "write_json",
    "write_luma_pgm",
]
