"""Tracking-by-detection with a constant-velocity Kalman filter, two-stage
confidence-split association, fused IoU+appearance costs, and track
lifecycle management.

Frames are processed strictly in order through `Tracker.step`, which
associates the frame's detections to live tracks and returns the
(track_id, detection) pairs confirmed for output. The pure building
blocks (kalman_predict / kalman_update / fuse_costs /
apply_camera_motion) are exposed for reuse and direct testing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assign import assignment
from .errors import DataError
from .geometry import BoundingBox, Detection, TrackStatus, iou_matrix


class SingularInnovation(DataError):
    """Innovation covariance not invertible (degenerate noise config)."""


class ShapeMismatch(DataError):
    """Cost matrices disagree in shape."""


class NonInvertibleMotion(DataError):
    """Affine motion with a singular linear part."""


class NonMonotonicFrame(DataError):
    """Frame index did not increase between tracker steps."""


_DIM = 8
# Constant-velocity transition: position and size advance by velocity, dt=1.
_F = np.eye(_DIM)
_F[0, 4] = _F[1, 5] = _F[2, 6] = _F[3, 7] = 1.0
_H = np.zeros((4, _DIM))
_H[0, 0] = _H[1, 1] = _H[2, 2] = _H[3, 3] = 1.0
# Process noise on velocities runs an order of magnitude below position
# noise, mirroring the usual tracking-filter weighting.
_VEL_NOISE_RATIO = 0.125


@dataclass(frozen=True)
class KalmanState:
    """Gaussian box state: mean (cx, cy, w, h, vcx, vcy, vw, vh) and 8x8
    covariance; sizes in pixels, velocities in pixels/frame."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if mean.shape != (_DIM,):
            raise DataError(f"mean must have {_DIM} entries, got {mean.shape}")
        if cov.shape != (_DIM, _DIM):
            raise DataError(f"covariance must be {_DIM}x{_DIM}, got {cov.shape}")
        if not np.isfinite(mean).all() or not np.isfinite(cov).all():
            raise DataError("state entries must be finite")
        if mean[2] <= 0.0 or mean[3] <= 0.0:
            raise DataError(f"state w/h must be positive, got {mean[2]}, {mean[3]}")
        if np.abs(cov - cov.T).max() > 1e-9:
            raise DataError("covariance must be symmetric within 1e-9")
        if np.diag(cov).min() < 0.0:
            raise DataError("covariance diagonal must be nonnegative")
        mean = mean.copy()
        cov = cov.copy()
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def box(self) -> BoundingBox:
        cx, cy, w, h = self.mean[:4]
        return BoundingBox.from_cxcywh(cx, cy, w, h)


@dataclass(frozen=True)
class TrackerConfig:
    high_conf_threshold: float = 0.5
    low_conf_threshold: float = 0.1
    iou_gate: float = 0.7
    appearance_gate: float = 0.4
    fusion_lambda: float = 0.6
    max_age: int = 30
    min_hits: int = 3
    process_noise: float = 0.05
    measurement_noise: float = 0.1

    def __post_init__(self):
        for name in ("high_conf_threshold", "low_conf_threshold", "iou_gate",
                     "appearance_gate", "fusion_lambda"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {v}")
        if self.low_conf_threshold > self.high_conf_threshold:
            raise DataError("low_conf_threshold must not exceed high_conf_threshold")
        if self.max_age < 1:
            raise DataError(f"max_age must be positive, got {self.max_age}")
        if self.min_hits < 1:
            raise DataError(f"min_hits must be positive, got {self.min_hits}")
        if self.process_noise <= 0.0 or self.measurement_noise <= 0.0:
            raise DataError("noise scales must be positive")


@dataclass(frozen=True)
class AffineMotion:
    """2x3 matrix mapping previous-frame pixel coordinates to current-frame
    coordinates: p' = A @ p + t with A = matrix[:, :2], t = matrix[:, 2]."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.matrix, dtype=np.float64)
        if arr.shape != (2, 3):
            raise DataError(f"motion matrix must be 2x3, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("motion matrix entries must be finite")
        if abs(np.linalg.det(arr[:, :2])) < 1e-12:
            raise NonInvertibleMotion("linear part of motion is singular")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "matrix", arr)


def initial_state(box: BoundingBox, cfg: TrackerConfig) -> KalmanState:
    """State centered on a first measurement with zero velocity and broad
    uncertainty proportional to box height."""
    if box.area <= 0.0:
        raise DataError(f"initial box must have positive area, got {box}")
    cx, cy, w, h = box.to_cxcywh()
    mean = np.array([cx, cy, w, h, 0.0, 0.0, 0.0, 0.0])
    pos_std = 2.0 * cfg.measurement_noise * h
    vel_std = cfg.measurement_noise * h
    cov = np.diag([pos_std**2] * 4 + [vel_std**2] * 4)
    return KalmanState(mean, cov)


def kalman_predict(state: KalmanState, cfg: TrackerConfig) -> KalmanState:
    """One constant-velocity step; process noise scales with box height."""
    mean = _F @ state.mean
    pos_std = cfg.process_noise * state.mean[3]
    vel_std = _VEL_NOISE_RATIO * cfg.process_noise * state.mean[3]
    q = np.diag([pos_std**2] * 4 + [vel_std**2] * 4)
    cov = _F @ state.covariance @ _F.T + q
    cov = (cov + cov.T) / 2.0
    mean[2] = max(mean[2], 1e-6)
    mean[3] = max(mean[3], 1e-6)
    return KalmanState(mean, cov)


def kalman_update(
    state: KalmanState, measurement: BoundingBox, cfg: TrackerConfig
) -> KalmanState:
    """Correct the state against a measured box (cx, cy, w, h).

    Measurement noise scales with the prior box height. Uses the Joseph
    form so the posterior covariance stays symmetric positive
    semidefinite.
    """
    if measurement.area <= 0.0:
        raise DataError(f"measurement must have positive area, got {measurement}")
    z = np.array(measurement.to_cxcywh())
    r_std = cfg.measurement_noise * state.mean[3]
    r = np.diag([r_std**2] * 4)
    p = state.covariance
    s = _H @ p @ _H.T + r
    try:
        s_inv = np.linalg.inv(s)
    except np.linalg.LinAlgError:
        raise SingularInnovation(
            "innovation covariance is singular; noise config degenerate"
        ) from None
    if not np.isfinite(s_inv).all():
        raise SingularInnovation(
            "innovation covariance is singular; noise config degenerate"
        )
    gain = p @ _H.T @ s_inv
    innovation = z - _H @ state.mean
    mean = state.mean + gain @ innovation
    joseph = np.eye(_DIM) - gain @ _H
    cov = joseph @ p @ joseph.T + gain @ r @ gain.T
    cov = (cov + cov.T) / 2.0
    mean = mean.copy()
    mean[2] = max(mean[2], 1e-6)
    mean[3] = max(mean[3], 1e-6)
    return KalmanState(mean, cov)


def fuse_costs(iou_cost, appearance_cost, cfg: TrackerConfig) -> np.ndarray:
    """Blend motion and appearance costs into one gated matrix.

    fused = lambda * iou_cost + (1 - lambda) * appearance_cost; cells are
    marked infeasible (+inf) when iou_cost exceeds the IoU gate, when
    appearance_cost exceeds the appearance gate, or when the boxes do not
    overlap at all (iou_cost >= 1). Without appearance, fused equals
    iou_cost under the IoU gate alone.
    """
    iou_arr = np.asarray(iou_cost, dtype=np.float64)
    if iou_arr.ndim != 2:
        raise DataError(f"iou_cost must be 2-d, got shape {iou_arr.shape}")
    infeasible = (iou_arr > cfg.iou_gate) | (iou_arr >= 1.0)
    if appearance_cost is None:
        fused = iou_arr.copy()
    else:
        app_arr = np.asarray(appearance_cost, dtype=np.float64)
        if app_arr.shape != iou_arr.shape:
            raise ShapeMismatch(
                f"iou_cost is {iou_arr.shape}, appearance_cost is {app_arr.shape}"
            )
        lam = cfg.fusion_lambda
        fused = lam * iou_arr + (1.0 - lam) * app_arr
        infeasible |= app_arr > cfg.appearance_gate
    fused[infeasible] = np.inf
    return fused


def apply_camera_motion(
    states: list[KalmanState], motion: AffineMotion
) -> list[KalmanState]:
    """Warp predicted states by a global affine: centers map through the
    full affine, sizes scale by the geometric mean of the linear part's
    singular values, and the position covariance block is conjugated by
    the linear part."""
    a = motion.matrix[:, :2]
    t = motion.matrix[:, 2]
    scale = math.sqrt(abs(float(np.linalg.det(a))))
    out = []
    for state in states:
        mean = state.mean.copy()
        mean[:2] = a @ state.mean[:2] + t
        mean[2] *= scale
        mean[3] *= scale
        cov = state.covariance.copy()
        cov[:2, :2] = a @ state.covariance[:2, :2] @ a.T
        out.append(KalmanState(mean, cov))
    return out


def _appearance_matrix(track_embs, det_embs) -> np.ndarray | None:
    """Halved cosine distance in [0, 1]; None when any side lacks a vector."""
    if any(e is None for e in track_embs) or any(e is None for e in det_embs):
        return None
    if not track_embs or not det_embs:
        return None
    ta = np.array(track_embs, dtype=np.float64)
    da = np.array(det_embs, dtype=np.float64)
    if ta.shape[1] != da.shape[1]:
        raise ShapeMismatch(
            f"embedding dims differ: {ta.shape[1]} vs {da.shape[1]}"
        )
    cost = (1.0 - ta @ da.T) / 2.0
    return np.clip(cost, 0.0, 1.0)


class _LiveTrack:
    __slots__ = (
        "track_id", "state", "status", "streak", "misses",
        "embedding", "class_id", "ever_confirmed",
    )

    def __init__(self, track_id: int, state: KalmanState, det: Detection,
                 confirmed: bool):
        self.track_id = track_id
        self.state = state
        self.status = TrackStatus.CONFIRMED if confirmed else TrackStatus.TENTATIVE
        self.streak = 1
        self.misses = 0
        self.embedding = det.embedding
        self.class_id = det.class_id
        self.ever_confirmed = confirmed


class Tracker:
    """Stateful per-sequence tracker; feed frames in increasing order."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg if cfg is not None else TrackerConfig()
        self._tracks: list[_LiveTrack] = []
        self._next_id = 1
        self._frames_seen = 0
        self._last_frame: int | None = None

    def step(
        self,
        detections: list[Detection],
        motion: AffineMotion | None = None,
        frame_index: int | None = None,
    ) -> list[tuple[int, Detection]]:
        """Advance one frame and return (track_id, detection) pairs for
        confirmed tracks matched this frame.

        Two-stage association: stage 1 matches every live track against
        high-confidence detections on the fused cost; stage 2 matches the
        still-unmatched non-lost tracks against low-confidence detections
        on IoU alone. Lost tracks re-enter only through stage 1.
        """
        cfg = self.cfg
        if frame_index is None:
            if detections:
                frame_index = detections[0].frame_index
            elif self._last_frame is not None:
                frame_index = self._last_frame + 1
            else:
                frame_index = 0
        for det in detections:
            if det.frame_index != frame_index:
                raise DataError(
                    f"detection frame {det.frame_index} does not match "
                    f"step frame {frame_index}"
                )
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise NonMonotonicFrame(
                f"frame {frame_index} after frame {self._last_frame}"
            )
        self._last_frame = frame_index
        self._frames_seen += 1

        for track in self._tracks:
            track.state = kalman_predict(track.state, cfg)
        if motion is not None and self._tracks:
            warped = apply_camera_motion([t.state for t in self._tracks], motion)
            for track, state in zip(self._tracks, warped):
                track.state = state

        high = [d for d in detections if d.confidence >= cfg.high_conf_threshold]
        low = [
            d for d in detections
            if cfg.low_conf_threshold <= d.confidence < cfg.high_conf_threshold
        ]

        matched: list[tuple[_LiveTrack, Detection]] = []

        stage1_tracks = list(self._tracks)
        unmatched_tracks = list(stage1_tracks)
        unmatched_high = list(high)
        if stage1_tracks and high:
            iou_cost = 1.0 - iou_matrix(
                [t.state.box for t in stage1_tracks], [d.box for d in high]
            )
            app_cost = _appearance_matrix(
                [t.embedding for t in stage1_tracks],
                [d.embedding for d in high],
            )
            fused = fuse_costs(iou_cost, app_cost, cfg)
            pairs = assignment(fused)
            for r, c in pairs:
                matched.append((stage1_tracks[r], high[c]))
            taken_r = {r for r, _ in pairs}
            taken_c = {c for _, c in pairs}
            unmatched_tracks = [
                t for i, t in enumerate(stage1_tracks) if i not in taken_r
            ]
            unmatched_high = [d for j, d in enumerate(high) if j not in taken_c]

        stage2_tracks = [
            t for t in unmatched_tracks if t.status is not TrackStatus.LOST
        ]
        if stage2_tracks and low:
            iou_cost = 1.0 - iou_matrix(
                [t.state.box for t in stage2_tracks], [d.box for d in low]
            )
            fused = fuse_costs(iou_cost, None, cfg)
            pairs = assignment(fused)
            for r, c in pairs:
                matched.append((stage2_tracks[r], low[c]))
            taken = {stage2_tracks[r] for r, _ in pairs}
            unmatched_tracks = [t for t in unmatched_tracks if t not in taken]

        for track, det in matched:
            track.state = kalman_update(track.state, det.box, cfg)
            track.streak += 1
            track.misses = 0
            if det.embedding is not None:
                track.embedding = det.embedding
            if track.ever_confirmed:
                track.status = TrackStatus.CONFIRMED
            elif track.streak >= cfg.min_hits or self._frames_seen <= cfg.min_hits:
                track.status = TrackStatus.CONFIRMED
                track.ever_confirmed = True
            else:
                track.status = TrackStatus.TENTATIVE

        matched_tracks = {id(t) for t, _ in matched}
        survivors = []
        for track in self._tracks:
            if id(track) in matched_tracks:
                survivors.append(track)
                continue
            track.misses += 1
            track.streak = 0
            if track.misses > cfg.max_age:
                track.status = TrackStatus.REMOVED
                continue
            track.status = TrackStatus.LOST
            survivors.append(track)
        self._tracks = survivors

        for det in unmatched_high:
            confirmed = self._frames_seen <= cfg.min_hits or cfg.min_hits == 1
            track = _LiveTrack(
                self._next_id, initial_state(det.box, cfg), det, confirmed
            )
            self._next_id += 1
            self._tracks.append(track)
            matched.append((track, det))

        emitted = [
            (t.track_id, det)
            for t, det in matched
            if t.status is TrackStatus.CONFIRMED
        ]
        emitted.sort(key=lambda pair: pair[0])
        return emitted
