"""Shared domain types for the capture/filter/summarize pipeline.

All types here are immutable value objects and safe to share between
concurrent tasks. Serialization lives in :mod:`robosum.frameio`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

FEATURE_DIM = 157

# Indices of the 18-point body landmark convention.
NOSE = 0
NECK = 1
R_SHOULDER = 2
R_ELBOW = 3
R_WRIST = 4
L_SHOULDER = 5
L_ELBOW = 6
L_WRIST = 7
R_HIP = 8
R_KNEE = 9
R_ANKLE = 10
L_HIP = 11
L_KNEE = 12
L_ANKLE = 13
R_EYE = 14
L_EYE = 15
R_EAR = 16
L_EAR = 17

NUM_LANDMARKS = 18

#: Landmark indices counted as "facial": nose, both eyes, both ears.
FACIAL_INDICES = (NOSE, R_EYE, L_EYE, R_EAR, L_EAR)

#: Both eye indices.
EYE_INDICES = (R_EYE, L_EYE)


@dataclass(frozen=True)
class LandmarkPoint:
    """One detected body keypoint: pixel position plus detector confidence."""

    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"landmark coordinates must be finite, got ({self.x}, {self.y})")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"landmark coordinates must be non-negative, got ({self.x}, {self.y})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"landmark confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class LandmarkSet:
    """The 18 body keypoints of one person; absent points are ``None``.

    Index semantics are fixed by the module-level constants (``NOSE`` is 0,
    ``NECK`` is 1, ... ``L_EAR`` is 17) and mirrored by the named accessors.
    """

    points: tuple[LandmarkPoint | None, ...]

    def __post_init__(self):
        pts = tuple(self.points)
        if len(pts) != NUM_LANDMARKS:
            raise ValueError(f"expected {NUM_LANDMARKS} landmark slots, got {len(pts)}")
        object.__setattr__(self, "points", pts)

    # Named accessors, one per index.
    @property
    def nose(self) -> LandmarkPoint | None:
        return self.points[NOSE]

    @property
    def neck(self) -> LandmarkPoint | None:
        return self.points[NECK]

    @property
    def r_shoulder(self) -> LandmarkPoint | None:
        return self.points[R_SHOULDER]

    @property
    def r_elbow(self) -> LandmarkPoint | None:
        return self.points[R_ELBOW]

    @property
    def r_wrist(self) -> LandmarkPoint | None:
        return self.points[R_WRIST]

    @property
    def l_shoulder(self) -> LandmarkPoint | None:
        return self.points[L_SHOULDER]

    @property
    def l_elbow(self) -> LandmarkPoint | None:
        return self.points[L_ELBOW]

    @property
    def l_wrist(self) -> LandmarkPoint | None:
        return self.points[L_WRIST]

    @property
    def r_hip(self) -> LandmarkPoint | None:
        return self.points[R_HIP]

    @property
    def r_knee(self) -> LandmarkPoint | None:
        return self.points[R_KNEE]

    @property
    def r_ankle(self) -> LandmarkPoint | None:
        return self.points[R_ANKLE]

    @property
    def l_hip(self) -> LandmarkPoint | None:
        return self.points[L_HIP]

    @property
    def l_knee(self) -> LandmarkPoint | None:
        return self.points[L_KNEE]

    @property
    def l_ankle(self) -> LandmarkPoint | None:
        return self.points[L_ANKLE]

    @property
    def r_eye(self) -> LandmarkPoint | None:
        return self.points[R_EYE]

    @property
    def l_eye(self) -> LandmarkPoint | None:
        return self.points[L_EYE]

    @property
    def r_ear(self) -> LandmarkPoint | None:
        return self.points[R_EAR]

    @property
    def l_ear(self) -> LandmarkPoint | None:
        return self.points[L_EAR]


def facial_landmarks_visible(lm: LandmarkSet) -> frozenset[int]:
    """Return the indices of the present facial points (nose, eyes, ears)."""
    return frozenset(i for i in FACIAL_INDICES if lm.points[i] is not None)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Per-frame probabilities of 157 predefined indoor actions.

    Components are independent multi-label probabilities in [0, 1]; they need
    not sum to 1. Stored as a read-only float32 array so values round-trip
    exactly through the 32-bit on-disk format.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float32, copy=True)
        if arr.shape != (FEATURE_DIM,):
            raise ValueError(f"feature vector must have shape ({FEATURE_DIM},), got {arr.shape}")
        if not bool(np.all((arr >= 0.0) & (arr <= 1.0))):
            raise ValueError("feature components must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class FrameRecord:
    """Metadata for one captured frame.

    ``timestamp`` is seconds since session start. ``landmarks`` is absent
    when no person was detected; ``blur_variance`` and ``features`` are
    absent until computed upstream.
    """

    frame_id: int
    timestamp: float
    width: int
    height: int
    landmarks: LandmarkSet | None = None
    blur_variance: float | None = None
    features: FeatureVector | None = None

    def __post_init__(self):
        if not math.isfinite(self.timestamp):
            raise ValueError(f"frame {self.frame_id}: timestamp must be finite")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame {self.frame_id}: dimensions must be positive")
        if self.blur_variance is not None and not (
            math.isfinite(self.blur_variance) and self.blur_variance >= 0
        ):
            raise ValueError(f"frame {self.frame_id}: blur variance must be a finite non-negative real")


class IllPosedReason(Enum):
    """Why a frame was rejected; exactly one reason per rejected frame."""

    BLURRED = "Blurred"
    EYES_INVISIBLE = "EyesInvisible"
    PEOPLE_ABSENT = "PeopleAbsent"
    FOREHEAD_CROPPED = "ForeheadCropped"
    AT_CORNER = "AtCorner"
    TOO_SMALL = "TooSmall"


@dataclass(frozen=True)
class Cluster:
    """A temporally contiguous run of well-posed frames."""

    index: int
    frame_ids: tuple[int, ...]
    start_time: float
    end_time: float

    def __post_init__(self):
        ids = tuple(self.frame_ids)
        if not ids:
            raise ValueError("cluster must contain at least one frame")
        if self.start_time > self.end_time:
            raise ValueError("cluster start_time must not exceed end_time")
        object.__setattr__(self, "frame_ids", ids)

    @property
    def size(self) -> int:
        return len(self.frame_ids)


@dataclass(frozen=True)
class SummaryEntry:
    """One selected keyframe with its cluster provenance."""

    cluster_index: int
    frame_id: int
    timestamp: float
    cluster_size: int


@dataclass(frozen=True)
class SummaryManifest:
    """Ordered keyframe selections plus the threshold that produced them.

    ``h_star`` is the final temporal gap threshold in seconds (``inf`` when a
    single all-spanning cluster was requested, 0.0 when no clustering ran);
    ``cluster_count`` is the total number of clusters the threshold induced,
    which may exceed ``len(entries)`` when small clusters were discarded.
    """

    k: int
    h_star: float
    cluster_count: int
    entries: tuple[SummaryEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if len(entries) > self.k:
            raise ValueError(f"manifest holds {len(entries)} entries but k={self.k}")
        times = [e.timestamp for e in entries]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("manifest entries must be sorted by timestamp")
        object.__setattr__(self, "entries", entries)

    @property
    def is_short_session(self) -> bool:
        """True when the session had fewer frames than requested keyframes."""
        return len(self.entries) < self.k
