"""Keyframe summarization and person-following control for robot video sessions."""

from .content_filter import FilterConfig, FilterReport, classify_frame, filter_frames, variance_of_laplacian
from .controller import (
    ActionCommand,
    ControllerConfig,
    ControllerState,
    Expression,
    Mode,
    Observation,
    Side,
    controller_step,
    estimate_distance_m,
    gaze_adjustment,
    initial_state,
    select_expression,
)
from .model import (
    FEATURE_DIM,
    Cluster,
    FeatureVector,
    FrameRecord,
    IllPosedReason,
    LandmarkPoint,
    LandmarkSet,
    SummaryEntry,
    SummaryManifest,
    facial_landmarks_visible,
)
from .scenario import (
    ActivitySegment,
    FrameTruth,
    Injection,
    ScenarioSpec,
    Waypoint,
    generate_session,
)
from .summarizer import (
    SummarizerConfig,
    adapt_threshold,
    assign_clusters,
    cluster_mean,
    kmeans_keyframes,
    select_keyframe,
    select_top_k_clusters,
    summarize,
    uniform_keyframes,
)

__version__ = "0.1.0"

__all__ = [
    "ActionCommand",
    "ActivitySegment",
    "Cluster",
    "ControllerConfig",
    "ControllerState",
    "Expression",
    "FEATURE_DIM",
    "FeatureVector",
    "FilterConfig",
    "FilterReport",
    "FrameRecord",
    "FrameTruth",
    "IllPosedReason",
    "Injection",
    "LandmarkPoint",
    "LandmarkSet",
    "Mode",
    "Observation",
    "ScenarioSpec",
    "Side",
    "Waypoint",
    "SummarizerConfig",
    "SummaryEntry",
    "SummaryManifest",
    "adapt_threshold",
    "assign_clusters",
    "classify_frame",
    "cluster_mean",
    "controller_step",
    "estimate_distance_m",
    "facial_landmarks_visible",
    "filter_frames",
    "gaze_adjustment",
    "generate_session",
    "initial_state",
    "kmeans_keyframes",
    "select_expression",
    "select_keyframe",
    "select_top_k_clusters",
    "summarize",
    "uniform_keyframes",
    "variance_of_laplacian",
]
