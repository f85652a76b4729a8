"""Rule-based person-following state machine.

The controller consumes one :class:`Observation` per captured frame and
emits one :class:`ActionCommand`. While a person is visible it keeps the
face near the upper-center of the frame and closes in to a stop distance;
when the person is lost it turns in 30-degree steps toward the side the
person was last seen, raises its head after one fruitless revolution, and
falls idle after a second. It is a pure function of (state, observation,
config), so traces are reproducible by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .errors import InsufficientLandmarks, NoFacialLandmarks
from .model import EYE_INDICES, FACIAL_INDICES, L_HIP, NECK, R_HIP, FrameRecord, LandmarkSet

#: Hard cap on a single rotation command, degrees.
MAX_ROTATE_DEG = 30.0


class Mode(Enum):
    FOLLOWING = "following"
    SEARCHING = "searching"
    IDLE = "idle"


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"
    UNKNOWN = "unknown"


class Expression(Enum):
    DEFAULT_STILL = "default_still"
    EXPECTING = "expecting"
    ACTIVE = "active"
    AWARE_LEFT = "aware_left"
    AWARE_RIGHT = "aware_right"


@dataclass(frozen=True)
class Observation:
    """One frame's worth of sensing: dimensions plus the target's landmarks."""

    timestamp: float
    width: int
    height: int
    landmarks: LandmarkSet | None = None


def observation_from_frame(rec: FrameRecord) -> Observation:
    return Observation(
        timestamp=rec.timestamp, width=rec.width, height=rec.height, landmarks=rec.landmarks
    )


@dataclass(frozen=True)
class ControllerConfig:
    """Movement and gaze parameters.

    ``calibration_alpha_px_m`` converts torso pixel length to meters via
    distance = alpha / torso_px and must be calibrated per camera. The
    search geometry requires turns_per_revolution * search_turn_deg == 360.
    """

    stop_distance_m: float = 2.0
    forward_step_m: float = 0.3
    search_turn_deg: float = 30.0
    search_pitch_deg: float = 15.0
    idle_duration_s: float = 900.0
    turns_per_revolution: int = 12
    gaze_target_x_frac: float = 0.5
    gaze_target_y_frac: float = 0.25
    fov_h_deg: float = 62.0
    fov_v_deg: float = 38.0
    calibration_alpha_px_m: float = 300.0
    face_raise_pitch_deg: float = 10.0
    max_pitch_deg: float = 45.0
    min_point_confidence: float = 0.3

    def __post_init__(self):
        numeric = (
            self.stop_distance_m,
            self.forward_step_m,
            self.search_turn_deg,
            self.search_pitch_deg,
            self.idle_duration_s,
            self.turns_per_revolution,
            self.gaze_target_x_frac,
            self.gaze_target_y_frac,
            self.fov_h_deg,
            self.fov_v_deg,
            self.calibration_alpha_px_m,
            self.face_raise_pitch_deg,
            self.max_pitch_deg,
        )
        if any(v <= 0 for v in numeric):
            raise ValueError("all controller parameters must be positive")
        if self.turns_per_revolution * self.search_turn_deg != 360.0:
            raise ValueError("turns_per_revolution * search_turn_deg must equal 360")
        if self.search_turn_deg > MAX_ROTATE_DEG:
            raise ValueError(f"search_turn_deg must not exceed {MAX_ROTATE_DEG}")
        if not 0.0 <= self.min_point_confidence <= 1.0:
            raise ValueError("min_point_confidence must lie in [0, 1]")


@dataclass(frozen=True)
class ControllerState:
    """Mutable-through-replacement controller state between steps."""

    mode: Mode = Mode.SEARCHING
    turns_done: int = 0
    pitch_raised: bool = False
    search_direction: Side = Side.RIGHT
    last_seen_side: Side = Side.UNKNOWN
    current_pitch: float = 0.0
    idle_until: float = 0.0

    def __post_init__(self):
        if self.turns_done < 0:
            raise ValueError("turns_done must be non-negative")


def initial_state() -> ControllerState:
    """State at session start: searching, untouched head, no history."""
    return ControllerState()


@dataclass(frozen=True)
class ActionCommand:
    """One step's actuation: rotation, optional absolute pitch, forward motion.

    Positive ``rotate_deg`` turns right; ``pitch_deg`` is an absolute neck
    target (``None`` when unchanged); ``new_mode`` echoes the state the
    controller entered.
    """

    rotate_deg: float
    pitch_deg: float | None
    forward_m: float
    expression: Expression
    new_mode: Mode

    def __post_init__(self):
        if abs(self.rotate_deg) > MAX_ROTATE_DEG:
            raise ValueError(f"|rotate_deg| must not exceed {MAX_ROTATE_DEG}")
        if self.forward_m < 0:
            raise ValueError("forward_m must be non-negative")


def _confident_subset(lm: LandmarkSet | None, min_confidence: float) -> LandmarkSet | None:
    """Drop points below the confidence floor; None when nothing survives."""
    if lm is None:
        return None
    pts = tuple(
        p if (p is not None and p.confidence >= min_confidence) else None for p in lm.points
    )
    if all(p is None for p in pts):
        return None
    return LandmarkSet(points=pts)


def estimate_distance_m(lm: LandmarkSet, cfg: ControllerConfig) -> float:
    """Camera-to-person distance from torso pixel length.

    The torso length is the mean of the neck-to-hip pixel distances over
    the present hips; distance is calibration_alpha_px_m / torso_px.
    """
    neck = lm.neck
    hips = [p for p in (lm.r_hip, lm.l_hip) if p is not None]
    if neck is None or not hips:
        raise InsufficientLandmarks("need the neck and at least one hip")
    torso_px = sum(math.hypot(h.x - neck.x, h.y - neck.y) for h in hips) / len(hips)
    if torso_px <= 0:
        raise InsufficientLandmarks("neck and hip coincide; torso length is zero")
    return cfg.calibration_alpha_px_m / torso_px


def gaze_adjustment(
    lm: LandmarkSet, width: int, height: int, cfg: ControllerConfig
) -> tuple[float, float]:
    """Pan and pitch deltas (degrees) that move the face toward upper-center.

    Uses the nose when present, otherwise the centroid of the present
    facial points. Positive pitch tilts up.
    """
    nose = lm.nose
    if nose is not None:
        ref_x, ref_y = nose.x, nose.y
    else:
        pts = [lm.points[i] for i in FACIAL_INDICES if lm.points[i] is not None]
        if not pts:
            raise NoFacialLandmarks("no facial landmark available for gaze control")
        ref_x = sum(p.x for p in pts) / len(pts)
        ref_y = sum(p.y for p in pts) / len(pts)
    pan = (ref_x / width - cfg.gaze_target_x_frac) * cfg.fov_h_deg
    pitch_delta = (cfg.gaze_target_y_frac - ref_y / height) * cfg.fov_v_deg
    return pan, pitch_delta


def select_expression(
    state: ControllerState, obs: Observation, cfg: ControllerConfig | None = None
) -> Expression:
    """Facial expression for the state just entered and the current view."""
    cfg = cfg or ControllerConfig()
    if state.mode is Mode.SEARCHING:
        return Expression.AWARE_LEFT if state.search_direction is Side.LEFT else Expression.AWARE_RIGHT
    visible = _confident_subset(obs.landmarks, cfg.min_point_confidence)
    if visible is not None:
        if any(visible.points[i] is not None for i in EYE_INDICES):
            return Expression.ACTIVE
        return Expression.EXPECTING
    return Expression.DEFAULT_STILL


def _clamp(value: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, value))


def _person_side(lm: LandmarkSet, width: int) -> Side:
    xs = [p.x for p in lm.points if p is not None]
    center = (min(xs) + max(xs)) / 2.0
    return Side.LEFT if center < width / 2.0 else Side.RIGHT


def _noop(state: ControllerState, obs: Observation, cfg: ControllerConfig) -> ActionCommand:
    return ActionCommand(
        rotate_deg=0.0,
        pitch_deg=None,
        forward_m=0.0,
        expression=select_expression(state, obs, cfg),
        new_mode=state.mode,
    )


def _follow(
    state: ControllerState, obs: Observation, visible: LandmarkSet, cfg: ControllerConfig
) -> tuple[ControllerState, ActionCommand]:
    side = _person_side(visible, obs.width)
    facial = [i for i in FACIAL_INDICES if visible.points[i] is not None]
    rotate = 0.0
    pitch_target: float | None = None
    forward = 0.0
    new_pitch = state.current_pitch

    if facial:
        pan, pitch_delta = gaze_adjustment(visible, obs.width, obs.height, cfg)
        rotate = _clamp(pan, -MAX_ROTATE_DEG, MAX_ROTATE_DEG)
        new_pitch = _clamp(
            state.current_pitch + pitch_delta, -cfg.max_pitch_deg, cfg.max_pitch_deg
        )
        if new_pitch != state.current_pitch:
            pitch_target = new_pitch
        has_hip = visible.points[R_HIP] is not None or visible.points[L_HIP] is not None
        if visible.points[NECK] is not None and has_hip:
            distance = estimate_distance_m(visible, cfg)
            forward = min(max(distance - cfg.stop_distance_m, 0.0), cfg.forward_step_m)
    elif visible.points[NECK] is not None:
        # Face hidden but neck seen: raise the head to look for the face.
        new_pitch = min(state.current_pitch + cfg.face_raise_pitch_deg, cfg.max_pitch_deg)
        if new_pitch != state.current_pitch:
            pitch_target = new_pitch

    new_state = replace(
        state,
        mode=Mode.FOLLOWING,
        turns_done=0,
        pitch_raised=False,
        last_seen_side=side,
        current_pitch=new_pitch,
        idle_until=0.0,
    )
    cmd = ActionCommand(
        rotate_deg=rotate,
        pitch_deg=pitch_target,
        forward_m=forward,
        expression=select_expression(new_state, obs, cfg),
        new_mode=Mode.FOLLOWING,
    )
    return new_state, cmd


def _search(
    state: ControllerState, obs: Observation, cfg: ControllerConfig
) -> tuple[ControllerState, ActionCommand]:
    turns = state.turns_done if state.mode is Mode.SEARCHING else 0
    if turns >= 2 * cfg.turns_per_revolution:
        new_state = replace(
            state,
            mode=Mode.IDLE,
            turns_done=0,
            pitch_raised=False,
            idle_until=obs.timestamp + cfg.idle_duration_s,
        )
        return new_state, _noop(new_state, obs, cfg)

    direction = Side.RIGHT if state.last_seen_side is Side.UNKNOWN else state.last_seen_side
    rotate = cfg.search_turn_deg if direction is Side.RIGHT else -cfg.search_turn_deg
    pitch_target: float | None = None
    pitch_raised = state.pitch_raised
    new_pitch = state.current_pitch
    if turns >= cfg.turns_per_revolution and not pitch_raised:
        # One full fruitless revolution: raise the neck to spot distant people.
        pitch_target = cfg.search_pitch_deg
        new_pitch = cfg.search_pitch_deg
        pitch_raised = True

    new_state = replace(
        state,
        mode=Mode.SEARCHING,
        turns_done=turns + 1,
        pitch_raised=pitch_raised,
        search_direction=direction,
        current_pitch=new_pitch,
        idle_until=0.0,
    )
    cmd = ActionCommand(
        rotate_deg=rotate,
        pitch_deg=pitch_target,
        forward_m=0.0,
        expression=select_expression(new_state, obs, cfg),
        new_mode=Mode.SEARCHING,
    )
    return new_state, cmd


def controller_step(
    state: ControllerState, obs: Observation, cfg: ControllerConfig | None = None
) -> tuple[ControllerState, ActionCommand]:
    """Advance the state machine by one observation.

    Total over valid inputs: every observation yields exactly one command.
    """
    cfg = cfg or ControllerConfig()
    visible = _confident_subset(obs.landmarks, cfg.min_point_confidence)

    if state.mode is Mode.IDLE and visible is None:
        if obs.timestamp < state.idle_until:
            return state, _noop(state, obs, cfg)
        # Idle period over with nobody in sight: start a fresh search cycle.
        state = replace(state, mode=Mode.SEARCHING, turns_done=0, pitch_raised=False, idle_until=0.0)

    if visible is not None:
        return _follow(state, obs, visible, cfg)
    return _search(state, obs, cfg)
