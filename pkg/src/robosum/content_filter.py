"""Frame quality gate: blur scoring plus six ill-posed rejection rules.

A frame survives only if it is sharp and shows one adequately sized,
centered person whose face is visible. Rejection rules are evaluated in a
fixed precedence order and the first matching rule wins, so every rejected
frame carries exactly one :class:`~robosum.model.IllPosedReason`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ImageTooSmall, MissingBlurScore
from .model import (
    EYE_INDICES,
    NECK,
    NOSE,
    FrameRecord,
    IllPosedReason,
    LandmarkPoint,
    LandmarkSet,
)

#: Provider of grayscale pixels for frames lacking a precomputed blur score.
ImageProvider = Callable[[FrameRecord], "np.ndarray | None"]


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds for the rejection rules.

    ``blur_threshold`` is a variance on 0-255 grayscale; the geometric
    fractions are relative to frame width/height and deployment-specific.
    """

    blur_threshold: float = 100.0
    min_torso_fraction: float = 0.15
    corner_margin_fraction: float = 0.125
    forehead_margin_fraction: float = 0.08
    min_point_confidence: float = 0.3

    def __post_init__(self):
        if self.blur_threshold < 0:
            raise ValueError("blur_threshold must be non-negative")
        for name in ("min_torso_fraction", "corner_margin_fraction", "forehead_margin_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 0.5:
                raise ValueError(f"{name} must lie in (0, 0.5), got {value}")
        if not 0.0 <= self.min_point_confidence <= 1.0:
            raise ValueError("min_point_confidence must lie in [0, 1]")


@dataclass(frozen=True)
class FilterReport:
    """Accounting of one filtering pass: accepted + rejected == total."""

    total: int
    accepted: int
    rejected_by_reason: Mapping[IllPosedReason, int] = field(default_factory=dict)

    def __post_init__(self):
        counts = {reason: int(self.rejected_by_reason.get(reason, 0)) for reason in IllPosedReason}
        if self.accepted + sum(counts.values()) != self.total:
            raise ValueError("filter report does not balance")
        object.__setattr__(self, "rejected_by_reason", counts)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "accepted": self.accepted,
            "rejected_by_reason": {r.value: c for r, c in self.rejected_by_reason.items()},
        }


def variance_of_laplacian(image) -> float:
    """Population variance of the 3x3 Laplacian response over the interior.

    The kernel is [[0,1,0],[1,-4,1],[0,1,0]] applied to the valid region
    only (no border padding), in double precision. Constant images score
    exactly 0.0; low scores indicate blur.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale image, got ndim={img.ndim}")
    rows, cols = img.shape
    if rows < 3 or cols < 3:
        raise ImageTooSmall(f"image must be at least 3x3, got {cols}x{rows}")
    lap = (
        img[:-2, 1:-1]
        + img[2:, 1:-1]
        + img[1:-1, :-2]
        + img[1:-1, 2:]
        - 4.0 * img[1:-1, 1:-1]
    )
    mean = lap.mean()
    return float(np.mean((lap - mean) ** 2))


def _visible_points(
    lm: LandmarkSet | None, min_confidence: float
) -> dict[int, LandmarkPoint]:
    """Points that are present and at least ``min_confidence`` confident."""
    if lm is None:
        return {}
    return {
        i: p for i, p in enumerate(lm.points) if p is not None and p.confidence >= min_confidence
    }


def classify_frame(
    rec: FrameRecord,
    cfg: FilterConfig | None = None,
    image=None,
) -> IllPosedReason | None:
    """Classify one frame; ``None`` means well-posed.

    ``image`` supplies grayscale pixels when ``rec.blur_variance`` is absent.
    Raises :class:`MissingBlurScore` when neither is available.
    """
    cfg = cfg or FilterConfig()
    blur = rec.blur_variance
    if blur is None:
        if image is None:
            raise MissingBlurScore(rec.frame_id)
        blur = variance_of_laplacian(image)

    visible = _visible_points(rec.landmarks, cfg.min_point_confidence)
    if not visible:
        return IllPosedReason.PEOPLE_ABSENT
    if blur < cfg.blur_threshold:
        return IllPosedReason.BLURRED

    ys = [p.y for p in visible.values()]
    xs = [p.x for p in visible.values()]
    bbox_height = max(ys) - min(ys)
    if bbox_height < cfg.min_torso_fraction * rec.height:
        return IllPosedReason.TOO_SMALL

    neck = visible.get(NECK)
    center_x = neck.x if neck is not None else (min(xs) + max(xs)) / 2.0
    margin = cfg.corner_margin_fraction * rec.width
    if center_x <= margin or center_x >= rec.width - margin:
        return IllPosedReason.AT_CORNER

    nose = visible.get(NOSE)
    if nose is not None and nose.y < cfg.forehead_margin_fraction * rec.height:
        return IllPosedReason.FOREHEAD_CROPPED

    if not any(i in visible for i in EYE_INDICES):
        return IllPosedReason.EYES_INVISIBLE

    return None


def filter_frames(
    frames: Iterable[FrameRecord],
    cfg: FilterConfig | None = None,
    images: ImageProvider | None = None,
) -> tuple[list[FrameRecord], FilterReport]:
    """Split a timestamp-ordered stream into well-posed frames and a tally.

    Output preserves input order. ``images`` is consulted only for frames
    that carry no precomputed blur variance.
    """
    cfg = cfg or FilterConfig()
    accepted: list[FrameRecord] = []
    counts = {reason: 0 for reason in IllPosedReason}
    total = 0
    for rec in frames:
        total += 1
        image = images(rec) if images is not None else None
        try:
            reason = classify_frame(rec, cfg, image=image)
        except ImageTooSmall as exc:
            raise ImageTooSmall(f"frame {rec.frame_id}: {exc}") from exc
        if reason is None:
            accepted.append(rec)
        else:
            counts[reason] += 1
    report = FilterReport(total=total, accepted=len(accepted), rejected_by_reason=counts)
    return accepted, report
