"""Keyframe selection by temporal gap clustering.

Well-posed frames are partitioned into clusters wherever the gap between
consecutive timestamps reaches a threshold ``h``. The threshold is adapted
by doubling/halving from an initial value until the partition yields at
least ``k`` clusters while ``2h`` would yield fewer than ``k``; the ``k``
largest clusters then each contribute the frame nearest (in feature space)
to the cluster's mean. Two naive baselines, uniform index sampling and
feature-space k-means, are provided for comparison harnesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyCluster,
    EmptyInput,
    InfeasibleK,
    InsufficientFrames,
    MissingFeatures,
    NonTermination,
    TooFewClusters,
)
from .model import Cluster, FeatureVector, FrameRecord, SummaryEntry, SummaryManifest


@dataclass(frozen=True)
class SummarizerConfig:
    """Keyframe count and threshold-search parameters."""

    k: int = 8
    h0: float = 60.0
    max_adapt_iters: int = 64

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not (math.isfinite(self.h0) and self.h0 > 0):
            raise ValueError("h0 must be a positive finite number of seconds")
        if self.max_adapt_iters < 1:
            raise ValueError("max_adapt_iters must be at least 1")


def _as_timestamp_array(timestamps: Sequence[float] | np.ndarray) -> np.ndarray:
    ts = np.asarray(timestamps, dtype=np.float64)
    if ts.ndim != 1:
        raise ValueError("timestamps must be a 1-D sequence")
    if ts.size == 0:
        raise EmptyInput("no timestamps supplied")
    if ts.size > 1 and not bool(np.all(np.diff(ts) > 0)):
        raise ValueError("timestamps must be strictly increasing")
    return ts


def assign_clusters(
    timestamps: Sequence[float] | np.ndarray,
    h: float,
    frame_ids: Sequence[int] | None = None,
) -> list[Cluster]:
    """Partition strictly increasing timestamps at gaps of ``h`` or more.

    The first frame opens cluster 1; each later frame joins its
    predecessor's cluster iff the gap to it is below ``h``, otherwise it
    opens the next cluster. ``frame_ids`` defaults to sequence positions.
    """
    ts = _as_timestamp_array(timestamps)
    if not h > 0:
        raise ValueError(f"gap threshold must be positive, got {h}")
    n = ts.size
    if frame_ids is None:
        ids: Sequence[int] = range(n)
    else:
        ids = frame_ids
        if len(ids) != n:
            raise ValueError("frame_ids and timestamps must have equal length")

    breaks = np.flatnonzero(np.diff(ts) >= h) + 1
    bounds = np.concatenate(([0], breaks, [n]))
    clusters = []
    for j in range(len(bounds) - 1):
        a, b = int(bounds[j]), int(bounds[j + 1])
        clusters.append(
            Cluster(
                index=j + 1,
                frame_ids=tuple(ids[a:b]),
                start_time=float(ts[a]),
                end_time=float(ts[b - 1]),
            )
        )
    return clusters


def _cluster_count(gaps: np.ndarray, h: float) -> int:
    """Number of clusters a threshold induces, from precomputed gaps."""
    return 1 + int(np.count_nonzero(gaps >= h))


def adapt_threshold(
    timestamps: Sequence[float] | np.ndarray,
    k: int,
    h0: float = 60.0,
    max_iters: int = 64,
    frame_ids: Sequence[int] | None = None,
) -> tuple[float, list[Cluster]]:
    """Find a gap threshold giving at least ``k`` clusters, doubling less.

    Starting from ``h0``, the threshold is doubled while it still yields at
    least ``k`` clusters and halved otherwise, stopping as soon as the
    current value ``h`` satisfies ``m(h) >= k`` and ``m(2h) < k`` (checked
    before each update). A request for a single cluster is satisfied by one
    cluster spanning all frames (threshold reported as ``inf``, since no
    finite threshold can take ``m`` below 1).
    """
    ts = _as_timestamp_array(timestamps)
    if k < 1:
        raise ValueError("k must be at least 1")
    if not (math.isfinite(h0) and h0 > 0):
        raise ValueError("h0 must be positive and finite")
    n = ts.size
    if n < k:
        raise InfeasibleK(n=n, k=k)
    if k == 1:
        return math.inf, assign_clusters(ts, math.inf, frame_ids=frame_ids)

    gaps = np.diff(ts)
    h = float(h0)
    for _ in range(max_iters):
        m = _cluster_count(gaps, h)
        if m >= k and _cluster_count(gaps, 2.0 * h) < k:
            return h, assign_clusters(ts, h, frame_ids=frame_ids)
        h = 2.0 * h if m >= k else h / 2.0
    raise NonTermination(f"threshold search did not settle within {max_iters} iterations")


def select_top_k_clusters(clusters: Sequence[Cluster], k: int) -> list[Cluster]:
    """Keep the ``k`` largest clusters, returned in temporal order.

    Size ties at the cut are broken in favor of the earlier start time.
    """
    if len(clusters) < k:
        raise TooFewClusters(f"have {len(clusters)} clusters, need {k}")
    kept = sorted(clusters, key=lambda c: (-c.size, c.start_time))[:k]
    kept.sort(key=lambda c: c.start_time)
    return kept


def cluster_mean(features: Sequence[FeatureVector]) -> np.ndarray:
    """Component-wise arithmetic mean of the given feature vectors."""
    if len(features) == 0:
        raise EmptyCluster("cannot take the mean of zero feature vectors")
    stacked = np.stack([f.values for f in features]).astype(np.float64)
    return stacked.mean(axis=0)


def _feature_matrix(frames: Sequence[FrameRecord]) -> np.ndarray:
    for f in frames:
        if f.features is None:
            raise MissingFeatures(f.frame_id)
    return np.stack([f.features.values for f in frames]).astype(np.float64)


def _nearest_row(matrix: np.ndarray, center: np.ndarray, timestamps: np.ndarray) -> int:
    """Row index closest (Euclidean) to ``center``; ties -> earliest timestamp."""
    dists = np.linalg.norm(matrix - center, axis=1)
    tied = np.flatnonzero(dists == dists.min())
    return int(tied[np.argmin(timestamps[tied])])


def select_keyframe(frames: Sequence[FrameRecord]) -> int:
    """Frame id of the cluster member nearest the cluster's mean features.

    Distance is Euclidean; exact distance ties go to the earliest timestamp.
    """
    if len(frames) == 0:
        raise EmptyCluster("cannot select a keyframe from an empty cluster")
    matrix = _feature_matrix(frames)
    ts = np.asarray([f.timestamp for f in frames], dtype=np.float64)
    row = _nearest_row(matrix, matrix.mean(axis=0), ts)
    return frames[row].frame_id


def summarize(
    frames: Sequence[FrameRecord],
    cfg: SummarizerConfig | None = None,
) -> SummaryManifest:
    """Produce the keyframe manifest for a well-posed, feature-bearing session.

    Sessions shorter than ``k`` frames degrade to one keyframe per frame
    (flagged via :attr:`SummaryManifest.is_short_session`); an empty session
    yields an empty manifest. Deterministic for fixed input.
    """
    cfg = cfg or SummarizerConfig()
    frames = list(frames)
    n = len(frames)
    if n == 0:
        return SummaryManifest(k=cfg.k, h_star=0.0, cluster_count=0, entries=())

    matrix = _feature_matrix(frames)
    ts = _as_timestamp_array([f.timestamp for f in frames])
    ids = [f.frame_id for f in frames]

    if n < cfg.k:
        entries = tuple(
            SummaryEntry(cluster_index=i + 1, frame_id=ids[i], timestamp=float(ts[i]), cluster_size=1)
            for i in range(n)
        )
        return SummaryManifest(k=cfg.k, h_star=0.0, cluster_count=n, entries=entries)

    h_star, clusters = adapt_threshold(
        ts, cfg.k, h0=cfg.h0, max_iters=cfg.max_adapt_iters, frame_ids=ids
    )
    kept = clusters if len(clusters) == cfg.k else select_top_k_clusters(clusters, cfg.k)

    pos = {fid: i for i, fid in enumerate(ids)}
    entries = []
    for cluster in kept:
        rows = [pos[fid] for fid in cluster.frame_ids]
        sub = matrix[rows]
        row = _nearest_row(sub, sub.mean(axis=0), ts[rows])
        keyframe = frames[rows[row]]
        entries.append(
            SummaryEntry(
                cluster_index=cluster.index,
                frame_id=keyframe.frame_id,
                timestamp=keyframe.timestamp,
                cluster_size=cluster.size,
            )
        )
    entries.sort(key=lambda e: e.timestamp)
    return SummaryManifest(
        k=cfg.k, h_star=h_star, cluster_count=len(clusters), entries=tuple(entries)
    )


def uniform_keyframes(frames: Sequence[FrameRecord], k: int) -> SummaryManifest:
    """Index-uniform baseline: frames at round(i*(n-1)/(k-1)), de-duplicated."""
    frames = list(frames)
    n = len(frames)
    if n == 0:
        raise EmptyInput("cannot summarize an empty session")
    if k < 1:
        raise ValueError("k must be at least 1")
    if k == 1:
        indices = [(n - 1) // 2]
    elif k >= n:
        indices = list(range(n))
    else:
        step = (n - 1) / (k - 1)
        indices = sorted({int(math.floor(i * step + 0.5)) for i in range(k)})
    entries = tuple(
        SummaryEntry(
            cluster_index=rank + 1,
            frame_id=frames[i].frame_id,
            timestamp=frames[i].timestamp,
            cluster_size=1,
        )
        for rank, i in enumerate(indices)
    )
    return SummaryManifest(k=k, h_star=0.0, cluster_count=len(entries), entries=entries)


def kmeans_keyframes(
    frames: Sequence[FrameRecord], k: int, seed: int = 0
) -> SummaryManifest:
    """Feature-space k-means baseline (Lloyd iterations, seeded, deterministic).

    Initial centroids are ``k`` distinct frames drawn by seeded uniform
    sampling; iteration stops after 100 rounds or when the largest centroid
    movement falls below 1e-6. Each cluster contributes its member nearest
    the centroid; output is temporally sorted.
    """
    frames = list(frames)
    n = len(frames)
    if n < k:
        raise InsufficientFrames(f"k-means needs at least k={k} frames, got {n}")
    if k < 1:
        raise ValueError("k must be at least 1")
    matrix = _feature_matrix(frames)
    ts = np.asarray([f.timestamp for f in frames], dtype=np.float64)

    rng = np.random.default_rng(seed)
    centroids = matrix[rng.choice(n, size=k, replace=False)].copy()

    sq_norms = (matrix**2).sum(axis=1)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(100):
        # Squared distances via the expansion |x|^2 + |c|^2 - 2 x.c.
        d2 = sq_norms[:, None] + (centroids**2).sum(axis=1)[None, :] - 2.0 * matrix @ centroids.T
        assign = np.argmin(d2, axis=1)
        # Re-seed any emptied cluster with the farthest point of a cluster
        # that can spare one; feasible because n >= k.
        counts = np.bincount(assign, minlength=k)
        if np.any(counts == 0):
            own = np.take_along_axis(d2, assign[:, None], axis=1).ravel()
            for j in range(k):
                if counts[j] > 0:
                    continue
                donors = np.flatnonzero(counts[assign] > 1)
                idx = int(donors[np.argmax(own[donors])])
                counts[assign[idx]] -= 1
                assign[idx] = j
                counts[j] += 1
        new_centroids = np.stack([matrix[assign == j].mean(axis=0) for j in range(k)])
        movement = float(np.linalg.norm(new_centroids - centroids, axis=1).max())
        centroids = new_centroids
        if movement < 1e-6:
            break

    entries = []
    for j in range(k):
        members = np.flatnonzero(assign == j)
        row = _nearest_row(matrix[members], centroids[j], ts[members])
        keyframe = frames[int(members[row])]
        entries.append(
            SummaryEntry(
                cluster_index=j + 1,
                frame_id=keyframe.frame_id,
                timestamp=keyframe.timestamp,
                cluster_size=int(members.size),
            )
        )
    entries.sort(key=lambda e: e.timestamp)
    return SummaryManifest(k=k, h_star=0.0, cluster_count=k, entries=tuple(entries))


def cluster_occupancy_histogram(clusters: Iterable[Cluster], width: int = 50) -> str:
    """Plain-text bar chart of cluster sizes, for verbose CLI output."""
    clusters = list(clusters)
    if not clusters:
        return "(no clusters)"
    largest = max(c.size for c in clusters)
    lines = []
    for c in clusters:
        bar = "#" * max(1, round(c.size / largest * width))
        lines.append(f"cluster {c.index:>3} [{c.start_time:>10.1f}s .. {c.end_time:>10.1f}s] {c.size:>6} {bar}")
    return "\n".join(lines)
