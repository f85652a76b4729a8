"""Serialization boundary: frame metadata, feature matrices, manifests.

Frame metadata travels as JSONL (one object per line, UTF-8, strict keys);
feature matrices use a compact little-endian binary layout (magic ``FEAT``,
u32 count, u32 dimension, then float32 rows); summary manifests and filter
reports are plain JSON documents. Parsers reject malformed input rather
than coercing it. Grayscale images for the blur path are stored as binary
PGM (P5).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import BadMagic, DimMismatch, FeatureFileError, OrderError, ParseError, RangeViolation
from .model import (
    FEATURE_DIM,
    NUM_LANDMARKS,
    FrameRecord,
    LandmarkPoint,
    LandmarkSet,
    SummaryEntry,
    SummaryManifest,
)

_FRAME_KEYS = ("frame_id", "t", "w", "h", "landmarks", "blur_var", "feat_row")
_FEATURE_MAGIC = b"FEAT"
_HEADER = struct.Struct("<4sII")


def _require_int(value, name: str, line: int | None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{name} must be an integer, got {value!r}", line)
    return value


def _require_number(value, name: str, line: int | None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{name} must be a number, got {value!r}", line)
    return float(value)


def _landmarks_from_wire(raw, line: int | None) -> LandmarkSet | None:
    if raw is None:
        return None
    if not isinstance(raw, list) or len(raw) != NUM_LANDMARKS:
        raise ParseError(f"landmarks must be null or an array of {NUM_LANDMARKS} entries", line)
    points: list[LandmarkPoint | None] = []
    for i, entry in enumerate(raw):
        if entry is None:
            points.append(None)
            continue
        if not isinstance(entry, list) or len(entry) != 3:
            raise ParseError(f"landmark {i} must be null or [x, y, conf]", line)
        x = _require_number(entry[0], f"landmark {i} x", line)
        y = _require_number(entry[1], f"landmark {i} y", line)
        conf = _require_number(entry[2], f"landmark {i} conf", line)
        try:
            points.append(LandmarkPoint(x=x, y=y, confidence=conf))
        except ValueError as exc:
            raise ParseError(str(exc), line) from exc
    return LandmarkSet(points=tuple(points))


def _landmarks_to_wire(lm: LandmarkSet | None):
    if lm is None:
        return None
    return [None if p is None else [p.x, p.y, p.confidence] for p in lm.points]


def frame_from_wire(
    obj: Mapping, line: int | None = None, extra_keys: frozenset[str] = frozenset()
) -> tuple[FrameRecord, int | None]:
    """Decode one wire object into (record, feature row index)."""
    if not isinstance(obj, dict):
        raise ParseError("frame message must be a JSON object", line)
    allowed = set(_FRAME_KEYS) | set(extra_keys)
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"unknown keys {sorted(unknown)}", line)
    missing = [k for k in _FRAME_KEYS if k not in obj]
    if missing:
        raise ParseError(f"missing keys {missing}", line)

    blur = obj["blur_var"]
    feat_row = obj["feat_row"]
    if feat_row is not None:
        feat_row = _require_int(feat_row, "feat_row", line)
        if feat_row < 0:
            raise ParseError(f"feat_row must be non-negative, got {feat_row}", line)
    try:
        rec = FrameRecord(
            frame_id=_require_int(obj["frame_id"], "frame_id", line),
            timestamp=_require_number(obj["t"], "t", line),
            width=_require_int(obj["w"], "w", line),
            height=_require_int(obj["h"], "h", line),
            landmarks=_landmarks_from_wire(obj["landmarks"], line),
            blur_variance=None if blur is None else _require_number(blur, "blur_var", line),
        )
    except ValueError as exc:
        raise ParseError(str(exc), line) from exc
    return rec, feat_row


def frame_to_wire(rec: FrameRecord, feat_row: int | None = None) -> dict:
    """Encode one record as a wire object (feature vector travels by row index)."""
    return {
        "frame_id": rec.frame_id,
        "t": rec.timestamp,
        "w": rec.width,
        "h": rec.height,
        "landmarks": _landmarks_to_wire(rec.landmarks),
        "blur_var": rec.blur_variance,
        "feat_row": feat_row,
    }


@dataclass(frozen=True)
class ParseResult:
    """Frames in stream order plus their feature-file row indices."""

    frames: tuple[FrameRecord, ...]
    feat_rows: tuple[int | None, ...]
    duplicates_dropped: int


def parse_frames_jsonl(stream: Iterable[str]) -> ParseResult:
    """Strictly parse JSONL frame metadata.

    Frames with a timestamp equal to their predecessor's are dropped
    (first occurrence wins) and counted; a decreasing timestamp raises
    :class:`OrderError`; duplicate frame ids raise :class:`ParseError`.
    """
    frames: list[FrameRecord] = []
    feat_rows: list[int | None] = []
    seen_ids: set[int] = set()
    duplicates = 0
    last_t: float | None = None
    for line_no, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            raise ParseError("blank line", line_no)
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line_no) from exc
        rec, feat_row = frame_from_wire(obj, line=line_no)
        if rec.frame_id in seen_ids:
            raise ParseError(f"duplicate frame_id {rec.frame_id}", line_no)
        seen_ids.add(rec.frame_id)
        if last_t is not None:
            if rec.timestamp < last_t:
                raise OrderError(rec.frame_id)
            if rec.timestamp == last_t:
                duplicates += 1
                continue
        frames.append(rec)
        feat_rows.append(feat_row)
        last_t = rec.timestamp
    return ParseResult(
        frames=tuple(frames), feat_rows=tuple(feat_rows), duplicates_dropped=duplicates
    )


def write_frames_jsonl(
    frames: Sequence[FrameRecord],
    stream: IO[str],
    feat_rows: Sequence[int | None] | None = None,
) -> np.ndarray | None:
    """Write frames as JSONL; returns the implied feature matrix.

    When ``feat_rows`` is omitted, rows are assigned in frame order to the
    frames that carry features and the collected float32 matrix is
    returned (``None`` when no frame has features). Pass explicit
    ``feat_rows`` to preserve indices into an existing feature file.
    """
    if feat_rows is not None:
        if len(feat_rows) != len(frames):
            raise ValueError("feat_rows must parallel frames")
        for rec, row in zip(frames, feat_rows):
            stream.write(json.dumps(frame_to_wire(rec, row)) + "\n")
        return None
    rows: list[np.ndarray] = []
    for rec in frames:
        row = None
        if rec.features is not None:
            row = len(rows)
            rows.append(rec.features.values)
        stream.write(json.dumps(frame_to_wire(rec, row)) + "\n")
    if not rows:
        return None
    return np.stack(rows).astype(np.float32)


def attach_features(result: ParseResult, matrix: np.ndarray) -> list[FrameRecord]:
    """Resolve feature row indices against a loaded matrix."""
    from dataclasses import replace

    from .model import FeatureVector

    out = []
    for rec, row in zip(result.frames, result.feat_rows):
        if row is None:
            out.append(rec)
            continue
        if row >= matrix.shape[0]:
            raise ParseError(f"frame {rec.frame_id}: feat_row {row} beyond matrix of {matrix.shape[0]} rows")
        out.append(replace(rec, features=FeatureVector(values=matrix[row])))
    return out


def save_features(matrix: np.ndarray, path: str | Path) -> None:
    """Write an n x 157 matrix in the FEAT binary layout (little-endian f32)."""
    arr = np.asarray(matrix, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected an n x {FEATURE_DIM} matrix, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_FEATURE_MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4").tobytes())


def load_features(path: str | Path) -> np.ndarray:
    """Load and validate a FEAT matrix; every component must lie in [0, 1]."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise BadMagic("feature file shorter than its header")
        magic, count, dim = _HEADER.unpack(header)
        if magic != _FEATURE_MAGIC:
            raise BadMagic(f"expected magic {_FEATURE_MAGIC!r}, got {magic!r}")
        if dim != FEATURE_DIM:
            raise DimMismatch(f"expected dimension {FEATURE_DIM}, got {dim}")
        payload = fh.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise FeatureFileError(
            f"expected {expected} payload bytes for {count} rows, got {len(payload)}"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)
    bad = ~((matrix >= 0.0) & (matrix <= 1.0))
    if bool(bad.any()):
        row, col = (int(v) for v in np.argwhere(bad)[0])
        raise RangeViolation(row, col, float(matrix[row, col]))
    return matrix


def manifest_to_dict(manifest: SummaryManifest) -> dict:
    return {
        "k": manifest.k,
        "h_star": manifest.h_star,
        "m": manifest.cluster_count,
        "entries": [
            {
                "cluster": e.cluster_index,
                "frame_id": e.frame_id,
                "t": e.timestamp,
                "cluster_size": e.cluster_size,
            }
            for e in manifest.entries
        ],
    }


def manifest_from_dict(obj: Mapping) -> SummaryManifest:
    if not isinstance(obj, dict):
        raise ParseError("manifest must be a JSON object")
    unknown = set(obj) - {"k", "h_star", "m", "entries"}
    if unknown:
        raise ParseError(f"unknown manifest keys {sorted(unknown)}")
    try:
        entries = []
        for item in obj["entries"]:
            extra = set(item) - {"cluster", "frame_id", "t", "cluster_size"}
            if extra:
                raise ParseError(f"unknown entry keys {sorted(extra)}")
            entries.append(
                SummaryEntry(
                    cluster_index=_require_int(item["cluster"], "cluster", None),
                    frame_id=_require_int(item["frame_id"], "frame_id", None),
                    timestamp=_require_number(item["t"], "t", None),
                    cluster_size=_require_int(item["cluster_size"], "cluster_size", None),
                )
            )
        return SummaryManifest(
            k=_require_int(obj["k"], "k", None),
            h_star=_require_number(obj["h_star"], "h_star", None),
            cluster_count=_require_int(obj["m"], "m", None),
            entries=tuple(entries),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed manifest: {exc!r}") from exc
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def write_summary_manifest(manifest: SummaryManifest, path: str | Path) -> None:
    """Write the manifest as a JSON document with stable key order.

    Floats keep full precision (``h_star`` of ``inf`` serializes as the
    JSON extension literal ``Infinity``), so a write/read round trip is
    lossless.
    """
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh)
        fh.write("\n")


def read_summary_manifest(path: str | Path) -> SummaryManifest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}") from exc
    return manifest_from_dict(obj)


def save_pgm(image: np.ndarray, path: str | Path) -> None:
    """Write an 8-bit grayscale image as binary PGM (P5)."""
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("PGM writer expects a 2-D grayscale image")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def load_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) image into a uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ParseError(f"{path}: not a binary PGM file")
    # Header is: magic, width, height, maxval; '#' comments may intervene.
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3 and pos < len(data):
        ch = data[pos : pos + 1]
        if ch == b"#":
            pos = data.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) < 3:
        raise ParseError(f"{path}: truncated PGM header")
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ParseError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1  # single whitespace byte after maxval
    if len(data) - pos < width * height:
        raise ParseError(f"{path}: truncated PGM payload")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).copy()
