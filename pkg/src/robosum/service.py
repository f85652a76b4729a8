"""Frame-analysis service over TCP with newline-delimited JSON.

One connection is one session. For every ``frame`` message the server runs
the content filter and one controller step and replies with an ``action``
message; well-posed frames with inline features accumulate until an
``end_session`` message triggers summarization and a ``summary`` reply.
Protocol violations get an ``error`` reply and close only the offending
connection. Replies are written as they are produced, so per-session
memory stays proportional to the well-posed frame count.

The wire encoding helpers here are shared with the offline simulator so
that a replayed session and an offline run produce byte-identical traces.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from .content_filter import FilterConfig, classify_frame
from .controller import (
    ActionCommand,
    ControllerConfig,
    controller_step,
    initial_state,
    observation_from_frame,
)
from .errors import ConnectionLost, ParseError, PipelineError
from .frameio import FEATURE_DIM, ParseResult, frame_from_wire, frame_to_wire, manifest_to_dict
from .model import FeatureVector, FrameRecord
from .summarizer import SummarizerConfig, summarize

logger = logging.getLogger(__name__)

_FRAME_EXTRA_KEYS = frozenset({"type", "features"})


def dumps_wire(obj: dict) -> str:
    """Canonical one-line JSON encoding used on the wire and in traces."""
    return json.dumps(obj, separators=(",", ":"))


def action_to_wire(frame_id: int, cmd: ActionCommand) -> dict:
    return {
        "type": "action",
        "frame_id": frame_id,
        "rotate_deg": cmd.rotate_deg,
        "pitch_deg": cmd.pitch_deg,
        "forward_m": cmd.forward_m,
        "expression": cmd.expression.value,
        "mode": cmd.new_mode.value,
    }


def simulate_actions(
    frames: Sequence[FrameRecord], cfg: ControllerConfig | None = None
) -> list[str]:
    """Offline controller run: one encoded action line per frame, in order."""
    cfg = cfg or ControllerConfig()
    state = initial_state()
    lines = []
    for rec in frames:
        state, cmd = controller_step(state, observation_from_frame(rec), cfg)
        lines.append(dumps_wire(action_to_wire(rec.frame_id, cmd)))
    return lines


@dataclass(frozen=True)
class ServiceConfig:
    """Per-server settings; summarizer k/h0 arrive with each end_session."""

    filter_config: FilterConfig = field(default_factory=FilterConfig)
    controller_config: ControllerConfig = field(default_factory=ControllerConfig)
    max_adapt_iters: int = 64


def _decode_inline_features(raw, line_no: int | None) -> FeatureVector | None:
    if raw is None:
        return None
    if not isinstance(raw, list) or len(raw) != FEATURE_DIM:
        raise ParseError(f"features must be null or an array of {FEATURE_DIM} numbers", line_no)
    try:
        return FeatureVector(values=np.asarray(raw, dtype=np.float64))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad feature vector: {exc}", line_no) from exc


class _SessionHandler(socketserver.StreamRequestHandler):
    """One TCP connection == one session with private state."""

    def _reply(self, obj: dict) -> None:
        self.wfile.write((dumps_wire(obj) + "\n").encode("utf-8"))
        self.wfile.flush()

    def _fail(self, code: str, msg: str) -> None:
        try:
            self._reply({"type": "error", "code": code, "msg": msg})
        except OSError:
            pass

    def handle(self) -> None:
        cfg: ServiceConfig = self.server.service_config  # type: ignore[attr-defined]
        state = initial_state()
        well_posed: list[FrameRecord] = []
        featureless_well_posed = 0
        line_no = 0
        try:
            for raw in self.rfile:
                line_no += 1
                try:
                    msg = json.loads(raw.decode("utf-8"))
                except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                    self._fail("parse_error", f"line {line_no}: invalid JSON ({exc})")
                    return
                if not isinstance(msg, dict) or "type" not in msg:
                    self._fail("protocol_error", f"line {line_no}: message must be an object with a type")
                    return
                kind = msg["type"]
                if kind == "frame":
                    try:
                        rec, _ = frame_from_wire(msg, line=line_no, extra_keys=_FRAME_EXTRA_KEYS)
                        features = _decode_inline_features(msg.get("features"), line_no)
                        reason = classify_frame(rec, cfg.filter_config)
                        state, cmd = controller_step(
                            state, observation_from_frame(rec), cfg.controller_config
                        )
                    except PipelineError as exc:
                        self._fail("data_error", str(exc))
                        return
                    self._reply(action_to_wire(rec.frame_id, cmd))
                    if reason is None:
                        if features is None:
                            featureless_well_posed += 1
                        else:
                            well_posed.append(replace(rec, features=features))
                elif kind == "end_session":
                    try:
                        unknown = set(msg) - {"type", "k", "h0"}
                        if unknown:
                            raise ValueError(f"unknown keys {sorted(unknown)}")
                        k = msg["k"]
                        h0 = msg["h0"]
                        if isinstance(k, bool) or not isinstance(k, int):
                            raise ValueError(f"k must be an integer, got {k!r}")
                        if isinstance(h0, bool) or not isinstance(h0, (int, float)):
                            raise ValueError(f"h0 must be a number, got {h0!r}")
                        summarizer_cfg = SummarizerConfig(
                            k=k, h0=float(h0), max_adapt_iters=cfg.max_adapt_iters
                        )
                    except (KeyError, TypeError, ValueError) as exc:
                        self._fail("protocol_error", f"bad end_session: {exc}")
                        return
                    try:
                        manifest = summarize(well_posed, summarizer_cfg)
                    except PipelineError as exc:
                        self._fail("data_error", str(exc))
                        return
                    if featureless_well_posed:
                        logger.info(
                            "session summarized; %d well-posed frames lacked features",
                            featureless_well_posed,
                        )
                    self._reply({"type": "summary", **manifest_to_dict(manifest)})
                    return
                else:
                    self._fail("protocol_error", f"unknown message type {kind!r}")
                    return
        except (ConnectionResetError, BrokenPipeError):
            logger.info("client disconnected mid-session")


class FrameServer(socketserver.ThreadingTCPServer):
    """Threaded NDJSON server; sessions are fully isolated."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], config: ServiceConfig | None = None):
        super().__init__(address, _SessionHandler)
        self.service_config = config or ServiceConfig()

    @property
    def bound_address(self) -> tuple[str, int]:
        return self.socket.getsockname()[:2]


def make_server(host: str, port: int, config: ServiceConfig | None = None) -> FrameServer:
    """Bind a server without starting its accept loop (port 0 picks a free one)."""
    return FrameServer((host, port), config)


def serve(host: str, port: int, config: ServiceConfig | None = None) -> None:
    """Run the server until KeyboardInterrupt; closes cleanly on exit."""
    with make_server(host, port, config) as server:
        bound = server.bound_address
        logger.info("serving on %s:%d", bound[0], bound[1])
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            logger.info("interrupt received, shutting down")


@dataclass(frozen=True)
class ReplayResult:
    """Raw reply lines collected by the replay client."""

    action_lines: tuple[str, ...]
    summary_line: str | None
    error_line: str | None


class _LineClient:
    def __init__(self, host: str, port: int):
        self._sock = socket.create_connection((host, port))
        self._rfile = self._sock.makefile("rb")

    def send(self, obj: dict) -> None:
        self._sock.sendall((dumps_wire(obj) + "\n").encode("utf-8"))

    def recv_line(self) -> str | None:
        raw = self._rfile.readline()
        if not raw:
            return None
        return raw.decode("utf-8").rstrip("\n")

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()


def replay_session(
    host: str,
    port: int,
    parsed: ParseResult,
    features: np.ndarray | None = None,
    rate: float | str = "max",
    k: int = 8,
    h0: float = 60.0,
    trace: IO[str] | None = None,
) -> ReplayResult:
    """Stream a recorded session to a server in lock-step and collect replies.

    ``rate`` is a real-time multiplier or ``"max"`` to ignore timestamps.
    Raises :class:`ConnectionLost` (with the last acknowledged frame id)
    if the server goes away mid-session.
    """
    if rate != "max":
        rate = float(rate)
        if rate <= 0:
            raise ValueError("rate must be positive or 'max'")

    client = _LineClient(host, port)
    actions: list[str] = []
    summary_line: str | None = None
    error_line: str | None = None
    last_acked: int | None = None
    try:
        prev_t: float | None = None
        for rec, row in zip(parsed.frames, parsed.feat_rows):
            if rate != "max" and prev_t is not None:
                delay = (rec.timestamp - prev_t) / rate
                if delay > 0:
                    time.sleep(delay)
            prev_t = rec.timestamp
            msg = {"type": "frame", **frame_to_wire(rec, row)}
            if features is not None and row is not None:
                msg["features"] = [float(v) for v in features[row]]
            else:
                msg["features"] = None
            try:
                client.send(msg)
                reply = client.recv_line()
            except OSError as exc:
                raise ConnectionLost(last_acked) from exc
            if reply is None:
                raise ConnectionLost(last_acked)
            if trace is not None:
                trace.write(reply + "\n")
            if json.loads(reply).get("type") == "error":
                return ReplayResult(tuple(actions), None, reply)
            actions.append(reply)
            last_acked = rec.frame_id
        try:
            client.send({"type": "end_session", "k": k, "h0": h0})
            reply = client.recv_line()
        except OSError as exc:
            raise ConnectionLost(last_acked) from exc
        if reply is None:
            raise ConnectionLost(last_acked)
        if trace is not None:
            trace.write(reply + "\n")
        if json.loads(reply).get("type") == "error":
            error_line = reply
        else:
            summary_line = reply
    finally:
        client.close()
    return ReplayResult(tuple(actions), summary_line, error_line)


def run_server_in_thread(
    config: ServiceConfig | None = None, host: str = "127.0.0.1"
) -> tuple[FrameServer, threading.Thread]:
    """Start a server on an ephemeral port in a daemon thread (for tests/tools)."""
    server = make_server(host, 0, config)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
