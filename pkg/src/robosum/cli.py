"""Operator command line: generate, filter, summarize, simulate, serve, replay.

Exit codes: 0 success, 1 usage/configuration error, 2 data error (the
underlying module's message is printed verbatim).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import frameio, scenario, service
from .content_filter import FilterConfig, filter_frames
from .controller import ControllerConfig
from .errors import PipelineError
from .model import IllPosedReason
from .summarizer import (
    SummarizerConfig,
    assign_clusters,
    cluster_occupancy_histogram,
    kmeans_keyframes,
    summarize,
    uniform_keyframes,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage by default; this project uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError("must be a positive number")
    return value


def _rate(text: str):
    if text == "max":
        return "max"
    value = float(text)
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError("must be 'max' or a positive multiplier")
    return value


@dataclasses.dataclass(frozen=True)
class AppConfig:
    filter: FilterConfig
    summarizer: SummarizerConfig
    controller: ControllerConfig


def load_app_config(path: str | None) -> AppConfig:
    """Merge a JSON config file over the built-in defaults.

    The file may define "filter", "summarizer", and "controller" sections;
    unknown sections or keys are errors so typos cannot silently pass.
    """
    sections = {"filter": FilterConfig, "summarizer": SummarizerConfig, "controller": ControllerConfig}
    values = {"filter": FilterConfig(), "summarizer": SummarizerConfig(), "controller": ControllerConfig()}
    if path is None:
        return AppConfig(**values)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise _UsageError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise _UsageError("config file must hold a JSON object")
    unknown = set(obj) - set(sections)
    if unknown:
        raise _UsageError(f"unknown config sections {sorted(unknown)}")
    for name, cls in sections.items():
        if name not in obj:
            continue
        section = obj[name]
        if not isinstance(section, dict):
            raise _UsageError(f"config section {name!r} must be an object")
        field_names = {f.name for f in dataclasses.fields(cls)}
        bad = set(section) - field_names
        if bad:
            raise _UsageError(f"unknown keys in config section {name!r}: {sorted(bad)}")
        try:
            values[name] = cls(**section)
        except (TypeError, ValueError) as exc:
            raise _UsageError(f"bad value in config section {name!r}: {exc}") from exc
    return AppConfig(**values)


def _image_provider(directory: str | None):
    if directory is None:
        return None
    root = Path(directory)

    def load(rec):
        path = root / f"{rec.frame_id}.pgm"
        if not path.exists():
            return None
        return frameio.load_pgm(path)

    return load


def _parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise _UsageError(f"--addr must look like HOST:PORT, got {text!r}")
    try:
        return host, int(port)
    except ValueError as exc:
        raise _UsageError(f"bad port in {text!r}") from exc


# --- subcommand implementations ----------------------------------------------


def _cmd_gen(args, cfg: AppConfig) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        try:
            spec_obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise _UsageError(f"scenario spec is not valid JSON: {exc}") from exc
    spec = scenario.spec_from_dict(spec_obj)
    if args.seed is not None:
        spec = dataclasses.replace(spec, rng_seed=args.seed)
    frames, truth = scenario.generate_session(spec, cfg.filter)

    if args.images:
        images_dir = Path(args.images)
        images_dir.mkdir(parents=True, exist_ok=True)
        blurred = {t.frame_id for t in truth if t.reason is IllPosedReason.BLURRED}
        stripped = []
        for rec in frames:
            frameio.save_pgm(
                scenario.frame_image(rec.frame_id, rec.frame_id in blurred, seed=spec.rng_seed),
                images_dir / f"{rec.frame_id}.pgm",
            )
            stripped.append(dataclasses.replace(rec, blur_variance=None))
        frames = stripped

    with open(args.out, "w", encoding="utf-8") as fh:
        if args.features:
            matrix = frameio.write_frames_jsonl(frames, fh)
        else:
            frameio.write_frames_jsonl(frames, fh, feat_rows=[None] * len(frames))
            matrix = None
    if args.features:
        frameio.save_features(
            matrix if matrix is not None else np.zeros((0, frameio.FEATURE_DIM), dtype=np.float32),
            args.features,
        )
    logging.info("generated %d frames (%d well-posed by construction)", len(frames), sum(t.well_posed for t in truth))
    return 0


def _cmd_filter(args, cfg: AppConfig) -> int:
    with open(args.frames, "r", encoding="utf-8") as fh:
        parsed = frameio.parse_frames_jsonl(fh)
    rows = {rec.frame_id: row for rec, row in zip(parsed.frames, parsed.feat_rows)}
    accepted, report = filter_frames(parsed.frames, cfg.filter, images=_image_provider(args.images))
    with open(args.out, "w", encoding="utf-8") as fh:
        frameio.write_frames_jsonl(accepted, fh, feat_rows=[rows[r.frame_id] for r in accepted])
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    if args.verbose:
        print(f"kept {report.accepted}/{report.total} frames", file=sys.stderr)
    return 0


def _load_session_with_features(frames_path: str, features_path: str):
    with open(frames_path, "r", encoding="utf-8") as fh:
        parsed = frameio.parse_frames_jsonl(fh)
    matrix = frameio.load_features(features_path)
    return frameio.attach_features(parsed, matrix)


def _cmd_summarize(args, cfg: AppConfig) -> int:
    frames = _load_session_with_features(args.frames, args.features)
    sum_cfg = dataclasses.replace(
        cfg.summarizer,
        k=args.k if args.k is not None else cfg.summarizer.k,
        h0=args.h0 if args.h0 is not None else cfg.summarizer.h0,
    )
    manifest = summarize(frames, sum_cfg)
    frameio.write_summary_manifest(manifest, args.out)
    if args.verbose and len(frames) >= 1 and math.isfinite(manifest.h_star) and manifest.h_star > 0:
        clusters = assign_clusters(
            [f.timestamp for f in frames], manifest.h_star, frame_ids=[f.frame_id for f in frames]
        )
        print(cluster_occupancy_histogram(clusters), file=sys.stderr)
    if manifest.is_short_session:
        print(
            f"warning: session has fewer frames ({len(manifest.entries)}) than requested keyframes ({manifest.k})",
            file=sys.stderr,
        )
    return 0


def _cmd_baseline(args, cfg: AppConfig) -> int:
    if args.method == "uniform":
        with open(args.frames, "r", encoding="utf-8") as fh:
            parsed = frameio.parse_frames_jsonl(fh)
        manifest = uniform_keyframes(list(parsed.frames), args.k)
    else:
        if not args.features:
            raise _UsageError("--features is required for the kmeans baseline")
        frames = _load_session_with_features(args.frames, args.features)
        manifest = kmeans_keyframes(frames, args.k, seed=args.seed if args.seed is not None else 0)
    frameio.write_summary_manifest(manifest, args.out)
    return 0


def _cmd_simulate(args, cfg: AppConfig) -> int:
    with open(args.frames, "r", encoding="utf-8") as fh:
        parsed = frameio.parse_frames_jsonl(fh)
    lines = service.simulate_actions(parsed.frames, cfg.controller)
    with open(args.out, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    return 0


def _cmd_serve(args, cfg: AppConfig) -> int:
    host, port = _parse_addr(args.addr)
    service_cfg = service.ServiceConfig(
        filter_config=cfg.filter,
        controller_config=cfg.controller,
        max_adapt_iters=cfg.summarizer.max_adapt_iters,
    )
    service.serve(host, port, service_cfg)
    return 0


def _cmd_replay(args, cfg: AppConfig) -> int:
    host, port = _parse_addr(args.addr)
    with open(args.frames, "r", encoding="utf-8") as fh:
        parsed = frameio.parse_frames_jsonl(fh)
    matrix = frameio.load_features(args.features) if args.features else None
    out_fh = open(args.out, "w", encoding="utf-8") if args.out else None
    try:
        result = service.replay_session(
            host,
            port,
            parsed,
            features=matrix,
            rate=args.rate,
            k=args.k,
            h0=args.h0,
            trace=out_fh,
        )
    finally:
        if out_fh is not None:
            out_fh.close()
    if result.error_line is not None:
        print(f"error: server replied: {result.error_line}", file=sys.stderr)
        return 2
    if args.verbose:
        print(f"received {len(result.action_lines)} action replies", file=sys.stderr)
    return 0


# --- parser wiring ------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="robosum", description=__doc__)
    parser.add_argument("--config", help="JSON file overriding filter/summarizer/controller defaults")
    parser.add_argument("--seed", type=int, help="seed for randomized subcommands")
    parser.add_argument("--verbose", action="store_true", help="chatty diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a labeled synthetic session")
    p.add_argument("--spec", required=True, help="scenario spec JSON")
    p.add_argument("--out", required=True, help="output frames JSONL")
    p.add_argument("--features", help="output feature matrix (FEAT binary)")
    p.add_argument("--images", help="directory for per-frame PGM images (omits blur scores)")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("filter", help="drop ill-posed frames")
    p.add_argument("--frames", required=True, help="input frames JSONL")
    p.add_argument("--images", help="directory of <frame_id>.pgm for frames lacking blur scores")
    p.add_argument("--out", required=True, help="output well-posed frames JSONL")
    p.add_argument("--report", required=True, help="output tally JSON")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("summarize", help="select keyframes by temporal clustering")
    p.add_argument("--frames", required=True, help="well-posed frames JSONL")
    p.add_argument("--features", required=True, help="feature matrix (FEAT binary)")
    p.add_argument("--k", type=_positive_int, help="number of keyframes (default 8)")
    p.add_argument("--h0", type=_positive_float, help="initial gap threshold in seconds (default 60)")
    p.add_argument("--out", required=True, help="output summary manifest JSON")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("baseline", help="naive summarizers for comparison")
    p.add_argument("--method", required=True, choices=("uniform", "kmeans"))
    p.add_argument("--frames", required=True)
    p.add_argument("--features", help="feature matrix (required for kmeans)")
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("simulate", help="offline controller run over a recorded session")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True, help="output action trace JSONL")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("serve", help="run the frame-analysis server")
    p.add_argument("--addr", required=True, help="bind address HOST:PORT")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("replay", help="stream a recorded session to a server")
    p.add_argument("--addr", required=True, help="server address HOST:PORT")
    p.add_argument("--frames", required=True)
    p.add_argument("--rate", type=_rate, default="max", help="real-time multiplier or 'max'")
    p.add_argument("--features", help="feature matrix to inline into frame messages")
    p.add_argument("--out", help="write received replies to this JSONL file")
    p.add_argument("--k", type=_positive_int, default=8, help="keyframe count for end_session")
    p.add_argument("--h0", type=_positive_float, default=60.0, help="initial threshold for end_session")
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_app_config(args.config)
        return args.func(args, cfg)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
