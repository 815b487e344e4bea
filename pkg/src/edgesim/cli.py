"""Operator command line: serve, session, analyze, frames.

One binary with subcommands covers the desk-scale workflow: run the
simulated device, run a scripted or live study session against it,
re-analyze logs and frame dumps, and generate labeled frame corpora.
Every subcommand has a machine-readable output mode and stable exit
codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
import time

import numpy as np

from edgesim.analytics import (
    calibrate_thresholds,
    classify,
    export_heatmap,
    read_frames,
    write_frames,
)
from edgesim.bridge import BridgeHub, EngineBridgeLink
from edgesim.client import (
    ADDRESS_ENV_VAR,
    DEFAULT_ADDRESS,
    DeviceRuntime,
    EdgeSimClient,
    TransportError,
    parse_address,
)
from edgesim.device import FSRFrame, build_device, synth_condition_frames
from edgesim.experiment import (
    LiveResponder,
    SessionAborted,
    SessionPlan,
    compute_stats,
    export_csv,
    export_structured,
    format_stats_table,
    import_csv,
    import_structured,
    parse_responder_spec,
    run_session,
)
from edgesim.mech import ConfigError, parse_kv_text
from edgesim.protocol import Calibrate, ErrorMsg, State, Status
from edgesim.server import DeviceServer

DEFAULT_BRIDGE_ADDRESS = "127.0.0.1:9902"


def _default_address() -> str:
    return os.environ.get(ADDRESS_ENV_VAR, DEFAULT_ADDRESS)


def _load_config_values(path: str | None) -> dict[str, object]:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read())


def _emit(args, payload: dict, text: str) -> None:
    if args.format == "structured":
        print(json.dumps(payload, separators=(",", ":")))
    else:
        print(text)


# ---------------------------------------------------------------------------
# serve

def cmd_serve(args) -> int:
    try:
        host, port = parse_address(args.listen)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    values = _load_config_values(args.config)
    runtime = DeviceRuntime(build_device(values, rng_seed=args.seed))
    server = DeviceServer(runtime, host=host, port=port, time_scale=args.time_scale)
    try:
        server.start()
    except OSError as exc:
        print(f"error: cannot bind {args.listen}: {exc}", file=sys.stderr)
        return 1
    bridge = None
    if args.ui_bridge is not None:
        try:
            bhost, bport = parse_address(args.ui_bridge)
        except ValueError as exc:
            server.stop()
            print(f"usage error: {exc}", file=sys.stderr)
            return 2
        bridge = BridgeHub(runtime, host=bhost, port=bport,
                           static_dir=args.ui_static, session_dir=args.session_dir)
        try:
            bridge.start()
        except OSError as exc:
            server.stop()
            print(f"error: cannot bind bridge {args.ui_bridge}: {exc}", file=sys.stderr)
            return 1
    shost, sport = server.address
    _emit(args, {"event": "listening", "address": f"{shost}:{sport}",
                 "time_scale": args.time_scale},
          f"device endpoint listening on {shost}:{sport} "
          f"(time scale {args.time_scale:g}x)")
    if bridge is not None:
        bh, bp = bridge.address
        _emit(args, {"event": "bridge_listening", "address": f"{bh}:{bp}"},
              f"ui bridge listening on {bh}:{bp}")
    sys.stdout.flush()
    try:
        server.serve_forever()
    finally:
        if bridge is not None:
            bridge.stop()
    return 0


# ---------------------------------------------------------------------------
# session

def _calibrate_over_wire(client: EdgeSimClient, poll_s: float = 0.05) -> None:
    state = client.request(Status())
    if isinstance(state, ErrorMsg):
        raise TransportError(f"status rejected: {state.detail}")
    for axis, done in (("surface", state.calibrated_surface),
                       ("edge", state.calibrated_edge)):
        if done:
            continue
        reply = client.request(Calibrate(axis))
        if isinstance(reply, ErrorMsg):
            raise TransportError(f"calibrate {axis} rejected: {reply.detail}")
        while True:
            st = client.request(Status())
            if isinstance(st, State) and not st.moving:
                break
            time.sleep(poll_s)


def cmd_session(args) -> int:
    try:
        address = parse_address(args.address)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    conditions = tuple(c.strip() for c in args.conditions.split(",") if c.strip())
    try:
        plan = SessionPlan(repetitions=args.reps, conditions=conditions,
                           isi_s=args.isi, rng_seed=args.seed,
                           response_timeout_s=args.timeout, label=args.label)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2

    abort_event = threading.Event()
    link = None
    if args.live:
        responder = LiveResponder()
        try:
            bridge_addr = parse_address(args.bridge)
        except ValueError as exc:
            print(f"usage error: {exc}", file=sys.stderr)
            return 2
        try:
            link = EngineBridgeLink(bridge_addr, responder, abort_event)
        except (OSError, ConnectionError) as exc:
            print(f"error: cannot reach ui bridge at {args.bridge}: {exc}",
                  file=sys.stderr)
            return 1
    else:
        try:
            responder = parse_responder_spec(args.responder, rng_seed=args.seed)
        except ValueError as exc:
            print(f"usage error: {exc}", file=sys.stderr)
            return 2

    records, complete, failure = [], False, None
    try:
        with EdgeSimClient(address, timeout_s=5.0) as client:
            _calibrate_over_wire(client)
            records = run_session(plan, client, responder,
                                  event_sink=link.publish if link else None,
                                  abort_event=abort_event)
            complete = True
    except SessionAborted as exc:
        records, failure = exc.records, exc.cause
    except TransportError as exc:
        failure = str(exc)
    finally:
        if link is not None:
            link.close()

    stats = compute_stats(records, plan.conditions) if records else None
    if args.out:
        export_csv(records, args.out + ".csv")
        export_structured(records, stats, args.out + ".json",
                          complete=complete, label=plan.label)
    if failure is not None:
        print(f"error: session incomplete after {len(records)} trials: {failure}",
              file=sys.stderr)
        return 1
    assert stats is not None
    _emit(args, {"event": "session_complete", "trials": len(records),
                 "stats": stats.to_dict()},
          format_stats_table(stats))
    return 0


# ---------------------------------------------------------------------------
# analyze

def _parse_labeled_paths(specs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for spec in specs:
        label, sep, path = spec.partition("=")
        if not sep or not label or not path:
            raise ValueError(f"expected LABEL=PATH, got {spec!r}")
        out[label.strip()] = path
    return out


def _analyze_frames(args, labeled: dict[str, str]) -> dict:
    corpora = {label: read_frames(path) for label, path in labeled.items()}
    light = [f for lbl in ("EL", "SL") for f in corpora.get(lbl, [])]
    heavy = [f for lbl in ("EH", "SH") for f in corpora.get(lbl, [])]
    thresholds = calibrate_thresholds(light, heavy)
    report: dict = {"labels": {}, "thresholds": {
        "contact_total_min": thresholds.contact_total_min,
        "band_ratio_edge_min": thresholds.band_ratio_edge_min,
        "light_heavy_split": thresholds.light_heavy_split,
    }}
    total_hits = 0
    total_frames = 0
    geometry_hits = 0
    for label, frames in corpora.items():
        hits = sum(classify(f, thresholds).condition_label == label for f in frames)
        geo = sum(classify(f, thresholds).condition_label[0] == label[0]
                  for f in frames)
        report["labels"][label] = {"frames": len(frames),
                                   "accuracy": hits / len(frames) if frames else 0.0}
        total_hits += hits
        geometry_hits += geo
        total_frames += len(frames)
    report["four_way_accuracy"] = total_hits / total_frames if total_frames else 0.0
    report["geometry_accuracy"] = geometry_hits / total_frames if total_frames else 0.0
    if args.heatmap_dir:
        os.makedirs(args.heatmap_dir, exist_ok=True)
        for label, frames in corpora.items():
            mean = FSRFrame(frames[0].t_ms,
                            np.mean([f.cells for f in frames], axis=0))
            base = os.path.join(args.heatmap_dir, f"{label.lower()}-mean")
            export_heatmap(mean, base + ".csv", base + ".png")
    return report


def cmd_analyze(args) -> int:
    if not args.log and not args.frames:
        print("usage error: nothing to analyze (need --log and/or --frames)",
              file=sys.stderr)
        return 2
    try:
        if args.log:
            if args.log.endswith(".json"):
                records, doc = import_structured(args.log)
            else:
                records, doc = import_csv(args.log), {"complete": None}
            conditions = tuple(c for c in ("EL", "EH", "SL", "SH")
                               if any(r.presented == c for r in records))
            stats = compute_stats(records, conditions)
            _emit(args, {"event": "log_stats", "path": args.log,
                         "complete": doc.get("complete"),
                         "stats": stats.to_dict()},
                  f"session log: {args.log}\n" + format_stats_table(stats))
        if args.frames:
            labeled = _parse_labeled_paths(args.frames)
            report = _analyze_frames(args, labeled)
            lines = [f"frame corpus classification "
                     f"({sum(v['frames'] for v in report['labels'].values())} frames)"]
            for label, entry in sorted(report["labels"].items()):
                lines.append(f"  {label}: {entry['accuracy']:.1%} "
                             f"of {entry['frames']} frames")
            lines.append(f"  geometry accuracy: {report['geometry_accuracy']:.1%}")
            lines.append(f"  4-way accuracy:    {report['four_way_accuracy']:.1%}")
            _emit(args, {"event": "frame_report", **report}, "\n".join(lines))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# frames

def cmd_frames(args) -> int:
    values = _load_config_values(args.config)
    try:
        frames = synth_condition_frames(args.condition, args.count, values=values,
                                        rng_seed=args.seed,
                                        spacing_ms=args.spacing_ms)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_frames(args.out, frames)
    if args.heatmap:
        mean = FSRFrame(frames[0].t_ms, np.mean([f.cells for f in frames], axis=0))
        export_heatmap(mean, args.heatmap + ".csv", args.heatmap + ".png")
    _emit(args, {"event": "frames_written", "condition": args.condition,
                 "count": len(frames), "path": args.out},
          f"wrote {len(frames)} settled {args.condition} frames to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgesim",
        description="dual-motor fingertip haptic device: simulator and study tools")
    parser.add_argument("--format", choices=("text", "structured"), default="text",
                        help="output mode (structured = JSON lines)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_serve = sub.add_parser("serve", help="run the simulated device endpoint")
    p_serve.add_argument("--listen", default=_default_address(),
                         help=f"host:port (default ${ADDRESS_ENV_VAR} or {DEFAULT_ADDRESS})")
    p_serve.add_argument("--config", help="device config file")
    p_serve.add_argument("--seed", type=int, default=None,
                         help="frame-synthesis rng seed")
    p_serve.add_argument("--time-scale", type=float, default=1.0,
                         help="simulated seconds per real second")
    p_serve.add_argument("--ui-bridge", nargs="?", const=DEFAULT_BRIDGE_ADDRESS,
                         default=None, metavar="HOST:PORT",
                         help="expose the browser bridge (default "
                              f"{DEFAULT_BRIDGE_ADDRESS})")
    p_serve.add_argument("--ui-static", default=None, metavar="DIR",
                         help="serve the response UI build from this directory")
    p_serve.add_argument("--session-dir", default="edgesim-sessions",
                         help="where bridge-run live sessions write their logs")
    p_serve.set_defaults(func=cmd_serve)

    p_session = sub.add_parser("session", help="run one study session")
    p_session.add_argument("--address", default=_default_address(),
                           help="device endpoint host:port")
    p_session.add_argument("--reps", type=int, default=5)
    p_session.add_argument("--conditions", default="EL,EH,SL,SH")
    p_session.add_argument("--isi", type=float, default=3.0,
                           help="inter-stimulus interval, seconds")
    p_session.add_argument("--seed", type=int, default=0)
    p_session.add_argument("--timeout", type=float, default=30.0,
                           help="response timeout, seconds")
    p_session.add_argument("--responder", default="perfect",
                           help="perfect | perfect:<delay> | silent | "
                                "confusion:SH->SL:0.16,...")
    p_session.add_argument("--live", action="store_true",
                           help="collect responses from the browser UI")
    p_session.add_argument("--bridge", default=DEFAULT_BRIDGE_ADDRESS,
                           help="ui bridge host:port for --live")
    p_session.add_argument("--out", default=None,
                           help="log path prefix (writes PREFIX.csv and PREFIX.json)")
    p_session.add_argument("--label", default="", help="opaque session label")
    p_session.set_defaults(func=cmd_session)

    p_analyze = sub.add_parser("analyze", help="recompute stats / classify frames")
    p_analyze.add_argument("--log", default=None,
                           help="session log (.csv or .json)")
    p_analyze.add_argument("--frames", nargs="*", default=None, metavar="LABEL=PATH",
                           help="labeled frame dumps, e.g. EL=el.csv EH=eh.csv")
    p_analyze.add_argument("--heatmap-dir", default=None,
                           help="export per-label mean heatmaps here")
    p_analyze.set_defaults(func=cmd_analyze)

    p_frames = sub.add_parser("frames", help="generate a settled frame corpus")
    p_frames.add_argument("--condition", required=True,
                          choices=("EL", "EH", "SL", "SH", "NC"))
    p_frames.add_argument("--count", type=int, default=100)
    p_frames.add_argument("--out", required=True)
    p_frames.add_argument("--seed", type=int, default=0)
    p_frames.add_argument("--spacing-ms", type=float, default=100.0)
    p_frames.add_argument("--config", help="device config file")
    p_frames.add_argument("--heatmap", default=None, metavar="PREFIX",
                          help="also export the mean frame as PREFIX.csv/.png")
    p_frames.set_defaults(func=cmd_frames)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
