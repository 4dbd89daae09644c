"""Operator entry points: serve, replay, bench, render-still.

Config comes from an optional key=value file (--config) with CLI flags
winning on conflict. Failures exit nonzero with a single machine-parsable
line: `error class=<ExceptionName> detail=<message>`. Logs are line
oriented `ts level key=value ...`; NEARPORT_LOG sets the level and
NEARPORT_LISTEN overrides the serve bind address as host:port.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .client import ClientConfig, load_trace, run_replay
from .geometry import CameraIntrinsics, Pose
from .metrics import MetricsLog
from .netsim import NetworkProfile
from .protocol import FrameEncoding, InvariantViolation
from .renderer import (
    RaymarchRenderer,
    RenderRequest,
    TestPatternRenderer,
    load_scene,
    render_view,
)
from .server import NearportServer, ServerConfig
from .transport import connect_tcp

log = logging.getLogger("nearport.cli")


class CliError(Exception):
    pass


def _setup_logging() -> None:
    level = os.environ.get("NEARPORT_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(message)s",
        datefmt="%H:%M:%S",
    )


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pre-scan for --config FILE and fold its key=value pairs into defaults.

    Keys use the flag spelling with dashes or underscores; explicit CLI
    flags win because defaults never override parsed values.
    """
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise CliError("--config needs a file path")
    path = Path(argv[i + 1])
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    argv = argv[:i] + argv[i + 2 :]
    subcommand = next((a for a in argv if not a.startswith("-")), None)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices.get(subcommand)
    if subparser is None:
        raise CliError(f"--config requires a subcommand, got {subcommand!r}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        k, _, v = line.partition("=")
        values[k.strip().replace("-", "_")] = v.strip()
    by_dest = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, val in values.items():
        action = by_dest.get(key)
        if action is None:
            raise CliError(f"{path}: unknown config key {key!r} for {subcommand}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = val.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(val) if action.type else val
    # Defaults go on the subparser: it parses into a fresh namespace that is
    # merged over the outer one, so outer defaults would be clobbered.
    subparser.set_defaults(**defaults)
    return argv


def _intrinsics_from_args(args) -> CameraIntrinsics:
    fx = args.fx if args.fx is not None else 0.78 * args.width
    fy = args.fy if args.fy is not None else fx
    cx = args.cx if args.cx is not None else args.width / 2.0
    cy = args.cy if args.cy is not None else args.height / 2.0
    intr = CameraIntrinsics(args.width, args.height, fx, fy, cx, cy)
    intr.validate()
    return intr


def _add_camera_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--fx", type=float, default=None, help="default 0.78*width")
    p.add_argument("--fy", type=float, default=None)
    p.add_argument("--cx", type=float, default=None, help="default width/2")
    p.add_argument("--cy", type=float, default=None)


def _add_march_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--step-m", type=float, default=0.005)
    p.add_argument("--t-near", type=float, default=0.05)
    p.add_argument("--t-far", type=float, default=20.0)


def _add_profile_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delay-ms", type=float, default=0.0, help="one-way delay, both directions")
    p.add_argument("--delay-up-ms", type=float, default=None)
    p.add_argument("--delay-down-ms", type=float, default=None)
    p.add_argument("--jitter-ms", type=float, default=0.0)
    p.add_argument("--outage-period-ms", type=float, default=0.0)
    p.add_argument("--outage-duration-ms", type=float, default=0.0)
    p.add_argument("--net-seed", type=int, default=0)


def _profile_from_args(args) -> NetworkProfile:
    up = args.delay_up_ms if args.delay_up_ms is not None else args.delay_ms
    down = args.delay_down_ms if args.delay_down_ms is not None else args.delay_ms
    return NetworkProfile(
        base_delay_up_ms=up,
        base_delay_down_ms=down,
        jitter_ms=args.jitter_ms,
        outage_period_ms=args.outage_period_ms,
        outage_duration_ms=args.outage_duration_ms,
        seed=args.net_seed,
    )


def _parse_labels(text: str) -> tuple[int, ...]:
    try:
        labels = tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError:
        raise CliError(f"bad labels {text!r}; expected e.g. 0,1") from None
    if not labels:
        raise CliError("need at least one label")
    return labels


def cmd_serve(args) -> int:
    listen = os.environ.get("NEARPORT_LISTEN")
    if listen:
        host, _, port = listen.rpartition(":")
        args.host = host or args.host
        args.port = int(port)
    intrinsics = _intrinsics_from_args(args)
    if args.renderer == "raymarch":
        if not args.scene:
            raise CliError("--scene is required with --renderer raymarch")
        field = load_scene(args.scene)

        def factory(label: int):
            return RaymarchRenderer(field, args.step_m, args.t_near, args.t_far)

    else:
        def factory(label: int):
            return TestPatternRenderer(label, render_ms=args.render_ms)

    config = ServerConfig(
        intrinsics=intrinsics,
        renderer_factory=factory,
        max_viewpoints=args.max_viewpoints,
        sender_queue_len=args.sender_queue,
        heartbeat_stall_ms=args.heartbeat_stall_ms,
        frame_encoding=FrameEncoding.PNG if args.png else FrameEncoding.RAW_RGB8,
    )
    server = NearportServer(
        config,
        host=args.host,
        tcp_port=args.port,
        ws_port=args.ws_port,
        viewer_dir=args.viewer_dir,
    )
    server.start()
    print(f"listening tcp={server.tcp_port} ws={server.ws_port}", flush=True)
    server.serve_forever()
    return 0


def cmd_replay(args) -> int:
    trace = load_trace(args.trace)
    labels = _parse_labels(args.labels)
    config = ClientConfig(
        pose_rate_hz=args.rate,
        ipd_m=args.ipd,
        predictor=args.predictor,
        prediction_horizon_ms=args.horizon,
        viewpoint_labels=labels,
        duration_ms=args.duration_ms,
        heartbeat_period_ms=args.heartbeat_ms,
        dump_frames_dir=Path(args.dump_frames) if args.dump_frames else None,
    )
    config.validate()
    if config.dump_frames_dir:
        config.dump_frames_dir.mkdir(parents=True, exist_ok=True)
    transport = connect_tcp(args.host, args.port)
    if args.inject_delay_ms > 0 or args.inject_jitter_ms > 0:
        from .netsim import UPLINK, DelayedStream, NetworkSimulator

        profile = NetworkProfile(
            base_delay_up_ms=args.inject_delay_ms,
            jitter_ms=args.inject_jitter_ms,
            seed=args.net_seed,
        )
        transport = DelayedStream(transport, NetworkSimulator(profile), UPLINK)
    metrics_log = run_replay(config, trace, transport)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if len(metrics_log) == 0:
        print("no frames received", file=sys.stderr)
        if metrics_log.termination_reason:
            raise CliError(metrics_log.termination_reason)
        return 1
    for lab in metrics_log.labels():
        per_label = MetricsLog()
        for s in metrics_log.samples(lab):
            per_label.record_frame(s)
        per_label.export_csv(outdir / f"metrics_label{lab}.csv")
    metrics_log.export_csv(outdir / "metrics_all.csv")
    metrics_log.write_summary(outdir / "summary.txt")
    summary = metrics_log.summarize()
    for lab, st in sorted(summary.per_label.items()):
        print(
            f"label{lab}: fps={st.mean_fps:.1f} mean_rtl={st.mean_rtl_ms:.1f}ms "
            f"p95_rtl={st.p95_rtl_ms:.1f}ms render_fraction={st.render_fraction:.3f}"
        )
    agg = summary.aggregate
    print(
        f"aggregate: combined_fps={agg.mean_fps:.1f} mean_rtl={agg.mean_rtl_ms:.1f}ms "
        f"p95_rtl={agg.p95_rtl_ms:.1f}ms"
    )
    if config.predictor != "none":
        ages = [s.rtl_ms - config.prediction_horizon_ms for s in metrics_log.samples()]
        print(
            f"pose_age_ms (rtl - horizon): mean={sum(ages)/len(ages):.1f} "
            f"min={min(ages):.1f} max={max(ages):.1f}"
        )
    if metrics_log.termination_reason:
        print(f"terminated early: {metrics_log.termination_reason}", file=sys.stderr)
        return 1
    return 0


def cmd_bench(args) -> int:
    if ":" in args.render_ms:
        lo, hi = (float(x) for x in args.render_ms.split(":", 1))
    else:
        lo = hi = float(args.render_ms)
    config = bench_mod.BenchConfig(
        duration_ms=args.duration_ms,
        pose_rate_hz=args.rate,
        labels=_parse_labels(args.labels),
        render_ms_min=lo,
        render_ms_max=hi,
        profile=_profile_from_args(args),
        seed=args.seed,
        predictor=args.predictor,
        prediction_horizon_ms=args.horizon,
    )
    result = bench_mod.run_bench(config)
    paths = bench_mod.write_report(result, args.out)
    for lab in sorted(config.labels):
        rtls = result.steady_state_rtls(lab)
        mean_rtl = sum(rtls) / len(rtls) if rtls else 0.0
        print(
            f"label{lab}: steady_fps={result.steady_state_fps(lab):.2f} "
            f"steady_mean_rtl={mean_rtl:.1f}ms frames={result.frames_received[lab]} "
            f"overwritten={result.overwritten_poses[lab]}"
        )
    print("report: " + " ".join(str(p) for p in paths))
    return 0


def cmd_render_still(args) -> int:
    field = load_scene(args.scene)
    intrinsics = _intrinsics_from_args(args)
    if args.pose:
        vals = [float(x) for x in args.pose.split(",")]
        if len(vals) != 16:
            raise CliError(f"--pose needs 16 comma-separated values, got {len(vals)}")
        matrix = np.array(vals).reshape(4, 4)
    else:
        matrix = np.eye(4)
    try:
        pose = Pose.from_matrix(matrix)
    except Exception as e:
        raise InvariantViolation(f"invalid pose matrix: {e}") from None
    req = RenderRequest(intrinsics, pose, args.step_m, args.t_near, args.t_far)
    image = render_view(field, req)
    from .images import write_image

    write_image(args.out, image.as_array())
    flag = " (degenerate: no ray hit the scene)" if image.degenerate else ""
    print(f"wrote {args.out} {image.width_px}x{image.height_px} "
          f"render_time={image.render_time_ms:.1f}ms{flag}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nearport", description="remote real-time rendering framework"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the rendering server")
    p.add_argument("--scene", type=str, default=None)
    p.add_argument("--renderer", choices=("raymarch", "pattern"), default="raymarch")
    p.add_argument("--render-ms", type=float, default=30.0, help="pattern renderer frame time")
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--port", type=int, default=9750)
    p.add_argument("--ws-port", type=int, default=9751)
    p.add_argument("--max-viewpoints", type=int, default=4)
    p.add_argument("--sender-queue", type=int, default=8)
    p.add_argument("--heartbeat-stall-ms", type=float, default=0.0)
    p.add_argument("--png", action="store_true", help="send PNG frames instead of raw RGB")
    p.add_argument("--viewer-dir", type=str, default=None,
                   help="serve these static files on the ws port for browsers")
    _add_camera_flags(p)
    _add_march_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="stream a recorded head trace at a server")
    p.add_argument("--host", type=str, default="127.0.0.1")
    p.add_argument("--port", type=int, default=9750)
    p.add_argument("--trace", type=str, required=True)
    p.add_argument("--rate", type=float, default=60.0, help="pose send rate, Hz")
    p.add_argument("--ipd", type=float, default=0.064)
    p.add_argument("--labels", type=str, default="0,1")
    p.add_argument("--predictor", choices=("none", "cv"), default="none")
    p.add_argument("--horizon", type=float, default=0.0, help="prediction horizon, ms")
    p.add_argument("--duration-ms", type=float, default=None)
    p.add_argument("--heartbeat-ms", type=float, default=0.0)
    p.add_argument("--dump-frames", type=str, default=None)
    p.add_argument("--inject-delay-ms", type=float, default=0.0,
                   help="shape the live uplink: one-way delay on sent poses")
    p.add_argument("--inject-jitter-ms", type=float, default=0.0)
    p.add_argument("--net-seed", type=int, default=0)
    p.add_argument("--out", type=str, default="replay-out")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("bench", help="deterministic in-process benchmark (no sockets)")
    p.add_argument("--duration-ms", type=float, default=10000.0)
    p.add_argument("--rate", type=float, default=60.0)
    p.add_argument("--labels", type=str, default="0,1")
    p.add_argument("--render-ms", type=str, default="30",
                   help="fixed MS or MIN:MAX uniform range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predictor", choices=("none", "cv"), default="none")
    p.add_argument("--horizon", type=float, default=0.0)
    p.add_argument("--out", type=str, default="bench-out")
    _add_profile_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render-still", help="render one view of a scene to a file")
    p.add_argument("--scene", type=str, required=True)
    p.add_argument("--pose", type=str, default=None,
                   help="16 comma-separated row-major matrix values; default identity")
    p.add_argument("--out", type=str, default="still.ppm")
    _add_camera_flags(p)
    _add_march_flags(p)
    p.set_defaults(func=cmd_render_still)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except Exception as e:
        detail = str(e).replace("\n", " ")
        print(f"error class={type(e).__name__} detail={detail}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
