"""Command-line entry point: ``clot <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .metrics import TrajectoryPair, compute_metrics, per_window_errors
from .models import resolve_model
from .motion_data import MotionClip, MotionFrame, load_clip, load_manifest, save_clip, stats_table_csv
from .retarget import RetargetConfig, load_retarget_config, retarget_clip
from .transforms import RigidTransform

log = logging.getLogger("clot")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_json(path: str | None) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def run_trajectory_clip(report, clip_id: str, category: str) -> MotionClip:
    """Robot trajectory of a run as a clip: body positions, joints and applied torques."""
    robot, pair = report.robot, report.pair
    frames = [
        MotionFrame(float(robot.t[k]), RigidTransform(robot.root_quat[k], robot.root_pos[k]), robot.frame_pos[k],
                    joint_pos=robot.q[k], torque=pair.torque[k])
        for k in range(len(robot))
    ]
    return MotionClip(clip_id, category, robot.fps, frames)


def pair_from_clips(robot: MotionClip, ref: MotionClip) -> TrajectoryPair:
    if robot.num_frames != ref.num_frames:
        raise ValueError(f"trajectories differ in length ({robot.num_frames} vs {ref.num_frames})")
    q, q_ref = robot.joint_array(), ref.joint_array()
    if q is None or q_ref is None:
        raise ValueError("both trajectories need joint positions")
    tau = robot.torque_array()
    if tau is None:
        tau = np.zeros_like(q)
    return TrajectoryPair(robot.keypoint_array(), robot.root_positions(), robot.root_rotations(), q, tau,
                          ref.keypoint_array(), ref.root_positions(), ref.root_rotations(), q_ref)


# -- commands -------------------------------------------------------------------


def cmd_retarget(args) -> int:
    model = resolve_model(args.model)
    clip = load_clip(args.clip)
    config = load_retarget_config(args.config, model) if args.config else RetargetConfig.identity(model)
    ref = retarget_clip(model, clip, config)
    out = ref.to_clip(f"{clip.id}_retargeted", clip.category)
    if args.out:
        save_clip(out, args.out)
    else:
        from .motion_data import serialize_clip

        sys.stdout.buffer.write(serialize_clip(out))
    return 0


def _loop_config(args, model):
    from .pipeline.loop import LoopConfig

    return LoopConfig.from_dict(_load_json(args.config), model)


def _finish_run(report, args, clip_id: str, category: str) -> int:
    if args.out:
        save_clip(run_trajectory_clip(report, f"{clip_id}_robot", category), args.out)
        ref_path = Path(args.out).with_name(Path(args.out).name.replace(".clot.jsonl", "") + ".ref.clot.jsonl")
        save_clip(report.reference.to_clip(f"{clip_id}_reference", category), ref_path)
    text = report.to_json() + "\n"
    if args.report:
        Path(args.report).write_text(text)
    sys.stdout.write(text)
    return 0 if not report.termination.early else 3


def cmd_simulate(args) -> int:
    from .pipeline.loop import run_closed_loop

    model = resolve_model(args.model)
    clip = load_clip(args.clip)
    report = run_closed_loop(model, clip, config=_loop_config(args, model), seed=args.seed)
    return _finish_run(report, args, clip.id, clip.category)


def cmd_evaluate(args) -> int:
    pair = pair_from_clips(load_clip(args.robot), load_clip(args.ref))
    _write(compute_metrics(pair).to_json() + "\n", args.out)
    if args.per_second:
        fps = load_clip(args.robot).fps
        rows = per_window_errors(pair, max(1, int(round(fps))))
        keys = list(rows[0])
        lines = [",".join(keys)] + [",".join(repr(r[k]) for k in keys) for r in rows]
        Path(args.per_second).write_text("\n".join(lines) + "\n")
    return 0


def cmd_stream_serve(args) -> int:
    from .pipeline.stream import StreamServer

    clip = load_clip(args.clip)
    server = StreamServer(clip, args.host, args.port, rate_hz=args.rate or None)
    host, port = server.address
    sys.stderr.write(f"serving {clip.num_frames} frames on {host}:{port}\n")
    sys.stderr.flush()
    server.serve_once()
    if server.error:
        raise server.error
    return 0


def cmd_stream_run(args) -> int:
    from .pipeline.loop import MailboxSource, run_closed_loop
    from .pipeline.stream import LatestWins, pump_stream, receive_clip

    model = resolve_model(args.model)
    config = _loop_config(args, model)
    if args.realtime:
        if args.duration is None:
            raise SystemExit("--realtime needs --duration")
        mailbox = LatestWins()
        pump_stream(args.host, args.port, mailbox)
        config.realtime = True
        config.duration = args.duration
        report = run_closed_loop(model, MailboxSource(mailbox), config=config, seed=args.seed)
    else:
        clip = receive_clip(args.host, args.port, "stream", args.category, args.fps)
        if args.duration is not None:
            config.duration = args.duration
        report = run_closed_loop(model, clip, config=config, seed=args.seed)
    return _finish_run(report, args, "stream", args.category)


def cmd_dataset_stats(args) -> int:
    _write(stats_table_csv(load_manifest(args.manifest)), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output file (stdout if omitted)")

    p = argparse.ArgumentParser(prog="clot", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("retarget", parents=[common], help="retarget a human clip onto a robot")
    s.add_argument("--model", required=True, help="built-in model name or model JSON path")
    s.add_argument("--clip", required=True)
    s.set_defaults(func=cmd_retarget)

    s = sub.add_parser("simulate", parents=[common], help="run the closed loop on a clip")
    s.add_argument("--model", required=True)
    s.add_argument("--clip", required=True)
    s.add_argument("--report", help="also write the run report JSON here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("evaluate", parents=[common], help="tracking metrics of a robot trajectory")
    s.add_argument("--robot", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--per-second", help="write per-second metrics CSV here")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("stream-serve", parents=[common], help="serve a clip over TCP to one client")
    s.add_argument("--clip", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=7450)
    s.add_argument("--rate", type=float, default=0.0, help="frames per second (0 = unpaced)")
    s.set_defaults(func=cmd_stream_serve)

    s = sub.add_parser("stream-run", parents=[common], help="run the closed loop on a streamed clip")
    s.add_argument("--model", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=7450)
    s.add_argument("--fps", type=float, default=120.0, help="frame rate of the incoming stream")
    s.add_argument("--category", default="UNLAB")
    s.add_argument("--duration", type=float)
    s.add_argument("--realtime", action="store_true", help="wall-clock paced, latest-wins ingestion")
    s.add_argument("--report")
    s.set_defaults(func=cmd_stream_run)

    s = sub.add_parser("dataset-stats", parents=[common], help="category duration table of a manifest")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_dataset_stats)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CLOT_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        log.debug("command failed", exc_info=True)
        sys.stderr.write(f"clot {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
