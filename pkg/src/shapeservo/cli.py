"""Command-line entry points: run one episode, run batches, recompute
metrics from a saved log, or serve the live console session."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .batch import run_batch
from .camera import default_camera
from .configio import (
    default_robot,
    load_camera,
    load_gains,
    load_robot,
    load_scenario,
)
from .control import ControlGains
from .episode import TrajectoryLog, run_episode
from .metrics import episode_metrics
from .plant import SimConfig


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--robot", type=Path, help="robot description JSON")
    p.add_argument(
        "--sections",
        type=int,
        default=2,
        help="sections of the default robot when --robot is not given",
    )
    p.add_argument("--camera", type=Path, help="camera config JSON")
    p.add_argument("--gains", type=Path, help="control gains JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-px", type=float, default=0.0, help="pixel noise, px")
    p.add_argument(
        "--sigma-depth", type=float, default=0.0, help="depth noise, meters"
    )
    p.add_argument("--dt", type=float, default=0.1, help="control period, s")
    p.add_argument("--max-steps", type=int, default=600)


def _resolve(args):
    robot = load_robot(args.robot) if args.robot else default_robot(args.sections)
    camera = load_camera(args.camera) if args.camera else default_camera()
    gains = load_gains(args.gains) if args.gains else ControlGains()
    sim = SimConfig(dt=args.dt, max_steps=args.max_steps)
    return robot, camera, gains, sim


def _cmd_run(args) -> int:
    robot, camera, gains, sim = _resolve(args)
    scenario = load_scenario(args.scenario, robot, camera)
    log = run_episode(
        robot,
        camera,
        gains,
        scenario,
        sim=sim,
        sigma_px=args.sigma_px,
        sigma_depth_m=args.sigma_depth,
        seed=args.seed,
        meta={"scenario": str(args.scenario), "seed": args.seed},
    )
    report = episode_metrics(log, args.criterion)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        log.to_csv(out / "episode.csv")
        log.to_json(out / "episode.json")
        (out / "metrics.json").write_text(json.dumps(report.as_dict(), indent=2))
        print(f"wrote {out / 'episode.csv'}")
    print(json.dumps(report.as_dict(), indent=2))
    return 0 if log.completed else 1


def _cmd_batch(args) -> int:
    robot, camera, gains, sim = _resolve(args)
    report = run_batch(
        robot,
        camera,
        gains,
        k=args.k,
        seed=args.seed,
        sim=sim,
        sigma_px=args.sigma_px,
        sigma_depth_m=args.sigma_depth,
        criterion=args.criterion,
        s_shape_count=args.s_shapes,
        via_ik=args.via_ik,
        out_dir=args.out,
    )
    print(json.dumps(report.as_dict(), indent=2))
    return 0 if report.convergence_rate == 1.0 else 1


def _cmd_metrics(args) -> int:
    log = TrajectoryLog.from_csv(args.log)
    report = episode_metrics(log, args.criterion)
    print(json.dumps(report.as_dict(), indent=2))
    return 0


def _cmd_serve(args) -> int:
    from .service import ServiceSettings, serve

    robot, camera, gains, sim = _resolve(args)
    frontend = args.frontend
    if frontend is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend = candidate if candidate.exists() else None
    settings = ServiceSettings(
        config=robot,
        camera=camera,
        gains=gains,
        sim=sim,
        seed=args.seed,
        sigma_px=args.sigma_px,
        sigma_depth_m=args.sigma_depth,
        speed=args.speed,
    )
    print(f"serving on ws://{args.host}:{args.port}/ws")
    serve(settings, port=args.port, host=args.host, frontend_dir=frontend)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapeservo",
        description="Whole-body shape visual servoing simulation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one episode against a scenario file")
    _add_config_flags(p_run)
    p_run.add_argument("--scenario", type=Path, required=True)
    p_run.add_argument("--criterion", choices=("stringent", "relaxed"), default="stringent")
    p_run.add_argument("--out", type=Path, help="directory for CSV/JSON logs")
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run K randomized-reference episodes")
    _add_config_flags(p_batch)
    p_batch.add_argument("-k", type=int, default=6, help="episodes per batch")
    p_batch.add_argument("--criterion", choices=("stringent", "relaxed"), default="stringent")
    p_batch.add_argument("--s-shapes", type=int, default=0,
                         help="episodes with alternating-curvature references")
    p_batch.add_argument("--via-ik", action="store_true",
                         help="route sampled targets through the two-arc solver")
    p_batch.add_argument("--out", type=Path, help="directory for logs and report")
    p_batch.set_defaults(func=_cmd_batch)

    p_metrics = sub.add_parser("metrics", help="recompute metrics from a CSV log")
    p_metrics.add_argument("log", type=Path)
    p_metrics.add_argument("--criterion", choices=("stringent", "relaxed"), default="stringent")
    p_metrics.set_defaults(func=_cmd_metrics)

    p_serve = sub.add_parser("serve", help="serve live sessions over WebSocket")
    _add_config_flags(p_serve)
    p_serve.add_argument("--port", type=int, default=8750)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--speed", type=float, default=1.0,
                         help="real-time factor; 0 = as fast as possible")
    p_serve.add_argument("--frontend", type=Path,
                         help="directory with the built operator console")
    p_serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
