"""Command-line front end: simulate, serve, train, evaluate, synthesize, replay.

Exit codes are part of the contract: 0 success, 1 runtime fault,
2 invalid input. Every subcommand is non-interactive and, given the
same manifest and seed, produces the same bytes.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import signal
import sys
import threading
from pathlib import Path

from .config import ConfigError, SimConfig, load_config
from .datalog import ReplayError, energy_report, replay
from .runtime import Engine
from .server import start_servers
from .simcore import SimulationError, device_names
from . import vision


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Everything a reproducible run needs, loadable from one JSON file."""

    config: SimConfig
    duration: float = 86400.0
    acceleration: float | None = None
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.acceleration is not None and not self.acceleration > 0:
            raise ConfigError("acceleration must be positive")

    def effective_config(self) -> SimConfig:
        if self.acceleration is None:
            return self.config
        return dataclasses.replace(self.config, time_acceleration=self.acceleration)


def load_manifest(path: str | Path) -> RunManifest:
    base = Path(path).parent
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"manifest {path} must be a JSON object")
    known = {"config", "seed", "duration", "acceleration", "output_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"manifest {path}: unknown keys {sorted(unknown)}")
    cfg_field = doc.get("config")
    if cfg_field is None:
        config = SimConfig()
    elif isinstance(cfg_field, str):
        config = load_config(base / cfg_field)
    elif isinstance(cfg_field, dict):
        config = SimConfig.from_dict(cfg_field)
    else:
        raise ConfigError("manifest config must be a path or an object")
    if "seed" in doc:
        config = dataclasses.replace(config, seed=int(doc["seed"]))
    return RunManifest(
        config=config,
        duration=float(doc.get("duration", 86400.0)),
        acceleration=doc.get("acceleration"),
        output_dir=doc.get("output_dir"),
    )


def _manifest_from_args(args) -> RunManifest:
    if args.manifest:
        manifest = load_manifest(args.manifest)
    else:
        config = load_config(args.config) if args.config else SimConfig()
        manifest = RunManifest(config=config)
    updates = {}
    if args.duration is not None:
        updates["duration"] = args.duration
    if args.accel is not None:
        updates["acceleration"] = args.accel
    if args.out is not None:
        updates["output_dir"] = args.out
    if updates:
        manifest = dataclasses.replace(manifest, **updates)
    if args.seed is not None:
        manifest = dataclasses.replace(
            manifest,
            config=dataclasses.replace(manifest.config, seed=args.seed),
        )
    return manifest


def _print_summary(summary: dict) -> None:
    print(f"simulated {summary['sim_time']:.1f} s")
    print("energy by device [kWh]:")
    for device, kwh in summary["energy_by_device"].items():
        print(f"  {device:<15} {kwh:12.6f}")
    print(f"  {'total':<15} {summary['energy_total']:12.6f}")
    print(f"water consumed [L]  {summary['water_consumed']:.6f}")
    print(f"alerts raised       {summary['alerts']} "
          f"(open {summary['open_unacked']})")


def cmd_sim_run(args) -> int:
    manifest = _manifest_from_args(args)
    if manifest.output_dir:
        Path(manifest.output_dir).mkdir(parents=True, exist_ok=True)
    engine = Engine(manifest.effective_config(), log_dir=manifest.output_dir)
    try:
        engine.run(manifest.duration)
        _print_summary(engine.summary())
    finally:
        engine.close()
    return 0


def cmd_serve(args) -> int:
    if not args.listen_tcp and not args.listen_http:
        raise ConfigError("serve needs --listen-tcp and/or --listen-http")
    manifest = _manifest_from_args(args)
    if manifest.output_dir:
        Path(manifest.output_dir).mkdir(parents=True, exist_ok=True)
    config = manifest.effective_config()
    engine = Engine(config, log_dir=manifest.output_dir)
    # a command submitted right after a control tick waits one full period
    timeout = config.control_period / max(config.time_acceleration, 1e-9) + 1.0
    try:
        servers = start_servers(
            engine.broker, args.listen_tcp, args.listen_http,
            command_timeout=timeout, static_dir=args.static,
        )
    except OSError as exc:
        engine.close()
        raise ConfigError(f"cannot bind server: {exc}") from exc
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    for srv in servers:
        proto = "http" if "HTTP" in type(srv).__name__ else "tcp"
        print(f"listening on {srv.server_address[0]}:{srv.server_address[1]}"
              f" ({proto})")
    sys.stdout.flush()
    try:
        engine.run(manifest.duration, pace=True, stop=stop)
        _print_summary(engine.summary())
    finally:
        for srv in servers:
            srv.shutdown()
            srv.server_close()
        engine.close()
    return 0


def _load_images(spec: str) -> list:
    if spec.startswith("synthetic:"):
        try:
            total = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad synthetic count in {spec!r}") from None
        if total < 1:
            raise ConfigError("synthetic image count must be positive")
        return vision.synthetic_dataset(total, seed=0)
    images = vision.load_dataset(spec)
    if not images:
        raise ConfigError(f"no images found under {spec}")
    return images


def cmd_train(args) -> int:
    images = _load_images(args.data)
    parts = vision.split(images, seed=args.seed)
    model = vision.ConvNet(seed=args.seed)
    cfg = vision.TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        freeze_backbone_epochs=args.freeze_epochs,
        seed=args.seed,
    )
    model, train_curve, val_curve = vision.train(model, parts, cfg)
    vision.save_model(model, args.out)
    report = vision.evaluate(model, parts.test, train_curve, val_curve)
    print(vision.render_report(report))
    if args.report:
        report.save(args.report)
    print(f"model written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    if not Path(args.model).is_file():
        raise ConfigError(f"model file {args.model} does not exist")
    model = vision.load_model(args.model)
    images = _load_images(args.data)
    report = vision.evaluate(model, images)
    print(vision.render_report(report))
    if args.report:
        report.save(args.report)
    return 0


def cmd_synth(args) -> int:
    if args.per_class < 1:
        raise ConfigError("--per-class must be positive")
    images = [
        vision.generate_synthetic_leaf(label, args.seed * 1_000_003 + i)
        for label in ("healthy", "drought", "rust")
        for i in range(args.per_class)
    ]
    written = vision.save_dataset(args.out, images, fmt=args.format)
    print(f"wrote {written} images to {args.out}")
    return 0


def cmd_replay(args) -> int:
    target = Path(args.path)
    if not target.exists():
        raise ConfigError(f"log path {target} does not exist")
    records = list(replay(target))
    print(f"{len(records)} records")
    if records:
        last = records[-1]
        print(f"last seq {last['seq']} at t={last['ts']}")
    if args.energy and records:
        t_end = records[-1]["ts"]
        report = energy_report(records, 0.0, t_end)
        print("energy [kWh]:")
        for device, kwh in report["by_device"].items():
            print(f"  {device:<15} {kwh:12.6f}")
        print(f"  {'total':<15} {report['total']:12.6f}")
    return 0


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", help="JSON run manifest")
    parser.add_argument("--config", help="simulation config JSON")
    parser.add_argument("--duration", type=float, help="simulated seconds")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--accel", type=float,
                        help="time acceleration for paced runs")
    parser.add_argument("--out", help="datalog output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aerogreen",
        description="Aeroponic greenhouse simulator and leaf-health lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="offline simulation runs")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    run = sim_sub.add_parser("run", help="run the closed loop and print totals")
    _add_run_flags(run)
    run.set_defaults(func=cmd_sim_run)

    serve = sub.add_parser("serve", help="run paced with live telemetry")
    _add_run_flags(serve)
    serve.add_argument("--listen-tcp", metavar="HOST:PORT",
                       help="newline-JSON telemetry endpoint")
    serve.add_argument("--listen-http", metavar="HOST:PORT",
                       help="HTTP API endpoint")
    serve.add_argument("--static", help="directory served at / (dashboard)")
    serve.set_defaults(func=cmd_serve)

    train = sub.add_parser("train", help="train the leaf classifier")
    train.add_argument("--data", required=True,
                       help="dataset directory or synthetic:N")
    train.add_argument("--epochs", type=int, default=12)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--freeze-epochs", type=int, default=0)
    train.add_argument("--learning-rate", type=float, default=0.01)
    train.add_argument("--batch-size", type=int, default=32)
    train.add_argument("--out", default="model.npz", help="checkpoint path")
    train.add_argument("--report", help="write the JSON evaluation report here")
    train.set_defaults(func=cmd_train)

    evl = sub.add_parser("eval", help="evaluate a trained model")
    evl.add_argument("--model", required=True)
    evl.add_argument("--data", required=True,
                     help="dataset directory or synthetic:N")
    evl.add_argument("--report", help="write the JSON evaluation report here")
    evl.set_defaults(func=cmd_eval)

    synth = sub.add_parser("synth", help="write a synthetic leaf dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--per-class", type=int, default=100)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--format", choices=("ppm", "png"), default="ppm")
    synth.set_defaults(func=cmd_synth)

    rep = sub.add_parser("replay", help="validate a datalog and print counts")
    rep.add_argument("path", help="log file or directory")
    rep.add_argument("--energy", action="store_true",
                     help="also print the energy report")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, vision.images.ImageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ReplayError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SimulationError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
