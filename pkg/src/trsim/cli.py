"""Command-line entry points: world, teach, repeat, eval, serve.

Every flag can also be supplied through an environment variable named
TRSIM_<FLAG> (uppercase, dashes as underscores), e.g. TRSIM_SEED=7 or
TRSIM_PORT=8750.  Exit codes: 0 success, 2 configuration error, 3 runtime
failure (e.g. every repeat in a batch lost localization).
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from pathlib import Path

import yaml

from .errors import InvalidConfig, SimError
from .evaluation import compare_repeats, emit_report, estimate_pte, measure_markers
from .mapnoise import sample_map_cloud
from .pipeline import (ANALOG_ROUTES, RunConfig, analog_config,
                       load_teach_artifacts, run_one_repeat, run_teach,
                       taught_offsets, write_teach_artifacts)
from .repeat import load_repeat_log, save_repeat_log
from .world import generate_world, save_world_config
from . import presets

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _env_default(flag: str, fallback=None):
    return os.environ.get("TRSIM_" + flag.upper().replace("-", "_"), fallback)


def _load_run_config(args) -> RunConfig:
    if args.config:
        return RunConfig.load(args.config)
    doc = analog_config(args.route, noisy=not args.clean, seed=args.seed or 0)
    if args.seed is not None:
        doc["seed"] = args.seed
    return RunConfig.from_dict(doc)


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", default=_env_default("config"),
                   help="run config YAML (otherwise a built-in analog route)")
    p.add_argument("--route", default=_env_default("route", "yard_loop"),
                   choices=list(ANALOG_ROUTES),
                   help="built-in route when no --config is given")
    p.add_argument("--clean", action="store_true",
                   help="use the clean-map variant of the built-in config")
    p.add_argument("--seed", type=int,
                   default=int(_env_default("seed", 0)))


def cmd_world(args) -> int:
    if args.config:
        from .world import load_world_config
        config = load_world_config(args.config)
    else:
        config = presets.world_preset(args.preset)
    world = generate_world(config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_world_config(config, out / "world.yaml")
    stats = {
        "seed": args.seed,
        "extent": list(world.extent),
        "obstacles": world.obstacle_count,
        "boxes": int(len(world.boxes)),
        "cylinders": int(len(world.cylinders)),
    }
    (out / "world_stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    if args.cloud:
        from .mapnoise import MapNoiseModel
        from .cloud import save_ply
        cloud = sample_map_cloud(world, MapNoiseModel(density=args.cloud_density),
                                 args.seed)
        save_ply(cloud, out / "world_cloud.ply")
    print(f"world: {world.obstacle_count} obstacles, extent {world.extent}")
    return EXIT_OK


def _route_from_script(path: str) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or not ({"waypoints", "circle", "twists"} & doc.keys()):
        raise InvalidConfig(f"{path}: script needs 'waypoints', 'circle', or 'twists'")
    return doc


def cmd_teach(args) -> int:
    if args.serve:
        from .bridge import serve_forever
        cfg = _load_run_config(args)
        serve_forever(cfg, args.host, args.port)
        return EXIT_OK
    cfg = _load_run_config(args)
    if args.script:
        doc = dict(cfg.raw)
        doc["route"] = _route_from_script(args.script)
        cfg = RunConfig.from_dict(doc)
    artifacts = run_teach(cfg)
    out = write_teach_artifacts(artifacts, args.out)
    print(f"teach: {len(artifacts.graph.vertices)} vertices, "
          f"{artifacts.teach_path.length():.1f} m, "
          f"{len(artifacts.marker_records)} markers -> {out}")
    return EXIT_OK


def cmd_repeat(args) -> int:
    loaded = load_teach_artifacts(args.graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for i in range(args.n):
        seed = args.seed + i
        log = run_one_repeat(loaded.config, loaded.world, loaded.graph,
                             loaded.start_pose_w, loaded.marker_records, seed)
        run_dir = out / f"repeat_{seed:05d}"
        save_repeat_log(log, run_dir)
        status = "ok" if log.completed else f"FAILED ({log.failure_reason})"
        print(f"repeat seed={seed}: {len(log.entries)} cycles, {status}")
        if not log.completed:
            failures += 1
    return EXIT_RUNTIME if failures == args.n else EXIT_OK


def _echo_extra(loaded, seed) -> dict:
    return {"config": loaded.config.raw, "seed": seed}


def cmd_eval(args) -> int:
    loaded = load_teach_artifacts(args.graph)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    logs = [(Path(d).name, load_repeat_log(d)) for d in args.logs]
    written = []
    coverage = float(loaded.config.graph["dist_threshold"])
    if args.mode == "absolute":
        for name, log in logs:
            report = estimate_pte(loaded.graph, log, coverage_dist=coverage)
            base = out / f"absolute_{name}"
            base.with_suffix(".json").write_text(
                emit_report(report, "json", _echo_extra(loaded, log.seed)))
            base.with_suffix(".csv").write_text(emit_report(report, "csv"))
            written.append(base.name)
    elif args.mode == "markers":
        offsets = taught_offsets(loaded.marker_records)
        sigma = float(loaded.config.markers["noise_sigma"])
        for name, log in logs:
            report = measure_markers(loaded.world, log, offsets, sigma,
                                     seed=args.seed + log.seed)
            base = out / f"markers_{name}"
            base.with_suffix(".json").write_text(
                emit_report(report, "json", _echo_extra(loaded, log.seed)))
            base.with_suffix(".csv").write_text(emit_report(report, "csv"))
            written.append(base.name)
    elif args.mode == "relative":
        for (name_a, log_a), (name_b, log_b) in itertools.combinations(logs, 2):
            report = compare_repeats(loaded.graph, log_a, log_b,
                                     coverage_dist=coverage)
            base = out / f"relative_{name_a}_{name_b}"
            base.with_suffix(".json").write_text(
                emit_report(report, "json",
                            {"config": loaded.config.raw,
                             "seeds": [log_a.seed, log_b.seed]}))
            base.with_suffix(".csv").write_text(emit_report(report, "csv"))
            written.append(base.name)
    print(f"eval: wrote {len(written)} report(s) to {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .bridge import serve_forever
    cfg = _load_run_config(args)
    serve_forever(cfg, args.host, args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trsim",
        description="Teach-and-repeat navigation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("world", help="generate a world and report stats")
    p.add_argument("--config", default=_env_default("config"))
    p.add_argument("--preset", default=_env_default("preset", "yard_loop"),
                   choices=sorted(presets.WORLD_PRESETS))
    p.add_argument("--seed", type=int, default=int(_env_default("seed", 0)))
    p.add_argument("--out", default=_env_default("out", "out/world"))
    p.add_argument("--cloud", action="store_true",
                   help="also sample and write a map cloud PLY")
    p.add_argument("--cloud-density", type=float, default=10.0)
    p.set_defaults(func=cmd_world)

    p = sub.add_parser("teach", help="run a scripted teach and build the map")
    _add_config_args(p)
    p.add_argument("--script", default=_env_default("script"),
                   help="route script YAML (waypoints/circle/twists)")
    p.add_argument("--out", default=_env_default("out", "out/teach"))
    p.add_argument("--serve", action="store_true",
                   help="launch the interactive piloting service instead")
    p.add_argument("--host", default=_env_default("host", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(_env_default("port", 8750)))
    p.set_defaults(func=cmd_teach)

    p = sub.add_parser("repeat", help="run autonomous repeats against a teach map")
    p.add_argument("--graph", required=True,
                   help="teach artifact directory (output of trsim teach)")
    p.add_argument("--out", default=_env_default("out", "out/repeats"))
    p.add_argument("-n", type=int, default=1, help="number of repeats")
    p.add_argument("--seed", type=int, default=int(_env_default("seed", 100)))
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("eval", help="evaluate repeat logs against a teach map")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=["absolute", "markers", "relative"],
                   default="absolute")
    p.add_argument("--out", default=_env_default("out", "out/eval"))
    p.add_argument("--seed", type=int, default=int(_env_default("seed", 0)),
                   help="measurement-noise seed base (markers mode)")
    p.add_argument("logs", nargs="+", help="repeat log directories")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the interactive piloting service")
    _add_config_args(p)
    p.add_argument("--host", default=_env_default("host", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(_env_default("port", 8750)))
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
