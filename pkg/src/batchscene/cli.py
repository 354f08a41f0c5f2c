"""Command line entry point: ``batchscene {generate,bench,export,reachmap}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("batchscene")

EXIT_OK, EXIT_NO_VALID, EXIT_USAGE = 0, 1, 2


def _int_list(text: str, minimum: int) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < minimum:
        raise argparse.ArgumentTypeError(f"values must be integers >= {minimum}")
    return values


def _sizes(text: str) -> list[int]:
    return _int_list(text, 1)


def _indices(text: str) -> list[int]:
    return _int_list(text, 0)


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="batchscene", description="Batched procedural scene generation.")
    parser.add_argument("--threads", type=_positive, default=None,
                        help="worker threads for the parallel kernels (default: all cores)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a batch of scenes and write a JSON dump")
    g.add_argument("--config", required=True, type=Path)
    g.add_argument("--num", required=True, type=_positive)
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--warm-repeat", type=int, default=0, metavar="K",
                   help="run K more warm generations after the cold one")
    g.add_argument("--warm-seed", choices=("advance", "same"), default="advance",
                   help="warm runs use seed+1, seed+2, ... (advance) or the cold seed (same)")
    g.add_argument("--include-invalid", action="store_true", help="also dump invalid instances")
    g.add_argument("--obj", type=_indices, default=None, metavar="I,J",
                   help="also write OBJ meshes for these instance indices")

    b = sub.add_parser("bench", help="time cold, warm and baseline runs")
    b.add_argument("--config", required=True, type=Path)
    b.add_argument("--num", required=True, type=_sizes)
    b.add_argument("--modes", default="cold,warm,baseline")
    b.add_argument("--out", required=True, type=Path)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--baseline-cap", type=_positive, default=64,
                   help="run at most this many baseline scenes per N and report per-scene cost")

    e = sub.add_parser("export", help="write OBJ meshes for instances of a scene dump")
    e.add_argument("--config", required=True, type=Path)
    e.add_argument("--dump", required=True, type=Path)
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--instances", type=_indices, default=None, metavar="I,J")

    r = sub.add_parser("reachmap", help="build or inspect a reachability map")
    rsub = r.add_subparsers(dest="action", required=True)
    rb = rsub.add_parser("build")
    rb.add_argument("--config", required=True, type=Path, help="scene config with a 'robot' section")
    rb.add_argument("--out", required=True, type=Path)
    rb.add_argument("--samples", type=_positive, default=None)
    rb.add_argument("--resolution", type=float, default=None)
    rb.add_argument("--seed", type=int, default=None)
    ri = rsub.add_parser("inspect")
    ri.add_argument("map", type=Path)
    return parser


def _generate(args) -> int:
    from .config import load_config
    from .engine import cold_generate, warm_generate
    from .export import dump_scenes, export_obj, save_dump

    config, base_dir = load_config(args.config)
    args.out.mkdir(parents=True, exist_ok=True)
    state, graph, report = cold_generate(config, args.num, args.seed, base_dir)
    with report.timings("export"):
        save_dump(dump_scenes(state, graph, args.seed, args.include_invalid), args.out / "scenes.json")
        if args.obj:
            export_obj(dump_scenes(state, graph, args.seed, True), state.assets, config,
                       args.out / "obj", args.obj)
    reports = [report.to_dict()]
    print(f"cold: {report.n_valid}/{args.num} valid in {report.wall_time:.3f}s")
    for k in range(1, args.warm_repeat + 1):
        seed = args.seed if args.warm_seed == "same" else args.seed + k
        g, rep = warm_generate(state, seed)
        with rep.timings("export"):
            save_dump(dump_scenes(state, g, seed, args.include_invalid), args.out / f"scenes_warm_{k}.json")
        reports.append(rep.to_dict())
        print(f"warm {k}: {rep.n_valid}/{args.num} valid in {rep.wall_time:.3f}s "
              f"({rep.valid_per_second:.1f} valid/s)")
    (args.out / "report.json").write_text(json.dumps(reports, indent=1) + "\n")
    return EXIT_OK if report.n_valid > 0 else EXIT_NO_VALID


def _bench(args) -> int:
    from .bench import run_bench, summary, write_bench
    from .config import load_config

    config, base_dir = load_config(args.config)
    modes = [m for m in args.modes.split(",") if m]
    rows = run_bench(config, args.num, modes, args.seed, base_dir, args.baseline_cap)
    write_bench(rows, args.out)
    print(summary(rows))
    return EXIT_OK


def _export(args) -> int:
    from .assets import asset_from_spec
    from .config import load_config
    from .export import export_obj, load_dump

    config, base_dir = load_config(args.config)
    dump = load_dump(args.dump)
    assets = {}
    for p in config.placements:
        spec = config.assets[p.asset_name].model_dump(mode="python", exclude_none=True)
        assets.setdefault(p.asset_name, asset_from_spec(p.asset_name, spec, base_dir))
    paths = export_obj(dump, assets, config, args.out, args.instances)
    print(f"wrote {len(paths)} OBJ file(s) to {args.out}")
    return EXIT_OK


def _reachmap(args) -> int:
    import math

    import numpy as np

    from .config import ConfigError, load_config
    from .engine import _chain_from_config
    from .reachability import build_map, inspect_map, load_map, save_map

    if args.action == "inspect":
        print(json.dumps(inspect_map(load_map(args.map)), indent=1))
        return EXIT_OK
    config, _ = load_config(args.config)
    robot = config.robot
    if robot is None:
        raise ConfigError(f"{args.config}: no 'robot' section")
    rmap = build_map(
        _chain_from_config(robot),
        args.samples or robot.samples,
        args.resolution or robot.resolution,
        math.radians(robot.angle_resolution_deg),
        np.random.default_rng(robot.seed if args.seed is None else args.seed),
    )
    save_map(rmap, args.out)
    print(json.dumps(inspect_map(rmap), indent=1))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        # must be set before numba starts its thread pool
        os.environ["NUMBA_NUM_THREADS"] = str(max(args.threads, int(os.environ.get("NUMBA_NUM_THREADS", "0") or 0)))
        import numba

        from .collision import kernels  # noqa: F401  (selects the threading layer first)

        numba.set_num_threads(args.threads)

    from .config import ConfigError

    handlers = {"generate": _generate, "bench": _bench, "export": _export, "reachmap": _reachmap}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
