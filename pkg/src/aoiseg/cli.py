"""Command-line interface.

Subcommands: synth, run, train, eval, postprocess, render. Exit code 0 on
success; configuration and input problems print a diagnostic on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import fileio
from .env import EnvInstance
from .errors import AoisegError
from .experiment import METHODS, cmd_run, cmd_synth, evaluate_map, load_config
from .grid import build_transfer_graph
from .nn import train as train_ddqn
from .postprocess import post_process
from .render import render_map


def _add_common(parser, config=True, seed=False, out=True, force=True):
    if config:
        parser.add_argument("--config", required=True, help="experiment config JSON")
    if seed:
        parser.add_argument("--seed", type=int, default=None, help="override run seed")
    if out:
        parser.add_argument("--out", required=True, help="output directory")
    if force:
        parser.add_argument("--force", action="store_true", help="overwrite existing files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoiseg",
        description="AOI segmentation experiments: synthesize benchmarks, "
        "train the DDQN segmenter, run baselines, evaluate and render maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic benchmark instances")
    _add_common(p)

    p = sub.add_parser("run", help="run configured methods over instances and tabulate metrics")
    _add_common(p)
    p.add_argument("--jobs", type=int, default=None, help="parallel worker processes")

    p = sub.add_parser("train", help="train the DDQN segmenter on one instance")
    _add_common(p, seed=True)
    p.add_argument("--instance", default=None, help="instance JSON (defaults to the config's first grid size in --out)")

    p = sub.add_parser("eval", help="evaluate a map file against an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--map", required=True, dest="map_path")
    p.add_argument("--method", default=None, choices=list(METHODS), help="method label (road omits R2)")
    p.add_argument("--out", default=None, help="optional metrics JSON output path")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("postprocess", help="merge fragmented AOIs via the coarsened transfer graph")
    p.add_argument("--instance", required=True)
    p.add_argument("--map", required=True, dest="map_path")
    p.add_argument("--out", required=True, help="output map JSON path")
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("render", help="render a map (and optional trajectories) to a PPM image")
    p.add_argument("--map", required=True, dest="map_path")
    p.add_argument("--instance", default=None, help="overlay this instance's trajectories")
    p.add_argument("--out", required=True, help="output PPM path")
    p.add_argument("--scale", type=int, default=20, help="pixels per grid cell")
    p.add_argument("--force", action="store_true")

    return parser


def _cmd_synth(args) -> int:
    cfg = load_config(args.config)
    paths = cmd_synth(cfg, args.out, force=args.force)
    for path in paths:
        print(path)
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    record = cmd_run(cfg, args.out, force=args.force, jobs=args.jobs)
    print(Path(args.out) / "results.csv")
    print(f"{len(record['results'])} runs, config {record['config_hash'][:12]}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.instance is not None:
        inst = fileio.load_instance(args.instance)
    else:
        rows, cols = cfg.grid_sizes[0]
        inst_path = Path(args.out) / f"instance_{rows}x{cols}.json"
        if not inst_path.exists():
            print(f"error: {inst_path} not found; run synth first or pass --instance", file=sys.stderr)
            return 1
        inst = fileio.load_instance(inst_path)
    seed = args.seed if args.seed is not None else cfg.train.seed
    env = EnvInstance.from_synthetic(inst, init=cfg.init)
    result = train_ddqn(env, replace(cfg.train, seed=seed), truth=inst.ground_truth)
    seg = result.best_map
    if cfg.post_process:
        seg = post_process(seg, env.graph)

    out = Path(args.out)
    ckpt = out / f"checkpoint_seed{seed}.bin"
    if ckpt.exists() and not args.force:
        print(f"error: {ckpt} exists; pass --force to overwrite", file=sys.stderr)
        return 1
    out.mkdir(parents=True, exist_ok=True)
    result.network.save(ckpt)
    fileio.write_csv(
        out / f"curve_seed{seed}.csv",
        ["episode", "return", "fmi"],
        [
            [str(s.episode), fileio.format_float(s.episode_return), fileio.format_float(s.fmi)]
            for s in result.curve
        ],
        force=args.force,
    )
    fileio.save_map(seg, out / f"map_seed{seed}.json", force=args.force)
    metrics = evaluate_map(inst, seg)
    print(fileio.canonical_json({k: metrics[k] for k in ("r1", "r2", "fmi", "cr")}))
    return 0


def _cmd_eval(args) -> int:
    inst = fileio.load_instance(args.instance)
    seg = fileio.load_map(args.map_path)
    metrics = evaluate_map(inst, seg, args.method)
    doc = {k: metrics[k] for k in ("r1", "r2", "fmi", "cr")}
    text = fileio.canonical_json(doc)
    print(text)
    if args.out:
        fileio.write_text(args.out, text + "\n", force=args.force)
    return 0


def _cmd_postprocess(args) -> int:
    inst = fileio.load_instance(args.instance)
    seg = fileio.load_map(args.map_path)
    graph = build_transfer_graph(inst.trajectories, inst.rows, inst.cols)
    merged = post_process(seg, graph)
    fileio.save_map(merged, args.out, force=args.force)
    print(args.out)
    return 0


def _cmd_render(args) -> int:
    seg = fileio.load_map(args.map_path)
    trajectories = ()
    if args.instance:
        trajectories = fileio.load_instance(args.instance).trajectories
    img = render_map(seg, trajectories, scale=args.scale)
    fileio.write_ppm(args.out, img, force=args.force)
    print(args.out)
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "run": _cmd_run,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "postprocess": _cmd_postprocess,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except AoisegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
