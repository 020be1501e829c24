"""Experiment orchestration: config parsing, instance synthesis, method
runs, metric tables and run persistence.

A run executes every configured method on every instance and seed,
computes R1/R2/FMI/CR against the instance's ground truth and road
partition, and writes a CSV table (per-seed rows plus per-method means), a
JSON run record, final maps, and for the DDQN method also checkpoints and
training curves. Jobs are independent, so they can execute in a process
pool; the assembled outputs are ordered deterministically regardless of
pool scheduling.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import fileio
from .baselines import ckmeans_seg, dbscan_seg, gclp_seg, greedy_seg, louvain_grid, road_seg
from .env import EnvInstance, RewardWeights
from .errors import ConfigError, InputError
from .grid import SegmentationMap, build_transfer_graph
from .metrics import co_aoi_rate, fmi, r1, r2
from .nn import TrainConfig, train
from .postprocess import post_process
from .synth import SynthConfig, SyntheticInstance, generate_instance

METHODS = ("trajrl", "greedy", "road", "louvain", "dbscan", "ckmeans", "gclp")

_SYNTH_KEYS = {
    "aoi_count",
    "trajectories_per_courier",
    "packages_per_trajectory",
    "road_merge_probability",
    "seed",
    "depot_commute",
}
_TRAIN_KEYS = {
    "episodes", "lr", "lr_decay", "gamma", "eps_start", "eps_end",
    "batch_size", "buffer_capacity", "target_sync_steps", "seed",
    "traversals", "conv_channels", "kernel", "hidden", "loss",
    "huber_delta", "stop_on_stable_pass", "k1", "k2",
}


@dataclass(frozen=True)
class BaselineParams:
    dbscan_eps: float = 1.5
    dbscan_min_pts: int = 2
    ckmeans_k_min: int = 2
    ckmeans_k_max: int = 8
    gclp_lambda: float = 0.5
    gclp_max_iters: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    grid_sizes: tuple[tuple[int, int], ...]
    methods: tuple[str, ...]
    seeds: tuple[int, ...]
    synth: dict
    train: TrainConfig
    baselines: BaselineParams
    post_process: bool = True
    init: str = "singletons"
    jobs: int = 1
    doc: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        return fileio.sha256_of(self.doc)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate and normalize an experiment config document."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if doc.get("schema_version", 1) != 1:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')}")

    sizes = doc.get("grid_sizes", [[6, 6]])
    try:
        grid_sizes = tuple((int(r), int(c)) for r, c in sizes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid_sizes must be [rows, cols] pairs: {exc}") from None

    methods = tuple(doc.get("methods", ["trajrl"]))
    if not methods:
        raise ConfigError("at least one method is required")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")

    seeds = tuple(int(s) for s in doc.get("seeds", [3047]))
    if not seeds:
        raise ConfigError("at least one seed is required")

    synth = dict(doc.get("synth", {}))
    unknown = set(synth) - _SYNTH_KEYS
    if unknown:
        raise ConfigError(f"unknown synth keys: {sorted(unknown)}")

    train_doc = dict(doc.get("train", {}))
    unknown = set(train_doc) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    k1 = train_doc.pop("k1", None)
    k2 = train_doc.pop("k2", None)
    if "conv_channels" in train_doc:
        train_doc["conv_channels"] = tuple(int(c) for c in train_doc["conv_channels"])
    try:
        train_cfg = TrainConfig(**train_doc)
        if k1 is not None or k2 is not None:
            train_cfg = replace(
                train_cfg,
                weights=RewardWeights(
                    k1 if k1 is not None else 0.6, k2 if k2 is not None else 0.4
                ),
            )
        train_cfg.validate()
    except (TypeError, InputError) as exc:
        raise ConfigError(f"bad train config: {exc}") from None

    bl = doc.get("baselines", {})
    baselines = BaselineParams(
        dbscan_eps=float(bl.get("dbscan", {}).get("eps", 1.5)),
        dbscan_min_pts=int(bl.get("dbscan", {}).get("min_pts", 2)),
        ckmeans_k_min=int(bl.get("ckmeans", {}).get("k_min", 2)),
        ckmeans_k_max=int(bl.get("ckmeans", {}).get("k_max", 8)),
        gclp_lambda=float(bl.get("gclp", {}).get("lambda", 0.5)),
        gclp_max_iters=int(bl.get("gclp", {}).get("max_iters", 50)),
    )

    init = doc.get("init", "singletons")
    if init not in ("singletons", "road"):
        raise ConfigError(f"init must be 'singletons' or 'road', got {init!r}")

    return ExperimentConfig(
        grid_sizes=grid_sizes,
        methods=methods,
        seeds=seeds,
        synth=synth,
        train=train_cfg,
        baselines=baselines,
        post_process=bool(doc.get("post_process", True)),
        init=init,
        jobs=int(doc.get("jobs", 1)),
        doc=doc,
    )


def load_config(path) -> ExperimentConfig:
    import json

    return parse_config(json.loads(Path(path).read_text()))


def synth_config_for(cfg: ExperimentConfig, rows: int, cols: int) -> SynthConfig:
    return SynthConfig(rows=rows, cols=cols, **cfg.synth)


def instance_path(out_dir, rows: int, cols: int) -> Path:
    return Path(out_dir) / f"instance_{rows}x{cols}.json"


def cmd_synth(cfg: ExperimentConfig, out_dir, force: bool = False) -> list[Path]:
    """Generate and persist one instance per configured grid size."""
    paths = []
    for rows, cols in cfg.grid_sizes:
        inst = generate_instance(synth_config_for(cfg, rows, cols))
        path = instance_path(out_dir, rows, cols)
        fileio.save_instance(inst, path, force=force)
        paths.append(path)
    return paths


def apply_method(
    cfg: ExperimentConfig,
    inst: SyntheticInstance,
    method: str,
    seed: int,
    out_dir=None,
    force: bool = False,
) -> SegmentationMap:
    """Run one segmentation method on one instance.

    For "trajrl" this trains the DDQN (seeded with ``seed``), applies
    post-processing when enabled, and, given ``out_dir``, persists the
    checkpoint and training curve.
    """
    rows, cols = inst.rows, inst.cols
    dims = (rows, cols)
    if method == "trajrl":
        env = EnvInstance.from_synthetic(inst, init=cfg.init)
        result = train(env, replace(cfg.train, seed=seed), truth=inst.ground_truth)
        seg = result.best_map
        if cfg.post_process:
            seg = post_process(seg, env.graph)
        if out_dir is not None:
            base = Path(out_dir)
            ckpt = base / "checkpoints" / f"trajrl_{rows}x{cols}_seed{seed}.bin"
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            if ckpt.exists() and not force:
                raise InputError(f"{ckpt} exists; pass force to overwrite")
            result.network.save(ckpt)
            curve_rows = [
                [str(s.episode), fileio.format_float(s.episode_return), fileio.format_float(s.fmi)]
                for s in result.curve
            ]
            fileio.write_csv(
                base / "curves" / f"trajrl_{rows}x{cols}_seed{seed}.csv",
                ["episode", "return", "fmi"],
                curve_rows,
                force=force,
            )
        return seg
    if method == "greedy":
        return greedy_seg(None, inst.trajectories, rows, cols)
    if method == "road":
        return road_seg(inst.road_partition)
    if method == "louvain":
        return louvain_grid(build_transfer_graph(inst.trajectories, rows, cols))
    if method == "dbscan":
        return dbscan_seg(
            inst.all_packages(), cfg.baselines.dbscan_eps, cfg.baselines.dbscan_min_pts, dims
        )
    if method == "ckmeans":
        packages = inst.all_packages()
        k_max = min(cfg.baselines.ckmeans_k_max, len(packages))
        k_min = min(cfg.baselines.ckmeans_k_min, k_max)
        return ckmeans_seg(packages, k_min, k_max, dims, seed)
    if method == "gclp":
        return gclp_seg(
            build_transfer_graph(inst.trajectories, rows, cols),
            cfg.baselines.gclp_lambda,
            cfg.baselines.gclp_max_iters,
        )
    raise ConfigError(f"unknown method {method!r}")


def evaluate_map(inst: SyntheticInstance, seg: SegmentationMap, method: str | None = None) -> dict:
    """All four metrics; R2 is omitted for the road method (it would score
    the road partition against itself)."""
    return {
        "r1": r1(seg, inst.trajectories),
        "r2": None if method == "road" else r2(seg, inst.road_partition),
        "fmi": fmi(inst.ground_truth, seg),
        "cr": co_aoi_rate(inst.ground_truth, seg),
    }


def _run_job(args) -> dict:
    doc, inst_path, method, seed, out_str, force = args
    cfg = parse_config(doc)
    inst = fileio.load_instance(inst_path)
    started = time.perf_counter()
    seg = apply_method(cfg, inst, method, seed, out_dir=out_str, force=force)
    wall = time.perf_counter() - started
    map_path = Path(out_str) / "maps" / f"map_{inst.rows}x{inst.cols}_{method}_seed{seed}.json"
    fileio.save_map(seg, map_path, force=force)
    row = {
        "rows": inst.rows,
        "cols": inst.cols,
        "method": method,
        "seed": seed,
        "wall_clock_s": wall,
        "map_path": str(map_path),
    }
    row.update(evaluate_map(inst, seg, method))
    return row


def cmd_run(cfg: ExperimentConfig, out_dir, force: bool = False, jobs: int | None = None) -> dict:
    """Execute every (grid size, method, seed) job; returns the run record.

    Requires the instance files produced by cmd_synth in ``out_dir``.
    Writes results.csv and runrecord.json there.
    """
    out = Path(out_dir)
    for rows, cols in cfg.grid_sizes:
        if not instance_path(out, rows, cols).exists():
            raise InputError(
                f"missing {instance_path(out, rows, cols)}; run the synth command first"
            )
    jobs = cfg.jobs if jobs is None else jobs
    job_args = [
        (cfg.doc, str(instance_path(out, rows, cols)), method, seed, str(out), force)
        for rows, cols in cfg.grid_sizes
        for method in cfg.methods
        for seed in cfg.seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_job, job_args))
    else:
        results = [_run_job(a) for a in job_args]

    header = ["rows", "cols", "method", "seed", "r1", "r2", "fmi", "cr"]
    lines = []
    for row in results:
        lines.append([
            str(row["rows"]), str(row["cols"]), row["method"], str(row["seed"]),
            fileio.format_float(row["r1"]), fileio.format_float(row["r2"]),
            fileio.format_float(row["fmi"]), fileio.format_float(row["cr"]),
        ])
    # per-method mean rows over seeds, per grid size
    for rows_, cols_ in cfg.grid_sizes:
        for method in cfg.methods:
            group = [
                r for r in results
                if r["rows"] == rows_ and r["cols"] == cols_ and r["method"] == method
            ]
            if not group:
                continue

            def mean_of(key):
                vals = [g[key] for g in group if g[key] is not None]
                return sum(vals) / len(vals) if vals else None

            lines.append([
                str(rows_), str(cols_), method, "mean",
                fileio.format_float(mean_of("r1")), fileio.format_float(mean_of("r2")),
                fileio.format_float(mean_of("fmi")), fileio.format_float(mean_of("cr")),
            ])
    fileio.write_csv(out / "results.csv", header, lines, force=force)

    record = {
        "schema_version": fileio.SCHEMA_VERSION,
        "kind": "run_record",
        "config_hash": cfg.config_hash,
        "results": sorted(
            (
                {k: v for k, v in row.items()}
                for row in results
            ),
            key=lambda r: (r["rows"], r["cols"], r["method"], r["seed"]),
        ),
        "total_wall_clock_s": sum(r["wall_clock_s"] for r in results),
    }
    fileio.write_text(out / "runrecord.json", fileio.canonical_json(record) + "\n", force=force)
    return record
