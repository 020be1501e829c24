"""File formats, rendering, experiment runner and CLI tests."""

import json

import numpy as np
import pytest

from aoiseg import fileio
from aoiseg.cli import main
from aoiseg.errors import ConfigError, InputError
from aoiseg.experiment import (
    apply_method,
    cmd_run,
    cmd_synth,
    evaluate_map,
    load_config,
    parse_config,
)
from aoiseg.grid import SegmentationMap, Trajectory
from aoiseg.metrics import r1
from aoiseg.render import PALETTE, render_map
from aoiseg.roadinit import GrayRaster
from aoiseg.synth import SynthConfig, generate_instance

BASE_CONFIG = {
    "schema_version": 1,
    "grid_sizes": [[6, 6]],
    "methods": ["road", "greedy", "louvain"],
    "seeds": [1, 2],
    "synth": {"aoi_count": 4, "road_merge_probability": 0.3, "seed": 7},
    "train": {"episodes": 2, "batch_size": 8, "buffer_capacity": 64,
              "conv_channels": [4, 6], "hidden": 16, "traversals": 2},
}


# ------------------------------------------------------------------ fileio

def test_map_json_roundtrip(tmp_path):
    inst = generate_instance(SynthConfig(rows=5, cols=5, aoi_count=3, seed=5))
    path = tmp_path / "map.json"
    fileio.save_map(inst.ground_truth, path)
    assert fileio.load_map(path).same_labels(inst.ground_truth)


def test_instance_json_roundtrip(tmp_path):
    inst = generate_instance(SynthConfig(rows=6, cols=6, aoi_count=4, seed=9))
    path = tmp_path / "inst.json"
    fileio.save_instance(inst, path)
    loaded = fileio.load_instance(path)
    assert loaded.ground_truth.same_labels(inst.ground_truth)
    assert loaded.road_partition.same_labels(inst.road_partition)
    assert loaded.packages == inst.packages
    assert loaded.courier_of_trajectory == inst.courier_of_trajectory
    for a, b in zip(loaded.trajectories, inst.trajectories):
        assert np.array_equal(a.cells, b.cells)


def test_write_refuses_overwrite_without_force(tmp_path):
    path = tmp_path / "x.json"
    fileio.write_text(path, "a")
    with pytest.raises(InputError):
        fileio.write_text(path, "b")
    fileio.write_text(path, "b", force=True)
    assert path.read_text() == "b"


def test_pgm_roundtrip_and_comments(tmp_path):
    rng = np.random.default_rng(3)
    raster = GrayRaster(rng.integers(0, 256, size=(7, 5)))
    path = tmp_path / "img.pgm"
    fileio.write_pgm(path, raster)
    again = fileio.read_pgm(path)
    assert np.array_equal(again.intensity, raster.intensity)
    # insert a comment line into the header
    raw = path.read_bytes().replace(b"P5\n", b"P5\n# comment line\n")
    path.write_bytes(raw)
    again = fileio.read_pgm(path)
    assert np.array_equal(again.intensity, raster.intensity)


def test_packages_and_trajectories_csv(tmp_path):
    pkg_path = tmp_path / "packages.csv"
    pkg_path.write_text("courier_id,row,col\n0,1,2\n0,3,4\n1,0,0\n")
    packages = fileio.load_packages_csv(pkg_path)
    assert packages == {0: [(1, 2), (3, 4)], 1: [(0, 0)]}

    traj_path = tmp_path / "traj.csv"
    traj_path.write_text("courier_id,seq,row,col\n0,0,0,0\n0,0,0,2\n1,0,1,1\n")
    trajs = fileio.load_trajectories_csv(traj_path, 3, 3)
    assert list(trajs[0][0].cells) == [0, 1, 2]  # densified gap
    assert list(trajs[1][0].cells) == [4]


# ------------------------------------------------------------------ render

def test_render_single_aoi_single_color():
    img = render_map(SegmentationMap.uniform(3, 3), scale=4)
    assert img.shape == (12, 12, 3)
    assert len({tuple(px) for px in img.reshape(-1, 3)}) == 1


def test_render_deterministic_and_color_count():
    seg = SegmentationMap([[0, 0, 1], [2, 2, 1], [2, 2, 1]])
    a = render_map(seg, scale=5)
    b = render_map(seg, scale=5)
    assert np.array_equal(a, b)
    colors = {tuple(px) for px in a.reshape(-1, 3)}
    assert len(colors) == 3


def test_render_trajectory_overlay_draws_black():
    seg = SegmentationMap.uniform(3, 3)
    img = render_map(seg, [Trajectory([0, 1, 2])], scale=6)
    assert (img == 0).all(axis=2).any()


def test_palette_has_32_distinct_colors():
    assert PALETTE.shape == (32, 3)
    assert len({tuple(c) for c in PALETTE}) == 32


# -------------------------------------------------------------- experiment

def test_parse_config_rejects_unknown_method():
    with pytest.raises(ConfigError):
        parse_config({"methods": ["nope"]})


def test_parse_config_rejects_empty_seeds():
    with pytest.raises(ConfigError):
        parse_config({"methods": ["road"], "seeds": []})


def test_synth_writes_identical_bytes(tmp_path):
    cfg = parse_config(BASE_CONFIG)
    (a,) = cmd_synth(cfg, tmp_path / "one")
    (b,) = cmd_synth(cfg, tmp_path / "two")
    assert a.read_bytes() == b.read_bytes()


def test_synth_instances_score_zero_r1_on_truth(tmp_path):
    cfg = parse_config(BASE_CONFIG)
    (path,) = cmd_synth(cfg, tmp_path)
    inst = fileio.load_instance(path)
    assert r1(inst.ground_truth, inst.trajectories) == 0.0


def test_run_requires_instances(tmp_path):
    cfg = parse_config(BASE_CONFIG)
    with pytest.raises(InputError):
        cmd_run(cfg, tmp_path)


def test_run_writes_table_and_record(tmp_path):
    cfg = parse_config(BASE_CONFIG)
    cmd_synth(cfg, tmp_path)
    record = cmd_run(cfg, tmp_path)
    table = (tmp_path / "results.csv").read_text().strip().splitlines()
    assert table[0] == "rows,cols,method,seed,r1,r2,fmi,cr"
    # 3 methods x 2 seeds + 3 mean rows
    assert len(table) == 1 + 6 + 3
    road_rows = [line for line in table[1:] if line.split(",")[2] == "road"]
    for line in road_rows:
        assert line.split(",")[5] == ""  # R2 omitted for the road method
    assert record["config_hash"] == cfg.config_hash
    assert (tmp_path / "runrecord.json").exists()
    rec = json.loads((tmp_path / "runrecord.json").read_text())
    assert rec["config_hash"] == cfg.config_hash
    for row in rec["results"]:
        assert 0.0 <= row["fmi"] <= 1.0
        assert 0.0 <= row["cr"] <= 1.0
        assert row["r1"] <= 0.0


def test_run_trajrl_writes_checkpoint_and_curve(tmp_path):
    doc = dict(BASE_CONFIG, methods=["trajrl"], seeds=[5])
    cfg = parse_config(doc)
    cmd_synth(cfg, tmp_path)
    cmd_run(cfg, tmp_path)
    assert (tmp_path / "checkpoints" / "trajrl_6x6_seed5.bin").exists()
    curve = (tmp_path / "curves" / "trajrl_6x6_seed5.csv").read_text().splitlines()
    assert curve[0] == "episode,return,fmi"
    assert len(curve) == 1 + 2  # 2 episodes


def test_run_reproducible_byte_identical(tmp_path):
    cfg = parse_config(dict(BASE_CONFIG, methods=["road", "greedy"]))
    for name in ("one", "two"):
        cmd_synth(cfg, tmp_path / name)
        cmd_run(cfg, tmp_path / name)
    assert (tmp_path / "one" / "results.csv").read_bytes() == (
        tmp_path / "two" / "results.csv"
    ).read_bytes()


def test_run_parallel_matches_serial(tmp_path):
    cfg = parse_config(BASE_CONFIG)
    cmd_synth(cfg, tmp_path / "serial")
    cmd_synth(cfg, tmp_path / "parallel")
    cmd_run(cfg, tmp_path / "serial", jobs=1)
    cmd_run(cfg, tmp_path / "parallel", jobs=2)
    assert (tmp_path / "serial" / "results.csv").read_bytes() == (
        tmp_path / "parallel" / "results.csv"
    ).read_bytes()


def test_evaluate_map_matches_direct_metrics(tmp_path):
    inst = generate_instance(SynthConfig(rows=6, cols=6, aoi_count=4, seed=3))
    metrics = evaluate_map(inst, inst.ground_truth)
    assert metrics["fmi"] == 1.0 and metrics["cr"] == 1.0 and metrics["r1"] == 0.0


def test_apply_method_unknown_rejected(tmp_path):
    cfg = parse_config(BASE_CONFIG)
    inst = generate_instance(SynthConfig(rows=5, cols=5, aoi_count=3, seed=1))
    with pytest.raises(ConfigError):
        apply_method(cfg, inst, "bogus", 0)


# --------------------------------------------------------------------- CLI

def write_config(tmp_path, doc=None):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc or BASE_CONFIG))
    return path


def test_cli_synth_run_eval_render_postprocess(tmp_path, capsys):
    cfg_path = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    inst_path = out / "instance_6x6.json"
    map_path = out / "maps" / "map_6x6_road_seed1.json"
    assert inst_path.exists() and map_path.exists()

    assert main([
        "eval", "--instance", str(inst_path), "--map", str(map_path), "--method", "road",
    ]) == 0
    doc = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(doc) == {"r1", "r2", "fmi", "cr"}
    assert doc["r2"] is None

    merged = tmp_path / "merged.json"
    assert main([
        "postprocess", "--instance", str(inst_path), "--map", str(map_path),
        "--out", str(merged),
    ]) == 0
    assert merged.exists()

    img = tmp_path / "map.ppm"
    assert main([
        "render", "--map", str(map_path), "--instance", str(inst_path),
        "--out", str(img), "--scale", "6",
    ]) == 0
    data = img.read_bytes()
    assert data.startswith(b"P6\n36 36\n255\n")

    # identical render twice -> identical bytes
    img2 = tmp_path / "map2.ppm"
    main(["render", "--map", str(map_path), "--instance", str(inst_path),
          "--out", str(img2), "--scale", "6"])
    assert img2.read_bytes() == data


def test_cli_train_writes_artifacts(tmp_path):
    doc = dict(BASE_CONFIG, methods=["trajrl"], seeds=[4])
    cfg_path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert main(["train", "--config", str(cfg_path), "--out", str(out), "--seed", "4"]) == 0
    assert (out / "checkpoint_seed4.bin").exists()
    assert (out / "curve_seed4.csv").exists()
    assert (out / "map_seed4.json").exists()


def test_cli_bad_config_exits_nonzero(tmp_path, capsys):
    cfg_path = write_config(tmp_path, {"methods": ["bogus"]})
    rc = main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "error" in capsys.readouterr().err


def test_cli_refuses_overwrite_without_force(tmp_path):
    cfg_path = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 1
    assert main(["synth", "--config", str(cfg_path), "--out", str(out), "--force"]) == 0
