import json

import numpy as np
import pytest

from genflow.articulation import object_to_json
from genflow.cli import main
from genflow.flow import GeneralFlow, flow_to_bytes, load_flow, save_flow
from genflow.geometry import PointCloud, SE3Transform, read_ply, se3_apply, write_ply
from genflow.scenes import make_safe


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def scene_file(tmp_path):
    entry = object_to_json(make_safe())
    entry["track"] = {"keyframes": [{"t": 0.0, "joints": {"door": 0.0}},
                                    {"t": 1.8, "joints": {"door": 0.6}}]}
    return write_json(tmp_path / "world.json", {"objects": [entry]})


def dataset_config(tmp_path, window, **extra):
    return write_json(tmp_path / "gen.json", {"world_file": "world.json", "action_window": window,
                                              "n_queries": 32, "seed": 3, **extra})


# -- gen-dataset ------------------------------------------------------------------

def test_gen_dataset_single_clip(tmp_path, capsys, scene_file):
    cfg = dataset_config(tmp_path, [0.0, 1.5])
    code, out, _ = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "ds")
    assert code == 0
    assert json.loads(out)["n_records"] == 1
    manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert len(manifest["entries"]) == 1
    flow = load_flow(tmp_path / "ds" / manifest["entries"][0]["file"])
    assert flow.n_queries == 32 and flow.steps == 3


def test_gen_dataset_three_clips(tmp_path, capsys, scene_file):
    cfg = dataset_config(tmp_path, [0.0, 1.8])
    code, out, _ = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "ds")
    assert code == 0
    manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    np.testing.assert_allclose([e["clip_start"] for e in manifest["entries"]], [0.0, 0.15, 0.3])


def test_gen_dataset_is_deterministic(tmp_path, capsys, scene_file):
    cfg = dataset_config(tmp_path, [0.0, 1.8], format="json")
    for name in ("a", "b"):
        assert run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / name)[0] == 0
    for f in ("manifest.json", "flows/00000.json", "flows/00002.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_gen_dataset_missing_world(tmp_path, capsys):
    cfg = dataset_config(tmp_path, [0.0, 1.5])
    code, _, err = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "ds")
    assert code == 2
    assert str(tmp_path / "world.json") in err


def test_malformed_config_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "world_file": \n}')
    code, _, err = run(capsys, "gen-dataset", "--config", bad)
    assert code == 2 and "line 3" in err


def test_missing_field_is_named(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"n_queries": 3})
    code, _, err = run(capsys, "gen-dataset", "--config", cfg)
    assert code == 2 and "world_file" in err


# -- eval -------------------------------------------------------------------------

def some_flow(seed=0):
    rng = np.random.default_rng(seed)
    return GeneralFlow(rng.normal(size=(8, 3)), rng.normal(size=(8, 3, 3)))


def test_eval_self(tmp_path, capsys):
    save_flow(some_flow(), tmp_path / "a.gflw")
    code, out, _ = run(capsys, "eval", tmp_path / "a.gflw", tmp_path / "a.gflw")
    rep = json.loads(out)
    assert code == 0 and rep["ade_cm"] == 0.0 and rep["fde_cm"] == 0.0


def test_eval_offset(tmp_path, capsys):
    f = some_flow()
    save_flow(f, tmp_path / "t.json")
    save_flow(GeneralFlow(f.queries, f.trajectories + [0.0, 0.0, 0.05]), tmp_path / "p.gflw")
    code, out, _ = run(capsys, "eval", tmp_path / "p.gflw", tmp_path / "t.json")
    assert code == 0
    assert json.loads(out)["ade_cm"] == pytest.approx(5.0, abs=1e-9)


def test_eval_truncated(tmp_path, capsys):
    (tmp_path / "a.gflw").write_bytes(flow_to_bytes(some_flow())[:-5])
    save_flow(some_flow(), tmp_path / "b.gflw")
    assert run(capsys, "eval", tmp_path / "a.gflw", tmp_path / "b.gflw")[0] == 3


def test_eval_shape_mismatch(tmp_path, capsys):
    save_flow(some_flow(), tmp_path / "a.gflw")
    save_flow(GeneralFlow(np.zeros((2, 3)), np.zeros((2, 3, 3))), tmp_path / "b.gflw")
    assert run(capsys, "eval", tmp_path / "a.gflw", tmp_path / "b.gflw")[0] == 3


def test_eval_samples(tmp_path, capsys):
    f = some_flow()
    save_flow(f, tmp_path / "t.gflw")
    save_flow(GeneralFlow(f.queries, f.trajectories + [0.02, 0, 0]), tmp_path / "p1.gflw")
    save_flow(GeneralFlow(f.queries, f.trajectories + [0.04, 0, 0]), tmp_path / "p2.gflw")
    code, out, _ = run(capsys, "eval", tmp_path / "p1.gflw", tmp_path / "t.gflw", "--sample", tmp_path / "p2.gflw")
    rep = json.loads(out)
    assert rep["n_samples"] == 2 and rep["ade_cm"] == pytest.approx(3.0)


# -- solve-align ------------------------------------------------------------------

def test_solve_align(tmp_path, capsys):
    src = np.random.default_rng(0).normal(size=(6, 3))
    gt = SE3Transform.from_axis_angle([1, 0, 1], 0.4, about=[0.1, 0.2, 0.0])
    path = write_json(tmp_path / "in.json", {"source": src.tolist(), "target": se3_apply(gt, src).tolist()})
    code, out, _ = run(capsys, "solve-align", path)
    assert code == 0
    got = SE3Transform.from_json(json.loads(out))
    np.testing.assert_allclose(got.as_matrix(), gt.as_matrix(), atol=1e-9)


def test_solve_align_errors(tmp_path, capsys):
    line = [[float(i), 0.0, 0.0] for i in range(4)]
    assert run(capsys, "solve-align", write_json(tmp_path / "a.json", {"source": line, "target": line}))[0] == 3
    short = {"source": [[0, 0, 0]], "target": [[0, 0, 0], [1, 1, 1]]}
    assert run(capsys, "solve-align", write_json(tmp_path / "b.json", short))[0] == 3
    assert run(capsys, "solve-align", tmp_path / "missing.json")[0] == 2


# -- simulate ---------------------------------------------------------------------

def sim_config(tmp_path, task, **extra):
    doc = {"world": {"builtin": "safe"}, "task": task, "predictor": {"kind": "oracle"}, **extra}
    return write_json(tmp_path / "sim.json", doc)


OPEN = {"verb": "open", "object": "safe", "part": "door", "target": float(np.deg2rad(90))}


def test_simulate_open_safe(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--config", sim_config(tmp_path, OPEN), "--repeats", 10)
    doc = json.loads(out)
    assert code == 0
    assert doc["success_rate"] == 1.0
    assert [e["seed"] for e in doc["episodes"]] == list(range(10))


def test_simulate_zero_repeats(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--config", sim_config(tmp_path, OPEN), "--repeats", 0)
    doc = json.loads(out)
    assert code == 0 and doc["episodes"] == [] and doc["success_rate"] is None


def test_simulate_fold(tmp_path, capsys):
    task = {"verb": "fold", "object": "safe", "part": "door"}
    code, _, err = run(capsys, "simulate", "--config", sim_config(tmp_path, task))
    assert code == 4 and "unsupported" in err


def test_simulate_dump_ply(tmp_path, capsys):
    cfg = sim_config(tmp_path, OPEN)
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--dump-ply", "--out", tmp_path / "eps")
    assert code == 0
    steps = json.loads(out)["episodes"][0]["steps"]
    files = sorted(p.name for p in (tmp_path / "eps" / "episode_000").iterdir())
    assert len(files) == 2 * steps
    assert len(read_ply(tmp_path / "eps" / "episode_000" / "step_000_flow.ply")) > 0


def test_simulate_replay_predictor(tmp_path, capsys):
    flow = GeneralFlow(np.zeros((1, 3)), np.array([[[0.05, 0, 0], [0.10, 0, 0], [0.15, 0, 0]]]))
    save_flow(flow, tmp_path / "rec.gflw")
    doc = {"world": {"builtin": "drawer"}, "task": {"verb": "open", "object": "drawer", "part": "drawer"},
           "predictor": {"kind": "replay", "flow_file": "rec.gflw"}}
    code, out, _ = run(capsys, "simulate", "--config", write_json(tmp_path / "s.json", doc))
    assert code == 0 and json.loads(out)["success_rate"] == 1.0


def test_simulate_noise_flag_is_deterministic(tmp_path, capsys):
    cfg = sim_config(tmp_path, OPEN)
    a = run(capsys, "simulate", "--config", cfg, "--noise-sigma", 0.005, "--repeats", 3, "--seed", 7)[1]
    b = run(capsys, "simulate", "--config", cfg, "--noise-sigma", 0.005, "--repeats", 3, "--seed", 7)[1]
    assert a == b


# -- augment / rebalance / export -------------------------------------------------

def test_augment(tmp_path, capsys):
    rng = np.random.default_rng(0)
    write_ply(PointCloud(rng.uniform(size=(40, 3))), tmp_path / "scene.ply")
    write_ply(PointCloud(rng.uniform(size=(30, 3))), tmp_path / "pool.ply")
    cfg = write_json(tmp_path / "aug.json", {"scene": "scene.ply", "hand_indices": list(range(10)),
                                             "query_pool": "pool.ply", "n_queries": 12})
    code, out, _ = run(capsys, "augment", "--config", cfg, "--out", tmp_path / "o", "--seed", 5)
    prov = json.loads(out)
    assert code == 0
    assert len(read_ply(tmp_path / "o" / "scene.ply")) == prov["hma"]["n_kept"]
    assert len(json.loads((tmp_path / "o" / "queries.json").read_text())) == 12
    assert json.loads((tmp_path / "o" / "provenance.json").read_text()) == prov


def test_augment_too_many_queries(tmp_path, capsys):
    write_ply(PointCloud(np.zeros((3, 3))), tmp_path / "s.ply")
    cfg = write_json(tmp_path / "aug.json", {"scene": "s.ply", "query_pool": "s.ply", "n_queries": 9})
    assert run(capsys, "augment", "--config", cfg, "--out", tmp_path / "o")[0] == 2


@pytest.mark.parametrize("level", ["point", "clip"])
def test_rebalance(tmp_path, capsys, scene_file, level):
    cfg = dataset_config(tmp_path, [0.0, 1.8])
    run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "ds")
    rcfg = write_json(tmp_path / "r.json", {"level": level, "n_clusters": 3})
    code, out, _ = run(capsys, "rebalance", "--config", rcfg, "--dataset", tmp_path / "ds")
    doc = json.loads(out)
    assert code == 0
    assert doc["tv_after"] <= doc["tv_before"] + 1e-12
    assert (tmp_path / "ds" / "rebalance.json").exists()


def test_export_ply(tmp_path, capsys):
    save_flow(some_flow(), tmp_path / "f.gflw")
    code, out, _ = run(capsys, "export-ply", tmp_path / "f.gflw", "--out", tmp_path / "f.ply")
    assert code == 0
    assert len(read_ply(tmp_path / "f.ply")) == 8 * 4
