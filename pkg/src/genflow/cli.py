"""Command-line entry point.

Exit codes: 0 ok, 2 config or IO error, 3 data shape error, 4 unsupported
task, 5 internal invariant violation. Data goes to stdout or ``--out``; logs
go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data, labels
from .alignment import WeightedCorrespondences, weighted_svd_align
from .articulation import load_scene
from .errors import (ConfigurationError, DegenerateGeometryError, DegenerateInputError, GenFlowError,
                     ShapeMismatchError, UnsupportedTaskError)
from .flow import compute_deltas, load_flow, save_flow
from .geometry import PointCloud, load_cloud_json, read_ply, write_ply
from .jsonutil import dumps
from .losses import metrics_report
from .sim import (OracleFlowPredictor, PolicyConfig, ReplayFlowPredictor, Task, posed_scene, run_episode,
                  validate_task, world_from_json)

log = logging.getLogger("genflow")

EXIT_OK, EXIT_CONFIG, EXIT_SHAPE, EXIT_TASK, EXIT_INTERNAL = 0, 2, 3, 4, 5


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def load_json(path, what="config"):
    path = Path(path)
    if not path.exists():
        raise CLIError(f"{what} file not found: {path}", EXIT_CONFIG)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}", EXIT_CONFIG) from None


def _config(args):
    cfg = load_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise CLIError(f"{args.config}: top level must be a JSON object", EXIT_CONFIG)
    base = Path(args.config).parent if args.config else Path(".")
    return cfg, base


def _require(cfg, key, source="config"):
    if key not in cfg:
        raise CLIError(f"{source}: missing required field '{key}'", EXIT_CONFIG)
    return cfg[key]


def _seed(args, cfg, default=0):
    return int(args.seed if args.seed is not None else cfg.get("seed", default))


def _out(args, cfg, default):
    return Path(args.out or cfg.get("out") or default)


def _emit(doc):
    sys.stdout.write(dumps(doc) + "\n")


def _load_cloud(path):
    path = Path(path)
    if not path.exists():
        raise CLIError(f"point cloud file not found: {path}", EXIT_CONFIG)
    return read_ply(path) if path.suffix == ".ply" else load_cloud_json(path)


def _load_flow(path):
    path = Path(path)
    if not path.exists():
        raise CLIError(f"flow file not found: {path}", EXIT_CONFIG)
    return load_flow(path)


# -- commands ----------------------------------------------------------------

def cmd_gen_dataset(args):
    cfg, base = _config(args)
    world_file = base / _require(cfg, "world_file")
    if not world_file.exists():
        raise CLIError(f"world file not found: {world_file}", EXIT_CONFIG)
    scene = load_scene(world_file)
    clip = labels.ClipSpec(**cfg.get("clip", {}))
    n_queries = int(args.n_queries or cfg.get("n_queries", 128))
    seed = _seed(args, cfg)
    shake = float(cfg.get("shake_threshold", labels.DEFAULT_SHAKE_THRESHOLD))
    noise = float(cfg.get("label_noise_sigma", 0.0))
    fmt = cfg.get("format", "gflw")
    out = _out(args, cfg, "dataset")
    (out / "flows").mkdir(parents=True, exist_ok=True)
    entries = []
    for obj, track in scene:
        if track is None:
            raise CLIError(f"object {obj.name!r} has no track", EXIT_CONFIG)
        window = cfg.get("action_window", [track.start, track.end])
        starts = labels.slice_clips(track, clip, window, int(cfg.get("prefix_extension", 4)))
        for clip_start in starts:
            k = len(entries)
            item_seed = data.derive_seed(seed, k)
            pts, parts = labels.sample_object_points(obj, n_queries, item_seed, cfg.get("parts"), track,
                                                     clip_start)
            flow = labels.extract_flow(obj, track, clip, clip_start, pts, parts)
            if cfg.get("shake_correction", True):
                flow = labels.camera_shake_correction(flow, shake)
            if noise > 0:
                flow = labels.add_label_noise(flow, noise, item_seed)
            name = f"flows/{k:05d}.{'json' if fmt == 'json' else 'gflw'}"
            save_flow(flow, out / name)
            entries.append({"file": name, "object_id": obj.name, "parts": sorted(set(parts)),
                            "query_parts": list(parts), "clip_start": clip_start, "seed": item_seed})
    manifest = {"clip": {"duration": clip.duration, "interval": clip.interval, "steps": clip.steps},
                "seed": seed, "n_queries": n_queries, "entries": entries}
    (out / "manifest.json").write_text(dumps(manifest))
    log.info("wrote %d flow records to %s", len(entries), out)
    _emit({"n_records": len(entries), "manifest": str(out / "manifest.json")})


def cmd_augment(args):
    cfg, base = _config(args)
    scene = _load_cloud(base / _require(cfg, "scene"))
    hand = cfg.get("hand_indices", [])
    if isinstance(hand, str):
        hand = load_json(base / hand, "hand index")
    aug = data.AugmentConfig.from_json(cfg.get("augment", {}))
    seed = _seed(args, cfg)
    out = _out(args, cfg, "augmented")
    out.mkdir(parents=True, exist_ok=True)
    res = data.hma_augment(scene, hand, seed, aug)
    write_ply(res.cloud, out / "scene.ply")
    prov = {"seed": seed, "augment": aug.to_json(),
            "hma": {"rule": res.rule, "anchor": res.anchor, "n_kept": int(len(res.kept))}}
    if "query_pool" in cfg:
        pool = _load_cloud(base / cfg["query_pool"])
        n = int(args.n_queries or cfg.get("n_queries", min(len(pool), 128)))
        q = data.qps_augment(pool, n, data.derive_seed(seed, 1), aug)
        (out / "queries.json").write_text(dumps(pool.positions[q.indices].tolist()))
        prov["qps"] = {"rule": q.rule, "anchor": q.anchor, "indices": q.indices.tolist()}
    (out / "provenance.json").write_text(dumps(prov))
    _emit(prov)


def _dataset_flows(dataset_dir):
    manifest = load_json(Path(dataset_dir) / "manifest.json", "manifest")
    return [(e, _load_flow(Path(dataset_dir) / e["file"])) for e in manifest["entries"]]


def cmd_rebalance(args):
    cfg, base = _config(args)
    dataset = Path(args.dataset or base / _require(cfg, "dataset"))
    records = _dataset_flows(dataset)
    if not records:
        raise CLIError("dataset has no records", EXIT_SHAPE)
    level = cfg.get("level", "point")
    if level == "point":
        keys = [(k, i) for k, (_, f) in enumerate(records) for i in range(f.n_queries)]
        scales = np.concatenate([compute_deltas(f).total_lengths() for _, f in records])
    elif level == "clip":
        keys = [(k, None) for k in range(len(records))]
        scales = np.array([compute_deltas(f).total_lengths().mean() for _, f in records])
    else:
        raise CLIError(f"level must be 'point' or 'clip', got {level!r}", EXIT_CONFIG)
    k = min(int(cfg.get("n_clusters", data.DEFAULT_CLUSTERS)), len(scales))
    tau = float(cfg.get("tau", data.DEFAULT_TAU))
    seed = _seed(args, cfg)
    clusters = data.kmeans_1d(scales, k, seed)
    idx = data.rebalance_indices(clusters, tau, seed)
    after = np.bincount(clusters.assignments[idx], minlength=clusters.k)
    doc = {
        "level": level, "tau": tau, "seed": seed,
        "centers": clusters.centers.tolist(), "ratios": clusters.ratios.tolist(),
        "target_weights": data.rebalance_weights(clusters, tau).tolist(),
        "counts_before": clusters.counts().tolist(), "counts_after": after.tolist(),
        "tv_before": data.total_variation_to_uniform(clusters.counts()),
        "tv_after": data.total_variation_to_uniform(after),
    }
    out = _out(args, cfg, dataset)
    out.mkdir(parents=True, exist_ok=True)
    sel = [[keys[i][0], keys[i][1]] for i in idx]
    (out / "rebalance.json").write_text(dumps({**doc, "selection": sel}))
    _emit(doc)


def cmd_eval(args):
    pred = [_load_flow(p) for p in [args.pred, *args.sample]]
    target = _load_flow(args.target)
    _emit(metrics_report(pred, target))


def cmd_solve_align(args):
    doc = load_json(args.input, "alignment input")
    src = np.asarray(_require(doc, "source", args.input), dtype=np.float64)
    tgt = np.asarray(_require(doc, "target", args.input), dtype=np.float64)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1:] != (3,):
        raise CLIError(f"source {src.shape} and target {tgt.shape} must both be (N, 3)", EXIT_SHAPE)
    c = WeightedCorrespondences.normalized(src, tgt, doc.get("weights"))
    _emit(weighted_svd_align(c).to_json())


def _predictor(spec, task, base):
    kind = spec.get("kind", "oracle")
    if kind == "oracle":
        return OracleFlowPredictor(task, float(spec.get("noise_sigma", 0.0)),
                                   int(spec.get("steps", 3)), float(spec.get("max_displacement", 0.05)))
    if kind == "replay":
        return ReplayFlowPredictor([_load_flow(base / f) for f in np.atleast_1d(_require(spec, "flow_file"))])
    raise CLIError(f"unknown predictor kind {kind!r}", EXIT_CONFIG)


def _flow_cloud(flow):
    pos = flow.positions()
    T = pos.shape[1]
    col = np.array([[1.0 - t / max(T - 1, 1), 0.2, t / max(T - 1, 1)] for t in range(T)])
    return PointCloud(pos.reshape(-1, 3), np.tile(col, (flow.n_queries, 1)))


def _ply_dumper(ep_dir):
    ep_dir.mkdir(parents=True, exist_ok=True)

    def on_step(k, world, info):
        write_ply(posed_scene(world)[0], ep_dir / f"step_{k:03d}_scene.ply")
        write_ply(_flow_cloud(info.flow), ep_dir / f"step_{k:03d}_flow.ply")
    return on_step


def cmd_simulate(args):
    cfg, base = _config(args)
    if "world" in cfg:
        world_doc, world_base = cfg["world"], base
    else:
        wf = base / _require(cfg, "world_file")
        world_doc, world_base = load_json(wf, "world"), wf.parent
    world = world_from_json(world_doc, world_base)
    task = Task.from_json(_require(cfg, "task"), cfg.get("thresholds"))
    validate_task(world, task)
    pspec = dict(cfg.get("predictor", {"kind": "oracle"}))
    if args.noise_sigma is not None:
        pspec["noise_sigma"] = args.noise_sigma
    policy = PolicyConfig.from_json(cfg.get("policy", {}))
    max_steps = int(args.max_steps if args.max_steps is not None else cfg.get("max_steps", 50))
    repeats = int(args.repeats if args.repeats is not None else cfg.get("repeats", 1))
    base_seed = int(args.seed if args.seed is not None else pspec.get("seed", cfg.get("seed", 0)))
    dump = bool(cfg.get("dump_ply", False)) or args.dump_ply
    out = _out(args, cfg, "episodes") if dump else None
    results = []
    for i in range(repeats):
        ep_seed = base_seed + i
        on_step = _ply_dumper(out / f"episode_{i:03d}") if dump else None
        r = run_episode(world, task, _predictor(pspec, task, base), max_steps, policy, ep_seed, on_step)
        results.append({"episode": i, "seed": ep_seed, **r.to_json()})
    rate = None if repeats == 0 else sum(r["success"] for r in results) / repeats
    _emit({"task": task.to_json(), "repeats": repeats, "success_rate": rate, "episodes": results})


def cmd_export_ply(args):
    flow = _load_flow(args.flow)
    cloud = _flow_cloud(flow)
    if args.scene:
        cloud = PointCloud.concatenate([_load_cloud(args.scene), cloud])
    out = Path(args.out or Path(args.flow).with_suffix(".ply"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ply(cloud, out)
    _emit({"ply": str(out), "n_points": len(cloud)})


# -- parser ------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="genflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-dataset", parents=[common], help="extract flow labels from pose tracks")
    s.add_argument("--n-queries", type=int)
    s.set_defaults(func=cmd_gen_dataset)

    s = sub.add_parser("augment", parents=[common], help="apply hand-mask and query-sampling augmentation")
    s.add_argument("--n-queries", type=int)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("rebalance", parents=[common], help="scale-rebalance a generated dataset")
    s.add_argument("--dataset", help="dataset directory containing manifest.json")
    s.set_defaults(func=cmd_rebalance)

    s = sub.add_parser("eval", parents=[common], help="ADE/FDE of predicted against target flow")
    s.add_argument("pred")
    s.add_argument("target")
    s.add_argument("--sample", action="append", default=[], help="additional predicted sample")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("solve-align", parents=[common], help="weighted rigid alignment of two point lists")
    s.add_argument("input", help="JSON with source, target and optional weights")
    s.set_defaults(func=cmd_solve_align)

    s = sub.add_parser("simulate", parents=[common], help="run closed-loop episodes")
    s.add_argument("--repeats", type=int)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--noise-sigma", type=float)
    s.add_argument("--dump-ply", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("export-ply", parents=[common], help="write a flow (and scene) as PLY")
    s.add_argument("flow")
    s.add_argument("--scene")
    s.set_defaults(func=cmd_export_ply)
    return p


def _fail(message, code):
    sys.stderr.write(f"genflow: error: {message}\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CLIError as exc:
        return _fail(str(exc), exc.code)
    except UnsupportedTaskError as exc:
        return _fail(f"unsupported task: {exc}", EXIT_TASK)
    except (ShapeMismatchError, DegenerateGeometryError, DegenerateInputError) as exc:
        return _fail(f"data shape error: {exc}", EXIT_SHAPE)
    except (ConfigurationError, OSError, KeyError, TypeError) as exc:
        return _fail(f"configuration error: {exc}", EXIT_CONFIG)
    except (GenFlowError, ValueError) as exc:
        return _fail(f"invalid input: {exc}", EXIT_CONFIG)
    except (AssertionError, ArithmeticError) as exc:
        return _fail(f"internal invariant violated: {exc}", EXIT_INTERNAL)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
