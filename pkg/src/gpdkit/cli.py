"""Command-line entry point: render, dataset, train, eval, detect, select.

Each command prints its resolved configuration, writes its outputs under
``--out`` and records them in ``<out>/manifest.json``. Failures exit
nonzero with a one-line JSON error on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

from . import config as C

log = logging.getLogger("gpdkit")

EXIT_STAGE = 1
EXIT_INPUT = 2


class InputError(Exception):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


def _require(path, kind="file"):
    ok = os.path.isdir(path) if kind == "dir" else os.path.isfile(path)
    if not ok:
        raise InputError(f"{kind} not found: {path}", path)
    return path


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out, command, cfg, inputs, outputs):
    path = os.path.join(out, "manifest.json")
    manifest = {}
    if os.path.exists(path):
        with open(path) as fh:
            manifest = json.load(fh)
    files = {}
    for p in outputs:
        files[os.path.relpath(p, out)] = _sha256(p)
    manifest[command] = {"config": cfg, "inputs": inputs, "outputs": files}
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _threads(cfg):
    n = cfg["run"]["threads"]
    return n if n > 0 else (os.cpu_count() or 1)


def _meshes(args, cfg):
    from .oracle import bundled_meshes, load_mesh
    paths = args.mesh or cfg["dataset"]["meshes"]
    if paths:
        return [load_mesh(_require(p)) for p in paths]
    return bundled_meshes(args.family or cfg["dataset"]["family"])


# --- commands ---------------------------------------------------------------

def cmd_render(args, cfg):
    from .cloud import save_cloud
    from .oracle import stereo_render
    from .oracle.build import view_pair_azimuths
    rs = C.render(cfg)
    if rs.baseline_angle == 0:
        log.warning("baseline angle 0: both viewpoints coincide")
    os.makedirs(os.path.join(args.out, "clouds"), exist_ok=True)
    outputs = []
    for i, mesh in enumerate(_meshes(args, cfg)):
        cloud = stereo_render(mesh, rs.baseline_angle, rs.distance, rs.intrinsics, rs.elevation,
                              view_pair_azimuths(rs)[0], (0, 1), rs.depth_noise,
                              seed=cfg["run"]["seed"] + 31 * i)
        path = os.path.join(args.out, "clouds", f"{mesh.name}.ply")
        save_cloud(path, cloud)
        outputs += [path, os.path.splitext(path)[0] + ".views.json"]
        print(f"rendered {mesh.name}: {len(cloud)} points -> {path}")
    return {"mesh": args.mesh or [], "family": args.family}, outputs


def cmd_dataset(args, cfg):
    from .oracle import BuildStats, build_dataset
    stats = BuildStats()
    ds = build_dataset(_meshes(args, cfg), C.hand(cfg), C.params(cfg),
                       cfg["dataset"]["per_mesh_candidates"], cfg["encoder"]["variant"],
                       cfg["dataset"]["balance"], cfg["run"]["seed"], C.render(cfg),
                       cfg["sampler"]["n_orientations"], cfg["encoder"]["grid_size"],
                       cfg["encoder"]["occlusion_radius"], _threads(cfg), stats)
    d = os.path.join(args.out, "dataset")
    ds.save(d)
    diag = os.path.join(args.out, "dataset_diagnostics.jsonl")
    stats.write_jsonl(diag)
    print(f"dataset: {len(ds)} records ({int(ds.labels.sum())} positive) -> {d}")
    return ({"mesh": args.mesh or [], "family": args.family},
            [os.path.join(d, "manifest.json"), os.path.join(d, "data.bin"), diag])


def _split(ds, cfg, split_path=None):
    from .dataset import SplitSpec
    from .eval import leave_one_object_out, split_by_view
    if split_path:
        with open(_require(split_path)) as fh:
            return SplitSpec.from_dict(json.load(fh))
    sp = cfg["split"]
    if sp["mode"] == "object":
        return leave_one_object_out(ds, sp["test_object"] or None, cfg["run"]["seed"])
    return split_by_view(ds, sp["test_fraction"], cfg["run"]["seed"])


def _load_dataset(path, cfg):
    from .dataset import Dataset
    ds = Dataset.load(_require(path, "dir"))
    return ds.as_variant(cfg["encoder"]["variant"])


def cmd_train(args, cfg):
    from .learn import save_model, train
    ds = _load_dataset(args.dataset, cfg)
    split = _split(ds, cfg, args.split)
    init = _require(args.init) if args.init else None
    os.makedirs(args.out, exist_ok=True)

    def progress(it, loss, acc):
        print(f"iter {it}: loss {loss:.4f} test accuracy {acc:.4f}")

    model, tlog = train(ds, split, C.solver(cfg), init, cfg["solver"]["test_interval"], progress)
    paths = [os.path.join(args.out, n) for n in ("model.bin", "train_log.csv", "split.json")]
    save_model(model, paths[0])
    tlog.write_csv(paths[1])
    with open(paths[2], "w") as fh:
        json.dump(split.to_dict(), fh)
    return {"dataset": args.dataset, "init": args.init, "split": args.split}, paths


def cmd_eval(args, cfg):
    from .eval import evaluate_model
    from .learn import load_model
    ds = _load_dataset(args.dataset, cfg)
    model = load_model(_require(args.model), channels=ds.channels)
    split = _split(ds, cfg, args.split)
    report = evaluate_model(model, ds, split, cfg["detect"]["min_precision"])
    os.makedirs(args.out, exist_ok=True)
    paths = [os.path.join(args.out, "report.json"), os.path.join(args.out, "curve.csv")]
    report.write_json(paths[0])
    report.write_csv(paths[1])
    print(f"accuracy {report.accuracy:.4f} RAHP@{report.min_precision} {report.rahp:.4f} "
          f"on {report.n_test} test records")
    return {"dataset": args.dataset, "model": args.model, "split": args.split}, paths


def _threshold(args, cfg):
    from .eval import PrCurve, operating_threshold
    if args.threshold is not None:
        return args.threshold
    if args.report:
        with open(_require(args.report)) as fh:
            rep = json.load(fh)
        curve = PrCurve(tuple(tuple(p) for p in rep["curve"]))
        return operating_threshold(curve, cfg["detect"]["min_precision"])
    return cfg["detect"]["threshold"]


def cmd_detect(args, cfg):
    from .cloud import load_cloud
    from .eval import detect
    from .learn import load_model
    model = load_model(_require(args.model))
    cloud = load_cloud(_require(args.cloud))
    thr = _threshold(args, cfg)
    grasps = detect(cloud, None, C.hand(cfg), model, cfg["encoder"]["variant"], thr,
                    cfg["sampler"]["n_samples"], cfg["sampler"]["n_orientations"],
                    cfg["run"]["seed"], occlusion_radius=cfg["encoder"]["occlusion_radius"],
                    threads=_threads(cfg))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "grasps.json")
    with open(path, "w") as fh:
        json.dump({"threshold": thr, "grasps": [g.to_dict() for g in grasps]}, fh, indent=1)
    print(f"{len(grasps)} grasps at threshold {thr:.6g} -> {path}")
    return {"cloud": args.cloud, "model": args.model, "report": args.report}, [path]


def cmd_select(args, cfg):
    from .eval import ScoredGrasp, select_grasp
    with open(_require(args.grasps)) as fh:
        grasps = [ScoredGrasp.from_dict(d) for d in json.load(fh)["grasps"]]
    best = select_grasp(grasps, C.selection(cfg))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "selected.json")
    with open(path, "w") as fh:
        json.dump(best.to_dict(), fh, indent=1)
    print(f"selected grasp {best.index} (score {best.score:.4f}) -> {path}")
    return {"grasps": args.grasps}, [path]


COMMANDS = {
    "render": cmd_render, "dataset": cmd_dataset, "train": cmd_train,
    "eval": cmd_eval, "detect": cmd_detect, "select": cmd_select,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--threads", type=int, help="overrides run.threads (0 = all cores)")
    common.add_argument("--out", default="run", help="run directory (default: run)")
    p = argparse.ArgumentParser(prog="gpdkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("render", parents=[common], help="simulate stereo scans of meshes")
    s.add_argument("--mesh", action="append", help="OBJ/PLY mesh (repeatable)")
    s.add_argument("--family", help="bundled mesh family")
    s.add_argument("--angle", type=float, help="angle between the two viewpoints, degrees")

    s = sub.add_parser("dataset", parents=[common], help="build a labeled grasp-image dataset")
    s.add_argument("--mesh", action="append", help="OBJ/PLY mesh (repeatable)")
    s.add_argument("--family", help="bundled mesh family")

    s = sub.add_parser("train", parents=[common], help="train the classifier")
    s.add_argument("--dataset", required=True)
    s.add_argument("--split", help="split JSON (default: computed from [split])")
    s.add_argument("--init", help="model file to warm start from")
    s.add_argument("--iterations", type=int, help="overrides solver.max_iterations")

    s = sub.add_parser("eval", parents=[common], help="test-side accuracy and precision-recall")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--split", help="split JSON (default: computed from [split])")

    s = sub.add_parser("detect", parents=[common], help="detect grasps in a point cloud")
    s.add_argument("--cloud", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--threshold", type=float)
    s.add_argument("--report", help="eval report; threshold at its min_precision point")

    s = sub.add_parser("select", parents=[common], help="pick one grasp by utility")
    s.add_argument("--grasps", required=True)
    return p


def _overrides(args):
    o = {"run": {}}
    if args.seed is not None:
        o["run"]["seed"] = args.seed
    if args.threads is not None:
        o["run"]["threads"] = args.threads
    if getattr(args, "angle", None) is not None:
        o["render"] = {"baseline_angle": args.angle}
    if getattr(args, "iterations", None) is not None:
        o["solver"] = {"max_iterations": args.iterations}
    return o


def _fail(code, kind, command, message, path=None):
    err = {"error": kind, "stage": command, "message": message}
    if path is not None:
        err["path"] = path
    print(json.dumps(err), file=sys.stderr)
    return code


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            _require(args.config)
        cfg = C.load(args.config, _overrides(args))
    except InputError as e:
        return _fail(EXIT_INPUT, "missing_input", args.command, str(e), e.path)
    except C.ConfigError as e:
        return _fail(EXIT_INPUT, "config", args.command, str(e))
    print(f"# resolved configuration for '{args.command}'")
    print(C.dumps(cfg), end="", flush=True)
    try:
        os.makedirs(args.out, exist_ok=True)
        inputs, outputs = COMMANDS[args.command](args, cfg)
        _write_manifest(args.out, args.command, cfg, inputs, outputs)
    except InputError as e:
        return _fail(EXIT_INPUT, "missing_input", args.command, str(e), e.path)
    except Exception as e:  # surfaced with the stage name
        log.debug("stage failure", exc_info=True)
        return _fail(EXIT_STAGE, type(e).__name__, args.command, str(e))
    return 0


if __name__ == "__main__":
    sys.exit(main())
