import json

import numpy as np
import pytest

from gpdkit import config as C
from gpdkit.cli import main
from gpdkit.cloud import load_cloud
from gpdkit.oracle import box, save_obj

SMOKE = """
[run]
threads = 1
[dataset]
family = "primitives"
per_mesh_candidates = 40
[encoder]
grid_size = 20
[render]
view_pairs = 4
[solver]
batch_size = 16
max_iterations = 40
test_interval = 10
learning_rate = 0.002
lr_schedule = "fixed"
[sampler]
n_samples = 8
n_orientations = 4
"""


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(C.ConfigError, match="unknown config key"):
        C.merge(C.defaults(), {"hand": {"finger_size": 1.0}})
    with pytest.raises(C.ConfigError, match="section"):
        C.merge(C.defaults(), {"robot": {}})
    with pytest.raises(C.ConfigError):
        C.merge(C.defaults(), {"solver": {"batch_size": "big"}})
    p = tmp_path / "bad.toml"
    p.write_text("[hand]\nfinger_size = 1.0\n")
    assert main(["render", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_invalid_values_rejected():
    with pytest.raises(C.ConfigError):
        C.load(overrides={"hand": {"aperture_min": 0.5}})
    with pytest.raises(C.ConfigError):
        C.load(overrides={"encoder": {"variant": "SIXTEEN"}})


def test_printed_config_reloads(tmp_path):
    cfg = C.load(overrides={"run": {"seed": 9}, "selection": {"nominal_point": [0.1, 0, 0]}})
    p = tmp_path / "c.toml"
    p.write_text(C.dumps(cfg))
    assert C.load(p) == cfg


def test_missing_model_exit_2(tmp_path, capsys):
    code = main(["detect", "--cloud", "c.ply", "--model", str(tmp_path / "none.bin"),
                 "--out", str(tmp_path)])
    err = json.loads(capsys.readouterr().err.strip())
    assert code == 2
    assert err["path"] == str(tmp_path / "none.bin") and err["stage"] == "detect"


def test_render_mesh_and_zero_angle(tmp_path, caplog):
    mesh = save_obj(tmp_path / "b.obj", box((0.05, 0.05, 0.05), name="b"))
    out = tmp_path / "run"
    assert main(["render", "--mesh", str(mesh), "--angle", "0", "--out", str(out)]) == 0
    assert "baseline angle 0" in caplog.text
    cloud = load_cloud(out / "clouds" / "b.ply")
    assert len(cloud.viewpoints) == 2
    np.testing.assert_array_equal(cloud.viewpoints[0].position, cloud.viewpoints[1].position)
    manifest = json.loads((out / "manifest.json").read_text())
    assert "clouds/b.ply" in manifest["render"]["outputs"]


def test_bad_mesh_path(tmp_path):
    assert main(["render", "--mesh", str(tmp_path / "x.obj"), "--out", str(tmp_path)]) == 2


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "cfg.toml"
    cfg.write_text(SMOKE)
    run = d / "run"
    c = ["--config", str(cfg), "--out", str(run)]
    assert main(["render"] + c) == 0
    assert main(["dataset"] + c) == 0
    assert main(["train", "--dataset", str(run / "dataset")] + c) == 0
    assert main(["eval", "--dataset", str(run / "dataset"), "--model", str(run / "model.bin"),
                 "--split", str(run / "split.json")] + c) == 0
    assert main(["detect", "--cloud", str(run / "clouds" / "cylinder.ply"), "--model",
                 str(run / "model.bin"), "--threshold", "0"] + c) == 0
    return run


def test_smoke_pipeline(pipeline):
    report = json.loads((pipeline / "report.json").read_text())
    assert report["rahp"] > 0
    manifest = json.loads((pipeline / "manifest.json").read_text())
    assert set(manifest) == {"render", "dataset", "train", "eval", "detect"}
    for stage in manifest.values():
        for name, digest in stage["outputs"].items():
            assert (pipeline / name).exists() and len(digest) == 64
    grasps = json.loads((pipeline / "grasps.json").read_text())["grasps"]
    assert grasps


def test_select_from_detect(pipeline):
    out = pipeline.parent / "sel"
    code = main(["select", "--grasps", str(pipeline / "grasps.json"), "--out", str(out)])
    sel = out / "selected.json"
    if code == 0:
        assert "candidate" in json.loads(sel.read_text())
    else:
        # every grasp may be outside the width limits on a tiny run
        assert code == 1 and not sel.exists()


def test_seed_repeat_is_byte_identical(pipeline, tmp_path):
    cfg = pipeline.parent / "cfg.toml"
    run = tmp_path / "again"
    c = ["--config", str(cfg), "--out", str(run)]
    assert main(["render"] + c) == 0
    assert main(["dataset"] + c) == 0
    assert main(["train", "--dataset", str(run / "dataset")] + c) == 0
    for name in ("dataset/data.bin", "dataset/manifest.json", "train_log.csv", "model.bin"):
        assert (run / name).read_bytes() == (pipeline / name).read_bytes(), name
