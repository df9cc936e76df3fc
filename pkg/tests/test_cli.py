import json
import math

import numpy as np
import pytest

from augrf.cli import main
from augrf.dataset import load_dataset, load_scene, read_sia_manifest, write_scene
from augrf.evaluation import PointCloud, write_xyz
from augrf.experiment import ExperimentSpec
from augrf.field import load_checkpoint, save_checkpoint
from augrf.image_ops import write_png
from augrf.render import QuadratureConfig, render_image

SMALL_TRAIN = {
    "iterations": 6,
    "batch_rays": 32,
    "log_every": 3,
    "val_every": 6,
    "dtype": "float64",
    "quadrature": {"samples_per_ray": 6, "stratified": True},
    "field": {"pe_levels_position": 2, "pe_levels_direction": 1, "mlp1_widths": [8], "latent_dim": 4,
              "mlp2_widths": [6], "embed_dim": 3},
}


@pytest.fixture
def scene_dir(tiny_scene, tmp_path):
    return write_scene(tiny_scene, tmp_path / "scene")


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({"train": SMALL_TRAIN}))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    lines = [json.loads(s) for s in out.out.splitlines() if s.strip()]
    return code, lines, out.err


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestAugment:
    def test_replicas_and_manifest(self, scene_dir, tmp_path, capsys):
        code, lines, _ = run(capsys, "augment", "--scene", scene_dir, "--out", tmp_path / "sia")
        assert code == 0
        assert lines[0]["files"] == 18 and set(lines[0]["replicas"].values()) == {3}
        assert len(list((tmp_path / "sia").rglob("*.png"))) == 18
        assert len(read_sia_manifest(tmp_path / "sia" / "sia_manifest.json")) == 18
        assert len(load_dataset(tmp_path / "sia")) == 18
        assert ExperimentSpec.load(tmp_path / "sia" / "spec.json").scene == str(scene_dir)

    def test_idempotent(self, scene_dir, tmp_path, capsys):
        run(capsys, "augment", "--scene", scene_dir, "--out", tmp_path / "sia")
        first = tree_bytes(tmp_path / "sia")
        run(capsys, "augment", "--scene", scene_dir, "--out", tmp_path / "sia")
        assert tree_bytes(tmp_path / "sia") == first

    def test_unreadable_scene(self, tmp_path, capsys):
        code, _, err = run(capsys, "augment", "--scene", tmp_path / "missing", "--out", tmp_path / "o")
        assert code == 3
        assert "missing" in err


class TestDegrade:
    def test_seeded_and_recorded(self, scene_dir, tmp_path, capsys):
        for name in ("a", "b"):
            code, lines, _ = run(capsys, "degrade", "--scene", scene_dir, "--kind", "gaussian", "--q", 0.1,
                                 "--seed", 7, "--out", tmp_path / name)
            assert code == 0
        a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
        a.pop("spec.json"), b.pop("spec.json")
        assert a == b
        assert lines[0]["degradation"] == {"kind": "gaussian", "q": 0.1, "seed": 7}
        spec = ExperimentSpec.load(tmp_path / "a" / "spec.json")
        assert spec.degradation.to_dict() == {"kind": "gaussian", "q": 0.1, "seed": 7}
        degraded = load_scene(tmp_path / "a")
        original = load_scene(scene_dir)
        assert not np.array_equal(degraded.train.images[0], original.train.images[0])
        assert np.array_equal(degraded.test.images[0], original.test.images[0])

    def test_speckle_high_intensity(self, scene_dir, tmp_path, capsys):
        code, _, _ = run(capsys, "degrade", "--scene", scene_dir, "--kind", "speckle", "--q", 0.4,
                         "--out", tmp_path / "o")
        assert code == 0

    def test_unknown_kind_lists_all(self, scene_dir, tmp_path, capsys):
        code, _, err = run(capsys, "degrade", "--scene", scene_dir, "--kind", "blur", "--q", 1,
                           "--out", tmp_path / "o")
        assert code == 2
        for kind in ("gaussian", "motion_blur", "poisson", "salt_pepper", "speckle"):
            assert kind in err

    def test_invalid_intensity(self, scene_dir, tmp_path, capsys):
        code, _, _ = run(capsys, "degrade", "--scene", scene_dir, "--kind", "salt_pepper", "--q", 0.9,
                         "--out", tmp_path / "o")
        assert code == 2


class TestSubsample:
    def test_keeps_fraction(self, tiny_scene, tmp_path, capsys):
        from conftest import random_dataset
        from dataclasses import replace

        scene = replace(tiny_scene, train=random_dataset(20, (4, 4)))
        write_scene(scene, tmp_path / "s")
        code, lines, _ = run(capsys, "subsample", "--scene", tmp_path / "s", "--percent", 25,
                             "--out", tmp_path / "o")
        assert code == 0 and lines[0]["kept"] == 5
        assert len(load_dataset(tmp_path / "o")) == 5

    def test_bad_percent(self, scene_dir, tmp_path, capsys):
        code, _, _ = run(capsys, "subsample", "--scene", scene_dir, "--percent", 30, "--out", tmp_path / "o")
        assert code == 2


class TestTrainAndRender:
    def test_sia_training_run(self, scene_dir, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        code, lines, _ = run(capsys, "train", "--scene", scene_dir, "--config", small_config,
                             "--mode", "SIA", "--out", out)
        assert code == 0
        log = [json.loads(s) for s in (out / "log.jsonl").read_text().splitlines()]
        assert [e["iteration"] for e in log] == [3, 6]
        assert math.isfinite(log[-1]["val_psnr"]) and lines[0]["val_psnr"] == log[-1]["val_psnr"]
        spec = ExperimentSpec.load(out / "spec.json")
        assert spec.mode == "SIA" and spec.train.mode == "SIA" and spec.train.iterations == 6
        params, meta = load_checkpoint(out / "checkpoints" / "ckpt_000006.npz")
        assert meta["train"]["mode"] == "SIA"

    def test_flag_overrides_config(self, scene_dir, small_config, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--scene", scene_dir, "--config", small_config,
                         "--iterations", 3, "--seed", 4, "--out", tmp_path / "r")
        assert code == 0
        spec = ExperimentSpec.load(tmp_path / "r" / "spec.json")
        assert spec.train.iterations == 3 and spec.train.seed == 4

    def test_rerun_is_bit_exact(self, scene_dir, small_config, tmp_path, capsys):
        for name in ("a", "b"):
            run(capsys, "train", "--scene", scene_dir, "--config", small_config, "--mode", "DIA",
                "--out", tmp_path / name)
        strip = lambda p: [{k: v for k, v in json.loads(s).items() if k != "wall_ms"}  # noqa: E731
                           for s in p.read_text().splitlines()]
        assert strip(tmp_path / "a" / "log.jsonl") == strip(tmp_path / "b" / "log.jsonl")
        ckpt = "checkpoints/ckpt_000006.npz"
        assert (tmp_path / "a" / ckpt).read_bytes() == (tmp_path / "b" / ckpt).read_bytes()

    def test_nan_exit_code(self, scene_dir, tmp_path, capsys):
        bad = dict(SMALL_TRAIN, learning_rate=1e308)
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"train": bad}))
        with np.errstate(all="ignore"):
            code, _, err = run(capsys, "train", "--scene", scene_dir, "--config", cfg, "--out", tmp_path / "r")
        assert code == 4 and "numeric" in err

    def test_unknown_config_field(self, scene_dir, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"sceen": "x"}))
        code, _, _ = run(capsys, "train", "--scene", scene_dir, "--config", cfg, "--out", tmp_path / "r")
        assert code == 2

    def _checkpoint(self, tiny_params, tmp_path):
        meta = {"near": 1.5, "far": 4.5, "width": 8, "height": 8, "fov_x": 0.8,
                "quadrature": QuadratureConfig(8).to_dict()}
        return save_checkpoint(tmp_path / "c.npz", tiny_params, meta)

    def test_render_default_is_identity_query(self, tiny_params, tiny_scene, scene_dir, tmp_path, capsys):
        ckpt = self._checkpoint(tiny_params, tmp_path)
        tiny_params.set("emb", np.random.default_rng(0).normal(size=(6, 3)))
        save_checkpoint(ckpt, tiny_params, load_checkpoint(ckpt)[1])
        code, lines, _ = run(capsys, "render", "--checkpoint", ckpt, "--scene", scene_dir, "--npy",
                             "--out", tmp_path / "default")
        assert code == 0 and lines[0]["images"] == 2
        run(capsys, "render", "--checkpoint", ckpt, "--scene", scene_dir, "--npy", "--manipulation", "identity",
            "--intensity", 0, "--out", tmp_path / "explicit")
        run(capsys, "render", "--checkpoint", ckpt, "--scene", scene_dir, "--npy", "--manipulation", "hue",
            "--intensity", 0.08, "--out", tmp_path / "hue")
        for i, pose in enumerate(tiny_scene.test.poses):
            default = np.load(tmp_path / "default" / f"r_{i}.npy")
            direct = render_image(tiny_params, pose, "identity", 0.0, QuadratureConfig(8), 8, 8, 1.5, 4.5)
            assert np.array_equal(default, direct)
            assert np.array_equal(default, np.load(tmp_path / "explicit" / f"r_{i}.npy"))
            assert (tmp_path / "default" / f"r_{i}.png").read_bytes() == \
                (tmp_path / "explicit" / f"r_{i}.png").read_bytes()
            hue = render_image(tiny_params, pose, "hue", 0.08, QuadratureConfig(8), 8, 8, 1.5, 4.5)
            assert np.array_equal(np.load(tmp_path / "hue" / f"r_{i}.npy"), hue)
            assert not np.array_equal(hue, default)

    def test_render_single_pose(self, tiny_params, tmp_path, capsys):
        ckpt = self._checkpoint(tiny_params, tmp_path)
        pose = tmp_path / "pose.json"
        pose.write_text(json.dumps({"transform_matrix": np.eye(4).tolist()}))
        code, _, _ = run(capsys, "render", "--checkpoint", ckpt, "--pose", pose, "--width", 5, "--height", 3,
                         "--out", tmp_path / "o")
        assert code == 0
        assert (tmp_path / "o" / "r_0.png").is_file()

    def test_missing_checkpoint(self, scene_dir, tmp_path, capsys):
        code, _, err = run(capsys, "render", "--checkpoint", tmp_path / "none.npz", "--scene", scene_dir,
                           "--out", tmp_path / "o")
        assert code == 3 and "checkpoint" in err


class TestEval:
    @pytest.fixture
    def png_dir(self, tmp_path):
        rng = np.random.default_rng(0)
        for i in range(3):
            write_png(tmp_path / "imgs" / f"r_{i}.png", rng.random((16, 16, 3)))
        return tmp_path / "imgs"

    def test_self_comparison(self, png_dir, tmp_path, capsys):
        code, lines, _ = run(capsys, "eval", "--rendered", png_dir, "--reference", png_dir, "--out", tmp_path / "m")
        assert code == 0
        per_image = [r for r in lines if "_mean" not in r["metric"]]
        assert len(per_image) == 6
        assert all(r["value"] == "inf" for r in per_image if r["metric"] == "psnr")
        assert all(r["value"] == pytest.approx(1.0, abs=1e-12) for r in per_image if r["metric"] == "ssim")
        means = {r["metric"]: r["value"] for r in lines if "_mean" in r["metric"]}
        assert means["psnr_mean"] == "inf"
        assert (tmp_path / "m" / "metrics.jsonl").read_text().count("\n") == 8

    def test_missing_reference(self, png_dir, tmp_path, capsys):
        (tmp_path / "ref").mkdir()
        code, _, err = run(capsys, "eval", "--rendered", png_dir, "--reference", tmp_path / "ref")
        assert code == 3 and "r_0.png" in err

    def test_clouds(self, tmp_path, capsys):
        write_xyz(tmp_path / "p.xyz", PointCloud([[0, 0, 0]]))
        write_xyz(tmp_path / "q.xyz", PointCloud([[1, 0, 0]]))
        code, lines, _ = run(capsys, "eval", "--clouds", tmp_path / "p.xyz", tmp_path / "q.xyz")
        assert code == 0
        assert lines == [{"metric": "chamfer_sum", "value": 2.0,
                          "inputs": {"p": str(tmp_path / "p.xyz"), "q": str(tmp_path / "q.xyz")}}]


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "augrf", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("augment", "degrade", "subsample", "train", "render", "eval"):
        assert cmd in res.stdout

