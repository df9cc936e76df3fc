"""
The command line, end to end
============================

Writes the procedural scene to disk, then drives every subcommand through
``python -m augrf``: augment, degrade, subsample, train, render and eval.
Each step prints the JSON line the command emits.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from augrf.dataset import write_scene
from augrf.scenes import ball_scene

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="augrf_"))
scene_dir = write_scene(ball_scene(n_train=8, n_test=2, size=32), work / "scene")


def augrf(*args):
    res = subprocess.run([sys.executable, "-m", "augrf", *map(str, args)], capture_output=True, text=True)
    print("$ augrf", " ".join(map(str, args)))
    print(res.stdout.strip() or res.stderr.strip(), f"(exit {res.returncode})")
    return res


augrf("augment", "--scene", scene_dir, "--out", work / "sia")
augrf("degrade", "--scene", scene_dir, "--kind", "salt_pepper", "--q", 0.05, "--seed", 1, "--out", work / "noisy")
augrf("subsample", "--scene", scene_dir, "--percent", 50, "--out", work / "half")

# A spec file drives training; flags override its fields
spec = work / "spec.json"
spec.write_text(json.dumps({
    "mode": "SIA",
    "train": {"iterations": 200, "batch_rays": 256, "log_every": 50, "val_every": 100,
              "field": {"mlp1_widths": [32, 32], "latent_dim": 32, "mlp2_widths": [32]}},
}))
augrf("train", "--config", spec, "--scene", scene_dir, "--seed", 3, "--out", work / "run")

ckpt = sorted((work / "run" / "checkpoints").glob("*.npz"))[-1]
augrf("render", "--checkpoint", ckpt, "--scene", scene_dir, "--out", work / "renders")
augrf("render", "--checkpoint", ckpt, "--scene", scene_dir, "--manipulation", "hue", "--intensity", 0.08,
      "--out", work / "renders_hue")
augrf("eval", "--rendered", work / "renders", "--reference", scene_dir / "test")

# Usage errors exit with 2 and list the valid choices
augrf("degrade", "--scene", scene_dir, "--kind", "blur", "--q", 1, "--out", work / "x")
print("outputs under", work)
