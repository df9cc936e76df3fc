"""
Color manipulations and degradations on a procedural view
=========================================================

Renders one view of the ball scene, applies every manipulation at its
default static intensity and every degradation at its reference
intensity, and tiles the results into a single contact sheet.
"""

import sys
from pathlib import Path

import numpy as np

from augrf.dataset import IntensityConfig
from augrf.image_ops import Degradation, DegradationSpec, Manipulation, apply_manipulation, degrade, write_png
from augrf.scenes import ball_scene

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

# One 96x96 training view of the procedural scene
view = ball_scene(n_train=1, n_test=0, size=96).train.images[0]

# Top row: the six replicas a static augmented dataset would hold
cfg = IntensityConfig()
top = [apply_manipulation(view, kind, cfg.sia_intensities[kind]) for kind in Manipulation]
for kind, img in zip(Manipulation, top):
    print(f"{kind.value:>10}  p={cfg.sia_intensities[kind]:+.2f}  mean={img.mean():.3f}")

# Bottom row: the five degradations (identity first to keep the grid aligned)
levels = {"gaussian": 0.1, "motion_blur": 5, "poisson": 10, "salt_pepper": 0.05, "speckle": 0.4}
bottom = [view] + [degrade(view, DegradationSpec(k, levels[k.value], seed=0)) for k in Degradation]

sheet = np.concatenate([np.concatenate(top, axis=1), np.concatenate(bottom, axis=1)], axis=0)
write_png(out / "contact_sheet.png", sheet)
print("wrote", out / "contact_sheet.png", sheet.shape)

# A drawn DIA sample: kind uniform over the five, p uniform in [-W/2, W/2]
from augrf.dataset import draw_manipulation

rng = np.random.default_rng(0)
draws = [draw_manipulation(cfg, rng) for _ in range(5)]
print("dynamic draws:", [(k.value, round(p, 3)) for k, p in draws])
