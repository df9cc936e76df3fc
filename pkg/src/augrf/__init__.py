"""Radiance fields trained on color-augmented image datasets.

Modules
-------
image_ops   color manipulations, degradation models, PNG I/O
dataset     posed datasets, static/dynamic augmentation, robustness protocols
field       positional encoding, density/color MLPs, appearance embeddings
render      ray generation and volumetric rendering
train       loss and gradients, Adam, training loop
evaluation  PSNR, SSIM, Chamfer distance, level-set extraction
scenes      procedural test scene
experiment  serializable experiment spec
cli         command line (python -m augrf)
"""

from .image_ops import Degradation, DegradationSpec, Manipulation, apply_manipulation, degrade
from .dataset import CameraPose, IntensityConfig, PosedDataset, Scene, build_sia, load_scene, sample_dia
from .field import FieldConfig, FieldParams, eval_field, init_params
from .render import QuadratureConfig, Ray, render_image, render_ray
from .train import TrainConfig, adam_step, loss_and_grad, train
from .evaluation import PointCloud, chamfer_sum, psnr, ssim

__version__ = "0.1.0"
