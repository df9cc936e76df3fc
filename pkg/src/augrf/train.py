"""Loss, gradients, Adam and the training loop for baseline, SIA and DIA modes."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .dataset import IntensityConfig, PosedDataset, Scene, build_sia, draw_manipulation
from .errors import InvalidArgumentError, NumericalError
from .evaluation import psnr
from .field import FieldConfig, FieldParams, field_backward, field_forward, init_params, save_checkpoint
from .image_ops import Manipulation, apply_manipulation
from .render import (
    QuadratureConfig,
    composite,
    composite_backward,
    generate_rays,
    render_image,
    sample_times,
)

logger = logging.getLogger(__name__)

TRAIN_MODES = ("baseline", "SIA", "DIA")


@dataclass
class TrainConfig:
    mode: str = "baseline"
    iterations: int = 2000
    batch_rays: int = 1024
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    quadrature: QuadratureConfig = field(
        default_factory=lambda: QuadratureConfig(samples_per_ray=32, stratified=True)
    )
    intensities: IntensityConfig = field(default_factory=IntensityConfig)
    field: FieldConfig = field(default_factory=FieldConfig)
    dtype: str = "float32"
    log_every: int = 100
    val_every: int = 500
    val_views: int = 0  # 0: every test view
    checkpoint_every: int = 0
    sia_kinds: tuple | None = None  # restrict SIA sampling to these replicas

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise InvalidArgumentError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.iterations < 1 or self.batch_rays < 1 or self.learning_rate <= 0:
            raise InvalidArgumentError("iterations, batch_rays and learning_rate must be positive")
        if isinstance(self.quadrature, dict):
            self.quadrature = QuadratureConfig.from_dict(self.quadrature)
        if isinstance(self.intensities, dict):
            self.intensities = IntensityConfig.from_dict(self.intensities)
        if isinstance(self.field, dict):
            self.field = FieldConfig.from_dict(self.field)
        if self.sia_kinds is not None:
            self.sia_kinds = tuple(Manipulation.parse(k) for k in self.sia_kinds)
        np.dtype(self.dtype)

    @property
    def field_config(self) -> FieldConfig:
        return replace(self.field, mode="DIA" if self.mode == "DIA" else "SIA")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "batch_rays": self.batch_rays,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "quadrature": self.quadrature.to_dict(),
            "intensities": self.intensities.to_dict(),
            "field": self.field.to_dict(),
            "dtype": self.dtype,
            "log_every": self.log_every,
            "val_every": self.val_every,
            "val_views": self.val_views,
            "checkpoint_every": self.checkpoint_every,
            "sia_kinds": None if self.sia_kinds is None else [k.value for k in self.sia_kinds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**d)


# Full-scale settings as reported for the original methods; the desk preset is the default.
PRESETS = {
    "desk": {},
    "nerf": {"learning_rate": 5e-4, "iterations": 50_000, "batch_rays": 4096, "dtype": "float32"},
    "ngp": {"learning_rate": 1e-2, "iterations": 20_000, "batch_rays": 4096, "dtype": "float32"},
}


# -- loss ----------------------------------------------------------------------


class RayBatch(NamedTuple):
    origins: np.ndarray  # (R, 3)
    directions: np.ndarray  # (R, 3)
    targets: np.ndarray  # (R, 3)
    rows: np.ndarray  # (R,) embedding row per ray
    ps: np.ndarray  # (R,) intensity per ray
    near: np.ndarray | float
    far: np.ndarray | float


def make_batch(items) -> RayBatch:
    """Build a :class:`RayBatch` from ``(Ray, target color, kind, p)`` tuples."""
    items = list(items)
    if not items:
        raise InvalidArgumentError("batch must not be empty")
    rays = [it[0] for it in items]
    return RayBatch(
        np.stack([r.origin for r in rays]),
        np.stack([r.direction for r in rays]),
        np.asarray([it[1] for it in items], dtype=np.float64),
        np.asarray([Manipulation.parse(it[2]).row for it in items]),
        np.asarray([float(it[3]) for it in items]),
        np.asarray([r.t_near for r in rays]),
        np.asarray([r.t_far for r in rays]),
    )


def loss_and_grad(params: FieldParams, batch: RayBatch, quad: QuadratureConfig, rng=None):
    """Mean over rays of the squared color error, and its exact gradient."""
    dt = params.dtype
    n = len(batch.origins)
    if n == 0:
        raise InvalidArgumentError("batch must not be empty")
    origins = np.asarray(batch.origins, dtype=dt)
    dirs = np.asarray(batch.directions, dtype=dt)
    t, delta = sample_times(batch.near, batch.far, n, quad.samples_per_ray, quad.stratified, rng, dt)
    points = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    out, cache = field_forward(params, points, dirs, batch.rows, batch.ps)
    comp = composite(out.sigma, out.color, delta, quad.background)
    diff = comp.color - np.asarray(batch.targets, dtype=dt)
    loss = float(np.sum(diff * diff)) / n
    dsigma, dcolor = composite_backward(comp, out.color, delta, quad.background, (2.0 / n) * diff)
    return loss, field_backward(params, cache, dsigma, dcolor)


# -- optimizer -----------------------------------------------------------------


@dataclass
class AdamState:
    t: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int, dtype=np.float64) -> "AdamState":
        return cls(0, np.zeros(n, dtype=dtype), np.zeros(n, dtype=dtype))


def adam_step(params, state: AdamState, grad, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns ``(new params, new state)``.

    ``params`` may be a flat array or :class:`FieldParams`; inputs are not modified.
    """
    flat = params.flat if isinstance(params, FieldParams) else np.asarray(params)
    grad = np.asarray(grad)
    if grad.shape != flat.shape or state.m.shape != flat.shape or state.v.shape != flat.shape:
        raise InvalidArgumentError(
            f"shape mismatch: params {flat.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new = (flat - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(flat.dtype, copy=False)
    new_state = AdamState(t, m.astype(flat.dtype, copy=False), v.astype(flat.dtype, copy=False))
    if isinstance(params, FieldParams):
        return params.with_flat(new), new_state
    return new, new_state


# -- training loop -------------------------------------------------------------


def validation_psnr(params: FieldParams, scene: Scene, quad: QuadratureConfig, max_views: int = 0) -> float:
    """Mean PSNR of identity-query renders against the held-out views."""
    views = scene.test if scene.test is not None and len(scene.test) else scene.train
    n = len(views) if max_views <= 0 else min(max_views, len(views))
    quad = replace(quad, stratified=False)
    scores = []
    for i in range(n):
        img = render_image(
            params, views.poses[i], Manipulation.IDENTITY, 0.0, quad,
            views.width, views.height, scene.near, scene.far,
        )
        scores.append(psnr(img, views.images[i]))
    return float(np.mean(scores))


class _RayTable:
    """All rays and target pixels of a dataset, flattened for uniform sampling."""

    def __init__(self, data: PosedDataset, dtype):
        self.data = data
        self.hw = data.height * data.width
        rays = {}
        origins, dirs = [], []
        for pose in data.poses:
            key = id(pose)
            if key not in rays:
                rays[key] = generate_rays(pose, data.width, data.height)
            origins.append(rays[key].origins)
            dirs.append(rays[key].directions)
        self.origins = np.stack(origins).astype(dtype)
        self.dirs = np.stack(dirs).astype(dtype)
        self.targets = np.stack([im.reshape(-1, 3) for im in data.images]).astype(dtype)
        self.rows = np.array([k.row for k, _ in data.manifest])
        self.ps = np.array([p for _, p in data.manifest], dtype=dtype)

    def __len__(self) -> int:
        return len(self.data) * self.hw


def _training_data(scene: Scene, cfg: TrainConfig) -> PosedDataset:
    if cfg.mode != "SIA":
        return scene.train
    data = build_sia(scene.train, cfg.intensities)
    if cfg.sia_kinds is not None:
        data = data.select([i for i, (k, _) in enumerate(data.manifest) if k in cfg.sia_kinds])
    return data


def train(
    scene: Scene,
    cfg: TrainConfig,
    log_path=None,
    checkpoint_dir=None,
    callback: Callable | None = None,
    params: FieldParams | None = None,
):
    """Fit a field to ``scene``. Returns ``(params, log)``.

    ``log`` is a list of dicts ``{iteration, loss, val_psnr, wall_ms}``; the
    same records are appended as JSON lines to ``log_path`` when given.
    ``callback(iteration, params, grad)`` is invoked after every gradient.
    """
    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = init_params(cfg.field_config, cfg.seed, dtype)
    state = AdamState.zeros(params.size, dtype)
    table = _RayTable(_training_data(scene, cfg), dtype)
    quad = cfg.quadrature
    log: list[dict] = []
    log_file = open(log_path, "a") if log_path else None
    start = time.perf_counter()
    running, count = 0.0, 0

    def record(it: int, loss: float | None, val: float | None):
        entry = {
            "iteration": it,
            "loss": loss,
            "val_psnr": val,
            "wall_ms": round(1000.0 * (time.perf_counter() - start), 3),
        }
        log.append(entry)
        if log_file:
            log_file.write(json.dumps(entry) + "\n")
            log_file.flush()
        logger.info("iter %d loss %s val_psnr %s", it, loss, val)

    try:
        for it in range(1, cfg.iterations + 1):
            idx = rng.integers(len(table), size=cfg.batch_rays)
            img, pix = np.divmod(idx, table.hw)
            rows, ps = table.rows[img], table.ps[img]
            if cfg.mode == "DIA":
                targets = np.empty((cfg.batch_rays, 3), dtype=dtype)
                rows = np.empty(cfg.batch_rays, dtype=np.intp)
                ps = np.empty(cfg.batch_rays, dtype=dtype)
                for i in np.unique(img):
                    kind, p = draw_manipulation(cfg.intensities, rng)
                    sel = img == i
                    aug = apply_manipulation(table.data.images[i], kind, p).reshape(-1, 3)
                    targets[sel] = aug[pix[sel]]
                    rows[sel], ps[sel] = kind.row, p
            else:
                targets = table.targets[img, pix]
            batch = RayBatch(table.origins[img, pix], table.dirs[img, pix], targets, rows, ps, scene.near, scene.far)
            loss, grad = loss_and_grad(params, batch, quad, rng)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite loss or gradient at iteration {it}")
            if callback is not None:
                callback(it, params, grad)
            params, state = adam_step(params, state, grad, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
            running += loss
            count += 1

            last = it == cfg.iterations
            do_log = last or (cfg.log_every and it % cfg.log_every == 0)
            do_val = last or (cfg.val_every and it % cfg.val_every == 0)
            if do_log or do_val:
                val = validation_psnr(params, scene, quad, cfg.val_views) if do_val else None
                record(it, running / count, val)
                running, count = 0.0, 0
            if checkpoint_dir and (last or (cfg.checkpoint_every and it % cfg.checkpoint_every == 0)):
                save_checkpoint(
                    Path(checkpoint_dir) / f"ckpt_{it:06d}.npz",
                    params,
                    checkpoint_meta(scene, cfg, it),
                )
    finally:
        if log_file:
            log_file.close()
    return params, log


def checkpoint_meta(scene: Scene, cfg: TrainConfig, iteration: int) -> dict:
    """Render settings stored next to the parameters."""
    return {
        "iteration": iteration,
        "near": scene.near,
        "far": scene.far,
        "quadrature": replace(cfg.quadrature, stratified=False).to_dict(),
        "width": scene.train.width,
        "height": scene.train.height,
        "fov_x": scene.train.poses[0].fov_x,
        "train": cfg.to_dict(),
    }
