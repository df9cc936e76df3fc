"""Pinhole ray generation and volumetric rendering by alpha compositing.

Along each ray ``[t_near, t_far]`` is split into ``S`` equal bins with one
sample per bin (the bin midpoint, or a uniform jitter when stratified). With
``s_i = sigma_i * delta_i`` the composited color is::

    alpha_i = 1 - exp(-s_i)
    T_i     = exp(-sum_{j<i} s_j)
    C       = sum_i T_i alpha_i c_i + T_S * background

A *field* here is either :class:`~augrf.field.FieldParams` or any callable
``field(points, dirs, rows, ps) -> (sigma, color)`` with points ``(R, S, 3)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dataset import CameraPose
from .errors import InvalidArgumentError
from .field import FieldParams, field_forward
from .image_ops import Manipulation


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if o.shape != (3,) or d.shape != (3,):
            raise InvalidArgumentError("ray origin and direction must be 3-vectors")
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise InvalidArgumentError("ray direction must have unit length")
        if not 0.0 <= self.t_near < self.t_far:
            raise InvalidArgumentError(f"need 0 <= t_near < t_far, got {self.t_near}, {self.t_far}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class QuadratureConfig:
    samples_per_ray: int = 64
    stratified: bool = False
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.samples_per_ray < 2:
            raise InvalidArgumentError("samples_per_ray must be >= 2")
        object.__setattr__(self, "background", tuple(float(c) for c in self.background))

    def to_dict(self) -> dict:
        return {
            "samples_per_ray": self.samples_per_ray,
            "stratified": self.stratified,
            "background": list(self.background),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureConfig":
        return cls(**d)


class Rays(NamedTuple):
    origins: np.ndarray
    directions: np.ndarray


def all_pixels(width: int, height: int) -> np.ndarray:
    """Every ``(row, col)`` in row-major order."""
    rows, cols = np.divmod(np.arange(width * height), width)
    return np.stack([rows, cols], axis=1)


def generate_rays(pose: CameraPose, width: int, height: int, pixels=None) -> Rays:
    """One ray per requested ``(row, col)`` pixel, through the pixel center.

    Camera space has x right, y up and looks down -z.
    """
    if width < 1 or height < 1:
        raise InvalidArgumentError("image dimensions must be positive")
    pix = all_pixels(width, height) if pixels is None else np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if pix.size and (pix.min() < 0 or pix[:, 0].max() >= height or pix[:, 1].max() >= width):
        raise InvalidArgumentError("pixel index out of bounds")
    f = pose.focal(width)
    cam = np.stack(
        [
            (pix[:, 1] + 0.5 - 0.5 * width) / f,
            -(pix[:, 0] + 0.5 - 0.5 * height) / f,
            -np.ones(len(pix)),
        ],
        axis=1,
    )
    dirs = cam @ pose.transform[:3, :3].T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(pose.transform[:3, 3], dirs.shape).copy()
    return Rays(origins, dirs)


def sample_times(near, far, n_rays: int, samples: int, stratified: bool = False, rng=None, dtype=np.float64):
    """Sample depths ``t (R, S)`` and bin widths ``delta (R, S)``."""
    near = np.broadcast_to(np.asarray(near, dtype=dtype), (n_rays,))[:, None]
    far = np.broadcast_to(np.asarray(far, dtype=dtype), (n_rays,))[:, None]
    width = (far - near) / samples
    if stratified:
        if rng is None:
            raise InvalidArgumentError("stratified sampling needs an rng")
        offset = rng.random((n_rays, samples)).astype(dtype)
    else:
        offset = np.full((n_rays, samples), 0.5, dtype=dtype)
    t = near + (np.arange(samples, dtype=dtype) + offset) * width
    return t, np.broadcast_to(width, t.shape)


class Composite(NamedTuple):
    color: np.ndarray  # (R, 3)
    opacity: np.ndarray  # (R,)
    transmittance: np.ndarray  # (R, S + 1), starts at 1
    weights: np.ndarray  # (R, S)
    alpha: np.ndarray  # (R, S)


def composite(sigma, color, delta, background) -> Composite:
    s = sigma * delta
    cum = np.cumsum(s, axis=1)
    trans = np.exp(-np.concatenate([np.zeros_like(cum[:, :1]), cum], axis=1))
    alpha = -np.expm1(-s)
    weights = trans[:, :-1] * alpha
    bg = np.asarray(background, dtype=sigma.dtype)
    rgb = np.einsum("rs,rsc->rc", weights, color) + trans[:, -1:] * bg
    return Composite(rgb, 1.0 - trans[:, -1], trans, weights, alpha)


def composite_backward(comp: Composite, color, delta, background, dC):
    """Return ``(dL/dsigma, dL/dcolor)`` given ``dL/dC`` of shape ``(R, 3)``."""
    weighted = comp.weights[..., None] * color
    # suffix_k = sum_{i>k} w_i c_i + T_S * bg
    rev = np.cumsum(weighted[:, ::-1], axis=1)[:, ::-1]
    tail = comp.transmittance[:, -1:, None] * np.asarray(background, dtype=color.dtype)
    suffix = np.concatenate([rev[:, 1:], np.zeros_like(rev[:, :1])], axis=1) + tail
    dC = dC[:, None, :]
    ds = np.sum(dC * (comp.transmittance[:, 1:, None] * color - suffix), axis=2)
    dcolor = comp.weights[..., None] * dC
    return ds * delta, dcolor


def _as_callable(field):
    if isinstance(field, FieldParams):
        def fn(points, dirs, rows, ps):
            out, _ = field_forward(field, points, dirs, rows, ps, keep_cache=False)
            return out.sigma, out.color
        return fn
    if callable(field):
        return field
    raise InvalidArgumentError("field must be FieldParams or a callable")


class RenderResult(NamedTuple):
    color: np.ndarray
    opacity: np.ndarray
    transmittance: np.ndarray
    t: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray


def render_rays(field, origins, dirs, near, far, rows, ps, quad: QuadratureConfig, rng=None, dtype=None) -> RenderResult:
    """Render a batch of rays; ``rows``/``ps`` give per-ray conditioning."""
    if dtype is None:
        dtype = field.dtype if isinstance(field, FieldParams) else np.float64
    origins = np.asarray(origins, dtype=dtype)
    dirs = np.asarray(dirs, dtype=dtype)
    n = len(origins)
    t, delta = sample_times(near, far, n, quad.samples_per_ray, quad.stratified, rng, dtype)
    points = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    rows = np.broadcast_to(np.asarray(rows, dtype=np.intp), (n,))
    ps = np.broadcast_to(np.asarray(ps, dtype=dtype), (n,))
    sigma, color = _as_callable(field)(points, dirs, rows, ps)
    comp = composite(sigma, color, delta, quad.background)
    return RenderResult(comp.color, comp.opacity, comp.transmittance, t, sigma, comp.alpha)


def render_ray(field, ray: Ray, kind=Manipulation.IDENTITY, p: float = 0.0, quad: QuadratureConfig | None = None, rng=None) -> RenderResult:
    """Render one ray; arrays in the result drop the batch axis."""
    quad = quad or QuadratureConfig()
    kind = Manipulation.parse(kind)
    res = render_rays(
        field, ray.origin[None], ray.direction[None], ray.t_near, ray.t_far,
        [kind.row], [p], quad, rng,
    )
    return RenderResult(*(a[0] for a in res))


def render_image(
    field,
    pose: CameraPose,
    kind=Manipulation.IDENTITY,
    p: float = 0.0,
    quad: QuadratureConfig | None = None,
    width: int = 64,
    height: int = 64,
    near: float = 2.0,
    far: float = 6.0,
    chunk: int = 4096,
) -> np.ndarray:
    """Render a full image at ``(kind, p)``; the default is the identity query."""
    quad = quad or QuadratureConfig()
    if quad.stratified:
        raise InvalidArgumentError("image renders use deterministic (non-stratified) sampling")
    kind = Manipulation.parse(kind)
    rays = generate_rays(pose, width, height)
    out = []
    for start in range(0, width * height, chunk):
        sl = slice(start, start + chunk)
        res = render_rays(field, rays.origins[sl], rays.directions[sl], near, far, kind.row, p, quad)
        out.append(res.color)
    return np.clip(np.concatenate(out).reshape(height, width, 3), 0.0, 1.0)


def dump_ray_profile(path, result: RenderResult) -> Path:
    """Write one JSON line per sample: ``{t, sigma, alpha, T}``."""
    path = Path(path)
    with open(path, "w") as fh:
        for i in range(len(result.t)):
            fh.write(json.dumps({
                "t": float(result.t[i]),
                "sigma": float(result.sigma[i]),
                "alpha": float(result.alpha[i]),
                "T": float(result.transmittance[i]),
            }) + "\n")
    return path
