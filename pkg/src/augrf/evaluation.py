"""Image and geometry metrics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgumentError
from .image_ops import LUMA_WEIGHTS, check_image

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a, b = check_image(a), check_image(b)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a.astype(np.float64), b.astype(np.float64)


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]; ``inf`` if identical."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1D Gaussian taps."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    n = len(taps)
    h, w = img.shape
    rows = sum(taps[i] * img[i : h - n + 1 + i] for i in range(n))
    return sum(taps[j] * rows[:, j : w - n + 1 + j] for j in range(n))


def ssim(a, b) -> float:
    """Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) of the luma channel."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise InvalidArgumentError(f"SSIM needs both sides >= {SSIM_WINDOW}, got {a.shape[:2]}")
    x, y = a @ LUMA_WEIGHTS, b @ LUMA_WEIGHTS
    taps = gaussian_window()
    mx, my = _filter_valid(x, taps), _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mx * mx
    syy = _filter_valid(y * y, taps) - my * my
    sxy = _filter_valid(x * y, taps) - mx * my
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0


def _points(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise InvalidArgumentError("Chamfer distance needs nonempty point clouds")
    return pts


def directed_chamfer(p, q) -> float:
    """Mean over ``p`` of the Euclidean distance to the nearest point of ``q``."""
    p, q = _points(p), _points(q)
    dist, _ = cKDTree(q).query(p, k=1)
    return float(np.mean(dist))


def chamfer_sum(p, q) -> float:
    """Sum of the two directed mean nearest-neighbor distances."""
    return directed_chamfer(p, q) + directed_chamfer(q, p)


def extract_level_set(field, threshold: float, resolution: int, bounds, chunk: int = 65536) -> PointCloud:
    """Centers of grid cells whose density crosses ``threshold`` against an axis neighbor.

    ``field`` is :class:`~augrf.field.FieldParams` or a callable mapping
    points ``(N, 3)`` to densities ``(N,)``. ``bounds`` is ``(lo, hi)`` with
    3-vector corners. Points are emitted in x-major scan order.
    """
    from .field import FieldParams, density

    if resolution < 8:
        raise InvalidArgumentError(f"resolution must be >= 8, got {resolution}")
    if not threshold > 0:
        raise InvalidArgumentError(f"threshold must be > 0, got {threshold}")
    lo, hi = (np.asarray(b, dtype=np.float64).reshape(3) for b in bounds)
    if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or np.any(hi <= lo):
        raise InvalidArgumentError("bounds must satisfy lo < hi on every axis")
    sigma_fn = (lambda pts: density(field, pts)) if isinstance(field, FieldParams) else field

    step = (hi - lo) / resolution
    axes = [lo[i] + (np.arange(resolution) + 0.5) * step[i] for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    values = np.concatenate([np.asarray(sigma_fn(grid[s : s + chunk]), dtype=np.float64).reshape(-1)
                             for s in range(0, len(grid), chunk)])
    inside = (values >= threshold).reshape((resolution,) * 3)

    crossing = np.zeros_like(inside)
    for axis in range(3):
        diff = np.diff(inside, axis=axis)
        lead = [slice(None)] * 3
        trail = [slice(None)] * 3
        lead[axis] = slice(0, -1)
        trail[axis] = slice(1, None)
        crossing[tuple(lead)] |= diff
        crossing[tuple(trail)] |= diff
    pts = grid[crossing.reshape(-1)]
    if len(pts) == 0:
        logger.warning("level set at %g is empty: no surface found", threshold)
    return PointCloud(pts)


def write_xyz(path, cloud: PointCloud, decimals: int = 3) -> Path:
    path = Path(path)
    np.savetxt(path, _as_cloud(cloud).points, fmt=f"%.{decimals}f")
    return path


def read_xyz(path) -> PointCloud:
    return PointCloud(np.loadtxt(path, ndmin=2))


def _as_cloud(cloud) -> PointCloud:
    return cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)


def metric_record(metric: str, value: float, **inputs) -> str:
    """One structured-text line ``{metric, value, inputs}``; infinities become ``"inf"``."""
    v = "inf" if value == math.inf else value
    return json.dumps({"metric": metric, "value": v, "inputs": inputs}, sort_keys=True)
