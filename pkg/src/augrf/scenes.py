"""Procedural multi-view scene: a textured ball resting on a checkered plane.

Ground-truth views are ray traced analytically with Lambertian shading and
supersampling. The scene is small enough to fit in seconds yet has texture,
occlusion and a background, which is what the desk-scale experiments need.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset import CameraPose, PosedDataset, Scene, look_at
from .evaluation import PointCloud
from .render import generate_rays

BALL_CENTER = np.array([0.0, 0.0, 0.5])
BALL_RADIUS = 0.5
PLANE_HALF = 1.25
CAMERA_RADIUS = 4.0
FOV_X = 0.75
NEAR, FAR = 2.2, 5.8
LIGHT = np.array([0.4, 0.3, 1.0]) / np.linalg.norm([0.4, 0.3, 1.0])

_PALETTE = np.array([
    [0.85, 0.20, 0.15],
    [0.95, 0.60, 0.10],
    [0.90, 0.85, 0.20],
    [0.25, 0.70, 0.30],
    [0.20, 0.40, 0.85],
    [0.55, 0.25, 0.70],
])


def _ball_color(points: np.ndarray) -> np.ndarray:
    n = (points - BALL_CENTER) / BALL_RADIUS
    lon = np.arctan2(n[:, 1], n[:, 0])
    lat = np.arcsin(np.clip(n[:, 2], -1.0, 1.0))
    sector = np.floor((lon + math.pi) / (2 * math.pi) * 8).astype(int) % len(_PALETTE)
    band = np.floor((lat + math.pi / 2) / (math.pi / 5)).astype(int) % 2
    albedo = _PALETTE[sector] * np.where(band[:, None] == 1, 1.0, 0.6)
    return albedo * (0.35 + 0.65 * np.clip(n @ LIGHT, 0.0, None))[:, None]


def _plane_color(points: np.ndarray) -> np.ndarray:
    cell = (np.floor(points[:, 0] / 0.25) + np.floor(points[:, 1] / 0.25)).astype(int) % 2
    albedo = np.where(cell[:, None] == 0, [0.80, 0.78, 0.70], [0.20, 0.45, 0.50])
    return albedo * (0.35 + 0.65 * LIGHT[2])


def trace(origins: np.ndarray, dirs: np.ndarray, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Exact first-hit color along each ray."""
    n = len(origins)
    color = np.tile(np.asarray(background, dtype=np.float64), (n, 1))

    oc = origins - BALL_CENTER
    b = np.sum(oc * dirs, axis=1)
    c = np.sum(oc * oc, axis=1) - BALL_RADIUS**2
    disc = b * b - c
    hit = disc >= 0
    t_ball = np.where(hit, -b - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
    t_ball = np.where(t_ball > 0, t_ball, np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = -origins[:, 2] / dirs[:, 2]
    p_plane = origins + np.nan_to_num(t_plane, posinf=0.0, neginf=0.0)[:, None] * dirs
    on_plane = (t_plane > 0) & (np.abs(p_plane[:, 0]) <= PLANE_HALF) & (np.abs(p_plane[:, 1]) <= PLANE_HALF)
    t_plane = np.where(on_plane, t_plane, np.inf)

    ball_first = t_ball < t_plane
    sel = ball_first & np.isfinite(t_ball)
    color[sel] = _ball_color(origins[sel] + t_ball[sel, None] * dirs[sel])
    sel = ~ball_first & np.isfinite(t_plane)
    color[sel] = _plane_color(p_plane[sel])
    return color


def render_view(pose: CameraPose, size: int, supersample: int = 3, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Anti-aliased ground-truth image of ``size x size`` pixels."""
    fine = size * supersample
    rays = generate_rays(pose, fine, fine)
    img = trace(rays.origins, rays.directions, background).reshape(fine, fine, 3)
    return img.reshape(size, supersample, size, supersample, 3).mean(axis=(1, 3))


def camera_poses(n: int, offset: float = 0.0) -> list[CameraPose]:
    """Golden-angle azimuths, elevations sweeping 20 to 60 degrees."""
    golden = math.pi * (3.0 - math.sqrt(5.0))
    poses = []
    for i in range(n):
        az = offset + i * golden
        el = math.radians(20.0 + 40.0 * ((i * 0.618034 + offset) % 1.0))
        eye = CAMERA_RADIUS * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        poses.append(CameraPose(look_at(eye, (0.0, 0.0, 0.3)), FOV_X))
    return poses


def ball_scene(n_train: int = 20, n_test: int = 5, size: int = 64, background=(1.0, 1.0, 1.0)) -> Scene:
    """The textured-ball scene with disjoint train and test viewpoints."""
    def split(poses, prefix):
        images = tuple(render_view(p, size, background=background) for p in poses)
        names = tuple(f"{prefix}/r_{i}" for i in range(len(poses)))
        return PosedDataset(images, tuple(poses), names=names)

    train = split(camera_poses(n_train), "train")
    test = split(camera_poses(n_test, offset=0.37), "test")
    return Scene(train, test, NEAR, FAR, tuple(background))


def surface_points(n: int = 4000, seed: int = 0) -> PointCloud:
    """Points sampled on the visible surfaces (ball and plane top)."""
    rng = np.random.default_rng(seed)
    n_ball = n // 3
    v = rng.normal(size=(n_ball, 3))
    ball = BALL_CENTER + BALL_RADIUS * v / np.linalg.norm(v, axis=1, keepdims=True)
    plane = np.column_stack([rng.uniform(-PLANE_HALF, PLANE_HALF, (n - n_ball, 2)), np.zeros(n - n_ball)])
    return PointCloud(np.concatenate([ball, plane]))
