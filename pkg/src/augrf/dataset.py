"""Posed-image datasets, static and dynamic augmentation, robustness protocols."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DatasetError, EmptyDatasetError, InvalidArgumentError
from .image_ops import (
    NON_IDENTITY,
    DegradationSpec,
    Manipulation,
    apply_manipulation,
    check_image,
    degrade,
    read_png,
    write_png,
)

SUBSAMPLE_PERCENTS = (10, 25, 50, 75)
SIA_MANIFEST = "sia_manifest.json"


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world transform (OpenGL convention: the camera looks down -z)."""

    transform: np.ndarray
    fov_x: float

    def __post_init__(self):
        m = np.array(self.transform, dtype=np.float64)
        if m.shape != (4, 4) or not np.all(np.isfinite(m)):
            raise InvalidArgumentError(f"pose must be a finite 4x4 matrix, got shape {m.shape}")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-6):
            raise InvalidArgumentError("pose bottom row must be (0, 0, 0, 1)")
        rot = m[:3, :3]
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-4:
            raise InvalidArgumentError("pose rotation block is not orthonormal")
        if not 0.0 < self.fov_x < math.pi:
            raise InvalidArgumentError(f"fov_x must lie in (0, pi), got {self.fov_x}")
        m.flags.writeable = False
        object.__setattr__(self, "transform", m)
        object.__setattr__(self, "fov_x", float(self.fov_x))

    @property
    def origin(self) -> np.ndarray:
        return self.transform[:3, 3]

    def focal(self, width: int) -> float:
        """Focal length in pixels for an image ``width`` pixels wide."""
        return 0.5 * width / math.tan(0.5 * self.fov_x)


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world matrix placing the camera at ``eye`` facing ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    back = eye - np.asarray(target, dtype=np.float64)
    back /= np.linalg.norm(back)
    right = np.cross(np.asarray(up, dtype=np.float64), back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = right, true_up, back, eye
    return m


@dataclass(frozen=True)
class PosedDataset:
    """Images with poses and, per record, the manipulation that produced them.

    ``manifest[i]`` is ``(kind, p)``; unaugmented records carry
    ``(Manipulation.IDENTITY, 0.0)``. ``sources[i]`` indexes the unaugmented
    record a replica was built from.
    """

    images: tuple
    poses: tuple
    manifest: tuple = None
    sources: tuple = None
    names: tuple = None

    def __post_init__(self):
        n = len(self.images)
        if len(self.poses) != n:
            raise DatasetError(f"{n} images but {len(self.poses)} poses")
        images = []
        for img in self.images:
            img = check_image(img)
            if img.flags.writeable:
                img = img.copy()
                img.flags.writeable = False
            images.append(img)
        if images and any(im.shape != images[0].shape for im in images):
            raise DatasetError("images do not share dimensions")
        manifest = self.manifest
        if manifest is None:
            manifest = [(Manipulation.IDENTITY, 0.0)] * n
        manifest = tuple((Manipulation.parse(k), float(p)) for k, p in manifest)
        if len(manifest) != n:
            raise DatasetError(f"manifest has {len(manifest)} entries for {n} records")
        sources = tuple(range(n)) if self.sources is None else tuple(int(s) for s in self.sources)
        names = tuple(f"r_{i}" for i in range(n)) if self.names is None else tuple(self.names)
        if len(sources) != n or len(names) != n:
            raise DatasetError("sources/names length does not match record count")
        object.__setattr__(self, "images", tuple(images))
        object.__setattr__(self, "poses", tuple(self.poses))
        object.__setattr__(self, "manifest", manifest)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def height(self) -> int:
        return self.images[0].shape[0]

    @property
    def width(self) -> int:
        return self.images[0].shape[1]

    def select(self, indices: Sequence[int]) -> "PosedDataset":
        idx = [int(i) for i in indices]
        return PosedDataset(
            images=tuple(self.images[i] for i in idx),
            poses=tuple(self.poses[i] for i in idx),
            manifest=tuple(self.manifest[i] for i in idx),
            sources=tuple(self.sources[i] for i in idx),
            names=tuple(self.names[i] for i in idx),
        )


@dataclass(frozen=True)
class Scene:
    train: PosedDataset
    test: PosedDataset | None = None
    near: float = 2.0
    far: float = 6.0
    background: tuple = (1.0, 1.0, 1.0)


_DEFAULT_P = {
    Manipulation.IDENTITY: 0.0,
    Manipulation.CONTRAST: 0.5,
    Manipulation.HUE: 0.08,
    Manipulation.SATURATION: 0.5,
    Manipulation.SHARPNESS: 0.5,
    Manipulation.BRIGHTNESS: 0.2,
}


@dataclass
class IntensityConfig:
    """Fixed intensities for static augmentation and sampling widths for dynamic.

    Hue intensities are in turns. Widths default to twice the fixed intensity.
    """

    sia_intensities: dict = field(default_factory=lambda: dict(_DEFAULT_P))
    dia_widths: dict = field(default_factory=lambda: {k: 2.0 * v for k, v in _DEFAULT_P.items()})

    def __post_init__(self):
        self.sia_intensities = _complete(self.sia_intensities, "sia_intensities")
        self.dia_widths = _complete(self.dia_widths, "dia_widths")
        if any(w < 0 for w in self.dia_widths.values()):
            raise InvalidArgumentError("DIA widths must be nonnegative")
        if self.sia_intensities[Manipulation.IDENTITY] != 0 or self.dia_widths[Manipulation.IDENTITY] != 0:
            raise InvalidArgumentError("identity must have intensity 0 and width 0")

    def to_dict(self) -> dict:
        return {
            "sia_intensities": {k.value: v for k, v in self.sia_intensities.items()},
            "dia_widths": {k.value: v for k, v in self.dia_widths.items()},
        }

    @classmethod
    def from_dict(cls, d: dict | None) -> "IntensityConfig":
        d = d or {}
        kwargs = {}
        if "sia_intensities" in d:
            kwargs["sia_intensities"] = {**_DEFAULT_P, **_parse_keys(d["sia_intensities"])}
        if "dia_widths" in d:
            base = {k: 2.0 * v for k, v in _DEFAULT_P.items()}
            kwargs["dia_widths"] = {**base, **_parse_keys(d["dia_widths"])}
        return cls(**kwargs)


def _parse_keys(d: dict) -> dict:
    return {Manipulation.parse(k): float(v) for k, v in d.items()}


def _complete(d: dict, name: str) -> dict:
    d = _parse_keys(d)
    missing = [m.value for m in Manipulation if m not in d]
    if missing:
        raise InvalidArgumentError(f"{name} missing entries for: {', '.join(missing)}")
    for v in d.values():
        if not math.isfinite(v):
            raise InvalidArgumentError(f"{name} values must be finite")
    return {m: d[m] for m in Manipulation}


# -- loading -------------------------------------------------------------------


def _manifest_path(path: Path, split: str) -> Path:
    if path.is_file():
        return path
    for name in (f"transforms_{split}.json", "transforms.json"):
        if (path / name).is_file():
            return path / name
    raise DatasetError(f"no transforms_{split}.json or transforms.json in {path}")


def _resolve_image(root: Path, file_path: str) -> Path:
    candidate = root / file_path
    if candidate.suffix == "" and not candidate.is_file():
        candidate = candidate.with_suffix(".png")
    if not candidate.is_file():
        raise DatasetError(f"missing image {candidate}")
    return candidate


def read_scene_meta(path, split: str = "train") -> dict:
    mpath = _manifest_path(Path(path), split)
    try:
        meta = json.loads(mpath.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read scene manifest {mpath}: {exc}") from exc
    meta["_path"] = mpath
    return meta


def load_dataset(path, split: str = "train", background=(1.0, 1.0, 1.0)) -> PosedDataset:
    """Load a Blender-style scene split.

    ``path`` is either a ``transforms_*.json`` file or a directory holding
    ``transforms_{split}.json`` (falling back to ``transforms.json``). Frames
    may carry ``manipulation``/``intensity``/``source`` keys, as written by
    :func:`write_sia`.
    """
    meta = read_scene_meta(path, split)
    root = meta["_path"].parent
    frames = meta.get("frames")
    if not frames:
        raise EmptyDatasetError(f"{meta['_path']} lists no frames")
    try:
        fov_x = float(meta["camera_angle_x"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{meta['_path']}: missing or invalid camera_angle_x") from exc

    images, poses, manifest, sources, names = [], [], [], [], []
    for i, frame in enumerate(frames):
        try:
            pose = CameraPose(np.asarray(frame["transform_matrix"], dtype=np.float64), fov_x)
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"frame {i} of {meta['_path']}: malformed transform ({exc})") from exc
        img_path = _resolve_image(root, frame["file_path"])
        try:
            img = read_png(img_path, background)
        except OSError as exc:
            raise DatasetError(f"cannot read {img_path}: {exc}") from exc
        if images and img.shape != images[0].shape:
            raise DatasetError(f"{img_path} has shape {img.shape}, expected {images[0].shape}")
        images.append(img)
        poses.append(pose)
        manifest.append((frame.get("manipulation", "identity"), float(frame.get("intensity", 0.0))))
        sources.append(int(frame.get("source", i)))
        names.append(frame["file_path"])
    return PosedDataset(tuple(images), tuple(poses), tuple(manifest), tuple(sources), tuple(names))


def load_scene(path, background=(1.0, 1.0, 1.0)) -> Scene:
    path = Path(path)
    meta = read_scene_meta(path, "train")
    train = load_dataset(path, "train", background)
    test = None
    if path.is_dir() and (path / "transforms_test.json").is_file():
        test = load_dataset(path, "test", background)
    return Scene(
        train,
        test,
        float(meta.get("near", 2.0)),
        float(meta.get("far", 6.0)),
        tuple(background),
    )


def _frames(dataset: PosedDataset, image_names: Sequence[str], augmented: bool) -> list:
    frames = []
    for i, name in enumerate(image_names):
        frame = {
            "file_path": name,
            "transform_matrix": np.asarray(dataset.poses[i].transform).tolist(),
        }
        if augmented:
            kind, p = dataset.manifest[i]
            frame.update(manipulation=kind.value, intensity=p, source=dataset.sources[i])
        frames.append(frame)
    return frames


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_split(dataset: PosedDataset, root, split: str, near=None, far=None, augmented=False) -> Path:
    """Write PNGs under ``root/split`` plus ``root/transforms_{split}.json``."""
    root = Path(root)
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot write an empty dataset")
    names = []
    for i, img in enumerate(dataset.images):
        name = f"{split}/r_{i}.png"
        write_png(root / name, img)
        names.append(name)
    meta = {
        "camera_angle_x": dataset.poses[0].fov_x,
        "frames": _frames(dataset, names, augmented),
    }
    if near is not None:
        meta.update(near=near, far=far)
    out = root / f"transforms_{split}.json"
    _write_json(out, meta)
    return out


def write_scene(scene: Scene, root) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    write_split(scene.train, root, "train", scene.near, scene.far)
    if scene.test is not None:
        write_split(scene.test, root, "test", scene.near, scene.far)
    return root


# -- static augmentation -------------------------------------------------------


def build_sia(dataset: PosedDataset, cfg: IntensityConfig | None = None) -> PosedDataset:
    """Replicate ``dataset`` once per manipulation at its fixed intensity.

    Replicas are ordered by manipulation (identity first), records within a
    replica keep their source order.
    """
    cfg = cfg or IntensityConfig()
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot augment an empty dataset")
    images, poses, manifest, sources, names = [], [], [], [], []
    for kind in Manipulation:
        p = cfg.sia_intensities[kind]
        for i, img in enumerate(dataset.images):
            images.append(apply_manipulation(img, kind, p))
            poses.append(dataset.poses[i])
            manifest.append((kind, p))
            sources.append(i)
            names.append(f"{kind.value}/{Path(dataset.names[i]).stem}")
    return PosedDataset(tuple(images), tuple(poses), tuple(manifest), tuple(sources), tuple(names))


def write_sia(source: PosedDataset, cfg: IntensityConfig, out, source_names=None) -> Path:
    """Materialize the static augmented dataset under ``out``.

    Writes one PNG per replica, ``transforms_train.json`` covering every
    replica, and ``sia_manifest.json`` mapping each replica path to
    ``{source, manipulation, intensity}``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sia = build_sia(source, cfg)
    source_names = list(source_names or source.names)
    names, manifest = [], {}
    n = len(source)
    for i, img in enumerate(sia.images):
        kind, p = sia.manifest[i]
        src = sia.sources[i]
        name = f"{kind.value}/r_{src}.png"
        write_png(out / name, img)
        names.append(name)
        manifest[name] = {"source": source_names[src], "manipulation": kind.value, "intensity": p}
    meta = {"camera_angle_x": source.poses[0].fov_x, "frames": _frames(sia, names, True)}
    _write_json(out / "transforms_train.json", meta)
    _write_json(out / SIA_MANIFEST, manifest)
    assert len(names) == (len(NON_IDENTITY) + 1) * n
    return out / SIA_MANIFEST


def read_sia_manifest(path) -> dict:
    """Return ``{replica path: (source path, Manipulation, p)}``."""
    raw = json.loads(Path(path).read_text())
    return {
        k: (v["source"], Manipulation.parse(v["manipulation"]), float(v["intensity"]))
        for k, v in raw.items()
    }


# -- dynamic augmentation ------------------------------------------------------


class DIASample(NamedTuple):
    image: np.ndarray
    kind: Manipulation
    p: float
    index: int


def draw_manipulation(cfg: IntensityConfig, rng: np.random.Generator) -> tuple[Manipulation, float]:
    """Draw a non-identity manipulation uniformly and ``p ~ U[-w/2, w/2]``."""
    kind = NON_IDENTITY[int(rng.integers(len(NON_IDENTITY)))]
    half = 0.5 * cfg.dia_widths[kind]
    p = float(rng.uniform(-half, half)) if half > 0 else 0.0
    return kind, p


def sample_dia(dataset: PosedDataset, cfg: IntensityConfig, rng: np.random.Generator) -> DIASample:
    """Draw an image uniformly, then a manipulation and intensity, and apply it."""
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot sample from an empty dataset")
    index = int(rng.integers(len(dataset)))
    kind, p = draw_manipulation(cfg, rng)
    return DIASample(apply_manipulation(dataset.images[index], kind, p), kind, p, index)


# -- robustness protocols ------------------------------------------------------


def subsample_size(n: int, percent: int) -> int:
    """Round half up, never fewer than one record."""
    return max(1, math.floor(percent * n / 100 + 0.5))


def subsample(dataset: PosedDataset, percent: int, seed: int = 0) -> PosedDataset:
    """Uniformly random subset, without replacement, in original record order."""
    if percent not in SUBSAMPLE_PERCENTS:
        raise InvalidArgumentError(f"percent must be one of {SUBSAMPLE_PERCENTS}, got {percent}")
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot subsample an empty dataset")
    rng = np.random.default_rng([seed, percent])
    idx = np.sort(rng.choice(len(dataset), subsample_size(len(dataset), percent), replace=False))
    return dataset.select(idx)


def degrade_dataset(dataset: PosedDataset, spec: DegradationSpec) -> PosedDataset:
    """Degrade every image; image ``i`` uses sub-stream ``i`` of ``spec.seed``."""
    images = tuple(degrade(img, spec, index=i) for i, img in enumerate(dataset.images))
    return replace(dataset, images=images)
