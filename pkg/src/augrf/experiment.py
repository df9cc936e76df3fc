"""A serializable description of one experiment run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dataset import SUBSAMPLE_PERCENTS, IntensityConfig
from .errors import InvalidArgumentError
from .image_ops import DegradationSpec
from .train import PRESETS, TrainConfig

SPEC_FILE = "spec.json"


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce a run.

    The top-level ``seed`` and ``mode`` are authoritative: :meth:`resolved`
    copies them into the train config and the degradation spec.
    """

    scene: str | None = None
    mode: str = "baseline"
    intensities: IntensityConfig = field(default_factory=IntensityConfig)
    degradation: DegradationSpec | None = None
    subsample: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str | None = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.intensities, dict):
            self.intensities = IntensityConfig.from_dict(self.intensities)
        if isinstance(self.degradation, dict):
            self.degradation = DegradationSpec.from_dict(self.degradation)
        if isinstance(self.train, dict):
            self.train = TrainConfig.from_dict(self.train)
        if self.subsample is not None and self.subsample not in SUBSAMPLE_PERCENTS:
            raise InvalidArgumentError(f"subsample must be one of {SUBSAMPLE_PERCENTS}, got {self.subsample}")

    def resolved(self) -> "ExperimentSpec":
        deg = None if self.degradation is None else replace(self.degradation, seed=self.seed)
        train = replace(self.train, mode=self.mode, seed=self.seed, intensities=self.intensities)
        return replace(self, degradation=deg, train=train)

    def to_dict(self) -> dict:
        return {
            "scene": self.scene,
            "mode": self.mode,
            "intensities": self.intensities.to_dict(),
            "degradation": None if self.degradation is None else self.degradation.to_dict(),
            "subsample": self.subsample,
            "train": self.train.to_dict(),
            "out": self.out,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__) - {"preset"}
        if unknown:
            raise InvalidArgumentError(f"unknown experiment fields: {sorted(unknown)}")
        preset = d.pop("preset", None)
        if preset is not None:
            if preset not in PRESETS:
                raise InvalidArgumentError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
            d["train"] = {**PRESETS[preset], **(d.get("train") or {})}
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise InvalidArgumentError(f"{path}: expected a JSON object")
        return cls.from_dict(raw)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path
