"""Command line entry point: ``python -m augrf <command> ...``.

Every command accepts ``--config`` (an experiment spec JSON), ``--seed`` and
``--out``. Precedence is built-in defaults, then the config file, then
flags. Each output directory receives the resolved spec as ``spec.json``.
Results are printed as one JSON object per line.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import (
    SUBSAMPLE_PERCENTS,
    CameraPose,
    degrade_dataset,
    load_dataset,
    load_scene,
    subsample,
    write_sia,
    write_split,
)
from .errors import DatasetError, InvalidArgumentError, MalformedImageError, NumericalError
from .evaluation import chamfer_sum, metric_record, psnr, read_xyz, ssim
from .experiment import SPEC_FILE, ExperimentSpec
from .field import load_checkpoint
from .image_ops import Degradation, DegradationSpec, Manipulation, read_png, write_png
from .render import QuadratureConfig, render_image
from .train import train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("augrf")


class UsageError(Exception):
    pass


def emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True), flush=True)


def _common(p: argparse.ArgumentParser, out_required=True) -> None:
    p.add_argument("--config", type=Path, help="experiment spec JSON; flags override its fields")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="augrf", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="materialize the static augmented dataset")
    p.add_argument("--scene", help="scene directory or transforms JSON")
    _common(p)

    p = sub.add_parser("degrade", help="degrade the training views of a scene")
    p.add_argument("--scene")
    p.add_argument("--kind", choices=[d.value for d in Degradation], help="degradation model")
    p.add_argument("--q", type=float, help="degradation intensity")
    _common(p)

    p = sub.add_parser("subsample", help="keep a random percentage of the training views")
    p.add_argument("--scene")
    p.add_argument("--percent", type=int, choices=SUBSAMPLE_PERCENTS)
    _common(p)

    p = sub.add_parser("train", help="train a field")
    p.add_argument("--scene")
    p.add_argument("--mode", choices=["baseline", "SIA", "DIA"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-rays", type=int)
    p.add_argument("--lr", type=float)
    _common(p)

    p = sub.add_parser("render", help="render views from a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene", help="render every pose of this scene split")
    src.add_argument("--pose", type=Path, help="JSON file with a 4x4 transform_matrix")
    p.add_argument("--split", default="test")
    p.add_argument("--manipulation", default=Manipulation.IDENTITY.value, choices=[m.value for m in Manipulation])
    p.add_argument("--intensity", type=float, default=0.0)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--npy", action="store_true", help="also save float renders as .npy")
    _common(p)

    p = sub.add_parser("eval", help="image or point cloud metrics")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--rendered", type=Path, help="directory of rendered PNGs")
    group.add_argument("--clouds", type=Path, nargs=2, metavar=("P", "Q"), help="two XYZ point clouds")
    p.add_argument("--reference", type=Path, help="directory of reference PNGs with matching names")
    _common(p, out_required=False)
    return parser


def resolve_spec(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.config) if args.config else ExperimentSpec()
    updates = {}
    if getattr(args, "scene", None) is not None:
        updates["scene"] = str(args.scene)
    if getattr(args, "mode", None) is not None:
        updates["mode"] = args.mode
    if getattr(args, "percent", None) is not None:
        updates["subsample"] = args.percent
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = str(args.out)
    if getattr(args, "kind", None) is not None or getattr(args, "q", None) is not None:
        base = spec.degradation
        kind = args.kind or (base.kind if base else None)
        q = args.q if args.q is not None else (base.q if base else None)
        if kind is None or q is None:
            raise UsageError("degradation needs both --kind and --q (or a config providing them)")
        updates["degradation"] = DegradationSpec(kind, q)
    train_updates = {
        k: v
        for k, v in (
            ("iterations", getattr(args, "iterations", None)),
            ("batch_rays", getattr(args, "batch_rays", None)),
            ("learning_rate", getattr(args, "lr", None)),
        )
        if v is not None
    }
    if train_updates:
        updates["train"] = replace(spec.train, **train_updates)
    return replace(spec, **updates).resolved()


def _need(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required (flag or config field)")
    return value


def _prepare_out(spec: ExperimentSpec) -> Path:
    out = Path(_need(spec.out, "--out"))
    out.mkdir(parents=True, exist_ok=True)
    spec.save(out / SPEC_FILE)
    return out


def cmd_augment(args) -> int:
    spec = resolve_spec(args)
    scene = load_dataset(_need(spec.scene, "--scene"), "train")
    out = _prepare_out(spec)
    manifest = write_sia(scene, spec.intensities, out)
    counts = {m.value: len(scene) for m in Manipulation}
    emit({"command": "augment", "replicas": counts, "files": 6 * len(scene), "manifest": str(manifest)})
    return EXIT_OK


def _copy_test(scene, out: Path) -> None:
    if scene.test is not None:
        write_split(scene.test, out, "test", scene.near, scene.far)


def cmd_degrade(args) -> int:
    spec = resolve_spec(args)
    if spec.degradation is None:
        raise UsageError("degradation needs --kind and --q; kinds: " + ", ".join(d.value for d in Degradation))
    scene = load_scene(_need(spec.scene, "--scene"))
    out = _prepare_out(spec)
    write_split(degrade_dataset(scene.train, spec.degradation), out, "train", scene.near, scene.far)
    _copy_test(scene, out)
    emit({"command": "degrade", "images": len(scene.train), "degradation": spec.degradation.to_dict()})
    return EXIT_OK


def cmd_subsample(args) -> int:
    spec = resolve_spec(args)
    percent = _need(spec.subsample, "--percent")
    scene = load_scene(_need(spec.scene, "--scene"))
    out = _prepare_out(spec)
    kept = subsample(scene.train, percent, spec.seed)
    write_split(kept, out, "train", scene.near, scene.far)
    _copy_test(scene, out)
    emit({"command": "subsample", "percent": percent, "kept": len(kept), "of": len(scene.train)})
    return EXIT_OK


def cmd_train(args) -> int:
    spec = resolve_spec(args)
    scene = load_scene(_need(spec.scene, "--scene"))
    if spec.subsample is not None:
        scene = replace(scene, train=subsample(scene.train, spec.subsample, spec.seed))
    if spec.degradation is not None:
        scene = replace(scene, train=degrade_dataset(scene.train, spec.degradation))
    out = _prepare_out(spec)
    log_path = out / "log.jsonl"
    log_path.unlink(missing_ok=True)
    _, log = train(scene, spec.train, log_path=log_path, checkpoint_dir=out / "checkpoints")
    final = log[-1]
    emit({"command": "train", "iterations": final["iteration"], "loss": final["loss"],
          "val_psnr": final["val_psnr"], "checkpoint": str(out / "checkpoints" / f"ckpt_{final['iteration']:06d}.npz")})
    return EXIT_OK


def _read_pose(path: Path, fov_x: float) -> CameraPose:
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read pose {path}: {exc}") from exc
    if isinstance(raw, dict):
        fov_x = float(raw.get("camera_angle_x", fov_x))
        raw = raw.get("transform_matrix")
    try:
        return CameraPose(np.asarray(raw, dtype=np.float64), fov_x)
    except (ValueError, TypeError) as exc:
        raise DatasetError(f"{path}: malformed transform ({exc})") from exc


def cmd_render(args) -> int:
    spec = resolve_spec(args)
    if not args.checkpoint.is_file():
        raise DatasetError(f"checkpoint not found: {args.checkpoint}")
    params, meta = load_checkpoint(args.checkpoint)
    width = args.width or meta["width"]
    height = args.height or meta["height"]
    if args.pose is not None:
        poses, names = [_read_pose(args.pose, meta["fov_x"])], ["r_0"]
    else:
        ds = load_dataset(args.scene, args.split)
        poses, names = list(ds.poses), [f"r_{i}" for i in range(len(ds))]
    quad = QuadratureConfig.from_dict(meta["quadrature"])
    out = _prepare_out(spec)
    for pose, name in zip(poses, names):
        img = render_image(params, pose, args.manipulation, args.intensity, quad, width, height,
                           meta["near"], meta["far"])
        write_png(out / f"{name}.png", img)
        if args.npy:
            np.save(out / f"{name}.npy", img)
    emit({"command": "render", "images": len(poses), "manipulation": args.manipulation,
          "intensity": args.intensity, "out": str(out)})
    return EXIT_OK


def _mean(values):
    return math.inf if all(v == math.inf for v in values) else float(np.mean(values))


def cmd_eval(args) -> int:
    spec = resolve_spec(args)
    lines = []
    if args.clouds:
        p, q = (read_xyz(c) for c in args.clouds)
        lines.append(metric_record("chamfer_sum", chamfer_sum(p, q), p=str(args.clouds[0]), q=str(args.clouds[1])))
    else:
        ref_dir = _need(args.reference, "--reference")
        if not args.rendered.is_dir():
            raise DatasetError(f"rendered directory not found: {args.rendered}")
        files = sorted(args.rendered.glob("*.png"))
        if not files:
            raise DatasetError(f"no PNG files in {args.rendered}")
        scores = {"psnr": [], "ssim": []}
        for f in files:
            ref = ref_dir / f.name
            if not ref.is_file():
                raise DatasetError(f"missing reference image {ref}")
            a, b = read_png(f), read_png(ref)
            for name, fn in (("psnr", psnr), ("ssim", ssim)):
                value = fn(a, b)
                scores[name].append(value)
                lines.append(metric_record(name, value, rendered=str(f), reference=str(ref)))
        for name, values in scores.items():
            lines.append(metric_record(f"{name}_mean", _mean(values), images=len(values)))
    for line in lines:
        print(line, flush=True)
    if spec.out is not None:
        out = _prepare_out(spec)
        (out / "metrics.jsonl").write_text("\n".join(lines) + "\n")
    return EXIT_OK


COMMANDS = {
    "augment": cmd_augment,
    "degrade": cmd_degrade,
    "subsample": cmd_subsample,
    "train": cmd_train,
    "render": cmd_render,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidArgumentError) as exc:
        print(f"augrf {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"augrf {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, MalformedImageError, OSError, KeyError) as exc:
        print(f"augrf {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
