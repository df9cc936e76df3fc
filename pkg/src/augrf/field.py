"""Density/color field with appearance conditioning, over one flat parameter vector.

The field is two MLPs. The first maps an encoded position to a density and a
latent code; the second maps the encoded view direction, the latent code and
an appearance vector to a color. The appearance vector is a row of a small
embedding table (one row per manipulation), with the intensity appended in
``DIA`` mode.

Forward passes are batched over rays: points have shape ``(R, S, 3)`` and
everything that only depends on the ray (direction, appearance) is computed
once per ray. :func:`field_backward` is the exact reverse pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError
from .image_ops import Manipulation

N_EMBEDDINGS = len(Manipulation)
MODES = ("SIA", "DIA")


@dataclass(frozen=True)
class FieldConfig:
    pe_levels_position: int = 6
    pe_levels_direction: int = 4
    mlp1_widths: tuple = (64, 64, 64)
    latent_dim: int = 64
    mlp2_widths: tuple = (64, 64)
    embed_dim: int = 8
    mode: str = "SIA"

    def __post_init__(self):
        object.__setattr__(self, "mlp1_widths", tuple(int(w) for w in self.mlp1_widths))
        object.__setattr__(self, "mlp2_widths", tuple(int(w) for w in self.mlp2_widths))
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pe_levels_position < 0 or self.pe_levels_direction < 0:
            raise InvalidArgumentError("encoding levels must be >= 0")
        if self.latent_dim < 1 or self.embed_dim < 1:
            raise InvalidArgumentError("latent_dim and embed_dim must be >= 1")
        if any(w < 1 for w in self.mlp1_widths + self.mlp2_widths):
            raise InvalidArgumentError("layer widths must be >= 1")

    @property
    def position_dim(self) -> int:
        return 3 * (2 * self.pe_levels_position + 1)

    @property
    def direction_dim(self) -> int:
        return 3 * (2 * self.pe_levels_direction + 1)

    @property
    def appearance_dim(self) -> int:
        return self.embed_dim + (1 if self.mode == "DIA" else 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp1_widths"] = list(self.mlp1_widths)
        d["mlp2_widths"] = list(self.mlp2_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FieldConfig":
        return cls(**d)


class Span(NamedTuple):
    start: int
    stop: int
    shape: tuple


def _layer_shapes(cfg: FieldConfig) -> list[tuple[str, tuple]]:
    shapes = []
    dims = [cfg.position_dim, *cfg.mlp1_widths, 1 + cfg.latent_dim]
    for i in range(len(dims) - 1):
        shapes += [(f"mlp1.{i}.weight", (dims[i], dims[i + 1])), (f"mlp1.{i}.bias", (dims[i + 1],))]
    head_in = cfg.direction_dim + cfg.latent_dim + cfg.appearance_dim
    dims = [head_in, *cfg.mlp2_widths, 3]
    for i in range(len(dims) - 1):
        shapes += [(f"mlp2.{i}.weight", (dims[i], dims[i + 1])), (f"mlp2.{i}.bias", (dims[i + 1],))]
    shapes.append(("emb", (N_EMBEDDINGS, cfg.embed_dim)))
    return shapes


def make_layout(cfg: FieldConfig) -> dict[str, Span]:
    """Named, disjoint spans covering the flat vector in declaration order."""
    layout, offset = {}, 0
    for name, shape in _layer_shapes(cfg):
        size = math.prod(shape)
        layout[name] = Span(offset, offset + size, shape)
        offset += size
    return layout


@dataclass
class FieldParams:
    """All learnable state of a field as one flat vector with a named layout."""

    config: FieldConfig
    flat: np.ndarray
    layout: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.layout = make_layout(self.config)
        self.flat = np.asarray(self.flat)
        if self.flat.ndim != 1 or self.flat.size != self.size:
            raise InvalidArgumentError(
                f"flat vector has {self.flat.size} entries, layout needs {self.size}"
            )

    @property
    def size(self) -> int:
        return next(reversed(self.layout.values())).stop

    @property
    def dtype(self):
        return self.flat.dtype

    def view(self, name: str, flat: np.ndarray | None = None) -> np.ndarray:
        """Shaped view of span ``name`` in ``flat`` (default: this vector)."""
        s = self.layout[name]
        src = self.flat if flat is None else flat
        return src[s.start : s.stop].reshape(s.shape)

    def get(self, name: str) -> np.ndarray:
        return self.view(name).copy()

    def set(self, name: str, value) -> None:
        self.view(name)[...] = value

    def with_flat(self, flat: np.ndarray) -> "FieldParams":
        return FieldParams(self.config, flat)

    def copy(self) -> "FieldParams":
        return FieldParams(self.config, self.flat.copy())

    @property
    def n_mlp1(self) -> int:
        return len(self.config.mlp1_widths) + 1

    @property
    def n_mlp2(self) -> int:
        return len(self.config.mlp2_widths) + 1

    def appearance_rows(self) -> slice:
        """Rows of the first color-head weight matrix fed by the appearance vector."""
        start = self.config.direction_dim + self.config.latent_dim
        return slice(start, start + self.config.appearance_dim)


def init_params(config: FieldConfig, seed: int = 0, dtype=np.float64) -> FieldParams:
    """Fan-in scaled uniform weights, zero biases, embeddings ~ N(0, 0.01^2)."""
    rng = np.random.default_rng(seed)
    params = FieldParams(config, np.zeros(make_layout(config)["emb"].stop, dtype=dtype))
    for name, span in params.layout.items():
        if name.endswith(".weight"):
            fan_in = span.shape[0]
            bound = math.sqrt(6.0 / fan_in)
            params.set(name, rng.uniform(-bound, bound, span.shape))
        elif name == "emb":
            params.set(name, rng.normal(0.0, 0.01, span.shape))
    return params


# -- primitives ----------------------------------------------------------------


def positional_encode(v, levels: int) -> np.ndarray:
    """``[v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(2^(L-1) pi v)]``.

    Works on the last axis; output length is ``k * (2L + 1)``.
    """
    v = np.asarray(v)
    if not np.issubdtype(v.dtype, np.floating):
        v = v.astype(np.float64)
    if v.ndim == 0:
        v = v[None]
    if levels < 0:
        raise InvalidArgumentError(f"levels must be >= 0, got {levels}")
    parts = [v]
    for i in range(levels):
        arg = (2.0**i * math.pi) * v
        parts += [np.sin(arg), np.cos(arg)]
    return np.concatenate(parts, axis=-1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def embedding_lookup(params: FieldParams, kind, p: float = 0.0, mode: str | None = None) -> np.ndarray:
    """Appearance vector: ``Emb(kind)`` in SIA mode, ``[Emb(kind), p]`` in DIA mode."""
    kind = Manipulation.parse(kind)
    mode = mode or params.config.mode
    row = params.view("emb")[kind.row]
    if mode == "DIA":
        return np.concatenate([row, np.asarray([p], dtype=row.dtype)])
    if mode == "SIA":
        return row.copy()
    raise InvalidArgumentError(f"mode must be one of {MODES}, got {mode!r}")


def appearance_batch(params: FieldParams, rows: np.ndarray, ps: np.ndarray) -> np.ndarray:
    """Stack appearance vectors for per-ray embedding rows and intensities."""
    app = params.view("emb")[rows]
    if params.config.mode == "DIA":
        app = np.concatenate([app, np.asarray(ps, dtype=params.dtype)[:, None]], axis=1)
    return app


# -- batched forward / backward ------------------------------------------------


class FieldOutput(NamedTuple):
    sigma: np.ndarray
    color: np.ndarray
    z: np.ndarray


def field_forward(params: FieldParams, x, d, rows, ps, keep_cache: bool = True):
    """Evaluate the field at points ``x (R, S, 3)`` seen along directions ``d (R, 3)``.

    ``rows`` and ``ps`` give each ray's embedding row and intensity. Returns
    ``(FieldOutput, cache)``; the cache feeds :func:`field_backward`.
    """
    dt = params.dtype
    cfg = params.config
    x = np.asarray(x, dtype=dt)
    d = np.asarray(d, dtype=dt)
    rows = np.asarray(rows, dtype=np.intp)
    ps = np.asarray(ps, dtype=dt)
    R, S = x.shape[:2]

    h = positional_encode(x.reshape(R * S, 3), cfg.pe_levels_position)
    acts1 = [h]
    for i in range(params.n_mlp1):
        a = h @ params.view(f"mlp1.{i}.weight") + params.view(f"mlp1.{i}.bias")
        if i < params.n_mlp1 - 1:
            h = np.maximum(a, 0.0)
            acts1.append(h)
        else:
            out1 = a
    sigma_raw = out1[:, 0]
    z = out1[:, 1:]
    sigma = _softplus(sigma_raw)

    enc_d = positional_encode(d, cfg.pe_levels_direction)
    app = appearance_batch(params, rows, ps)
    w0 = params.view("mlp2.0.weight")
    nd, nz = cfg.direction_dim, cfg.latent_dim
    ray_term = enc_d @ w0[:nd] + app @ w0[nd + nz :] + params.view("mlp2.0.bias")
    a = (z @ w0[nd : nd + nz]).reshape(R, S, -1) + ray_term[:, None, :]
    a = a.reshape(R * S, -1)
    pre2 = [a]
    acts2 = []
    for i in range(1, params.n_mlp2):
        h2 = np.maximum(a, 0.0)
        acts2.append(h2)
        a = h2 @ params.view(f"mlp2.{i}.weight") + params.view(f"mlp2.{i}.bias")
        pre2.append(a)
    color = _sigmoid(a)

    out = FieldOutput(sigma.reshape(R, S), color.reshape(R, S, 3), z.reshape(R, S, -1))
    if not keep_cache:
        return out, None
    cache = dict(
        acts1=acts1, sigma_raw=sigma_raw, z=z, enc_d=enc_d, app=app, rows=rows,
        pre2=pre2, acts2=acts2, color=color, shape=(R, S),
    )
    return out, cache


def field_backward(params: FieldParams, cache: dict, dsigma, dcolor) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the flat vector given ``dL/dsigma``, ``dL/dcolor``."""
    cfg = params.config
    R, S = cache["shape"]
    grad = np.zeros_like(params.flat)
    g = lambda name: params.view(name, grad)  # noqa: E731

    color = cache["color"]
    da = np.asarray(dcolor, dtype=params.dtype).reshape(R * S, 3) * color * (1.0 - color)
    for i in range(params.n_mlp2 - 1, 0, -1):
        h2 = cache["acts2"][i - 1]
        g(f"mlp2.{i}.weight")[...] = h2.T @ da
        g(f"mlp2.{i}.bias")[...] = da.sum(axis=0)
        dh = da @ params.view(f"mlp2.{i}.weight").T
        da = dh * (cache["pre2"][i - 1] > 0)

    nd, nz = cfg.direction_dim, cfg.latent_dim
    w0 = params.view("mlp2.0.weight")
    gw0 = g("mlp2.0.weight")
    gw0[nd : nd + nz] = cache["z"].T @ da
    dz = da @ w0[nd : nd + nz].T
    da_ray = da.reshape(R, S, -1).sum(axis=1)
    gw0[:nd] = cache["enc_d"].T @ da_ray
    gw0[nd + nz :] = cache["app"].T @ da_ray
    g("mlp2.0.bias")[...] = da_ray.sum(axis=0)
    dapp = da_ray @ w0[nd + nz :].T
    # Only the table part of the appearance vector is learnable.
    np.add.at(g("emb"), cache["rows"], dapp[:, : cfg.embed_dim])

    dsig = np.asarray(dsigma, dtype=params.dtype).reshape(R * S) * _sigmoid(cache["sigma_raw"])
    da = np.concatenate([dsig[:, None], dz], axis=1)
    for i in range(params.n_mlp1 - 1, -1, -1):
        h = cache["acts1"][i]
        g(f"mlp1.{i}.weight")[...] = h.T @ da
        g(f"mlp1.{i}.bias")[...] = da.sum(axis=0)
        if i > 0:
            da = (da @ params.view(f"mlp1.{i}.weight").T) * (h > 0)
    return grad


def eval_field(params: FieldParams, x, d, kind=Manipulation.IDENTITY, p: float = 0.0) -> FieldOutput:
    """Evaluate the field at a single position ``x`` and unit direction ``d``."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-6:
        raise InvalidArgumentError("direction must be a unit 3-vector")
    x = np.asarray(x, dtype=np.float64).reshape(1, 1, 3)
    kind = Manipulation.parse(kind)
    out, _ = field_forward(params, x, d[None], [kind.row], [p], keep_cache=False)
    return FieldOutput(float(out.sigma[0, 0]), out.color[0, 0].copy(), out.z[0, 0].copy())


def density(params: FieldParams, points) -> np.ndarray:
    """Density at points ``(N, 3)``; appearance never enters it."""
    points = np.asarray(points, dtype=params.dtype).reshape(-1, 3)
    h = positional_encode(points, params.config.pe_levels_position)
    for i in range(params.n_mlp1):
        a = h @ params.view(f"mlp1.{i}.weight") + params.view(f"mlp1.{i}.bias")
        h = np.maximum(a, 0.0) if i < params.n_mlp1 - 1 else a
    return _softplus(h[:, 0])


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(path, params: FieldParams, meta: dict | None = None) -> Path:
    """Write config, metadata and the flat vector to a ``.npz`` file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({"config": params.config.to_dict(), "meta": meta or {}}, sort_keys=True)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(header), flat=params.flat)
    return path


def load_checkpoint(path) -> tuple[FieldParams, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        flat = data["flat"].copy()
    return FieldParams(FieldConfig.from_dict(header["config"]), flat), header["meta"]
