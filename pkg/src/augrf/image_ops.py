"""Color manipulations, degradation models and the kernels they share.

Images are float arrays of shape ``(H, W, 3)`` with values in ``[0, 1]``.
Every public function returns a new array and clips its result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import InvalidArgumentError, MalformedImageError

__all__ = [
    "Manipulation",
    "NON_IDENTITY",
    "Degradation",
    "DegradationSpec",
    "LUMA_WEIGHTS",
    "check_image",
    "grayscale",
    "apply_manipulation",
    "convolve2d",
    "box_kernel",
    "motion_blur_kernel",
    "fractional_motion_kernel",
    "rgb_to_hsv",
    "hsv_to_rgb",
    "degrade",
    "to_uint8",
    "from_uint8",
    "read_png",
    "write_png",
]

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class Manipulation(str, Enum):
    # Declaration order fixes the embedding-table row of each kind.
    IDENTITY = "identity"
    CONTRAST = "contrast"
    HUE = "hue"
    SATURATION = "saturation"
    SHARPNESS = "sharpness"
    BRIGHTNESS = "brightness"

    @property
    def row(self) -> int:
        return _ROWS[self]

    @classmethod
    def parse(cls, value: "str | Manipulation") -> "Manipulation":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise InvalidArgumentError(
                f"unknown manipulation {value!r}; expected one of: {names}"
            ) from None


_ROWS = {m: i for i, m in enumerate(Manipulation)}
NON_IDENTITY = tuple(m for m in Manipulation if m is not Manipulation.IDENTITY)


class Degradation(str, Enum):
    GAUSSIAN = "gaussian"
    MOTION_BLUR = "motion_blur"
    POISSON = "poisson"
    SALT_PEPPER = "salt_pepper"
    SPECKLE = "speckle"

    @classmethod
    def parse(cls, value: "str | Degradation") -> "Degradation":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(d.value for d in cls)
            raise InvalidArgumentError(
                f"unknown degradation {value!r}; expected one of: {names}"
            ) from None


@dataclass(frozen=True)
class DegradationSpec:
    """A degradation model with its single intensity parameter ``q``.

    ``q`` is the noise standard deviation for ``gaussian`` and ``speckle``,
    the line length for ``motion_blur``, the scale for ``poisson`` and the
    flip probability (for each of salt and pepper) for ``salt_pepper``.
    """

    kind: Degradation
    q: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Degradation.parse(self.kind))
        q = float(self.q)
        if not math.isfinite(q) or q < 0:
            raise InvalidArgumentError(f"intensity q must be finite and >= 0, got {q}")
        if self.kind in (Degradation.POISSON, Degradation.MOTION_BLUR) and q <= 0:
            raise InvalidArgumentError(f"{self.kind.value} requires q > 0, got {q}")
        if self.kind is Degradation.MOTION_BLUR and q == int(q) and int(q) % 2 == 0:
            raise InvalidArgumentError(f"motion blur kernel size must be odd, got {q:g}")
        if self.kind is Degradation.SALT_PEPPER and q > 0.5:
            raise InvalidArgumentError(f"salt_pepper probability must be <= 0.5, got {q}")
        object.__setattr__(self, "q", q)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "q": self.q, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        return cls(Degradation.parse(d["kind"]), float(d["q"]), int(d.get("seed", 0)))


def check_image(image) -> np.ndarray:
    """Return ``image`` as a float array, raising if it is not H x W x 3."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise MalformedImageError(f"expected an H x W x 3 image, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def grayscale(image: np.ndarray) -> np.ndarray:
    """Per-pixel luma, shape ``(H, W)``."""
    image = check_image(image)
    return image @ LUMA_WEIGHTS.astype(image.dtype)


# -- kernels -----------------------------------------------------------------


def _check_kernel(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise InvalidArgumentError(f"kernel must be square with odd size, got shape {k.shape}")
    return k


def convolve2d(image: np.ndarray, kernel) -> np.ndarray:
    """Per-channel 2D convolution with edge-replicate padding."""
    image = check_image(image)
    k = _check_kernel(kernel).astype(image.dtype)
    r = k.shape[0] // 2
    if r == 0:
        return np.clip(image * k[0, 0], 0.0, 1.0)
    h, w = image.shape[:2]
    padded = np.pad(image, ((r, r), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(image)
    for u in range(k.shape[0]):
        for v in range(k.shape[1]):
            if k[u, v] == 0:
                continue
            # out[i, j] += k[u, v] * image[i - (u - r), j - (v - r)]
            out += k[u, v] * padded[2 * r - u : 2 * r - u + h, 2 * r - v : 2 * r - v + w]
    return np.clip(out, 0.0, 1.0)


def box_kernel(size: int = 3) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise InvalidArgumentError(f"box kernel size must be odd and positive, got {size}")
    return np.full((size, size), 1.0 / size**2)


def motion_blur_kernel(k: int, phi: float = 0.0) -> np.ndarray:
    """Normalized k x k line kernel through the center at angle ``phi`` (radians).

    ``phi = 0`` is horizontal motion: the center row is ``1/k``.
    """
    if isinstance(k, float) and not k.is_integer():
        raise InvalidArgumentError(f"kernel size must be an integer, got {k}")
    k = int(k)
    if k < 1 or k % 2 == 0:
        raise InvalidArgumentError(f"kernel size must be odd and positive, got {k}")
    kernel = np.zeros((k, k))
    c = k // 2
    for t in np.arange(k) - c:
        row = c - int(round(t * math.sin(phi)))
        col = c + int(round(t * math.cos(phi)))
        kernel[row, col] = 1.0
    return kernel / kernel.sum()


def fractional_motion_kernel(length: float, phi: float = 0.0) -> np.ndarray:
    """Line kernel for a possibly non-integer motion length.

    Integer odd lengths give :func:`motion_blur_kernel`. A length between two
    consecutive odd sizes blends their kernels linearly, so 2.5 gives the
    horizontal kernel row ``(0.25, 0.5, 0.25)``.
    """
    if not math.isfinite(length) or length < 1:
        raise InvalidArgumentError(f"motion length must be >= 1, got {length}")
    if float(length).is_integer():
        return motion_blur_kernel(int(length), phi)
    lo = 2 * math.floor((length - 1) / 2) + 1
    hi = lo + 2
    weight = (length - lo) / (hi - lo)
    small = np.pad(motion_blur_kernel(lo, phi), 1)
    return (1.0 - weight) * small + weight * motion_blur_kernel(hi, phi)


# -- color space ---------------------------------------------------------------


def rgb_to_hsv(rgb) -> np.ndarray:
    """Hexcone RGB -> HSV on the last axis; hue is in turns, in ``[0, 1)``."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise InvalidArgumentError("last axis must hold 3 channels")
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    h = np.where(
        v == r,
        ((g - b) / safe_c) % 6.0,
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(c > 0, h / 6.0, 0.0) % 1.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv`."""
    hsv = np.asarray(hsv, dtype=np.float64)
    if hsv.shape[-1] != 3:
        raise InvalidArgumentError("last axis must hold 3 channels")
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    # f(n) = v - v s max(0, min(k, 4 - k, 1)), k = (n + 6h) mod 6
    out = []
    for n in (5.0, 3.0, 1.0):
        k = (n + 6.0 * h) % 6.0
        out.append(v - v * s * np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0))
    return np.stack(out, axis=-1)


# -- manipulations -------------------------------------------------------------


def apply_manipulation(image: np.ndarray, kind, p: float) -> np.ndarray:
    """Apply color manipulation ``kind`` at signed intensity ``p``.

    Every manipulation scales its effect by ``1 + p`` (hue rotates by ``p``
    turns), so ``p = 0`` and ``identity`` return an exact copy.
    """
    image = check_image(image)
    kind = Manipulation.parse(kind)
    p = float(p)
    if not math.isfinite(p):
        raise InvalidArgumentError(f"intensity must be finite, got {p}")
    if kind is Manipulation.IDENTITY or p == 0.0:
        return image.copy()

    dt = image.dtype
    if kind is Manipulation.BRIGHTNESS:
        out = image * (1.0 + p)
    elif kind is Manipulation.CONTRAST:
        mean = grayscale(image).mean()
        out = mean + (1.0 + p) * (image - mean)
    elif kind is Manipulation.SATURATION:
        gray = grayscale(image)[..., None]
        out = gray + (1.0 + p) * (image - gray)
    elif kind is Manipulation.SHARPNESS:
        out = image + p * (image - convolve2d(image, box_kernel(3)))
    else:
        hsv = rgb_to_hsv(np.clip(image, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + p) % 1.0
        out = hsv_to_rgb(hsv)
    return np.clip(out, 0.0, 1.0).astype(dt, copy=False)


# -- degradations --------------------------------------------------------------


def _generator(seed: int, index: int) -> np.random.Generator:
    # Philox is counter-based: one independent stream per (seed, image index).
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def degrade(image: np.ndarray, spec: DegradationSpec, index: int = 0) -> np.ndarray:
    """Degrade ``image`` according to ``spec``; ``index`` selects the image sub-stream.

    The result is a deterministic function of ``(image, spec, index)`` and is
    clipped to ``[0, 1]`` once, after the full degradation.
    """
    image = check_image(image)
    q = spec.q
    if q == 0.0:
        return image.copy()
    rng = _generator(spec.seed, index)
    kind = spec.kind
    if kind is Degradation.GAUSSIAN:
        out = image + rng.normal(0.0, q, image.shape)
    elif kind is Degradation.SPECKLE:
        out = image + image * rng.normal(0.0, q, image.shape)
    elif kind is Degradation.POISSON:
        out = rng.poisson(q * np.clip(image, 0.0, None)) / q
    elif kind is Degradation.SALT_PEPPER:
        u = rng.random(image.shape)
        out = image.copy()
        out[u < q] = 1.0
        out[(u >= q) & (u < 2 * q)] = 0.0
    else:
        return convolve2d(image, fractional_motion_kernel(q)).astype(image.dtype, copy=False)
    return np.clip(out, 0.0, 1.0).astype(image.dtype, copy=False)


# -- PNG I/O -------------------------------------------------------------------


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize to 8 bits: round half to even, then clamp to [0, 255]."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(data: np.ndarray) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0


def read_png(path, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Read an 8-bit PNG; an alpha channel is composited onto ``background``."""
    with PILImage.open(path) as im:
        if im.mode not in ("RGB", "RGBA"):
            im = im.convert("RGBA" if "A" in im.getbands() else "RGB")
        data = from_uint8(np.array(im))
    if data.shape[2] == 4:
        alpha = data[..., 3:]
        data = data[..., :3] * alpha + np.asarray(background, dtype=np.float64) * (1.0 - alpha)
    return data


def write_png(path, image: np.ndarray) -> None:
    image = check_image(image)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(to_uint8(image)).save(path)
