"""Series-level and image-level augmentation.

Every random operator takes an explicit ``numpy.random.Generator``.
``image_rng(seed, index)`` derives an independent PCG64 stream per image, so
the outcome for image ``index`` does not depend on how many images were
augmented before it or in which order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .encoder import GrayImage
from .errors import ConfigError, CropTooLarge, ShiftTooLarge, TooShort


@dataclass(frozen=True)
class AugmentConfig:
    ma_window: int = 3
    re_probability: float = 0.5
    re_area_range: tuple = (0.02, 0.2)
    re_aspect_range: tuple = (0.3, 3.33)
    rng_seed: int = 0
    max_attempts: int = 10

    def __post_init__(self):
        object.__setattr__(self, "re_area_range", tuple(float(v) for v in self.re_area_range))
        object.__setattr__(self, "re_aspect_range", tuple(float(v) for v in self.re_aspect_range))
        if not isinstance(self.ma_window, int) or self.ma_window < 1:
            raise ConfigError(f"ma_window must be a positive integer, got {self.ma_window!r}")
        if not 0.0 <= self.re_probability <= 1.0:
            raise ConfigError(f"re_probability must lie in [0, 1], got {self.re_probability}")
        lo, hi = self.re_area_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"re_area_range must satisfy 0 < low <= high <= 1, got {self.re_area_range}")
        lo, hi = self.re_aspect_range
        if not 0.0 < lo <= hi:
            raise ConfigError(f"re_aspect_range must satisfy 0 < low <= high, got {self.re_aspect_range}")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["re_area_range"] = list(self.re_area_range)
        d["re_aspect_range"] = list(self.re_aspect_range)
        return d

    @classmethod
    def from_dict(cls, d):
        fields = ("ma_window", "re_probability", "re_area_range", "re_aspect_range",
                  "rng_seed", "max_attempts")
        return cls(**{k: d[k] for k in fields if k in d})


def image_rng(seed, index):
    """PCG64 stream keyed by ``(seed, index)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def moving_average(samples, ma_window=3):
    x = np.asarray(samples, dtype=np.float64)
    if x.shape[0] < ma_window:
        raise TooShort(f"moving average of window {ma_window} needs at least {ma_window} samples")
    out = sliding_window_view(x, ma_window).mean(axis=1)
    # rounding in the window sums can overshoot by an ulp
    return np.clip(out, x.min(), x.max())


def _as_image(image):
    return image if isinstance(image, GrayImage) else GrayImage(image)


def erase_rectangle(edge, config, rng):
    """Draw the erasing rectangle as ``(top, left, height, width)``, or ``None``.

    Returns ``None`` when the probability draw skips erasing or no rectangle
    fits within ``config.max_attempts`` draws.
    """
    if rng.random() >= config.re_probability:
        return None
    area = edge * edge
    for _ in range(config.max_attempts):
        target = rng.uniform(*config.re_area_range) * area
        aspect = rng.uniform(*config.re_aspect_range)
        h = int(round(math.sqrt(target * aspect)))
        w = int(round(math.sqrt(target / aspect)))
        if 1 <= h <= edge and 1 <= w <= edge:
            top = int(rng.integers(0, edge - h + 1))
            left = int(rng.integers(0, edge - w + 1))
            return top, left, h, w
    return None


def random_erase_black(image, config, rng):
    """Zero a random rectangle (black patch variant of random erasing)."""
    image = _as_image(image)
    rect = erase_rectangle(image.edge, config, rng)
    if rect is None:
        return image.with_pixels(image.pixels.copy())
    top, left, h, w = rect
    px = image.pixels.copy()
    px[top:top + h, left:left + w] = 0
    return image.with_pixels(px)


def flip_horizontal(image):
    image = _as_image(image)
    return image.with_pixels(image.pixels[:, ::-1].copy())


def flip_vertical(image):
    image = _as_image(image)
    return image.with_pixels(image.pixels[::-1, :].copy())


def shift(image, dx, dy):
    """Translate by ``dx`` columns and ``dy`` rows; vacated pixels are black."""
    image = _as_image(image)
    e = image.edge
    if abs(dx) >= e or abs(dy) >= e:
        raise ShiftTooLarge(f"shift ({dx}, {dy}) must be smaller than the edge {e}")
    src = image.pixels
    out = np.zeros_like(src)
    rs, rd = (slice(0, e - dy), slice(dy, e)) if dy >= 0 else (slice(-dy, e), slice(0, e + dy))
    cs, cd = (slice(0, e - dx), slice(dx, e)) if dx >= 0 else (slice(-dx, e), slice(0, e + dx))
    out[rd, cd] = src[rs, cs]
    return image.with_pixels(out)


def random_crop(image, crop_edge, rng):
    """Random ``crop_edge`` square, scaled back to full size by nearest neighbour."""
    image = _as_image(image)
    e = image.edge
    if not 0 < crop_edge <= e:
        raise CropTooLarge(f"crop_edge must lie in (0, {e}], got {crop_edge}")
    top = int(rng.integers(0, e - crop_edge + 1))
    left = int(rng.integers(0, e - crop_edge + 1))
    idx = (np.arange(e) * crop_edge) // e
    crop = image.pixels[top:top + crop_edge, left:left + crop_edge]
    return image.with_pixels(crop[np.ix_(idx, idx)].copy())


def _apply_erase(image, params, rng):
    return random_erase_black(image, AugmentConfig.from_dict(params), rng)


# name -> callable(image, params, rng); the op vocabulary of manifest lineage
IMAGE_OPS = {
    "random_erase_black": _apply_erase,
    "flip_horizontal": lambda img, params, rng: flip_horizontal(img),
    "flip_vertical": lambda img, params, rng: flip_vertical(img),
    "shift": lambda img, params, rng: shift(img, params["dx"], params["dy"]),
    "random_crop": lambda img, params, rng: random_crop(img, params["crop_edge"], rng),
}


def apply_op(image, op, params, seed):
    """Replay one lineage step. ``seed`` is ``None`` or a ``[seed, index]`` pair."""
    if op not in IMAGE_OPS:
        raise ConfigError(f"unknown augmentation op {op!r}")
    rng = image_rng(*seed) if seed is not None else None
    return IMAGE_OPS[op](image, params, rng)
