"""Time series to grayscale image encoding.

A series is min-max scaled to ``[0, 255]``; its first and second numerical
derivatives become a radius and an angle around the image centre. Every
timestep of a window lands on one pixel whose brightness is the scaled signal
level. Windows slide with stride one, so a series of length ``T`` yields
``T - window_length + 1`` images.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    ConstantSeriesWarning,
    DataError,
    SeriesTooShort,
    TooShort,
    WindowOutOfRange,
)

STENCILS = (3, 5, 7)


@dataclass(eq=False)
class TimeSeries:
    samples: np.ndarray
    label: str
    id: str = "series"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.samples.size == 0:
            raise DataError(f"time series {self.id!r} is empty")
        if not np.all(np.isfinite(self.samples)):
            raise DataError(f"time series {self.id!r} contains NaN or Inf")

    def __len__(self):
        return self.samples.shape[0]

    def to_dict(self):
        return {"id": self.id, "label": self.label, "samples": self.samples.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(samples=d["samples"], label=d["label"], id=d.get("id", "series"))


@dataclass(frozen=True)
class EncodingConfig:
    image_edge: int = 64
    window_length: int = 40
    stencil_points: int = 3
    pixel_max: int = 255

    def __post_init__(self):
        if not isinstance(self.image_edge, int) or self.image_edge < 2 or self.image_edge % 2:
            raise ConfigError(f"image_edge must be an even integer >= 2, got {self.image_edge!r}")
        if not isinstance(self.window_length, int) or self.window_length < 1:
            raise ConfigError(f"window_length must be a positive integer, got {self.window_length!r}")
        if self.stencil_points not in STENCILS:
            raise ConfigError(f"stencil_points must be one of {STENCILS}, got {self.stencil_points!r}")
        if self.pixel_max != 255:
            raise ConfigError("pixel_max is fixed at 255 for 8-bit grayscale")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in ("image_edge", "window_length", "stencil_points", "pixel_max") if k in d}
        return cls(**known)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(eq=False)
class DerivedSeries:
    normalized: np.ndarray
    rho: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        if not (len(self.normalized) == len(self.rho) == len(self.theta)):
            raise DataError("normalized, rho and theta must have identical length")

    def __len__(self):
        return len(self.normalized)


@dataclass(eq=False)
class GrayImage:
    pixels: np.ndarray
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] != px.shape[1]:
            raise DataError(f"image must be square, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise DataError("pixel values must lie in [0, 255]")
            px = px.astype(np.uint8)
        self.pixels = px

    @property
    def edge(self):
        return self.pixels.shape[0]

    def with_pixels(self, pixels):
        return GrayImage(pixels, self.label, dict(self.meta))


def _minmax(values, upper):
    """Linear map of ``values`` onto ``[0, upper]``; constant input maps to zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values), True
    return (values - lo) / (hi - lo) * upper, False


def minmax_normalize(series, pixel_max=255, constant_value=0.0):
    """Scale samples onto ``[0, pixel_max]``.

    Accepts a ``TimeSeries`` or a plain sequence. A constant series is legal:
    every sample maps to ``constant_value`` (zero by default) and
    ``ConstantSeriesWarning`` is emitted.
    """
    samples = series.samples if isinstance(series, TimeSeries) else TimeSeries(series, "").samples
    out, constant = _minmax(samples, pixel_max)
    if constant:
        warnings.warn(f"constant series normalized to {constant_value}", ConstantSeriesWarning,
                      stacklevel=2)
        out[:] = constant_value
    return out


def central_difference(values, stencil_points=3):
    """First derivative on a unit grid, same length as the input.

    Interior points use the full centred stencil. Towards the edges the
    stencil shrinks to the widest centred one that still fits, and the two
    endpoints use the second-order one-sided formula.
    """
    if stencil_points not in STENCILS:
        raise ConfigError(f"stencil_points must be one of {STENCILS}, got {stencil_points!r}")
    f = np.asarray(values, dtype=np.float64)
    n = f.shape[0]
    if n < stencil_points:
        raise TooShort(f"need at least {stencil_points} values, got {n}")
    d = np.empty(n)
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / 2.0
    d[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / 2.0
    half = stencil_points // 2
    for h in range(1, half + 1):
        # positions whose widest fitting centred stencil has half-width h
        idx = np.arange(h, n - h)
        if h < half:
            idx = idx[(idx < h + 1) | (idx >= n - h - 1)]
        if idx.size == 0:
            continue
        if h == 1:
            d[idx] = (f[idx + 1] - f[idx - 1]) / 2.0
        elif h == 2:
            d[idx] = (-f[idx + 2] + 8.0 * f[idx + 1] - 8.0 * f[idx - 1] + f[idx - 2]) / 12.0
        else:
            d[idx] = (f[idx + 3] - 9.0 * f[idx + 2] + 45.0 * f[idx + 1]
                      - 45.0 * f[idx - 1] + 9.0 * f[idx - 2] - f[idx - 3]) / 60.0
    return d


def derive(series, config):
    """Normalized level plus first and second derivatives of the normalized level."""
    if len(series) < config.stencil_points:
        raise SeriesTooShort(
            f"series {series.id!r} has {len(series)} samples; the {config.stencil_points}-point "
            "stencil needs at least that many")
    # a flat signal is drawn at full brightness; a zero byte would vanish into the background
    normalized = minmax_normalize(series, config.pixel_max, constant_value=config.pixel_max)
    rho = central_difference(normalized, config.stencil_points)
    theta = central_difference(rho, config.stencil_points)
    return DerivedSeries(normalized, rho, theta)


def polar_remap(derived, config):
    """Radius in pixels and angle in radians for every timestep.

    Both are min-max remapped over the whole series, so a timestep keeps its
    pixel in every window that contains it.
    """
    rho_px, _ = _minmax(derived.rho, config.image_edge - 1)
    theta_rad, _ = _minmax(np.abs(derived.theta), 2.0 * math.pi)
    return rho_px, theta_rad


def pixel_coordinates(polar, image_edge):
    """Row and column of every timestep, clamped onto the raster."""
    rho_px, theta_rad = polar
    centre = image_edge / 2
    rows = np.floor(rho_px * np.cos(theta_rad) + centre).astype(np.int64)
    cols = np.floor(rho_px * np.sin(theta_rad) + centre).astype(np.int64)
    np.clip(rows, 0, image_edge - 1, out=rows)
    np.clip(cols, 0, image_edge - 1, out=cols)
    return rows, cols


def pixel_values(normalized):
    # round half up, only at write time
    return np.floor(np.asarray(normalized) + 0.5).astype(np.uint8)


def map_window_to_image(derived, polar, window_start, config, label=""):
    """Paint one window onto a black raster; later timesteps overwrite earlier ones."""
    n = len(derived)
    if window_start < 0 or window_start + config.window_length > n:
        raise WindowOutOfRange(
            f"window [{window_start}, {window_start + config.window_length}) outside series of length {n}")
    stop = window_start + config.window_length
    rows, cols = pixel_coordinates((polar[0][window_start:stop], polar[1][window_start:stop]),
                                   config.image_edge)
    vals = pixel_values(derived.normalized[window_start:stop])
    px = kernels.render_windows(rows, cols, vals, config.window_length, config.image_edge)[0]
    return GrayImage(px, label, {"window_start": int(window_start)})


def encode_array(series, config):
    """All window images of ``series`` as one ``(T - l_w + 1, E, E)`` uint8 array."""
    if len(series) < config.window_length:
        raise SeriesTooShort(
            f"series {series.id!r} has {len(series)} samples, window_length is {config.window_length}")
    derived = derive(series, config)
    rows, cols = pixel_coordinates(polar_remap(derived, config), config.image_edge)
    vals = pixel_values(derived.normalized)
    return kernels.render_windows(rows, cols, vals, config.window_length, config.image_edge)


def encode_series(series, config):
    stack = encode_array(series, config)
    return [GrayImage(stack[s], series.label, {"source_id": series.id, "window_start": s})
            for s in range(stack.shape[0])]
