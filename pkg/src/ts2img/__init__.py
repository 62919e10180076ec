"""Time-series-to-image encoding, augmentation, balancing and a small CNN classifier."""

__version__ = "0.1.0"

from .encoder import EncodingConfig, GrayImage, TimeSeries, encode_array, encode_series  # noqa: E402
from .errors import ConfigError, DataError, Ts2ImgError  # noqa: E402

__all__ = [
    "ConfigError",
    "DataError",
    "EncodingConfig",
    "GrayImage",
    "TimeSeries",
    "Ts2ImgError",
    "__version__",
    "encode_array",
    "encode_series",
]
