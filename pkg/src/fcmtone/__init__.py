"""Self-supervised per-image HDR tone mapping with feature contrast masking."""

from .errors import (
    ConfigError,
    DegenerateInputError,
    DivergenceError,
    FcmtoneError,
    FormatError,
)
from .hdr_io import HdrImage, LdrImage, read_pfm, read_radiance, write_pfm, write_ppm
from .masking import FcmConfig
from .trainer import TrainConfig, TrainReport, train
from .vgg import VggWeights, load_weights, random_weights, save_weight_file

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "DivergenceError",
    "FcmtoneError",
    "FormatError",
    "HdrImage",
    "LdrImage",
    "read_pfm",
    "read_radiance",
    "write_pfm",
    "write_ppm",
    "FcmConfig",
    "TrainConfig",
    "TrainReport",
    "train",
    "VggWeights",
    "load_weights",
    "random_weights",
    "save_weight_file",
    "__version__",
]
