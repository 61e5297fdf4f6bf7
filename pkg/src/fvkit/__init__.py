"""fvkit: retinal vessel segmentation with a from-scratch U-Net.

The package bundles a small reverse-mode autodiff engine (numpy), the U-Net
and its DiceBCE training loop, fundus preprocessing (grayscale, CLAHE,
resize), seeded augmentation, Netpbm I/O, evaluation metrics and a CLI.
"""

__version__ = "0.1.0"

from .clahe import ClaheConfig, ahe, clahe
from .errors import (CheckpointError, ConfigError, DataError, FvkitError, NumericError,
                     ParameterError, ShapeError, UndefinedMetricError)
from .estimators import ClaheTransformer, FundusPreprocessor, UNetSegmenter
from .losses import LossConfig, bce_loss, dice_bce_loss, dice_loss
from .metrics import MetricsReport, confusion, roc_curve, summarize
from .tensor import Tensor, deterministic, set_deterministic
from .training import TrainConfig, train
from .unet import UNetConfig, binarize, build, forward

__all__ = [
    "CheckpointError", "ClaheConfig", "ClaheTransformer", "ConfigError", "DataError",
    "FundusPreprocessor", "FvkitError", "LossConfig", "MetricsReport", "NumericError",
    "ParameterError", "ShapeError", "Tensor", "TrainConfig", "UNetConfig", "UNetSegmenter",
    "UndefinedMetricError", "ahe", "bce_loss", "binarize", "build", "clahe", "confusion",
    "deterministic", "dice_bce_loss", "dice_loss", "forward", "roc_curve",
    "set_deterministic", "summarize", "train",
]
