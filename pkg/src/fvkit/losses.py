"""Binary cross-entropy, Dice and the combined DiceBCE segmentation loss.

All three return scalar tensors and differentiate with respect to the
prediction. Targets are constants.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .functional import add
from .tensor import Tensor, make_result


@dataclass(frozen=True)
class LossConfig:
    eps_dice: float = 1e-7
    bce_clamp: float = 1e-7

    def __post_init__(self):
        if not 0.0 < self.eps_dice <= 1e-3:
            raise ParameterError(f"eps_dice must be in (0, 1e-3], got {self.eps_dice}")
        if not 0.0 < self.bce_clamp < 0.5:
            raise ParameterError(f"bce_clamp must be in (0, 0.5), got {self.bce_clamp}")


def _operands(y, yhat):
    target = y.data if isinstance(y, Tensor) else np.asarray(y)
    if not isinstance(yhat, Tensor):
        yhat = Tensor(yhat)
    if target.shape != yhat.shape:
        raise ShapeError(f"target shape {target.shape} != prediction shape {yhat.shape}")
    return target.astype(np.float64), yhat


def bce_loss(y, yhat, cfg=LossConfig()):
    """Mean pixelwise binary cross-entropy with the prediction clamped to
    ``[bce_clamp, 1 - bce_clamp]``."""
    t, yhat = _operands(y, yhat)
    lo, hi = cfg.bce_clamp, 1.0 - cfg.bce_clamp
    p = np.clip(yhat.data.astype(np.float64), lo, hi)
    n = p.size
    value = -(t * np.log(p) + (1 - t) * np.log(1 - p)).sum() / n
    inside = (yhat.data >= lo) & (yhat.data <= hi)

    def backward(g):
        d = (-(t / p) + (1 - t) / (1 - p)) / n * inside
        return ((float(g) * d).astype(yhat.data.dtype),)

    out = np.asarray(value, dtype=yhat.data.dtype)
    return make_result(out, (yhat,), "bce", backward)


def dice_loss(y, yhat, cfg=LossConfig()):
    """``1 - 2*sum(y*yhat) / (sum(y) + sum(yhat) + eps)`` pooled over every
    pixel of the batch. The epsilon sits in the denominator only, so two
    empty masks score a loss of 1."""
    t, yhat = _operands(y, yhat)
    p = yhat.data.astype(np.float64)
    inter = (t * p).sum()
    denom = t.sum() + p.sum() + cfg.eps_dice
    value = 1.0 - 2.0 * inter / denom

    def backward(g):
        d = -2.0 * (t * denom - inter) / (denom * denom)
        return ((float(g) * d).astype(yhat.data.dtype),)

    out = np.asarray(value, dtype=yhat.data.dtype)
    return make_result(out, (yhat,), "dice", backward)


def dice_bce_loss(y, yhat, cfg=LossConfig()):
    return add(bce_loss(y, yhat, cfg), dice_loss(y, yhat, cfg))
