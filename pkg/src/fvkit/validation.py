"""Input checks shared by the estimators."""

import numpy as np

from .errors import ParameterError, ShapeError


def check_images(X, name="X"):
    """Coerce a stack of gray planes to float32 (n, H, W) in [0, 1].

    Accepts a list of equally sized 2-D arrays or an array shaped (n, H, W)
    or (n, 1, H, W). uint8 input is scaled by 1/255.
    """
    if isinstance(X, (list, tuple)):
        if not X:
            raise ShapeError(f"{name} is empty")
        shapes = {np.asarray(a).shape for a in X}
        if len(shapes) != 1:
            raise ShapeError(f"{name} mixes image shapes {sorted(shapes)}")
        X = np.stack([np.asarray(a) for a in X])
    X = np.asarray(X)
    if X.ndim == 4 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 3:
        raise ShapeError(f"{name} must be shaped (n, H, W), got {X.shape}")
    if X.shape[0] == 0:
        raise ShapeError(f"{name} is empty")
    if X.dtype == np.uint8:
        return X.astype(np.float32) / np.float32(255.0)
    X = X.astype(np.float32)
    if not np.all(np.isfinite(X)):
        raise ParameterError(f"{name} contains non-finite values")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ParameterError(f"{name} values must lie in [0, 1]")
    return X


def check_masks(y, name="y"):
    """Coerce masks to uint8 (n, H, W) holding 0/1 (0/255 is accepted)."""
    if isinstance(y, (list, tuple)):
        y = np.stack([np.asarray(a) for a in y])
    y = np.asarray(y)
    if y.ndim == 4 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 3:
        raise ShapeError(f"{name} must be shaped (n, H, W), got {y.shape}")
    values = np.unique(y)
    if set(values.tolist()) <= {0, 255} and 255 in values:
        y = y // 255
    elif not set(values.tolist()) <= {0, 1}:
        raise ParameterError(f"{name} must be binary (0/1 or 0/255)")
    return y.astype(np.uint8)


def check_same_length(X, y):
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} images but {len(y)} masks")
