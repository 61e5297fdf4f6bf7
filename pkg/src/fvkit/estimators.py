"""scikit-learn compatible wrappers.

:class:`FundusPreprocessor` and :class:`ClaheTransformer` are stateless
transformers over lists of 8-bit images; :class:`UNetSegmenter` trains the
U-Net with ``fit`` and exposes ``predict_proba``/``predict``/``score``. They
follow the usual conventions (constructor stores parameters verbatim,
learned state ends in ``_``) so ``get_params``/``set_params``/``clone`` and
``Pipeline`` work as expected.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .checkpoint import load_checkpoint, save_checkpoint
from .clahe import ClaheConfig, clahe
from .losses import LossConfig
from .metrics import summarize
from .preprocess import preprocess_image, resize_mask
from .tensor import Tensor
from .training import TrainConfig, train
from .unet import UNetConfig, binarize, forward
from .validation import check_images, check_masks, check_same_length


class ClaheTransformer(TransformerMixin, BaseEstimator):
    """Apply CLAHE to each 8-bit gray image in a list."""

    def __init__(self, tiles_x=8, tiles_y=8, clip_factor=2.0):
        self.tiles_x = tiles_x
        self.tiles_y = tiles_y
        self.clip_factor = clip_factor

    def fit(self, X, y=None):
        self.config_ = ClaheConfig(self.tiles_x, self.tiles_y, self.clip_factor)
        return self

    def transform(self, X):
        cfg = ClaheConfig(self.tiles_x, self.tiles_y, self.clip_factor)
        return [clahe(np.asarray(img), cfg) for img in X]


class FundusPreprocessor(TransformerMixin, BaseEstimator):
    """Raw 8-bit fundus images to a float32 stack (n, size, size) in [0, 1].

    Grayscale conversion, optional CLAHE, scaling to [0, 1] and a bilinear
    resize, in that order.
    """

    def __init__(self, size=512, grayscale="luma", clahe=True, tiles_x=8, tiles_y=8,
                 clip_factor=2.0):
        self.size = size
        self.grayscale = grayscale
        self.clahe = clahe
        self.tiles_x = tiles_x
        self.tiles_y = tiles_y
        self.clip_factor = clip_factor

    def fit(self, X, y=None):
        return self

    def _clahe_config(self):
        if not self.clahe:
            return None
        return ClaheConfig(self.tiles_x, self.tiles_y, self.clip_factor)

    def transform(self, X):
        cfg = self._clahe_config()
        return np.stack([preprocess_image(np.asarray(img), self.size, cfg, self.grayscale)
                         for img in X])

    def meta(self):
        out = {"size": self.size, "grayscale": self.grayscale, "clahe": bool(self.clahe)}
        if self.clahe:
            out.update(tiles_x=self.tiles_x, tiles_y=self.tiles_y,
                       clip_factor=self.clip_factor)
        return out


class UNetSegmenter(BaseEstimator):
    """Binary vessel segmenter.

    ``fit(X, y)`` takes gray images (n, H, W) in [0, 1] (or uint8) and masks
    of the same or any other size (masks are nearest-resized to the images).
    H and W must be divisible by ``2 ** depth``.
    """

    def __init__(self, depth=4, base_channels=64, dropout_p=0.5,
                 dropout_sites="deep-encoder-and-bottleneck", learning_rate=1e-4,
                 epochs=50, batch_size=2, seed=0, eps_dice=1e-7, bce_clamp=1e-7,
                 threshold=0.5, checkpoint_every=10, out_dir=None):
        self.depth = depth
        self.base_channels = base_channels
        self.dropout_p = dropout_p
        self.dropout_sites = dropout_sites
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.eps_dice = eps_dice
        self.bce_clamp = bce_clamp
        self.threshold = threshold
        self.checkpoint_every = checkpoint_every
        self.out_dir = out_dir

    def _configs(self):
        model = UNetConfig(depth=self.depth, base_channels=self.base_channels,
                           dropout_p=self.dropout_p, dropout_sites=self.dropout_sites)
        tcfg = TrainConfig(learning_rate=self.learning_rate, epochs=self.epochs,
                           batch_size=self.batch_size, seed=self.seed,
                           checkpoint_every=self.checkpoint_every)
        return model, tcfg, LossConfig(self.eps_dice, self.bce_clamp)

    def _fit_masks(self, X, y):
        y = check_masks(y)
        check_same_length(X, y)
        if y.shape[1:] != X.shape[1:]:
            h, w = X.shape[1:]
            y = np.stack([resize_mask(m, w, h) for m in y])
        return y

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_images(X)
        y = self._fit_masks(X, y)
        model, tcfg, lcfg = self._configs()
        model.check_input_size(*X.shape[1:])
        if X_val is not None:
            X_val = check_images(X_val, "X_val")
            y_val = self._fit_masks(X_val, y_val)
        result = train(model, tcfg, lcfg, X, y, X_val, y_val, out_dir=self.out_dir)
        self.params_ = result.params
        self.history_ = result.logs
        self.steps_per_epoch_ = result.steps_per_epoch
        self.n_steps_ = result.steps
        self.image_size_ = tuple(X.shape[1:])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_images(X)
        self.params_.config.check_input_size(*X.shape[1:])
        out = []
        for start in range(0, len(X), self.batch_size):
            batch = Tensor(X[start:start + self.batch_size, None])
            out.append(forward(self.params_, batch, "eval").data[:, 0])
        return np.concatenate(out)

    def predict(self, X):
        return binarize(self.predict_proba(X), self.threshold)

    def score(self, X, y):
        """Pooled F1 of the thresholded prediction."""
        X = check_images(X)
        y = self._fit_masks(X, y)
        probs = self.predict_proba(X)
        return summarize(list(y), list(probs), self.threshold).f1

    def save(self, path, meta=None):
        check_is_fitted(self, "params_")
        meta = dict(meta or {})
        meta.setdefault("image_size", list(self.image_size_))
        save_checkpoint(self.params_, path, step=self.n_steps_, meta=meta)
        return path

    @classmethod
    def load(cls, path):
        params, header = load_checkpoint(path, with_header=True)
        c = params.config
        est = cls(depth=c.depth, base_channels=c.base_channels, dropout_p=c.dropout_p,
                  dropout_sites=c.dropout_sites)
        est.params_ = params
        est.history_ = []
        est.n_steps_ = header.get("step", 0)
        size = header.get("meta", {}).get("image_size")
        est.image_size_ = tuple(size) if size else None
        return est
