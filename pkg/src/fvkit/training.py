"""Mini-batch DiceBCE training with Adam, per-epoch validation and
checkpointing."""

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .errors import NumericError, ParameterError, ShapeError
from .losses import LossConfig, dice_bce_loss
from .optim import Adam
from .tensor import Tensor
from .unet import UNetConfig, build, forward

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "wall_seconds")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 50
    batch_size: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0 or self.eps_adam <= 0:
            raise ParameterError("learning_rate and eps_adam must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParameterError("Adam betas must lie in (0, 1)")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 1:
            raise ParameterError("checkpoint_every must be >= 1")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float = None
    wall_seconds: float = 0.0

    def row(self):
        val = "" if self.val_loss is None else repr(float(self.val_loss))
        return (self.epoch, repr(float(self.train_loss)), val, repr(float(self.wall_seconds)))


@dataclass
class TrainResult:
    params: object
    logs: list = field(default_factory=list)
    steps_per_epoch: int = 0
    steps: int = 0
    checkpoints: list = field(default_factory=list)


def steps_per_epoch(n_images, batch_size):
    return math.ceil(n_images / batch_size)


def _as_batch(images):
    x = np.asarray(images, dtype=np.float32)
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4:
        raise ShapeError(f"expected images shaped (N, H, W), got {x.shape}")
    return x


def _dropout_seed(seed, step):
    return (seed * 1_000_003 + step) % (2 ** 63)


def evaluate_loss(params, images, masks, loss_cfg=LossConfig(), batch_size=2):
    """Eval-mode DiceBCE averaged over images (weighted by batch size)."""
    x = _as_batch(images)
    y = _as_batch(masks)
    total = 0.0
    for start in range(0, len(x), batch_size):
        xb, yb = x[start:start + batch_size], y[start:start + batch_size]
        prob = forward(params, Tensor(xb), "eval")
        total += dice_bce_loss(yb, prob, loss_cfg).item() * len(xb)
    return total / len(x)


def write_log_csv(path, logs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for entry in logs:
            w.writerow(entry.row())


def read_log_csv(path):
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append(EpochLog(int(r["epoch"]), float(r["train_loss"]),
                                float(r["val_loss"]) if r["val_loss"] else None,
                                float(r["wall_seconds"])))
    return out


def train(model_cfg, train_cfg, loss_cfg, train_images, train_masks,
          val_images=None, val_masks=None, out_dir=None, params=None, meta=None,
          record_time=True, callback=None):
    """Train a U-Net and return a :class:`TrainResult`.

    Each epoch shuffles the training set with a generator seeded from
    ``(seed, epoch)``, takes ``ceil(N / batch_size)`` Adam steps in train
    mode, then scores the validation set in eval mode. With ``out_dir`` set,
    ``epochs.csv`` is rewritten after every epoch and checkpoints are saved
    every ``checkpoint_every`` epochs and at the end (``final.fvk``).
    ``record_time=False`` logs ``wall_seconds`` as 0 so the log is
    reproducible byte for byte.
    """
    x = _as_batch(train_images)
    y = _as_batch(train_masks)
    if len(x) == 0:
        raise ParameterError("training set is empty")
    if len(x) != len(y):
        raise ShapeError(f"{len(x)} images but {len(y)} masks")
    has_val = val_images is not None and len(val_images) > 0
    if has_val:
        vx, vy = _as_batch(val_images), _as_batch(val_masks)
    if params is None:
        params = build(model_cfg, train_cfg.seed)
    meta = dict(meta or {})
    meta.setdefault("image_size", [int(x.shape[2]), int(x.shape[3])])

    opt = Adam(params, train_cfg.learning_rate, train_cfg.beta1, train_cfg.beta2,
               train_cfg.eps_adam)
    per_epoch = steps_per_epoch(len(x), train_cfg.batch_size)
    result = TrainResult(params=params, steps_per_epoch=per_epoch)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log_path = os.path.join(out_dir, "epochs.csv")
        write_log_csv(log_path, [])

    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([train_cfg.seed, epoch])
        order = rng.permutation(len(x))
        running = 0.0
        for b, start in enumerate(range(0, len(x), train_cfg.batch_size)):
            idx = order[start:start + train_cfg.batch_size]
            opt.zero_grad()
            try:
                prob = forward(params, Tensor(x[idx]), "train",
                               seed=_dropout_seed(train_cfg.seed, step))
                loss = dice_bce_loss(y[idx], prob, loss_cfg)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError(
                        f"non-finite loss {value} at epoch {epoch}, batch {b + 1}/{per_epoch}"
                    )
                loss.backward()
            except MemoryError as exc:
                raise MemoryError(
                    f"out of memory at epoch {epoch}, batch {b + 1}: reduce batch_size "
                    f"(currently {train_cfg.batch_size}) or the image size"
                ) from exc
            try:
                opt.step()
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b + 1}: {exc}") from exc
            running += value
            step += 1
        entry = EpochLog(epoch, running / per_epoch)
        if has_val:
            entry.val_loss = evaluate_loss(params, vx, vy, loss_cfg, train_cfg.batch_size)
        entry.wall_seconds = time.perf_counter() - t0 if record_time else 0.0
        result.logs.append(entry)
        log.info("epoch %d: train %.5f val %s (%.1fs)", epoch, entry.train_loss,
                 "-" if entry.val_loss is None else f"{entry.val_loss:.5f}",
                 entry.wall_seconds)
        if out_dir:
            write_log_csv(log_path, result.logs)
            if epoch % train_cfg.checkpoint_every == 0 and epoch != train_cfg.epochs:
                path = os.path.join(out_dir, f"checkpoint_epoch{epoch:03d}.fvk")
                save_checkpoint(params, path, step=step, meta=meta)
                result.checkpoints.append(path)
        if callback is not None:
            callback(entry)

    result.steps = step
    if out_dir:
        path = os.path.join(out_dir, "final.fvk")
        save_checkpoint(params, path, step=step, meta=meta)
        result.checkpoints.append(path)
    return result


__all__ = [
    "EpochLog",
    "LOG_COLUMNS",
    "TrainConfig",
    "TrainResult",
    "UNetConfig",
    "evaluate_loss",
    "read_log_csv",
    "steps_per_epoch",
    "train",
    "write_log_csv",
]
