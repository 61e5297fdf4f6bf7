"""End-to-end glue used by the CLI: data preparation, training runs,
checkpoint evaluation and single-image prediction."""

import csv
import logging
import os

import numpy as np

from .augment import augment_dataset
from .clahe import ClaheConfig
from .config import dump_run_config
from .dataset import load_pair, scan_dataset, split
from .metrics import roc_curve, summarize
from .preprocess import preprocess_image, preprocess_mask, resize_image
from .tensor import Tensor
from .training import train
from .unet import binarize, forward

log = logging.getLogger(__name__)


def preprocess_meta(run_cfg):
    pre = run_cfg.preprocess
    meta = {"size": pre.size, "grayscale": pre.grayscale, "clahe": pre.clahe}
    if pre.clahe:
        c = run_cfg.clahe
        meta.update(tiles_x=c.tiles_x, tiles_y=c.tiles_y, clip_factor=c.clip_factor)
    return meta


def clahe_from_meta(meta):
    if not meta.get("clahe", True):
        return None
    return ClaheConfig(tiles_x=meta.get("tiles_x", 8), tiles_y=meta.get("tiles_y", 8),
                       clip_factor=meta.get("clip_factor", 2.0))


def prepare(image_u8, mask, meta):
    size = meta["size"]
    img = preprocess_image(image_u8, size, clahe_from_meta(meta), meta.get("grayscale", "luma"))
    return img, None if mask is None else preprocess_mask(mask, size)


def load_prepared(manifest, ids, meta):
    pairs = []
    for ident in ids:
        raw_img, raw_mask = load_pair(manifest.by_id(ident))
        pairs.append(prepare(raw_img, raw_mask, meta))
    return pairs


def _stack(samples):
    return (np.stack([s.image for s in samples]).astype(np.float32),
            np.stack([s.mask for s in samples]).astype(np.uint8))


def run_training(run_cfg, out_dir, record_time=True):
    """Scan, split, preprocess, augment and train as configured.

    Writes ``config.ini`` (canonical form), ``split.csv`` (id, role),
    ``epochs.csv`` and checkpoints into ``out_dir``.
    """
    os.makedirs(out_dir, exist_ok=True)
    manifest = scan_dataset(run_cfg.data.root)
    train_ids, val_ids, test_ids = split(manifest, run_cfg.split)
    with open(os.path.join(out_dir, "config.ini"), "w") as fh:
        fh.write(dump_run_config(run_cfg))
    with open(os.path.join(out_dir, "split.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", "role"))
        for role, ids in (("train", train_ids), ("val", val_ids), ("test", test_ids)):
            w.writerows((i, role) for i in ids)

    meta = preprocess_meta(run_cfg)
    train_set = augment_dataset(load_prepared(manifest, train_ids, meta),
                                run_cfg.augment, source_ids=train_ids)
    x, y = _stack(train_set)
    vx = vy = None
    if val_ids:
        val_set = augment_dataset(load_prepared(manifest, val_ids, meta),
                                  run_cfg.augment, source_ids=val_ids)
        vx, vy = _stack(val_set)
    log.info("training on %d augmented images (%d sources), validating on %d",
             len(x), len(train_ids), 0 if vx is None else len(vx))
    return train(run_cfg.model, run_cfg.train, run_cfg.loss, x, y, vx, vy,
                 out_dir=out_dir, meta={"preprocess": meta, "image_size": [meta["size"]] * 2},
                 record_time=record_time)


def predict_probability(params, header, image_u8):
    """Probability map at the input's own resolution."""
    meta = header.get("meta", {}).get("preprocess", {"size": 512})
    h, w = np.asarray(image_u8).shape[:2]
    img, _ = prepare(image_u8, None, meta)
    prob = forward(params, Tensor(img[None, None]), "eval").data[0, 0]
    if prob.shape != (h, w):
        prob = resize_image(prob, w, h)
    return prob


def evaluate_checkpoint(params, header, manifest, ids=None, threshold=0.5,
                        aggregation="pooled", roc_mode="binary"):
    """Metrics plus both ROC curves for a trained model on dataset entries.

    Images are preprocessed exactly as during training and scored at the
    training resolution against masks resized the same way. Returns
    ``(report, {"binary": RocCurve, "continuous": RocCurve})``; the report's
    ``roc_auc`` follows ``roc_mode``.
    """
    meta = header.get("meta", {}).get("preprocess", {"size": 512})
    ids = manifest.ids() if ids is None else ids
    truths, probs = [], []
    for img, mask in load_prepared(manifest, ids, meta):
        prob = forward(params, Tensor(img[None, None]), "eval").data[0, 0]
        truths.append(mask)
        probs.append(prob)
    report = summarize(truths, probs, threshold, aggregation, roc_mode)
    flat_t = np.concatenate([t.ravel() for t in truths])
    flat_p = np.concatenate([p.ravel() for p in probs])
    rocs = {mode: roc_curve(flat_t, flat_p, mode) for mode in ("binary", "continuous")}
    return report, rocs


def predict_mask(params, header, image_u8, threshold=0.5):
    return binarize(predict_probability(params, header, image_u8), threshold)
