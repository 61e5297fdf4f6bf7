"""Dataset summaries: mean image, pooled intensity histogram and pairwise
image correlations."""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedMetricError
from .netpbm import write_netpbm
from .plots import bar_chart_svg
from .preprocess import to_grayscale


@dataclass
class HistogramU8:
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return HistogramU8(self.counts + other.counts)


def _same_shape(images):
    images = [np.asarray(im) for im in images]
    if not images:
        raise ShapeError("need at least one image")
    shape = images[0].shape
    for i, im in enumerate(images):
        if im.shape != shape:
            raise ShapeError(f"image {i} has shape {im.shape}, expected {shape}")
    return images


def mean_image(images):
    """Per-pixel, per-channel mean with round-half-up, as uint8."""
    images = _same_shape(images)
    n = len(images)
    total = np.zeros(images[0].shape, dtype=np.int64)
    for im in images:
        total += im
    return ((2 * total + n) // (2 * n)).astype(np.uint8)


def pixel_histogram(images):
    counts = np.zeros(256, dtype=np.int64)
    for im in images:
        counts += np.bincount(np.asarray(im, dtype=np.uint8).ravel(), minlength=256)
    return HistogramU8(counts)


@dataclass
class CorrelationResult:
    matrix: np.ndarray
    pairs: np.ndarray  # off-diagonal upper-triangle coefficients
    hist_edges: np.ndarray
    hist_counts: np.ndarray


def pairwise_correlation(images, bins=20):
    """Pearson correlation of flattened grayscale images for every pair.

    The unit diagonal is excluded from the histogram of coefficients.
    """
    images = _same_shape(images)
    if len(images) < 2:
        raise ShapeError("pairwise correlation needs at least two images")
    vecs = []
    for i, im in enumerate(images):
        gray = to_grayscale(im) if im.ndim == 3 else im
        v = gray.astype(np.float64).ravel()
        if v.std() == 0:
            raise UndefinedMetricError(f"image {i} has zero variance; correlation undefined")
        vecs.append(v)
    matrix = np.corrcoef(np.vstack(vecs))
    # corrcoef can differ from its transpose in the last bit
    matrix = np.clip((matrix + matrix.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(matrix, 1.0)
    iu = np.triu_indices(len(images), k=1)
    pairs = matrix[iu]
    counts, edges = np.histogram(pairs, bins=bins, range=(-1.0, 1.0))
    return CorrelationResult(matrix, pairs, edges, counts)


def write_stats(out_dir, images, masks):
    """Write the dataset summary files into ``out_dir``.

    ``masks`` are {0, 1} planes; the mean mask is saved scaled to 0..255.
    """
    os.makedirs(out_dir, exist_ok=True)
    mean = mean_image(images)
    if mean.ndim == 3:
        write_netpbm(os.path.join(out_dir, "mean_image.ppm"), mean)
        write_netpbm(os.path.join(out_dir, "mean_image.pgm"), to_grayscale(mean))
    else:
        write_netpbm(os.path.join(out_dir, "mean_image.pgm"), mean)
    mean_mask = mean_image([(np.asarray(m) * 255).astype(np.uint8) for m in masks])
    write_netpbm(os.path.join(out_dir, "mean_mask.pgm"), mean_mask)

    hist = pixel_histogram(images)
    with open(os.path.join(out_dir, "pixel_hist.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("bin", "count"))
        w.writerows((i, int(c)) for i, c in enumerate(hist.counts))

    written = ["mean_image.pgm", "mean_mask.pgm", "pixel_hist.csv"]
    if len(images) >= 2:
        corr = pairwise_correlation(images)
        with open(os.path.join(out_dir, "corr_hist.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("bin_low", "bin_high", "count"))
            for lo, hi, c in zip(corr.hist_edges[:-1], corr.hist_edges[1:], corr.hist_counts):
                w.writerow((f"{lo:.2f}", f"{hi:.2f}", int(c)))
        svg = bar_chart_svg(corr.hist_edges, corr.hist_counts,
                            title="Pairwise image correlation",
                            xlabel="Pearson coefficient", ylabel="pairs")
        with open(os.path.join(out_dir, "corr_hist.svg"), "w") as fh:
            fh.write(svg)
        written += ["corr_hist.csv", "corr_hist.svg"]
    return written
