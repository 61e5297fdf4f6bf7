"""Contrast-limited adaptive histogram equalization on 8-bit gray images.

The image is cut into a ``tiles_y x tiles_x`` grid (the last row/column of
tiles absorbs the remainder pixels). Each tile's 256-bin histogram is
clipped at ``max(1, floor(clip_factor * tile_pixels / 256))``; the clipped
excess is spread evenly over all bins in one pass, with the remainder going
one count per bin from bin 0. A tile's mapping is
``round(255 * cdf(v) / tile_pixels)``, and each output pixel bilinearly
blends the mappings of the four nearest tile centres, falling back to the
nearest tile along image borders.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

BINS = 256


@dataclass(frozen=True)
class ClaheConfig:
    tiles_x: int = 8
    tiles_y: int = 8
    clip_factor: float = 2.0
    bins: int = BINS

    def __post_init__(self):
        if self.tiles_x < 1 or self.tiles_y < 1:
            raise ParameterError("tile grid must be at least 1x1")
        if self.bins != BINS:
            raise ParameterError("only 256-bin histograms are supported")
        if self.clip_factor < self.bins / 256:
            raise ParameterError(f"clip_factor must be >= 1, got {self.clip_factor}")


def tile_edges(n, tiles):
    step = n // tiles
    edges = [i * step for i in range(tiles)] + [n]
    return edges


def _clipped(hist, clip_factor, tile_pixels):
    limit = max(1, int(np.floor(clip_factor * tile_pixels / BINS)))
    excess = int(np.maximum(hist - limit, 0).sum())
    out = np.minimum(hist, limit)
    out += excess // BINS
    out[:excess % BINS] += 1
    return out


def tile_mappings(img, cfg=ClaheConfig(), clip=True):
    """Per-tile lookup tables, shape (tiles_y, tiles_x, 256), int64."""
    img = _check_image(img, cfg)
    h, w = img.shape
    ye = tile_edges(h, cfg.tiles_y)
    xe = tile_edges(w, cfg.tiles_x)
    maps = np.empty((cfg.tiles_y, cfg.tiles_x, BINS), dtype=np.int64)
    for ty in range(cfg.tiles_y):
        for tx in range(cfg.tiles_x):
            tile = img[ye[ty]:ye[ty + 1], xe[tx]:xe[tx + 1]]
            n = tile.size
            hist = np.bincount(tile.ravel(), minlength=BINS).astype(np.int64)
            if clip:
                hist = _clipped(hist, cfg.clip_factor, n)
            cdf = np.cumsum(hist)
            maps[ty, tx] = (510 * cdf + n) // (2 * n)
    return maps


def _axis_weights(n, edges):
    """For each coordinate: lower tile index, upper tile index, upper weight."""
    centers = np.array(
        [edges[i] + (edges[i + 1] - edges[i] - 1) / 2.0 for i in range(len(edges) - 1)]
    )
    pos = np.arange(n, dtype=np.float64)
    last = len(centers) - 1
    lo = np.searchsorted(centers, pos, side="right") - 1
    before = lo < 0
    after = lo >= last
    lo = np.clip(lo, 0, last)
    hi = np.where(before | after, lo, lo + 1)
    span = centers[hi] - centers[lo]
    weight = np.where(span > 0, (pos - centers[lo]) / np.where(span > 0, span, 1.0), 0.0)
    return lo, hi, weight


def _check_image(img, cfg):
    img = np.asarray(img)
    if img.size == 0:
        raise ShapeError("cannot equalize an empty image")
    if img.ndim != 2:
        raise ShapeError(f"CLAHE expects a single-channel (H, W) image, got {img.shape}")
    if img.dtype != np.uint8:
        raise ShapeError(f"CLAHE expects uint8 pixels, got {img.dtype}")
    h, w = img.shape
    if w < cfg.tiles_x or h < cfg.tiles_y:
        raise ShapeError(
            f"image {w}x{h} is smaller than the {cfg.tiles_x}x{cfg.tiles_y} tile grid"
        )
    return img


def _interpolate(img, maps, cfg):
    h, w = img.shape
    ylo, yhi, wy = _axis_weights(h, tile_edges(h, cfg.tiles_y))
    xlo, xhi, wx = _axis_weights(w, tile_edges(w, cfg.tiles_x))
    v = img.astype(np.intp)
    Y0, X0 = ylo[:, None], xlo[None, :]
    Y1, X1 = yhi[:, None], xhi[None, :]
    wy = wy[:, None]
    wx = wx[None, :]
    m00 = maps[Y0, X0, v].astype(np.float64)
    m01 = maps[Y0, X1, v].astype(np.float64)
    m10 = maps[Y1, X0, v].astype(np.float64)
    m11 = maps[Y1, X1, v].astype(np.float64)
    top = (1.0 - wx) * m00 + wx * m01
    bottom = (1.0 - wx) * m10 + wx * m11
    out = (1.0 - wy) * top + wy * bottom
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def clahe(img, cfg=ClaheConfig()):
    img = _check_image(img, cfg)
    return _interpolate(img, tile_mappings(img, cfg, clip=True), cfg)


def ahe(img, cfg=ClaheConfig()):
    """Adaptive histogram equalization with the same tiling and no clipping."""
    img = _check_image(img, cfg)
    return _interpolate(img, tile_mappings(img, cfg, clip=False), cfg)
