"""Grayscale conversion, normalization, resizing, flips and rotation.

Images are numpy arrays: ``uint8`` of shape (H, W) or (H, W, 3) on the 8-bit
side, ``float32`` (H, W) in [0, 1] once normalized. Masks are ``uint8``
(H, W) holding 0/1.
"""

import math

import numpy as np

from .clahe import clahe
from .errors import ParameterError, ShapeError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def to_grayscale(img, method="luma"):
    """BT.601 luma, ``round(0.299 R + 0.587 G + 0.114 B)``, or the green channel."""
    img = np.asarray(img)
    if img.ndim == 2 or (img.ndim == 3 and img.shape[2] == 1):
        raise ParameterError("image is already single-channel")
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) image, got {img.shape}")
    if method == "green":
        return img[:, :, 1].astype(np.uint8)
    if method != "luma":
        raise ParameterError(f"unknown grayscale method {method!r}")
    rgb = img.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    y = r * rgb[:, :, 0] + g * rgb[:, :, 1] + b * rgb[:, :, 2]
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)


def normalize(img):
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


def denormalize(img):
    """Back to 8-bit with round-half-up."""
    v = np.asarray(img, dtype=np.float64) * 255.0
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def _linear_taps(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_image(img, out_w, out_h):
    """Bilinear resize with half-pixel centers; (H, W) float in [0, 1]."""
    if out_w < 1 or out_h < 1:
        raise ParameterError(f"output size must be >= 1, got {out_w}x{out_h}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"resize_image expects (H, W), got {img.shape}")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.astype(np.float32)
    y0, y1, ty = _linear_taps(h, out_h)
    x0, x1, tx = _linear_taps(w, out_w)
    ty = ty[:, None]
    tx = tx[None, :]
    top = img[y0][:, x0] * (1 - tx) + img[y0][:, x1] * tx
    bottom = img[y1][:, x0] * (1 - tx) + img[y1][:, x1] * tx
    out = top * (1 - ty) + bottom * ty
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _nearest_taps(n_in, n_out):
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.intp)
    return np.minimum(idx, n_in - 1)


def resize_mask(mask, out_w, out_h):
    """Nearest-neighbour resize; output stays binary."""
    if out_w < 1 or out_h < 1:
        raise ParameterError(f"output size must be >= 1, got {out_w}x{out_h}")
    mask = np.asarray(mask)
    h, w = mask.shape[:2]
    return mask[_nearest_taps(h, out_h)][:, _nearest_taps(w, out_w)].copy()


def hflip(img):
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])


def vflip(img):
    return np.ascontiguousarray(np.asarray(img)[::-1])


def _cos_sin(angle_degrees):
    exact = {0: (1.0, 0.0), 90: (0.0, 1.0), 180: (-1.0, 0.0), 270: (0.0, -1.0)}
    a = angle_degrees % 360.0
    if a in exact:
        return exact[a]
    rad = math.radians(angle_degrees)
    return math.cos(rad), math.sin(rad)


def _snap(v, tol=1e-9):
    r = np.rint(v)
    return np.where(np.abs(v - r) < tol, r, v)


def rotation_sources(h, w, angle_degrees):
    """Source coordinates (sx, sy) sampled by each output pixel when rotating
    counter-clockwise (as displayed) about the image centre."""
    c, s = _cos_sin(angle_degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    sx = cx + c * dx - s * dy
    sy = cy + s * dx + c * dy
    return _snap(sx), _snap(sy)


def _sample_bilinear(img, sx, sy):
    h, w = img.shape
    inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    sxc = np.clip(sx, 0, w - 1)
    syc = np.clip(sy, 0, h - 1)
    x0 = np.floor(sxc).astype(np.intp)
    y0 = np.floor(syc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = sxc - x0
    ty = syc - y0
    top = img[y0, x0] * (1 - tx) + img[y0, x1] * tx
    bottom = img[y1, x0] * (1 - tx) + img[y1, x1] * tx
    return np.where(inside, top * (1 - ty) + bottom * ty, 0.0)


def _sample_nearest(arr, sx, sy):
    h, w = arr.shape
    ix = np.floor(sx + 0.5).astype(np.intp)
    iy = np.floor(sy + 0.5).astype(np.intp)
    inside = (ix >= 0) & (ix <= w - 1) & (iy >= 0) & (iy <= h - 1)
    out = arr[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
    return np.where(inside, out, 0).astype(arr.dtype)


def rotate(img, mask, angle_degrees):
    """Rotate an image (bilinear) and its mask (nearest) with one geometry.

    Pixels whose source falls outside the frame become 0.
    """
    if abs(angle_degrees) > 180:
        raise ParameterError(f"|angle| must be <= 180 degrees, got {angle_degrees}")
    img = np.asarray(img)
    mask = np.asarray(mask)
    if img.shape[:2] != mask.shape[:2]:
        raise ShapeError(f"image {img.shape} and mask {mask.shape} differ in size")
    h, w = img.shape[:2]
    sx, sy = rotation_sources(h, w, angle_degrees)
    rot_img = np.clip(_sample_bilinear(img.astype(np.float64), sx, sy), 0.0, 1.0)
    return rot_img.astype(np.float32), _sample_nearest(mask, sx, sy)


def preprocess_image(img, size=512, clahe_config=None, grayscale="luma"):
    """Raw 8-bit fundus image to a normalized (size, size) float plane.

    Order: grayscale, CLAHE on 8-bit data (skipped when ``clahe_config`` is
    None), scale to [0, 1], bilinear resize.
    """
    img = np.asarray(img)
    gray = to_grayscale(img, grayscale) if img.ndim == 3 else img.astype(np.uint8)
    if clahe_config is not None:
        gray = clahe(gray, clahe_config)
    return resize_image(normalize(gray), size, size)


def preprocess_mask(mask, size=512):
    return resize_mask(mask, size, size)
