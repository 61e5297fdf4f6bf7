"""Synthetic fundus-like image/mask pairs.

These stand in for DRIVE in tests and demos: a reddish circular field of
view, a bright optic disc, and a branching tree of dark vessels whose
pixels form the ground-truth mask.
"""

import os

import numpy as np

from .netpbm import write_netpbm


def _stamp(mask, cy, cx, r):
    h, w = mask.shape
    y0, y1 = max(int(cy - r - 1), 0), min(int(cy + r + 2), h)
    x0, x1 = max(int(cx - r - 1), 0), min(int(cx + r + 2), w)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    mask[y0:y1, x0:x1] |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def _grow(mask, rng, y, x, angle, radius, length, depth):
    step = 1.0
    for i in range(int(length)):
        angle += rng.normal(0.0, 0.08)
        y += step * np.sin(angle)
        x += step * np.cos(angle)
        if not (0 <= y < mask.shape[0] and 0 <= x < mask.shape[1]):
            return
        _stamp(mask, y, x, radius)
        if depth > 0 and radius > 0.6 and rng.random() < 0.012:
            side = rng.choice((-1.0, 1.0))
            _grow(mask, rng, y, x, angle + side * rng.uniform(0.4, 1.0),
                  radius * 0.75, length * rng.uniform(0.4, 0.7), depth - 1)
            radius *= 0.9


def make_fundus_pair(seed=0, height=584, width=565):
    """One synthetic (RGB uint8 image, {0,1} mask) pair."""
    rng = np.random.default_rng(seed)
    h, w = height, width
    mask = np.zeros((h, w), dtype=bool)
    scale = min(h, w) / 565.0
    disc_y = h * rng.uniform(0.4, 0.6)
    disc_x = w * rng.choice((0.25, 0.75)) + rng.normal(0, 0.03 * w)
    for k in range(6):
        angle = rng.uniform(0, 2 * np.pi)
        _grow(mask, rng, disc_y, disc_x, angle, radius=max(2.6 * scale, 1.0),
              length=0.9 * max(h, w), depth=4)

    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    r_fov = 0.47 * min(h, w)
    dist = np.hypot(yy - h / 2, xx - w / 2)
    fov = dist <= r_fov
    shade = 0.75 + 0.25 * np.cos(np.clip(dist / r_fov, 0, 1) * np.pi / 2)
    disc = np.exp(-((yy - disc_y) ** 2 + (xx - disc_x) ** 2) / (2 * (28 * scale) ** 2))

    base = np.empty((h, w, 3))
    base[..., 0] = 200 * shade + 50 * disc
    base[..., 1] = 95 * shade + 120 * disc
    base[..., 2] = 40 * shade + 90 * disc
    vessel_dark = np.array([0.55, 0.45, 0.6])
    base[mask] *= vessel_dark
    base += rng.normal(0, 6.0, size=base.shape)
    base[~fov] = rng.uniform(0, 6, size=(np.count_nonzero(~fov), 3))
    img = np.clip(np.rint(base), 0, 255).astype(np.uint8)
    return img, (mask & fov).astype(np.uint8)


def write_synthetic_drive(root, n_images=40, height=584, width=565, seed=0):
    """Write ``n_images`` synthetic pairs in the on-disk layout read by
    :func:`fvkit.dataset.scan_dataset` and return ``root``."""
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "masks"), exist_ok=True)
    for i in range(1, n_images + 1):
        img, mask = make_fundus_pair(seed + i, height, width)
        write_netpbm(os.path.join(root, "images", f"{i:02d}.ppm"), img)
        write_netpbm(os.path.join(root, "masks", f"{i:02d}.pgm"), mask * 255)
    return root
