"""DRIVE-style dataset discovery, mask validation and seeded splits.

Expected layout::

    root/images/<id>.ppm   (or .pgm)
    root/masks/<id>.pgm    values 0/255

DRIVE ships TIFF images and GIF masks; convert them to binary Netpbm first
(see the README).
"""

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DataQualityError, EmptyManifestError, PairingError, ParameterError
from .netpbm import read_netpbm

_ID = re.compile(r"^(\d+)")
IMAGE_EXTS = (".ppm", ".pgm")
MASK_EXTS = (".pgm",)
NONBINARY_TOLERANCE = 0.01


@dataclass(frozen=True)
class ManifestEntry:
    id: int
    image_path: str
    mask_path: str


@dataclass
class DatasetManifest:
    root: str
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def ids(self):
        return [e.id for e in self.entries]

    def by_id(self, ident):
        for e in self.entries:
            if e.id == ident:
                return e
        raise KeyError(ident)

    def subset(self, ids):
        wanted = set(ids)
        return DatasetManifest(self.root, [e for e in self.entries if e.id in wanted])


@dataclass(frozen=True)
class SplitSpec:
    train_count: int = 30
    val_fraction: float = 0.2
    test_count: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.train_count < 1 or self.test_count < 0:
            raise ParameterError("train_count must be >= 1 and test_count >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ParameterError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


def _index_dir(directory, exts):
    found = {}
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext.lower() not in exts:
            continue
        m = _ID.match(stem)
        if not m:
            continue
        ident = int(m.group(1))
        if ident in found:
            raise PairingError(f"duplicate id {ident} in {directory}", orphans=[ident])
        found[ident] = os.path.join(directory, name)
    return found


def scan_dataset(root, validate_masks=True):
    """Pair ``images/`` with ``masks/`` by numeric id, ascending."""
    img_dir = os.path.join(root, "images")
    mask_dir = os.path.join(root, "masks")
    for d in (img_dir, mask_dir):
        if not os.path.isdir(d):
            raise EmptyManifestError(f"missing directory {d}")
    images = _index_dir(img_dir, IMAGE_EXTS)
    masks = _index_dir(mask_dir, MASK_EXTS)
    if not images and not masks:
        raise EmptyManifestError(f"no Netpbm images or masks under {root}")
    orphans = sorted(set(images) ^ set(masks))
    if orphans:
        detail = ", ".join(
            f"{i} (no {'mask' if i in images else 'image'})" for i in orphans
        )
        raise PairingError(f"unpaired ids: {detail}", orphans=orphans)
    entries = [ManifestEntry(i, images[i], masks[i]) for i in sorted(images)]
    if validate_masks:
        for e in entries:
            load_mask(e.mask_path)
    return DatasetManifest(root, entries)


def mask_from_u8(raw, source="mask"):
    """Map an on-disk 0/255 mask to {0, 1}, thresholding at 128.

    More than 1% of pixels outside {0, 255} is a data-quality error.
    """
    raw = np.asarray(raw)
    if raw.ndim == 3:
        raise DataQualityError(f"{source}: mask must be single-channel")
    odd = np.count_nonzero((raw != 0) & (raw != 255))
    if odd > NONBINARY_TOLERANCE * raw.size:
        raise DataQualityError(
            f"{source}: {odd} of {raw.size} pixels are neither 0 nor 255 "
            f"({100.0 * odd / raw.size:.2f}% > {100 * NONBINARY_TOLERANCE:.0f}%)"
        )
    return (raw >= 128).astype(np.uint8)


def load_mask(path):
    return mask_from_u8(read_netpbm(path), source=path)


def load_pair(entry):
    return read_netpbm(entry.image_path), load_mask(entry.mask_path)


def split(manifest, spec=SplitSpec()):
    """Seeded (train, val, test) source-id lists.

    The first ``train_count`` shuffled ids form the training pool and the next
    ``test_count`` the test set. ``val_fraction`` of the pool's *sources* is
    held out for validation, so every augmented variant of a validation
    source stays out of training.
    """
    ids = manifest.ids() if isinstance(manifest, DatasetManifest) else list(manifest)
    if spec.train_count + spec.test_count > len(ids):
        raise ParameterError(
            f"train_count {spec.train_count} + test_count {spec.test_count} "
            f"exceeds the {len(ids)} available images"
        )
    rng = np.random.default_rng(spec.seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    pool = order[:spec.train_count]
    test = sorted(order[spec.train_count:spec.train_count + spec.test_count])
    n_val = int(round(spec.val_fraction * len(pool)))
    if len(pool) > 1:
        n_val = min(max(n_val, 1), len(pool) - 1)
    else:
        n_val = 0
    val = sorted(pool[:n_val])
    train = sorted(pool[n_val:])
    return train, val, test
