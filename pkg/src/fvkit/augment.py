"""Four-fold dataset expansion: identity, horizontal flip, vertical flip and
one seeded random rotation per source pair."""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .netpbm import write_netpbm
from .preprocess import denormalize, hflip, rotate, vflip

DEFAULT_OPS = ("identity", "hflip", "vflip", "rotate")
MANIFEST_COLUMNS = ("source_id", "op", "angle_millidegrees", "output_file")


@dataclass(frozen=True)
class AugmentSpec:
    ops: tuple = DEFAULT_OPS
    seed: int = 0
    rotation_range: float = 30.0

    def __post_init__(self):
        unknown = [op for op in self.ops if op not in DEFAULT_OPS]
        if unknown:
            raise ParameterError(f"unknown augmentation ops {unknown}")
        if not 0.0 <= self.rotation_range <= 180.0:
            raise ParameterError(f"rotation_range must be in [0, 180], got {self.rotation_range}")


@dataclass
class AugmentedPair:
    image: np.ndarray
    mask: np.ndarray
    source_id: int
    op: str
    angle_millidegrees: int = 0


def draw_angle_millidegrees(seed, source_index, rotation_range):
    """Rotation for one source; a private generator per source keeps the draw
    independent of processing order."""
    rng = np.random.default_rng(seed + source_index)
    theta = rng.uniform(-rotation_range, rotation_range)
    return int(round(theta * 1000.0))


def augment_pair(image, mask, op, angle_millidegrees=0):
    if op == "identity":
        return np.array(image, copy=True), np.array(mask, copy=True)
    if op == "hflip":
        return hflip(image), hflip(mask)
    if op == "vflip":
        return vflip(image), vflip(mask)
    if op == "rotate":
        return rotate(image, mask, angle_millidegrees / 1000.0)
    raise ParameterError(f"unknown augmentation op {op!r}")


def augment_dataset(pairs, spec=AugmentSpec(), source_ids=None):
    """Expand ``(image, mask)`` pairs by every op in ``spec.ops``.

    Returns a list of :class:`AugmentedPair` ordered source by source.
    """
    pairs = list(pairs)
    if not pairs:
        raise ParameterError("augment_dataset needs at least one pair")
    if source_ids is None:
        source_ids = list(range(len(pairs)))
    out = []
    for index, ((image, mask), sid) in enumerate(zip(pairs, source_ids)):
        angle = 0
        if "rotate" in spec.ops:
            angle = draw_angle_millidegrees(spec.seed, index, spec.rotation_range)
        for op in spec.ops:
            a = angle if op == "rotate" else 0
            img_out, mask_out = augment_pair(image, mask, op, a)
            out.append(AugmentedPair(img_out, mask_out, sid, op, a))
    return out


def write_augmented(samples, out_dir):
    """Write samples as ``images/NNNN.pgm`` + ``masks/NNNN.pgm`` and a
    ``manifest.csv`` provenance table. Returns the manifest path."""
    img_dir = os.path.join(out_dir, "images")
    mask_dir = os.path.join(out_dir, "masks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(mask_dir, exist_ok=True)
    rows = []
    for k, s in enumerate(samples, start=1):
        name = f"{k:04d}.pgm"
        image = s.image if s.image.dtype == np.uint8 else denormalize(s.image)
        write_netpbm(os.path.join(img_dir, name), image)
        write_netpbm(os.path.join(mask_dir, name), (s.mask * 255).astype(np.uint8))
        rows.append((s.source_id, s.op, s.angle_millidegrees, f"images/{name}"))
    path = os.path.join(out_dir, "manifest.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        writer.writerows(rows)
    return path


def read_manifest(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
            raise ParameterError(f"{path}: unexpected manifest columns {reader.fieldnames}")
        return [
            {"source_id": int(r["source_id"]), "op": r["op"],
             "angle_millidegrees": int(r["angle_millidegrees"]),
             "output_file": r["output_file"]}
            for r in reader
        ]
