"""Command-line entry point: ``fvkit <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(unreadable/malformed input, bad checkpoint, undefined metric), 3 numeric
failure (non-finite loss or gradient, out of memory).
"""

import argparse
import contextlib
import csv
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .augment import AugmentSpec, augment_dataset, write_augmented
from .checkpoint import load_checkpoint
from .config import load_run_config
from .dataset import load_pair, scan_dataset
from .eda import write_stats
from .errors import (DataError, FvkitError, NumericError, ParameterError, ShapeError,
                     UndefinedMetricError)
from .gradcheck import standard_suite
from .netpbm import read_netpbm, write_netpbm
from .pipeline import evaluate_checkpoint, predict_probability, prepare, run_training
from .preprocess import denormalize, normalize, to_grayscale
from .report import emit_report
from .tensor import deterministic
from .training import read_log_csv
from .unet import binarize

log = logging.getLogger("fvkit")

GRADCHECK_TOL = 1e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is reserved for data errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _ids_label(ident):
    return f"{ident:02d}"


def _load_gray_u8(image):
    return image if image.ndim == 2 else to_grayscale(image)


# -- subcommands -----------------------------------------------------------

def cmd_stats(args):
    manifest = scan_dataset(args.data_root)
    images, masks = [], []
    for entry in manifest.entries:
        img, mask = load_pair(entry)
        images.append(img)
        masks.append(mask)
    written = write_stats(args.out, images, masks)
    print(f"{len(images)} pairs summarized: {', '.join(written)}")
    return 0


def cmd_preprocess(args):
    manifest = scan_dataset(args.data_root)
    meta = {"size": args.size, "grayscale": args.grayscale, "clahe": not args.no_clahe,
            "tiles_x": args.tiles, "tiles_y": args.tiles, "clip_factor": args.clip_factor}
    os.makedirs(os.path.join(args.out, "images"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "masks"), exist_ok=True)
    for entry in manifest.entries:
        img, mask = prepare(*load_pair(entry), meta)
        name = _ids_label(entry.id) + ".pgm"
        write_netpbm(os.path.join(args.out, "images", name), denormalize(img))
        write_netpbm(os.path.join(args.out, "masks", name), mask * 255)
    print(f"{len(manifest)} pairs preprocessed to {args.size}x{args.size} in {args.out}")
    return 0


def cmd_augment(args):
    manifest = scan_dataset(args.dir)
    pairs = []
    for entry in manifest.entries:
        img, mask = load_pair(entry)
        pairs.append((normalize(_load_gray_u8(img)), mask))
    spec = AugmentSpec(seed=args.seed, rotation_range=args.rotation_range)
    samples = augment_dataset(pairs, spec, source_ids=manifest.ids())
    path = write_augmented(samples, args.out)
    print(f"{len(pairs)} source pairs -> {len(samples)} augmented pairs; manifest {path}")
    return 0


def cmd_train(args):
    cfg = load_run_config(args.config)
    result = run_training(cfg, args.out, record_time=args.threads != 1)
    last = result.logs[-1] if result.logs else None
    print(f"{result.steps} steps ({result.steps_per_epoch} per epoch) over "
          f"{len(result.logs)} epochs")
    if last is not None:
        val = "n/a" if last.val_loss is None else f"{last.val_loss:.6f}"
        print(f"final train_loss {last.train_loss:.6f}, val_loss {val}")
    return 0


def cmd_predict(args):
    params, header = load_checkpoint(args.checkpoint, with_header=True)
    image = read_netpbm(args.image)
    prob = predict_probability(params, header, image)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_netpbm(args.out, binarize(prob, args.threshold) * 255)
    if args.prob:
        q = np.floor(np.asarray(prob, dtype=np.float64) * 255.0 + 0.5)
        write_netpbm(args.prob, q.astype(np.uint8))
    print(f"mask written to {args.out} ({prob.shape[1]}x{prob.shape[0]})")
    return 0


def _split_ids(path, role):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"id", "role"}:
        raise DataError(f"{path}: expected columns id,role")
    ids = [int(r["id"]) for r in rows if r["role"] == role]
    if not ids:
        raise DataError(f"{path}: no entries with role {role!r}")
    return ids


def cmd_evaluate(args):
    params, header = load_checkpoint(args.checkpoint, with_header=True)
    manifest = scan_dataset(args.data)
    ids = _split_ids(args.split, args.role) if args.split else None
    report, rocs = evaluate_checkpoint(params, header, manifest, ids, args.threshold,
                                       args.aggregation, args.roc_mode)
    logs = read_log_csv(args.log) if args.log else []
    emit_report(report, rocs[args.roc_mode], logs, args.out)
    with open(os.path.join(args.out, "auc.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mode", "auc"))
        for mode in ("binary", "continuous"):
            w.writerow((mode, repr(float(rocs[mode].auc))))
    for name, value in report.rows():
        print(f"{name:10s} {value:.4f}")
    return 0


def cmd_gradcheck(args):
    results = standard_suite(args.seed)
    worst = 0.0
    for name, rep in results.items():
        status = "ok" if rep.passed(GRADCHECK_TOL) else "FAIL"
        print(f"{name:18s} max_rel_error {rep.max_rel_error:.3e}  {status}")
        worst = max(worst, rep.max_rel_error)
    if worst >= GRADCHECK_TOL:
        print(f"gradient check failed: worst {worst:.3e} >= {GRADCHECK_TOL:g}", file=sys.stderr)
        return 3
    return 0


# -- parser ----------------------------------------------------------------

def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/worker threads; 1 forces the bitwise-deterministic "
                             "path and logs wall_seconds as 0")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="fvkit", description="Retinal vessel segmentation toolkit.",
                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                           formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    p = add("stats", cmd_stats, "dataset summary: mean image/mask, histograms, correlations")
    p.add_argument("data_root", help="directory with images/ and masks/")
    p.add_argument("--out", required=True, help="output directory")

    p = add("preprocess", cmd_preprocess, "grayscale, CLAHE and resize a dataset to PGM")
    p.add_argument("data_root", help="directory with images/ and masks/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=512, help="output side length")
    p.add_argument("--no-clahe", action="store_true", help="skip contrast equalization")
    p.add_argument("--grayscale", choices=("luma", "green"), default="luma",
                   help="color to gray conversion")
    p.add_argument("--tiles", type=int, default=8, help="CLAHE tiles per axis")
    p.add_argument("--clip-factor", type=float, default=2.0, help="CLAHE clip factor")

    p = add("augment", cmd_augment, "expand a dataset four-fold (identity, flips, rotation)")
    p.add_argument("dir", help="directory with images/ and masks/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="rotation seed")
    p.add_argument("--rotation-range", type=float, default=30.0,
                   help="rotation angle drawn uniformly in [-r, r] degrees")

    p = add("train", cmd_train, "train a U-Net from a run config")
    p.add_argument("--config", required=True, help="INI run config")
    p.add_argument("--out", required=True, help="output directory")

    p = add("predict", cmd_predict, "segment one image with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint file (.fvk)")
    p.add_argument("--image", required=True, help="input PGM/PPM")
    p.add_argument("--out", required=True, help="binary mask PGM to write (0/255)")
    p.add_argument("--prob", default=None,
                   help="optional probability map PGM, value round(255*p)")
    p.add_argument("--threshold", type=float, default=0.5, help="binarization threshold")

    p = add("evaluate", cmd_evaluate, "metrics, ROC and plots for a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint file (.fvk)")
    p.add_argument("--data", required=True, help="directory with images/ and masks/")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threshold", type=float, default=0.5, help="binarization threshold")
    p.add_argument("--roc-mode", choices=("continuous", "binary"), default="binary",
                   help="ROC used for roc_auc, roc.csv and roc.svg")
    p.add_argument("--aggregation", choices=("pooled", "per-image-mean"), default="pooled",
                   help="how metrics combine across images")
    p.add_argument("--split", default=None, help="split.csv from a train run")
    p.add_argument("--role", choices=("train", "val", "test"), default="test",
                   help="which split rows to evaluate when --split is given")
    p.add_argument("--log", default=None, help="epochs.csv to plot as loss.svg")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of every op (float64)")
    p.add_argument("--seed", type=int, default=0, help="seed for the random probes")
    return parser


def _exit_code(exc):
    if isinstance(exc, (NumericError, MemoryError)):
        return 3
    if isinstance(exc, (DataError, UndefinedMetricError, OSError)):
        return 2
    if isinstance(exc, (ParameterError, ShapeError, UsageError)):
        return 1
    return 2 if isinstance(exc, FvkitError) else None


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.threads is not None and args.threads < 1:
        print(f"fvkit {args.command}: error: --threads must be >= 1", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    limits = (threadpool_limits(limits=args.threads) if args.threads
              else contextlib.nullcontext())
    if args.threads is None:
        mode = contextlib.nullcontext()
    else:
        mode = deterministic(args.threads == 1)
    try:
        with limits, mode:
            return args.func(args)
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"fvkit {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
