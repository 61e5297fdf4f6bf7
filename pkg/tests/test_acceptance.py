"""Binding acceptance suite. Each test prints one ``criterion N: PASS|FAIL`` line.

Criterion 9 (full-size reproduction) is opt-in: set ``FVKIT_FULL=1`` and
``FVKIT_DRIVE=<dir with images/ and masks/>``.
"""

import csv
import math
import os
import time

import numpy as np
import pytest

from fvkit import functional as F
from fvkit.augment import AugmentSpec, augment_dataset, write_augmented
from fvkit.clahe import ClaheConfig, ahe, clahe, tile_mappings
from fvkit.cli import main
from fvkit.datasets import make_fundus_pair, write_synthetic_drive
from fvkit.gradcheck import standard_suite
from fvkit.losses import LossConfig, bce_loss, dice_bce_loss, dice_loss
from fvkit.metrics import (accuracy, binary_auc, confusion, f1, f1_from_jaccard, jaccard,
                           jaccard_from_f1, precision, recall, summarize)
from fvkit.preprocess import normalize, preprocess_image, preprocess_mask
from fvkit.tensor import Tensor
from fvkit.training import TrainConfig, train
from fvkit.unet import UNetConfig, forward

from oracles import (clahe_scalar, conv2d_naive, conv_transpose2d_naive, maxpool_naive,
                     metrics_naive)

METRIC_FNS = {"jaccard": jaccard, "precision": precision, "recall": recall, "f1": f1,
              "accuracy": accuracy}


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {number}: {detail}"
    return emit


def test_criterion_1_gradient_integrity(report):
    start = time.perf_counter()
    results = standard_suite(seed=0)
    elapsed = time.perf_counter() - start
    worst_name = max(results, key=lambda k: results[k].max_rel_error)
    worst = results[worst_name].max_rel_error
    expected = {"conv2d", "conv1x1", "conv_transpose2d", "batchnorm2d", "relu", "sigmoid",
                "maxpool2x2", "dice_bce_loss", "unet_depth1"}
    ok = set(results) == expected and worst < 1e-3 and elapsed < 60
    report(1, ok, f"worst {worst:.2e} ({worst_name}), {elapsed:.1f}s")


def test_criterion_2_oracle_equivalence(report):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    mismatches = {"conv2d": 0, "conv_transpose2d": 0, "maxpool": 0, "metrics": 0}
    trials = 100
    for _ in range(trials):
        n, c, o = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        h, w = rng.integers(1, 7), rng.integers(1, 7)
        x = rng.standard_normal((n, c, h, w)).astype(np.float32)
        k = rng.standard_normal((o, c, 3, 3)).astype(np.float32)
        b = rng.standard_normal(o).astype(np.float32)
        got = F.conv2d(Tensor(x), Tensor(k), Tensor(b)).data
        mismatches["conv2d"] += not np.array_equal(got, conv2d_naive(x, k, b))

        kt = rng.standard_normal((c, o, 2, 2)).astype(np.float32)
        got = F.conv_transpose2d(Tensor(x), Tensor(kt), Tensor(b)).data
        mismatches["conv_transpose2d"] += not np.array_equal(got,
                                                             conv_transpose2d_naive(x, kt, b))

        xp = rng.integers(-3, 4, (n, c, 2 * h, 2 * w)).astype(np.float32)
        t = Tensor(xp, requires_grad=True)
        F.tsum(F.maxpool2x2(t)).backward()
        ref, winners = maxpool_naive(xp)
        mismatches["maxpool"] += not (np.array_equal(F.maxpool2x2(Tensor(xp)).data, ref)
                                      and np.array_equal(t.grad != 0, winners))

        truth = rng.random((32, 32)) < rng.uniform(0.02, 0.5)
        pred = rng.random((32, 32)) < rng.uniform(0.0, 0.5)
        expected = metrics_naive(truth, pred)
        counts = confusion(truth, pred)
        for name, fn in METRIC_FNS.items():
            if expected[name] is None:
                continue
            mismatches["metrics"] += fn(counts) != expected[name]
    elapsed = time.perf_counter() - start
    ok = not any(mismatches.values()) and elapsed < 60
    report(2, ok, f"{trials} instances each, mismatches {mismatches}, {elapsed:.1f}s")


def test_criterion_3_loss_values(report):
    def p(v):
        return Tensor(np.array(v, dtype=np.float32))

    bce = bce_loss(p([1.0]), p([0.5])).item()
    dice = dice_loss(p([1.0]), p([1.0])).item()
    combo = dice_bce_loss(p([1.0]), p([0.5])).item()
    ok = (abs(bce - math.log(2)) <= 1e-6 and dice < 1e-5 and abs(combo - 1.0265) <= 1e-3)
    report(3, ok, f"BCE {bce:.7f}, Dice {dice:.2e}, DiceBCE {combo:.5f}")


def test_criterion_4_overfit_smoke(report):
    image, mask = make_fundus_pair(0, 64, 64)
    x = preprocess_image(image, 64, ClaheConfig())[None]
    y = preprocess_mask(mask, 64)[None]
    model = UNetConfig(depth=2, base_channels=8, dropout_p=0.0)
    start = time.perf_counter()
    res = train(model, TrainConfig(epochs=200, batch_size=1, learning_rate=1e-3), LossConfig(),
                x, y)
    elapsed = time.perf_counter() - start
    prob = forward(res.params, Tensor(x[:, None]), "eval").data[0, 0]
    loss = res.logs[-1].train_loss
    score = summarize([y[0]], [prob]).f1
    ok = loss < 0.2 and score > 0.95 and elapsed < 120
    report(4, ok, f"{res.steps} steps, final DiceBCE {loss:.4f}, F1 {score:.4f}, "
                  f"{elapsed:.1f}s")


def test_criterion_5_table_identities(report):
    j = jaccard_from_f1(0.8069)
    auc = binary_auc(0.8051, 0.9811)
    f1_back = f1_from_jaccard(0.6766)
    ok = abs(j - 0.6766) < 5e-4 and abs(auc - 0.8931) < 1e-4 and abs(f1_back - 0.8071) < 1e-4
    report(5, ok, f"J {j:.4f}, AUC {auc:.5f}, F1 from J {f1_back:.4f}")


def test_criterion_6_pipeline_counts(report, tmp_path):
    pairs = [(normalize(make_fundus_pair(i, 32, 32)[0][..., 1]), make_fundus_pair(i, 32, 32)[1])
             for i in range(30)]
    samples = augment_dataset(pairs, AugmentSpec(seed=0), source_ids=list(range(1, 31)))
    path = write_augmented(samples, str(tmp_path))
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    files_ok = all(os.path.exists(os.path.join(tmp_path, r["output_file"])) for r in rows)
    per_source = {}
    for r in rows:
        per_source.setdefault(int(r["source_id"]), []).append(r["op"])
    manifest_ok = (files_ok and len(per_source) == 30
                   and all(sorted(v) == ["hflip", "identity", "rotate", "vflip"]
                           for v in per_source.values()))

    x = np.stack([s.image for s in samples]).astype(np.float32)[:, :16, :16]
    y = np.stack([s.mask for s in samples]).astype(np.uint8)[:, :16, :16]
    res = train(UNetConfig(depth=1, base_channels=1, dropout_p=0.0),
                TrainConfig(epochs=1, batch_size=2), LossConfig(), x, y)
    ok = len(samples) == 120 and manifest_ok and res.steps_per_epoch == 60
    report(6, ok, f"{len(samples)} augmented pairs, manifest rows {len(rows)}, "
                  f"{res.steps_per_epoch} steps/epoch")


def test_criterion_7_clahe(report):
    img = np.full((64, 64), 50, np.uint8)
    img[:, 32:] = 200
    cfg = ClaheConfig(tiles_x=2, tiles_y=2, clip_factor=2.0)
    ref, _ = clahe_scalar(img, 2, 2, 2.0)
    exact = np.array_equal(clahe(img, cfg), ref)

    rng = np.random.default_rng(7)
    monotone = no_clip = True
    for _ in range(20):
        r = rng.integers(0, 256, (48, 40), dtype=np.uint8)
        maps = tile_mappings(r, ClaheConfig(4, 4, rng.uniform(1, 6)))
        monotone &= bool(np.all(np.diff(maps, axis=-1) >= 0) and np.all(maps[..., 255] == 255))
        big = ClaheConfig(4, 4, 256.0)
        no_clip &= bool(np.array_equal(clahe(r, big), ahe(r, big))
                        and np.array_equal(ahe(r, big), clahe_scalar(r, 4, 4, clip=False)[0]))
    report(7, exact and monotone and no_clip,
           f"two-tone exact {exact}, monotone {monotone}, no-clip == AHE {no_clip}")


RUN_INI = """[data]
root = {root}
[split]
train_count = 3
test_count = 1
[preprocess]
size = 64
[model]
depth = 2
base_channels = 8
[train]
epochs = 2
batch_size = 2
seed = 0
"""


def test_criterion_8_determinism(report, tmp_path):
    root = write_synthetic_drive(str(tmp_path / "data"), n_images=4, height=96, width=92)
    cfg = tmp_path / "run.ini"
    cfg.write_text(RUN_INI.format(root=root))
    start = time.perf_counter()
    codes = [main(["train", "--config", str(cfg), "--out", str(tmp_path / run), "--threads", "1"])
             for run in ("a", "b")]
    elapsed = time.perf_counter() - start
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("epochs.csv", "final.fvk")}
    epochs = len((tmp_path / "a" / "epochs.csv").read_text().splitlines()) - 1
    ok = codes == [0, 0] and all(same.values()) and epochs == 2 and elapsed < 300
    report(8, ok, f"exit {codes}, identical {same}, {epochs} epochs, {elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_9_full_reproduction(report, tmp_path):
    root = os.environ.get("FVKIT_DRIVE")
    if not root:
        pytest.skip("FVKIT_DRIVE not set")
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[data]\nroot = {root}\n[train]\nepochs = 50\nbatch_size = 2\n"
                   "learning_rate = 0.0001\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["evaluate", "--checkpoint", str(tmp_path / "run" / "final.fvk"),
                 "--data", root, "--split", str(tmp_path / "run" / "split.csv"),
                 "--out", str(tmp_path / "eval")]) == 0
    with open(tmp_path / "eval" / "metrics.csv", newline="") as fh:
        values = {r["metric"]: float(r["value"]) for r in csv.DictReader(fh)}
    ok = values["f1"] >= 0.75 and values["roc_auc"] >= 0.85 and values["accuracy"] >= 0.94
    report(9, ok, ", ".join(f"{k} {v:.4f}" for k, v in values.items()))
