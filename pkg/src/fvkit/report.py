"""Evaluation outputs: ``metrics.csv``, ``roc.csv``, ``roc.svg``, ``loss.svg``."""

import csv
import os

from .plots import line_chart_svg


def _num(v):
    return repr(float(v))


def emit_report(report, roc, logs, out_dir):
    """Write the evaluation files and return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    paths["metrics"] = os.path.join(out_dir, "metrics.csv")
    with open(paths["metrics"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("metric", "value"))
        for name, value in report.rows():
            w.writerow((name, _num(value)))

    paths["roc"] = os.path.join(out_dir, "roc.csv")
    with open(paths["roc"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fpr", "tpr"))
        for f, t in zip(roc.fpr, roc.tpr):
            w.writerow((_num(f), _num(t)))

    paths["roc_svg"] = os.path.join(out_dir, "roc.svg")
    with open(paths["roc_svg"], "w") as fh:
        fh.write(line_chart_svg(
            [(f"{roc.mode} AUC = {roc.auc:.4f}", roc.fpr, roc.tpr)],
            title="ROC", xlabel="false positive rate", ylabel="true positive rate",
            diagonal=True,
        ))

    logs = list(logs or [])
    epochs = [e.epoch for e in logs]
    train = [e.train_loss for e in logs]
    val = [e.val_loss for e in logs]
    losses = [v for v in train + val if v is not None]
    y_top = max(losses) * 1.05 if losses else 1.0
    x_hi = float(max(epochs)) if epochs else 1.0
    series = [("train", epochs, train)]
    if any(v is not None for v in val):
        series.append(("validation", epochs, val))
    paths["loss_svg"] = os.path.join(out_dir, "loss.svg")
    with open(paths["loss_svg"], "w") as fh:
        fh.write(line_chart_svg(
            series, title="DiceBCE loss", xlabel="epoch", ylabel="loss",
            x_range=(0.0, max(x_hi, 1.0)), y_range=(0.0, y_top),
        ))
    return paths
