"""Pixel confusion counts, overlap metrics and ROC analysis.

Vessel (1) is the positive class. A metric whose denominator is zero raises
:class:`~fvkit.errors.UndefinedMetricError` instead of returning 0, so a
degenerate image can never be silently averaged in.

Jaccard is intersection over union, ``tp / (tp + fp + fn)``, which also
equals ``f1 / (2 - f1)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, UndefinedMetricError

METRIC_NAMES = ("jaccard", "precision", "recall", "f1", "accuracy", "roc_auc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


def _binary(a, name):
    a = np.asarray(a)
    if a.dtype == np.bool_:
        return a
    if not np.isin(a, (0, 1)).all():
        raise ParameterError(f"{name} must be binary (0/1)")
    return a.astype(bool)


def confusion(truth, pred):
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ShapeError(f"truth {truth.shape} and prediction {pred.shape} differ")
    t = _binary(truth, "truth")
    p = _binary(pred, "prediction")
    tp = int(np.count_nonzero(t & p))
    fp = int(np.count_nonzero(~t & p))
    fn = int(np.count_nonzero(t & ~p))
    tn = int(t.size - tp - fp - fn)
    return ConfusionCounts(tp, fp, tn, fn)


def _ratio(num, den, metric):
    if den == 0:
        raise UndefinedMetricError(f"{metric} is undefined: zero denominator")
    return num / den


def jaccard(c):
    return _ratio(c.tp, c.tp + c.fp + c.fn, "jaccard")


def precision(c):
    return _ratio(c.tp, c.tp + c.fp, "precision")


def recall(c):
    return _ratio(c.tp, c.tp + c.fn, "recall")


def f1(c):
    p = precision(c)
    r = recall(c)
    return _ratio(2 * p * r, p + r, "f1")


def accuracy(c):
    return _ratio(c.tp + c.tn, c.total, "accuracy")


def jaccard_from_f1(f1_score):
    return f1_score / (2.0 - f1_score)


def f1_from_jaccard(j):
    return 2.0 * j / (1.0 + j)


def binary_auc(tpr, tnr):
    """AUC of the three-point curve (0,0)-(1-tnr, tpr)-(1,1)."""
    return (tpr + tnr) / 2.0


# -- ROC -------------------------------------------------------------------

@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    mode: str = "continuous"

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def trapezoid_auc(fpr, tpr):
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def _thresholds(scores, levels, strategy):
    if strategy == "uniform":
        return np.linspace(0.0, 1.0, levels)
    if strategy == "quantile":
        if levels is None:
            return np.unique(scores)
        qs = np.linspace(0.0, 1.0, levels)
        return np.unique(np.quantile(scores, qs, method="inverted_cdf"))
    raise ParameterError(f"unknown threshold strategy {strategy!r}")


def roc_curve(truth, prob, mode="continuous", levels=256, thresholds="uniform"):
    """(FPR, TPR) curve from (1, 1) down to (0, 0), reported in ascending FPR.

    ``continuous`` sweeps ``prob >= t`` over the chosen thresholds plus the
    two endpoints; ``binary`` thresholds once at 0.5 and yields the
    three-point elbow curve.
    """
    truth = np.asarray(truth)
    prob = np.asarray(prob, dtype=np.float64)
    if truth.shape != prob.shape:
        raise ShapeError(f"truth {truth.shape} and probabilities {prob.shape} differ")
    t = _binary(truth, "truth").ravel()
    s = prob.ravel()
    n_pos = int(np.count_nonzero(t))
    n_neg = int(t.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both classes present in the ground truth")

    if mode == "binary":
        c = confusion(t, s >= 0.5)
        fpr_pt = c.fp / n_neg
        tpr_pt = c.tp / n_pos
        fpr = np.array([0.0, fpr_pt, 1.0])
        tpr = np.array([0.0, tpr_pt, 1.0])
        return RocCurve(fpr, tpr, binary_auc(tpr_pt, 1.0 - fpr_pt), mode)
    if mode != "continuous":
        raise ParameterError(f"ROC mode must be 'continuous' or 'binary', got {mode!r}")

    pos = np.sort(s[t])
    neg = np.sort(s[~t])
    th = np.sort(_thresholds(s, levels, thresholds))[::-1]
    tp = n_pos - np.searchsorted(pos, th, side="left")
    fp = n_neg - np.searchsorted(neg, th, side="left")
    tpr = np.concatenate([[0.0], tp / n_pos, [1.0]])
    fpr = np.concatenate([[0.0], fp / n_neg, [1.0]])
    keep = np.ones(fpr.size, dtype=bool)
    keep[1:] = (np.diff(fpr) != 0) | (np.diff(tpr) != 0)
    fpr, tpr = fpr[keep], tpr[keep]
    return RocCurve(fpr, tpr, trapezoid_auc(fpr, tpr), mode)


# -- aggregate report ------------------------------------------------------

@dataclass
class MetricsReport:
    jaccard: float
    precision: float
    recall: float
    f1: float
    accuracy: float
    roc_auc: float
    aggregation: str = "pooled"
    roc_mode: str = "binary"
    counts: ConfusionCounts = None
    per_image: list = field(default_factory=list)

    def rows(self):
        return [(name, getattr(self, name)) for name in METRIC_NAMES]


def _metric_dict(c):
    return {
        "jaccard": jaccard(c),
        "precision": precision(c),
        "recall": recall(c),
        "f1": f1(c),
        "accuracy": accuracy(c),
    }


def _safe_metrics(c):
    out = {}
    for name, fn in (("jaccard", jaccard), ("precision", precision), ("recall", recall),
                     ("f1", f1), ("accuracy", accuracy)):
        try:
            out[name] = fn(c)
        except UndefinedMetricError:
            out[name] = None
    return out


def summarize(truths, probs, threshold=0.5, aggregation="pooled", roc_mode="binary",
              levels=256, thresholds="uniform"):
    """Metrics over a set of (truth mask, probability map) pairs.

    ``pooled`` sums confusion counts over all images (and pools pixels for the
    ROC); ``per-image-mean`` averages each image's metric values.
    """
    if aggregation not in ("pooled", "per-image-mean"):
        raise ParameterError(f"unknown aggregation {aggregation!r}")
    truths = [np.asarray(t) for t in truths]
    probs = [np.asarray(p, dtype=np.float64) for p in probs]
    if not truths:
        raise ParameterError("no images to evaluate")
    per_counts = [confusion(t, p >= threshold) for t, p in zip(truths, probs)]
    per_image = []
    for i, (c, t, p) in enumerate(zip(per_counts, truths, probs)):
        row = {"index": i, "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn}
        row.update(_safe_metrics(c))
        try:
            row["roc_auc"] = roc_curve(t, p, roc_mode, levels, thresholds).auc
        except UndefinedMetricError:
            row["roc_auc"] = None
        per_image.append(row)

    pooled = per_counts[0]
    for c in per_counts[1:]:
        pooled = pooled + c
    if aggregation == "pooled":
        values = _metric_dict(pooled)
        t_all = np.concatenate([t.ravel() for t in truths])
        p_all = np.concatenate([p.ravel() for p in probs])
        values["roc_auc"] = roc_curve(t_all, p_all, roc_mode, levels, thresholds).auc
    else:
        values = {}
        for name in METRIC_NAMES:
            col = [row[name] for row in per_image]
            missing = [row["index"] for row in per_image if row[name] is None]
            if missing:
                raise UndefinedMetricError(
                    f"{name} is undefined for image(s) {missing}; per-image mean not defined"
                )
            values[name] = float(np.mean(col))
    return MetricsReport(aggregation=aggregation, roc_mode=roc_mode, counts=pooled,
                         per_image=per_image, **values)
