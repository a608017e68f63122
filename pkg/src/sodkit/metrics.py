"""Evaluation: thresholded precision/recall curves, F-measure, MAE.

Predictions are quantized to the 256 byte levels and swept over every
integer threshold; per image this costs one histogram plus suffix sums
rather than 256 rescans.  Degenerate conventions: precision is 0 when
nothing is predicted, and images with an empty ground truth are excluded
from recall averaging (their count is reported).
"""

import csv
from dataclasses import dataclass

import numpy as np

BETA_SQ = 0.3

THRESHOLDS = np.arange(256)


@dataclass
class PrPoint:
    threshold: int
    precision: float
    recall: float


@dataclass
class MetricsReport:
    curve: list            # 256 PrPoints, dataset-averaged
    max_f: float
    mae: float
    per_image_mae: list
    empty_gt_count: int = 0


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if pred.size and (pred.min() < 0.0 or pred.max() > 1.0):
        raise ValueError("pred values must lie in [0, 1]")
    if not np.isin(gt, (0, 1)).all():
        raise ValueError("gt must be binary")
    return pred, gt.astype(bool)


def binarize(pred, t):
    """Foreground where the byte-quantized value reaches the threshold."""
    t = int(t)
    if not (0 <= t <= 255):
        raise ValueError(f"threshold must lie in 0..255; got {t}")
    pred = np.asarray(pred, dtype=np.float64)
    return (np.rint(pred * 255.0) >= t).astype(np.uint8)


def f_beta(p, r, beta_sq=BETA_SQ):
    """Weighted harmonic mean favoring precision; 0 when both inputs are 0."""
    if p == 0.0 and r == 0.0:
        return 0.0
    return (1.0 + beta_sq) * p * r / (beta_sq * p + r)


def pr_at(pred, gt, t):
    """Precision/recall of the binarized prediction at one threshold."""
    pred, gt = _check_pair(pred, gt)
    fg = binarize(pred, t).astype(bool)
    tp = int(np.count_nonzero(fg & gt))
    fp = int(np.count_nonzero(fg & ~gt))
    fn = int(np.count_nonzero(~fg & gt))
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    return PrPoint(int(t), p, r)


def mae(pred, gt):
    """Mean absolute per-pixel difference."""
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt.astype(np.float64)).mean())


def _pr_sweep(pred, gt):
    """Per-threshold precision and recall over all 256 thresholds.

    One histogram of quantized levels per image; TP/predicted-positive
    counts for every threshold fall out of suffix sums.
    """
    q = np.rint(pred * 255.0).astype(np.int64)
    hist_all = np.bincount(q.ravel(), minlength=256)
    hist_pos = np.bincount(q[gt].ravel(), minlength=256)
    # suffix sums: counts of pixels with level >= t
    pp = np.cumsum(hist_all[::-1])[::-1].astype(np.float64)
    tp = np.cumsum(hist_pos[::-1])[::-1].astype(np.float64)
    npos = float(gt.sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(pp > 0, tp / pp, 0.0)
    rec = tp / npos if npos > 0 else np.zeros(256)
    return prec, rec, npos


def evaluate_dataset(preds, gts, aggregation="average_then_f"):
    """Dataset metrics: averaged PR curve, its max F-measure, mean MAE.

    ``aggregation`` picks how per-image curves combine into the dataset
    F-measure: "average_then_f" averages precision and recall across
    images per threshold before applying the F formula; "f_then_average"
    computes per-image F first and averages that.
    """
    if aggregation not in ("average_then_f", "f_then_average"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise ValueError("empty dataset")
    n = len(preds)
    prec_sum = np.zeros(256)
    rec_sum = np.zeros(256)
    f_sum = np.zeros(256)
    rec_n = 0
    per_mae = []
    for pred, gt in zip(preds, gts):
        pred, gt = _check_pair(pred, gt)
        prec, rec, npos = _pr_sweep(pred, gt)
        prec_sum += prec
        if npos > 0:
            rec_sum += rec
            rec_n += 1
        both_zero = (prec == 0.0) & (rec == 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            f_img = np.where(both_zero, 0.0,
                             (1.0 + BETA_SQ) * prec * rec / (BETA_SQ * prec + rec))
        f_sum += f_img
        per_mae.append(float(np.abs(pred - gt.astype(np.float64)).mean()))
    avg_prec = prec_sum / n
    avg_rec = rec_sum / rec_n if rec_n > 0 else np.zeros(256)
    curve = [PrPoint(int(t), float(avg_prec[t]), float(avg_rec[t])) for t in THRESHOLDS]
    if aggregation == "average_then_f":
        max_f = max(f_beta(pt.precision, pt.recall) for pt in curve)
    else:
        max_f = float((f_sum / n).max())
    return MetricsReport(curve, float(max_f), float(np.mean(per_mae)), per_mae,
                         empty_gt_count=n - rec_n)


def write_metrics_csv(report, path, dataset_name):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "maxF", "MAE"])
        w.writerow([dataset_name, f"{report.max_f:.6f}", f"{report.mae:.6f}"])


def write_pr_csv(report, path):
    with open(path, "w", encoding="ascii", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for pt in report.curve:
            w.writerow([pt.threshold, f"{pt.precision:.6f}", f"{pt.recall:.6f}"])
