"""Precision-recall evaluation of occupancy maps.

AUPRC uses trapezoidal interpolation over recall (stated here because
step interpolation gives different areas); the curve starts from an
anchor at recall 0 carrying the precision of the strictest threshold,
so a constant-score input integrates exactly to the positive ratio.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import hilbert_map as hm


@dataclass(frozen=True)
class PRCurve:
    """PR points sorted by ascending recall, plus the swept thresholds.

    recall/precision have one leading anchor entry (recall 0), so their
    length is len(thresholds) + 1.
    """

    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray
    auprc: float

    @property
    def points(self):
        return list(zip(self.recall.tolist(), self.precision.tolist()))


def trapezoid_area(recall, precision):
    """Trapezoidal area under (recall, precision) points."""
    r = np.asarray(recall, dtype=np.float64)
    p = np.asarray(precision, dtype=np.float64)
    return float(np.sum(0.5 * (p[1:] + p[:-1]) * (r[1:] - r[:-1])))


def pr_curve(scores, labels):
    """Precision-recall curve from a threshold sweep over distinct scores.

    Thresholds run over the distinct scores descending; a prediction is
    positive when its score >= threshold. Needs at least one positive
    label.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    if scores.size == 0:
        raise ValueError("cannot build a PR curve from no samples")
    if not np.isfinite(scores).all():
        raise ValueError("scores contain non-finite values")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUPRC is undefined without positive labels")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order].astype(np.float64)
    tp = np.cumsum(sorted_labels)
    predicted = np.arange(1, scores.size + 1, dtype=np.float64)
    # Last index of each distinct score = the sweep point at that threshold.
    distinct = np.flatnonzero(
        np.diff(sorted_scores, append=sorted_scores[-1] - 1.0)
    )
    recall = tp[distinct] / n_pos
    precision = tp[distinct] / predicted[distinct]
    thresholds = sorted_scores[distinct]

    recall = np.concatenate([[0.0], recall])
    precision = np.concatenate([[precision[0]], precision])
    return PRCurve(
        recall=recall,
        precision=precision,
        thresholds=thresholds,
        auprc=trapezoid_area(recall, precision),
    )


def evaluate_map(posterior, grid, eval_points, eval_labels, features=None):
    """PR curve of predicted occupancy over a labeled evaluation set."""
    prob, _, _ = hm.query_arrays(posterior, grid, eval_points, features=features)
    return pr_curve(prob, eval_labels)


def detection_stop(readings, anatomy, threshold):
    """True once the sensed fraction of tumor points reaches the threshold."""
    from . import sensor as sensor_mod

    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must lie in (0, 1]")
    return sensor_mod.coverage_fraction(readings, anatomy) >= threshold


def write_pr_csv(path, curve):
    """Export threshold,recall,precision rows (anchor row threshold=inf)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "recall", "precision"])
        writer.writerow(["inf", repr(float(curve.recall[0])),
                         repr(float(curve.precision[0]))])
        for thr, rec, prec in zip(
            curve.thresholds, curve.recall[1:], curve.precision[1:]
        ):
            writer.writerow([repr(float(thr)), repr(float(rec)), repr(float(prec))])
