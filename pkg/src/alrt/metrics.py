"""Threshold metrics, AUROC and AUPRC for pooled binary predictions.

AUROC is the Mann-Whitney statistic with ties counted as one half, computed
from average ranks. AUPRC is average precision: the precision-recall step
curve swept over distinct descending thresholds, without interpolation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

TABLE_COLUMNS = ("Specificity", "Sensitivity", "Precision", "Accuracy", "AUROC", "AUPRC")
DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass
class EvalReport:
    specificity: float
    sensitivity: float
    precision: float
    accuracy: float
    auroc: float
    auprc: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = DEFAULT_THRESHOLD
    flags: list[str] = field(default_factory=list)

    def table_values(self) -> tuple[float, ...]:
        return (self.specificity, self.sensitivity, self.precision, self.accuracy, self.auroc, self.auprc)

    def to_dict(self) -> dict:
        return asdict(self)


def _check(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if p.shape != y.shape:
        raise ConfigError(f"{p.size} scores but {y.size} labels")
    return p, y.astype(bool)


def confusion_at_threshold(probs, labels, threshold: float = DEFAULT_THRESHOLD) -> Confusion:
    """Counts with prediction 1 iff ``p >= threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError("threshold must lie in (0, 1)")
    p, y = _check(probs, labels)
    pred = p >= threshold
    return Confusion(
        tp=int(np.count_nonzero(pred & y)),
        fp=int(np.count_nonzero(pred & ~y)),
        tn=int(np.count_nonzero(~pred & ~y)),
        fn=int(np.count_nonzero(~pred & y)),
    )


def auroc(probs, labels) -> float:
    p, y = _check(probs, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("AUROC is undefined with a single class")
    uniq, inverse, counts = np.unique(p, return_inverse=True, return_counts=True)
    below = np.cumsum(counts) - counts
    avg_rank = below + (counts + 1) / 2.0
    rank_sum = float(avg_rank[inverse][y].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def precision_recall_points(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) at every distinct threshold, highest threshold first."""
    p, y = _check(probs, labels)
    order = np.argsort(-p, kind="stable")
    p_sorted, y_sorted = p[order], y[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(p_sorted) != 0), p_sorted.size - 1]
    tp = np.cumsum(y_sorted)[last_of_run]
    predicted = last_of_run + 1
    return tp / y.sum(), tp / predicted


def auprc(probs, labels) -> float:
    _, y = _check(probs, labels)
    if not y.any():
        raise ConfigError("AUPRC is undefined without positives")
    recall, precision = precision_recall_points(probs, labels)
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


def _ratio(num: int, den: int, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(f"{name}_undefined")
        return 0.0
    return num / den


def evaluate(probs, labels, threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    c = confusion_at_threshold(probs, labels, threshold)
    flags: list[str] = []
    return EvalReport(
        specificity=_ratio(c.tn, c.tn + c.fp, "specificity", flags),
        sensitivity=_ratio(c.tp, c.tp + c.fn, "sensitivity", flags),
        precision=_ratio(c.tp, c.tp + c.fp, "precision", flags),
        accuracy=(c.tp + c.tn) / (c.tp + c.tn + c.fp + c.fn),
        auroc=auroc(probs, labels),
        auprc=auprc(probs, labels),
        tp=c.tp, fp=c.fp, tn=c.tn, fn=c.fn,
        threshold=threshold,
        flags=flags,
    )


def pool_predictions(
    per_patient_probs: Sequence[np.ndarray], per_patient_labels: Sequence[np.ndarray], mode: str = "timestep"
) -> tuple[np.ndarray, np.ndarray]:
    """Flatten per-patient outputs for evaluation.

    ``timestep`` concatenates every hour; ``patient`` keeps one score per
    patient (its maximum hourly probability) against "any positive hour".
    """
    if mode == "timestep":
        return np.concatenate(per_patient_probs), np.concatenate(per_patient_labels)
    if mode == "patient":
        return (
            np.array([p.max() for p in per_patient_probs]),
            np.array([int(np.any(y)) for y in per_patient_labels]),
        )
    raise ConfigError(f"unknown evaluation mode {mode!r}")


def mean_report(reports: Sequence[EvalReport]) -> EvalReport:
    """Field-wise arithmetic mean; counts are summed."""
    if not reports:
        raise ConfigError("no reports to average")
    avg = {name: float(np.mean([getattr(r, name) for r in reports])) for name in
           ("specificity", "sensitivity", "precision", "accuracy", "auroc", "auprc")}
    counts = {name: int(sum(getattr(r, name) for r in reports)) for name in ("tp", "fp", "tn", "fn")}
    flags = sorted({f for r in reports for f in r.flags})
    return EvalReport(**avg, **counts, threshold=reports[0].threshold, flags=flags)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def write_table_csv(path, rows: Iterable[tuple[str, EvalReport]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Model", *TABLE_COLUMNS])
        for name, rep in rows:
            w.writerow([name, *(_fmt(v) for v in rep.table_values())])
