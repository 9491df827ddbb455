"""Uncertainty scores for binary per-timestep predictions and top-k selection.

For a probability ``p`` the two class probabilities are ``(p, 1 - p)``. Each
scorer sums a per-timestep quantity over the sequence; the ``norm_*`` variants
divide by the sequence length so long stays are not favoured.

========== ============================= =====================
method     per-timestep quantity          most uncertain
========== ============================= =====================
lc         1 - max(p, 1 - p)              largest
margin     |p - (1 - p)|                  smallest
entropy    -p ln p - (1 - p) ln(1 - p)    largest
========== ============================= =====================
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

METHODS = ("lc", "margin", "entropy", "norm_lc", "norm_margin", "norm_entropy")
BASE_METHODS = ("lc", "margin", "entropy")
# row suffixes used in the results table
SHORT_NAMES = {"lc": "lc", "margin": "m", "entropy": "e"}


@dataclass(frozen=True)
class UncertaintyScore:
    patient_id: str
    score: float
    method: str

    @property
    def uncertainty(self) -> float:
        """Sort key where larger always means more uncertain."""
        return -self.score if self.method.endswith("margin") else self.score


def _probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise ConfigError("cannot score an empty sequence")
    return p


def _reduce(values: np.ndarray, normalized: bool) -> float:
    return float(values.mean() if normalized else values.sum())


def score_least_confident(probs, normalized: bool = True) -> float:
    p = _probs(probs)
    return _reduce(1.0 - np.maximum(p, 1.0 - p), normalized)


def score_margin(probs, normalized: bool = True) -> float:
    """Mean (or summed) gap between the two class probabilities. Small is uncertain."""
    p = _probs(probs)
    return _reduce(np.abs(2.0 * p - 1.0), normalized)


def score_entropy(probs, normalized: bool = True) -> float:
    """Binary entropy in nats, with ``0 ln 0 = 0``."""
    p = _probs(probs)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0) - np.where(q > 0, q * np.log(q), 0.0)
    return _reduce(h, normalized)


_SCORERS = {"lc": score_least_confident, "margin": score_margin, "entropy": score_entropy}


def resolve_method(method: str, normalized: bool | None = None) -> str:
    """Canonical method name; ``normalized`` overrides any ``norm_`` prefix."""
    base = method[5:] if method.startswith("norm_") else method
    if base not in _SCORERS:
        raise ConfigError(f"unknown sampling method {method!r}")
    if normalized is None:
        normalized = method.startswith("norm_")
    return f"norm_{base}" if normalized else base


def score(probs, method: str) -> float:
    method = resolve_method(method)
    base = method[5:] if method.startswith("norm_") else method
    return _SCORERS[base](probs, normalized=method.startswith("norm_"))


def score_pool(pool_probs: dict[str, np.ndarray], method: str) -> list[UncertaintyScore]:
    method = resolve_method(method)
    return [UncertaintyScore(pid, score(p, method), method) for pid, p in pool_probs.items()]


TIE_DIGITS = 12


def _rank_key(s: UncertaintyScore) -> tuple[float, str]:
    # scores agreeing to TIE_DIGITS significant digits count as tied; this absorbs
    # last-bit rounding (p vs 1-p, summation order) so the id decides instead
    return -float(f"{s.uncertainty:.{TIE_DIGITS}g}"), s.patient_id


def select_batch(scores: Sequence[UncertaintyScore], k: int) -> list[str]:
    """The ``k`` most uncertain patient ids.

    Scores equal to 12 significant digits are ties, broken by ascending id.
    """
    methods = {s.method for s in scores}
    if len(methods) > 1:
        raise ConfigError(f"cannot rank mixed methods {sorted(methods)}")
    if k < 0 or k > len(scores):
        raise ConfigError(f"k={k} outside pool of size {len(scores)}")
    ranked = sorted(scores, key=_rank_key)
    return [s.patient_id for s in ranked[:k]]


def write_scores_csv(path, rows: Iterable[tuple[int, UncertaintyScore]]) -> None:
    """Audit file with columns ``patient_id, method, score, round``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "method", "score", "round"])
        for rnd, s in rows:
            w.writerow([s.patient_id, s.method, repr(s.score), rnd])
