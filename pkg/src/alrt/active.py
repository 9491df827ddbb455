"""Pool-based active learning over patients, cross-validation and the full-data baseline.

One round trains a single epoch on the labeled pool, then scores every
unlabeled patient with the frozen model and moves the most uncertain ones
into the labeled pool. With the default schedule the labeled pool holds
20, 40, 60, 80 and 100 percent of the training patients during the five
training epochs.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import model as rnn
from .errors import ConfigError, NumericError
from .ingest import PatientRecord
from .metrics import EvalReport, evaluate, mean_report, pool_predictions
from .preprocess import ClassWeights, FeatureSequence, Pipeline, fit_pipeline
from .sampling import BASE_METHODS, SHORT_NAMES, UncertaintyScore, resolve_method, score, select_batch

N_FOLDS = 5


def derive_seed(root: int, *names) -> int:
    """Named child seed: stable across runs, platforms and Python hash salts."""
    key = "/".join([str(int(root)), *map(str, names)]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")


def _exact(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def quota(fraction, n: int) -> int:
    """``min(ceil(fraction * n), n)`` without floating-point rounding surprises."""
    return min(math.ceil(_exact(fraction) * n), n)


@dataclass
class FoldPlan:
    assignments: dict[str, int]
    seed: int
    n_folds: int = N_FOLDS

    def test_ids(self, fold: int) -> list[str]:
        return sorted(pid for pid, f in self.assignments.items() if f == fold)

    def train_ids(self, fold: int) -> list[str]:
        return sorted(pid for pid, f in self.assignments.items() if f != fold)


def patient_labels(records: Sequence[PatientRecord | FeatureSequence]) -> dict[str, int]:
    """Patient-level label: 1 if any hour is positive."""
    return {r.patient_id: int(np.any(r.labels)) for r in records}


def make_folds(cohort: Sequence[PatientRecord], seed: int, n_folds: int = N_FOLDS) -> FoldPlan:
    """Stratified patient-level fold assignment.

    Each class is shuffled and dealt round-robin; the negatives start where the
    positives stopped so overall fold sizes also differ by at most one.
    """
    labels = patient_labels(cohort)
    by_class = {c: sorted(pid for pid, y in labels.items() if y == c) for c in (1, 0)}
    for c, ids in by_class.items():
        if len(ids) < n_folds:
            raise ConfigError(f"need at least {n_folds} patients of class {c}, found {len(ids)}")
    rng = np.random.default_rng(seed)
    assignments = {}
    offset = 0
    for c in (1, 0):
        ids = by_class[c]
        for i, j in enumerate(rng.permutation(len(ids))):
            assignments[ids[j]] = (offset + i) % n_folds
        offset = (offset + len(ids)) % n_folds
    return FoldPlan(dict(sorted(assignments.items())), seed, n_folds)


@dataclass
class RoundRecord:
    round: int
    transferred: list[tuple[str, float]]


@dataclass
class PoolState:
    labeled: list[str]
    unlabeled: list[str]
    round: int = 0
    history: list[RoundRecord] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.labeled) + len(self.unlabeled)

    def transfer(self, ids: Sequence[str], scores: dict[str, float]) -> None:
        moving = set(ids)
        if len(moving) != len(ids) or not moving <= set(self.unlabeled):
            raise ConfigError("transfer ids must be distinct members of the unlabeled pool")
        self.labeled.extend(ids)
        self.unlabeled = [pid for pid in self.unlabeled if pid not in moving]
        self.history.append(RoundRecord(self.round, [(pid, scores[pid]) for pid in ids]))
        self.round += 1


def _stratified_counts(k: int, class_sizes: dict[int, int]) -> dict[int, int]:
    # largest-remainder apportionment of k across classes
    n = sum(class_sizes.values())
    exact = {c: Fraction(k * m, n) for c, m in class_sizes.items()}
    counts = {c: math.floor(v) for c, v in exact.items()}
    leftover = k - sum(counts.values())
    for c in sorted(exact, key=lambda c: (-(exact[c] - counts[c]), -c))[:leftover]:
        counts[c] += 1
    return counts


def seed_pool(training_ids: Sequence[str], labels: dict[str, int], fraction, seed: int) -> PoolState:
    """Stratified random initial labeled pool of ``ceil(fraction * N)`` patients."""
    if not 0 < _exact(fraction) <= 1:
        raise ConfigError(f"initial fraction must be in (0, 1], got {fraction}")
    ids = sorted(training_ids)
    k = quota(fraction, len(ids))
    by_class = {c: [pid for pid in ids if labels[pid] == c] for c in (1, 0)}
    counts = _stratified_counts(k, {c: len(v) for c, v in by_class.items() if v})
    rng = np.random.default_rng(seed)
    chosen = []
    for c in (1, 0):
        members = by_class[c]
        if members:
            pick = rng.choice(len(members), size=counts[c], replace=False)
            chosen.extend(members[i] for i in sorted(pick))
    chosen_set = set(chosen)
    return PoolState(labeled=sorted(chosen), unlabeled=[pid for pid in ids if pid not in chosen_set])


@dataclass
class ExperimentConfig:
    method: str = "entropy"
    normalized: bool = True
    initial_fraction: float = 0.2
    increment: float = 0.2
    rounds: int = 5
    hidden_dim: int = rnn.DEFAULT_HIDDEN
    learning_rate: float = 0.02
    gradient_clip: float | None = 5.0
    warm_start: bool = True
    seed: int = 0

    def __post_init__(self):
        resolve_method(self.method)
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if not 0 < _exact(self.initial_fraction) <= 1 or _exact(self.increment) < 0:
            raise ConfigError("invalid fraction schedule")
        if _exact(self.initial_fraction) + (self.rounds - 1) * _exact(self.increment) < 1:
            raise ConfigError("schedule never reaches the full training set")

    @property
    def scorer(self) -> str:
        return resolve_method(self.method, self.normalized)

    def target_size(self, rnd: int, n: int) -> int:
        """Labeled-pool size while training in round ``rnd`` (0-based)."""
        if rnd >= self.rounds - 1:
            return n
        return quota(_exact(self.initial_fraction) + rnd * _exact(self.increment), n)

    def fraction_label(self, rnd: int) -> int:
        """Nominal labeled percentage of round ``rnd``, used in model names."""
        f = min(_exact(self.initial_fraction) + rnd * _exact(self.increment), 1)
        return int(round(f * 100))

    def train_config(self, class_weights: ClassWeights, shuffle_seed: int, epochs: int | None = None) -> rnn.TrainConfig:
        return rnn.TrainConfig(
            learning_rate=self.learning_rate,
            epochs=epochs or self.rounds,
            seed=shuffle_seed,
            gradient_clip=self.gradient_clip,
            class_weights=class_weights,
        )


@dataclass
class Snapshot:
    round: int
    percent: int
    n_labeled: int
    params: rnn.ModelParams
    train_loss: float


@dataclass
class ALRtResult:
    params: rnn.ModelParams
    pool: PoolState
    snapshots: list[Snapshot]


@dataclass
class RunSeeds:
    init: int
    shuffle: int
    pool: int

    @classmethod
    def derive(cls, root: int, *scope) -> "RunSeeds":
        return cls(
            derive_seed(root, *scope, "init"),
            derive_seed(root, *scope, "shuffle"),
            derive_seed(root, *scope, "pool"),
        )


def _by_id(sequences: Sequence[FeatureSequence]) -> dict[str, FeatureSequence]:
    out = {s.patient_id: s for s in sequences}
    if len(out) != len(sequences):
        raise ConfigError("duplicate patient ids in training data")
    return out


def run_alrt(
    train_sequences: Sequence[FeatureSequence],
    config: ExperimentConfig,
    class_weights: ClassWeights,
    seeds: RunSeeds | None = None,
    on_round: Callable[[PoolState], None] | None = None,
) -> ALRtResult:
    """Train with uncertainty-driven growth of the labeled pool.

    ``on_round`` is called with the pool after every transfer, for invariant checks.
    """
    seeds = seeds or RunSeeds.derive(config.seed)
    by_id = _by_id(train_sequences)
    n = len(by_id)
    if n == 0:
        raise ConfigError("empty training set")
    pool = seed_pool(list(by_id), patient_labels(train_sequences), config.initial_fraction, seeds.pool)
    tcfg = config.train_config(class_weights, seeds.shuffle)
    params = rnn.init_params(config.hidden_dim, seeds.init)
    snapshots = []
    for rnd in range(config.rounds):
        if rnd > 0 and not config.warm_start:
            params = rnn.init_params(config.hidden_dim, seeds.init)
        labeled = [by_id[pid] for pid in sorted(pool.labeled)]
        try:
            train_loss = rnn.train_epoch(params, labeled, tcfg, epoch=rnd)
        except NumericError as exc:
            raise NumericError(f"round {rnd}: {exc}") from exc
        snapshots.append(Snapshot(rnd, config.fraction_label(rnd), len(labeled), params.copy(), train_loss))
        if rnd == config.rounds - 1 or not pool.unlabeled:
            continue
        k = config.target_size(rnd + 1, n) - len(pool.labeled)
        scores = [
            UncertaintyScore(pid, score(rnn.predict_proba(params, by_id[pid].matrix), config.scorer), config.scorer)
            for pid in pool.unlabeled
        ]
        chosen = select_batch(scores, k)
        pool.transfer(chosen, {s.patient_id: s.score for s in scores})
        if on_round is not None:
            on_round(pool)
    return ALRtResult(params, pool, snapshots)


def run_baseline(
    train_sequences: Sequence[FeatureSequence],
    config: ExperimentConfig,
    class_weights: ClassWeights,
    seeds: RunSeeds | None = None,
) -> tuple[rnn.ModelParams, list[float]]:
    """Full-data training for ``config.rounds`` epochs with the ALRt optimizer settings."""
    seeds = seeds or RunSeeds.derive(config.seed)
    by_id = _by_id(train_sequences)
    data = [by_id[pid] for pid in sorted(by_id)]
    params = rnn.init_params(config.hidden_dim, seeds.init)
    return rnn.train(params, data, config.train_config(class_weights, seeds.shuffle))


def evaluate_model(
    params: rnn.ModelParams,
    sequences: Sequence[FeatureSequence],
    mode: str = "timestep",
    class_weights: ClassWeights | None = None,
) -> tuple[EvalReport, float]:
    """Report on ``sequences`` plus the mean per-patient weighted loss."""
    probs = [rnn.predict_proba(params, s.matrix) for s in sequences]
    labels = [s.labels for s in sequences]
    weights = class_weights or ClassWeights(1.0, 1.0)
    mean_loss = float(np.mean([rnn.loss(p, y, weights) for p, y in zip(probs, labels)]))
    return evaluate(*pool_predictions(probs, labels, mode)), mean_loss


def model_name(method: str | None, percent: int | None = None) -> str:
    if method is None:
        return "RNN"
    base = resolve_method(method)
    base = base[5:] if base.startswith("norm_") else base
    return f"RNN_{percent}{SHORT_NAMES[base]}"


@dataclass
class ModelRow:
    name: str
    method: str | None
    percent: int
    report: EvalReport
    train_loss: float
    test_loss: float
    params: rnn.ModelParams


@dataclass
class FoldResult:
    fold: int
    train_ids: list[str]
    test_ids: list[str]
    pipeline: Pipeline
    rows: list[ModelRow]
    pools: dict[str, PoolState]


@dataclass
class CVResult:
    plan: FoldPlan
    folds: list[FoldResult]
    mean: dict[str, EvalReport]
    curves: list[dict]


def run_fold(
    cohort: Sequence[PatientRecord],
    plan: FoldPlan,
    fold: int,
    config: ExperimentConfig,
    methods: Sequence[str] = BASE_METHODS,
    baseline: bool = True,
    mode: str = "timestep",
) -> FoldResult:
    records = {r.patient_id: r for r in cohort}
    train_ids, test_ids = plan.train_ids(fold), plan.test_ids(fold)
    train_records = [records[pid] for pid in train_ids]
    pipeline = fit_pipeline(train_records)
    train_seqs = pipeline.transform_all(train_records)
    test_seqs = pipeline.transform_all([records[pid] for pid in test_ids])
    weights = pipeline.class_weights
    seeds = RunSeeds.derive(config.seed, "fold", fold)
    rows, pools = [], {}
    for method in methods:
        cfg = ExperimentConfig(**{**config.__dict__, "method": method})
        result = run_alrt(train_seqs, cfg, weights, seeds)
        pools[method] = result.pool
        for snap in result.snapshots:
            report, test_loss = evaluate_model(snap.params, test_seqs, mode, weights)
            rows.append(ModelRow(model_name(method, snap.percent), method, snap.percent, report,
                                 snap.train_loss, test_loss, snap.params))
    if baseline:
        params, trace = run_baseline(train_seqs, config, weights, seeds)
        report, test_loss = evaluate_model(params, test_seqs, mode, weights)
        rows.append(ModelRow("RNN", None, 100, report, trace[-1], test_loss, params))
    return FoldResult(fold, train_ids, test_ids, pipeline, rows, pools)


def run_cross_validation(
    cohort: Sequence[PatientRecord],
    config: ExperimentConfig,
    methods: Sequence[str] = BASE_METHODS,
    baseline: bool = True,
    mode: str = "timestep",
    folds: Sequence[int] | None = None,
    on_fold: Callable[[FoldResult], None] | None = None,
) -> CVResult:
    """Per-fold and fold-averaged reports for every (method, labeled fraction) and the baseline."""
    plan = make_folds(cohort, derive_seed(config.seed, "folds"))
    results = []
    for fold in folds if folds is not None else range(plan.n_folds):
        res = run_fold(cohort, plan, fold, config, methods, baseline, mode)
        if on_fold is not None:
            on_fold(res)
        results.append(res)
    names = [row.name for row in results[0].rows]
    mean = {name: mean_report([next(r for r in f.rows if r.name == name).report for f in results]) for name in names}
    curves = []
    for i, name in enumerate(names):
        rows = [f.rows[i] for f in results]
        curves.append({
            "model": name,
            "method": rows[0].method or "baseline",
            "fraction": rows[0].percent / 100.0,
            "auroc": mean[name].auroc,
            "auprc": mean[name].auprc,
            "train_loss": float(np.mean([r.train_loss for r in rows])),
            "test_loss": float(np.mean([r.test_loss for r in rows])),
        })
    return CVResult(plan, results, mean, curves)
