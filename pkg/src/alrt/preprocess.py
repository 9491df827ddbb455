"""Feature engineering, bounded forward-fill imputation and standardization.

The model input for one patient is a ``(T, 36)`` matrix: the 8 vitals and 26
labs in schema order after imputation, followed by two counts of lab values
recorded in the trailing 12 and 48 hours. Medians and scaler statistics are
fit on training patients only.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .ingest import PHYSIONET_2019, PatientRecord, RawColumnSchema

N_FEATURES = 36
COUNT_WINDOWS = (12, 48)
COUNT_NAMES = ("LabCount12h", "LabCount48h")


@dataclass(frozen=True)
class ImputationPolicy:
    vital_ffill_horizon: int = 12
    lab_ffill_horizon: int = 36

    def __post_init__(self):
        for h in (self.vital_ffill_horizon, self.lab_ffill_horizon):
            if int(h) != h or h < 1:
                raise ConfigError(f"forward-fill horizon must be a positive integer, got {h!r}")


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    patient_id: str
    matrix: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ScalerParams:
    mean: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True)
class ClassWeights:
    weight_negative: float
    weight_positive: float

    def __post_init__(self):
        if not (self.weight_negative > 0 and self.weight_positive > 0):
            raise ConfigError("class weights must be strictly positive")


def feature_names(schema: RawColumnSchema = PHYSIONET_2019) -> list[str]:
    return [*schema.vital_names, *schema.lab_names, *COUNT_NAMES]


def _window_sums(counts: np.ndarray, window: int) -> np.ndarray:
    # inclusive of the current hour, clipped at the first row
    csum = np.concatenate(([0], np.cumsum(counts)))
    t = np.arange(counts.size)
    return csum[t + 1] - csum[np.maximum(t + 1 - window, 0)]


def engineer_lab_counts(
    record: PatientRecord, schema: RawColumnSchema | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Number of lab values recorded in the trailing 12 and 48 hours, per hour.

    Must be computed on the raw, unimputed record.
    """
    schema = schema or record.schema
    labs = record.values[:, list(schema.lab_columns)]
    per_hour = (~np.isnan(labs)).sum(axis=1).astype(np.int64)
    return tuple(_window_sums(per_hour, w) for w in COUNT_WINDOWS)


def _clinical_block(record: PatientRecord) -> np.ndarray:
    schema = record.schema
    return record.values[:, list(schema.vital_columns) + list(schema.lab_columns)]


def compute_medians(records: Sequence[PatientRecord]) -> np.ndarray:
    """Per-column median of all observed vital and lab values across ``records``.

    A column never observed falls back to 0.0.
    """
    if not records:
        raise ConfigError("cannot compute medians from an empty training set")
    stacked = np.concatenate([_clinical_block(r) for r in records], axis=0)
    medians = np.zeros(stacked.shape[1])
    for j in range(stacked.shape[1]):
        col = stacked[:, j]
        col = col[~np.isnan(col)]
        if col.size:
            medians[j] = np.median(col)
    return medians


def forward_fill(values: np.ndarray, horizon: int) -> np.ndarray:
    """Carry each observation forward for at most ``horizon`` hours; gaps stay NaN."""
    t_idx = np.arange(values.shape[0])[:, None]
    observed = ~np.isnan(values)
    last = np.maximum.accumulate(np.where(observed, t_idx, -1), axis=0)
    carry = (last >= 0) & (t_idx - last <= horizon)
    src = np.where(carry, last, 0)
    filled = np.take_along_axis(values, src, axis=0)
    return np.where(carry, filled, np.nan)


def impute(
    record: PatientRecord,
    policy: ImputationPolicy,
    medians: np.ndarray,
) -> np.ndarray:
    """Fully observed ``(T, 34)`` vitals+labs matrix: bounded forward fill then medians."""
    schema = record.schema
    n_v, n_l = len(schema.vital_columns), len(schema.lab_columns)
    medians = np.asarray(medians, dtype=np.float64)
    if medians.shape != (n_v + n_l,):
        raise ConfigError(f"median vector has length {medians.size}, expected {n_v + n_l}")
    block = _clinical_block(record)
    out = np.empty_like(block)
    out[:, :n_v] = forward_fill(block[:, :n_v], policy.vital_ffill_horizon)
    out[:, n_v:] = forward_fill(block[:, n_v:], policy.lab_ffill_horizon)
    return np.where(np.isnan(out), medians[None, :], out)


def build_features(
    record: PatientRecord, policy: ImputationPolicy, medians: np.ndarray
) -> np.ndarray:
    """Unscaled ``(T, 36)`` feature matrix."""
    counts = engineer_lab_counts(record)
    return np.column_stack([impute(record, policy, medians), *counts]).astype(np.float64)


def fit_scaler(training: Sequence[np.ndarray]) -> ScalerParams:
    """Pooled per-column mean and population standard deviation.

    Constant columns get scale 1.
    """
    if len(training) == 0:
        raise ConfigError("fit_scaler needs at least one matrix")
    stacked = np.concatenate([np.atleast_2d(m) for m in training], axis=0)
    mean = stacked.mean(axis=0)
    scale = stacked.std(axis=0)
    constant = stacked.max(axis=0) == stacked.min(axis=0)
    scale[constant | (scale == 0)] = 1.0
    return ScalerParams(mean=mean, scale=scale)


def apply_scaler(matrix: np.ndarray, params: ScalerParams) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != params.mean.size:
        raise ConfigError(f"matrix shape {matrix.shape} does not match scaler width {params.mean.size}")
    return (matrix - params.mean) / params.scale


def invert_scaler(matrix: np.ndarray, params: ScalerParams) -> np.ndarray:
    return np.asarray(matrix) * params.scale + params.mean


def compute_class_weights(labels) -> ClassWeights:
    """Balanced inverse-frequency weights ``N / (2 N_c)`` over timestep labels."""
    labels = np.asarray(labels).reshape(-1)
    n = labels.size
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = int(np.count_nonzero(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("class weights need both classes in the training labels")
    return ClassWeights(weight_negative=n / (2.0 * n_neg), weight_positive=n / (2.0 * n_pos))


@dataclass
class Pipeline:
    """Fitted preprocessing state; re-applies bit-exactly after a JSON round trip."""

    medians: np.ndarray
    scaler: ScalerParams
    class_weights: ClassWeights
    policy: ImputationPolicy = field(default_factory=ImputationPolicy)
    schema: RawColumnSchema = PHYSIONET_2019

    @property
    def feature_names(self) -> list[str]:
        return feature_names(self.schema)

    def transform(self, record: PatientRecord) -> FeatureSequence:
        raw = build_features(record, self.policy, self.medians)
        return FeatureSequence(
            record.patient_id,
            apply_scaler(raw, self.scaler),
            np.asarray(record.labels, dtype=np.int8),
        )

    def transform_all(self, records: Sequence[PatientRecord]) -> list[FeatureSequence]:
        return [self.transform(r) for r in records]

    def to_dict(self) -> dict:
        names = self.feature_names
        n_clin = self.medians.size
        return {
            "policy": {
                "vital_ffill_horizon": self.policy.vital_ffill_horizon,
                "lab_ffill_horizon": self.policy.lab_ffill_horizon,
            },
            "class_weights": {
                "negative": self.class_weights.weight_negative,
                "positive": self.class_weights.weight_positive,
            },
            "columns": {
                name: {
                    "mean": float(self.scaler.mean[j]),
                    "scale": float(self.scaler.scale[j]),
                    "median": float(self.medians[j]) if j < n_clin else None,
                }
                for j, name in enumerate(names)
            },
        }

    @classmethod
    def from_dict(cls, d: dict, schema: RawColumnSchema = PHYSIONET_2019) -> "Pipeline":
        names = feature_names(schema)
        try:
            cols = [d["columns"][n] for n in names]
        except KeyError as exc:
            raise ConfigError(f"pipeline artifact lacks column {exc}") from exc
        n_clin = len(schema.vital_columns) + len(schema.lab_columns)
        return cls(
            medians=np.array([c["median"] for c in cols[:n_clin]], dtype=np.float64),
            scaler=ScalerParams(
                np.array([c["mean"] for c in cols], dtype=np.float64),
                np.array([c["scale"] for c in cols], dtype=np.float64),
            ),
            class_weights=ClassWeights(d["class_weights"]["negative"], d["class_weights"]["positive"]),
            policy=ImputationPolicy(**d["policy"]),
            schema=schema,
        )

    def save(self, path) -> None:
        tmp = Path(str(path) + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1))
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, schema: RawColumnSchema = PHYSIONET_2019) -> "Pipeline":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()), schema)
        except OSError as exc:
            raise ConfigError(f"cannot read pipeline artifact {path}: {exc}") from exc


def fit_pipeline(
    training: Sequence[PatientRecord], policy: ImputationPolicy | None = None
) -> Pipeline:
    """Fit medians, scaler and class weights on training patients only."""
    if not training:
        raise ConfigError("empty training set")
    policy = policy or ImputationPolicy()
    medians = compute_medians(training)
    raw = [build_features(r, policy, medians) for r in training]
    scaler = fit_scaler(raw)
    weights = compute_class_weights(np.concatenate([r.labels for r in training]))
    return Pipeline(medians, scaler, weights, policy, training[0].schema)

