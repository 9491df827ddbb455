"""Synthetic ICU cohorts with a planted sepsis signal.

Every measurement follows a per-patient AR(1) around a column baseline and
is independently hidden with a per-column missingness probability. Septic
patients get an onset hour after hour 12; from there the six
``SIGNAL_COLUMNS`` drift upward by ``signal_strength`` standard deviations
(ramped in over four hours) and the hourly label is 1.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ingest import LABS, PHYSIONET_2019, VITALS, PatientRecord, format_patient_file

SIGNAL_COLUMNS = ("HR", "Temp", "Resp", "WBC", "Lactate", "BUN")

# (baseline, spread) per clinical column
COLUMN_STATS = {
    "HR": (84.0, 17.0), "O2Sat": (97.0, 3.0), "Temp": (36.9, 0.7), "SBP": (123.0, 23.0),
    "MAP": (82.0, 16.0), "DBP": (63.0, 14.0), "Resp": (18.7, 5.0), "EtCO2": (33.0, 8.0),
    "BaseExcess": (-0.5, 4.0), "HCO3": (24.0, 4.0), "FiO2": (0.5, 0.2), "pH": (7.38, 0.07),
    "PaCO2": (41.0, 9.0), "SaO2": (92.0, 10.0), "AST": (60.0, 40.0), "BUN": (23.0, 19.0),
    "Alkalinephos": (100.0, 50.0), "Calcium": (8.5, 0.7), "Chloride": (106.0, 6.0),
    "Creatinine": (1.3, 0.8), "Bilirubin_direct": (1.0, 0.8), "Glucose": (136.0, 50.0),
    "Lactate": (2.5, 2.0), "Magnesium": (2.0, 0.4), "Phosphate": (3.5, 1.4),
    "Potassium": (4.1, 0.6), "Bilirubin_total": (1.5, 1.5), "TroponinI": (1.0, 1.0),
    "Hct": (31.0, 5.0), "Hgb": (10.5, 2.0), "PTT": (40.0, 20.0), "WBC": (11.0, 6.0),
    "Fibrinogen": (290.0, 150.0), "Platelets": (200.0, 100.0),
}


def default_missingness() -> dict[str, float]:
    miss = {name: 0.1 for name in VITALS}
    miss["EtCO2"] = 0.9
    miss.update({name: 0.85 for name in LABS})
    return miss


@dataclass
class SynthConfig:
    n_patients: int = 500
    seed: int = 0
    length_range: tuple[int, int] = (24, 72)
    positive_rate: float = 0.06
    missingness: dict[str, float] = field(default_factory=default_missingness)
    signal_strength: float = 1.5
    ar_coefficient: float = 0.9

    def __post_init__(self):
        lo, hi = self.length_range
        self.length_range = (int(lo), int(hi))
        if lo < 24 or hi < lo:
            raise ConfigError("length_range must satisfy 24 <= min <= max")
        if not 0 < self.positive_rate < 1:
            raise ConfigError("positive_rate must lie in (0, 1)")
        if self.signal_strength < 0:
            raise ConfigError("signal_strength must be non-negative")
        if self.n_patients < 0:
            raise ConfigError("n_patients must be non-negative")
        unknown = set(self.missingness) - set(COLUMN_STATS)
        if unknown:
            raise ConfigError(f"missingness given for unknown columns {sorted(unknown)}")
        if any(not 0 <= m <= 1 for m in self.missingness.values()):
            raise ConfigError("missingness probabilities must lie in [0, 1]")


def _patient(config: SynthConfig, index: int) -> PatientRecord:
    rng = np.random.default_rng([config.seed, index])
    schema = PHYSIONET_2019
    names = schema.value_names
    T = int(rng.integers(config.length_range[0], config.length_range[1] + 1))
    septic = bool(rng.random() < config.positive_rate)
    onset = int(rng.integers(13, T)) if septic else T
    labels = (np.arange(T) >= onset).astype(np.int8)

    clinical = [n for n in names if n in COLUMN_STATS]
    phi = config.ar_coefficient
    offsets = rng.normal(0.0, 0.5, size=len(clinical))
    noise = rng.normal(0.0, np.sqrt(1 - phi * phi), size=(T, len(clinical)))
    z = np.empty_like(noise)
    z[0] = rng.normal(size=len(clinical))
    for t in range(1, T):
        z[t] = phi * z[t - 1] + noise[t]
    ramp = np.clip((np.arange(T) - onset + 1) / 4.0, 0.0, 1.0)
    values = np.full((T, len(names)), np.nan)
    hidden = rng.random((T, len(clinical)))
    for k, name in enumerate(clinical):
        base, spread = COLUMN_STATS[name]
        col = base + spread * (offsets[k] + z[:, k])
        if name in SIGNAL_COLUMNS:
            col = col + config.signal_strength * spread * ramp
        col = np.where(hidden[:, k] < config.missingness.get(name, 0.0), np.nan, np.round(col, 2))
        values[:, names.index(name)] = col

    values[:, names.index("Age")] = round(float(rng.uniform(18, 90)), 2)
    values[:, names.index("Gender")] = float(rng.integers(0, 2))
    unit = int(rng.integers(0, 3))
    if unit < 2:
        values[:, names.index("Unit1")] = float(unit == 0)
        values[:, names.index("Unit2")] = float(unit == 1)
    values[:, names.index("HospAdmTime")] = -round(float(rng.exponential(20.0)), 2)
    values[:, names.index("ICULOS")] = np.arange(1, T + 1, dtype=float)
    return PatientRecord(f"p{index:06d}", values, labels, schema)


def generate_cohort(config: SynthConfig) -> list[PatientRecord]:
    """Deterministic cohort; patient ``i`` depends only on ``(seed, i)``."""
    return [_patient(config, i) for i in range(config.n_patients)]


def write_cohort(records, directory, config: SynthConfig | None = None) -> Path:
    """Write one ``.psv`` per patient and a ``manifest.json`` with the ground truth."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for r in records:
        tmp = directory / f"{r.patient_id}.psv.tmp"
        tmp.write_text(format_patient_file(r))
        os.replace(tmp, directory / f"{r.patient_id}.psv")
    manifest = {
        "n_patients": len(records),
        "n_septic": sum(r.is_septic for r in records),
        "signal_columns": list(SIGNAL_COLUMNS),
        "config": asdict(config) if config is not None else None,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return directory
