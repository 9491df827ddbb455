"""Reading PhysioNet-2019 style ``.psv`` patient files and applying the cohort filter.

Each file holds one ICU stay: a ``|``-separated header followed by one row per
hour. Missing measurements are the literal token ``NaN``. The last column,
``SepsisLabel``, is split out of the value matrix into a separate label vector.
"""
from __future__ import annotations

import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import LabelError, ParseError, SchemaError

MISSING_TOKEN = "NaN"
MIN_HOURS = 24

VITALS = ("HR", "O2Sat", "Temp", "SBP", "MAP", "DBP", "Resp", "EtCO2")
LABS = (
    "BaseExcess", "HCO3", "FiO2", "pH", "PaCO2", "SaO2", "AST", "BUN",
    "Alkalinephos", "Calcium", "Chloride", "Creatinine", "Bilirubin_direct",
    "Glucose", "Lactate", "Magnesium", "Phosphate", "Potassium",
    "Bilirubin_total", "TroponinI", "Hct", "Hgb", "PTT", "WBC", "Fibrinogen",
    "Platelets",
)
DEMOGRAPHICS = ("Age", "Gender", "Unit1", "Unit2", "HospAdmTime", "ICULOS")
LABEL = "SepsisLabel"


@dataclass(frozen=True)
class RawColumnSchema:
    """Column layout of a patient file.

    ``names`` is the full header. The three index groups and ``label_index``
    point into ``names`` and partition it.
    """

    names: tuple[str, ...]
    vital_indices: tuple[int, ...]
    lab_indices: tuple[int, ...]
    demographic_indices: tuple[int, ...]
    label_index: int

    def __post_init__(self):
        groups = [
            set(self.vital_indices),
            set(self.lab_indices),
            set(self.demographic_indices),
            {self.label_index},
        ]
        total = sum(len(g) for g in groups)
        union = set().union(*groups)
        if total != len(union) or union != set(range(len(self.names))):
            raise SchemaError("column groups must partition the header")
        if (len(self.vital_indices), len(self.lab_indices), len(self.demographic_indices)) != (8, 26, 6):
            raise SchemaError("schema needs 8 vital, 26 lab and 6 demographic columns")

    @classmethod
    def from_header(cls, names: Sequence[str]) -> "RawColumnSchema":
        """Classify a header by the known PhysioNet 2019 column names."""
        names = tuple(names)
        known = {**{n: "v" for n in VITALS}, **{n: "l" for n in LABS}, **{n: "d" for n in DEMOGRAPHICS}}
        groups: dict[str, list[int]] = {"v": [], "l": [], "d": []}
        label_index = None
        for i, name in enumerate(names):
            if name == LABEL:
                label_index = i
            elif name in known:
                groups[known[name]].append(i)
            else:
                raise SchemaError(f"unknown column {name!r}", column=name)
        if label_index is None:
            raise SchemaError(f"header has no {LABEL} column")
        return cls(names, tuple(groups["v"]), tuple(groups["l"]), tuple(groups["d"]), label_index)

    @property
    def value_indices(self) -> tuple[int, ...]:
        """Header positions of the value-matrix columns (everything but the label)."""
        return tuple(i for i in range(len(self.names)) if i != self.label_index)

    @property
    def value_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.value_indices)

    def _value_position(self, header_indices):
        pos = {h: k for k, h in enumerate(self.value_indices)}
        return tuple(pos[h] for h in header_indices)

    @property
    def vital_columns(self) -> tuple[int, ...]:
        """Positions of the vitals inside ``PatientRecord.values``."""
        return self._value_position(self.vital_indices)

    @property
    def lab_columns(self) -> tuple[int, ...]:
        return self._value_position(self.lab_indices)

    @property
    def vital_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.vital_indices)

    @property
    def lab_names(self) -> tuple[str, ...]:
        return tuple(self.names[i] for i in self.lab_indices)


PHYSIONET_2019 = RawColumnSchema.from_header(VITALS + LABS + DEMOGRAPHICS + (LABEL,))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PatientRecord:
    """One patient's hourly observations.

    ``values`` is a read-only ``(T, n_values)`` float array in schema value order;
    ``NaN`` marks a missing measurement. ``labels`` is a read-only int8 vector.
    """

    patient_id: str
    values: np.ndarray
    labels: np.ndarray
    schema: RawColumnSchema = field(default=PHYSIONET_2019, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, ndmin=2)
        labels = np.array(self.labels, dtype=np.int8).reshape(-1)
        if values.shape[0] == 0:
            raise ParseError("patient record has no rows", path=self.patient_id)
        if values.shape[1] != len(self.schema.value_indices):
            raise SchemaError(
                f"row width {values.shape[1]} does not match schema width {len(self.schema.value_indices)}"
            )
        if labels.shape[0] != values.shape[0]:
            raise LabelError("label count does not match row count", path=self.patient_id)
        if not np.isin(labels, (0, 1)).all():
            raise LabelError("labels must be 0 or 1", path=self.patient_id)
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "labels", _readonly(labels))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def rows(self) -> list[list[float | None]]:
        """Row view with ``None`` for missing cells."""
        return [[None if math.isnan(v) else float(v) for v in row] for row in self.values.tolist()]

    @property
    def is_septic(self) -> bool:
        return bool(self.labels.any())

    def __eq__(self, other):
        if not isinstance(other, PatientRecord):
            return NotImplemented
        return (
            self.patient_id == other.patient_id
            and self.schema == other.schema
            and np.array_equal(self.values, other.values, equal_nan=True)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def _check_header(header: list[str], schema: RawColumnSchema, path) -> None:
    expected = list(schema.names)
    if header == expected:
        return
    for i in range(max(len(header), len(expected))):
        got = header[i] if i < len(header) else "<missing>"
        want = expected[i] if i < len(expected) else "<none>"
        if got != want:
            raise SchemaError(
                f"header column {i + 1} is {got!r}, expected {want!r}", path=path, line=1, column=got
            )


def _parse_token(token: str, *, path, line: int, column: str) -> float:
    if token == MISSING_TOKEN:
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric value {token!r}", path=path, line=line, column=column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {token!r}", path=path, line=line, column=column)
    return value


def parse_patient_file(
    text: str | TextIO,
    schema: RawColumnSchema = PHYSIONET_2019,
    patient_id: str = "",
    *,
    path=None,
) -> PatientRecord:
    """Parse one ``.psv`` stream into a :class:`PatientRecord`.

    Raises
    ------
    SchemaError
        The header does not match ``schema``; the message names the first divergent column.
    ParseError
        A token is neither numeric nor ``NaN``; carries the line number and column name.
    LabelError
        A label cell is anything other than 0 or 1.
    """
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise SchemaError("empty file, no header", path=path)
    _check_header(lines[0].strip().split("|"), schema, path)
    ncol = len(schema.names)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.strip().split("|")
        if len(tokens) != ncol:
            raise ParseError(f"expected {ncol} fields, found {len(tokens)}", path=path, line=lineno)
        rows.append(
            [_parse_token(tok, path=path, line=lineno, column=name) for tok, name in zip(tokens, schema.names)]
        )
    if not rows:
        raise ParseError("file has a header but no data rows", path=path)
    table = np.array(rows, dtype=np.float64)
    raw_labels = table[:, schema.label_index]
    bad = np.flatnonzero(~np.isin(raw_labels, (0.0, 1.0)))
    if bad.size:
        raise LabelError(
            f"label must be 0 or 1, got {lines[bad[0] + 1].split('|')[schema.label_index]!r}",
            path=path,
            line=int(bad[0]) + 2,
            column=schema.names[schema.label_index],
        )
    return PatientRecord(
        patient_id=patient_id,
        values=table[:, list(schema.value_indices)],
        labels=raw_labels.astype(np.int8),
        schema=schema,
    )


def _format_value(v: float) -> str:
    if math.isnan(v):
        return MISSING_TOKEN
    return repr(float(v))


def format_patient_file(record: PatientRecord) -> str:
    """Serialize a record back to ``.psv`` text; re-parsing yields an equal record."""
    schema = record.schema
    out = io.StringIO()
    out.write("|".join(schema.names) + "\n")
    vpos = {h: k for k, h in enumerate(schema.value_indices)}
    for values, label in zip(record.values.tolist(), record.labels.tolist()):
        fields = [
            str(int(label)) if h == schema.label_index else _format_value(values[vpos[h]])
            for h in range(len(schema.names))
        ]
        out.write("|".join(fields) + "\n")
    return out.getvalue()


def read_patient_file(path, schema: RawColumnSchema = PHYSIONET_2019) -> PatientRecord:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file ({exc.strerror or exc})", path=path) from exc
    return parse_patient_file(text, schema, patient_id=path.stem, path=path)


@dataclass
class CohortScan:
    patients: list[PatientRecord]
    dropped: list[str]

    @property
    def n_files(self) -> int:
        return len(self.patients) + len(self.dropped)

    @property
    def n_septic(self) -> int:
        return sum(p.is_septic for p in self.patients)


def scan_cohort(
    directory, schema: RawColumnSchema = PHYSIONET_2019, min_hours: int = MIN_HOURS
) -> CohortScan:
    """Parse every ``.psv`` in ``directory`` and split into retained and dropped stays."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ParseError("not a directory", path=directory)
    paths = sorted(directory.glob("*.psv"), key=lambda p: p.stem)
    kept, dropped = [], []
    for path in paths:
        record = read_patient_file(path, schema)
        (kept if len(record) >= min_hours else dropped).append(record)
    kept.sort(key=lambda r: r.patient_id)
    return CohortScan(kept, sorted(r.patient_id for r in dropped))


def load_cohort(
    directory, schema: RawColumnSchema = PHYSIONET_2019, min_hours: int = MIN_HOURS
) -> list[PatientRecord]:
    """Patients with at least ``min_hours`` rows, sorted by patient id."""
    return scan_cohort(directory, schema, min_hours).patients


def write_jsonl(records: Iterable[PatientRecord], path) -> None:
    """Normalized cohort cache: one JSON object per patient, ``null`` for missing cells."""
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        for r in records:
            fh.write(json.dumps({"id": r.patient_id, "rows": r.rows, "labels": r.labels.tolist()}) + "\n")
    os.replace(tmp, path)


def read_jsonl(path, schema: RawColumnSchema = PHYSIONET_2019) -> list[PatientRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                values = [[math.nan if v is None else v for v in row] for row in obj["rows"]]
                records.append(PatientRecord(obj["id"], values, obj["labels"], schema))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad cache entry ({exc})", path=path, line=lineno) from exc
    return records
