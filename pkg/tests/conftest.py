import numpy as np
import pytest

from alrt.ingest import PHYSIONET_2019, PatientRecord
from alrt.synth import SynthConfig, generate_cohort


def blank_values(T):
    return np.full((T, len(PHYSIONET_2019.value_indices)), np.nan)


def make_record(T, labels=None, pid="p0", **columns):
    """Record with all cells missing except ``columns`` (name -> {hour: value})."""
    values = blank_values(T)
    names = PHYSIONET_2019.value_names
    for name, cells in columns.items():
        for t, v in cells.items():
            values[t, names.index(name)] = v
    if labels is None:
        labels = [0] * T
    return PatientRecord(pid, values, labels)


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(SynthConfig(n_patients=120, seed=11, positive_rate=0.15, signal_strength=2.0))


_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, title, passed, detail)``; ``passed=None`` means skipped."""
    def record(number, title, passed, detail=""):
        _CRITERIA[number] = (title, None if passed is None else bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}" + (f": {detail}" if detail else ""))
