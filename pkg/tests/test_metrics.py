import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alrt.errors import ConfigError
from alrt.metrics import (
    EvalReport,
    auprc,
    auroc,
    confusion_at_threshold,
    evaluate,
    mean_report,
    pool_predictions,
    write_table_csv,
)
from oracles import brute_force_auprc, pairwise_auroc


def test_confusion_examples():
    c = confusion_at_threshold([0.9, 0.1], [1, 0])
    assert (c.tp, c.tn, c.fp, c.fn) == (1, 1, 0, 0)
    c = confusion_at_threshold([0.5], [0])
    assert c.fp == 1
    c = confusion_at_threshold([0.6, 0.6, 0.4], [1, 0, 1])
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 0)
    with pytest.raises(ConfigError):
        confusion_at_threshold([0.1], [1, 0])


def test_auroc_examples():
    assert auroc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auroc([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
    assert auroc([0.9, 0.8, 0.3], [1, 0, 0]) == 1.0
    with pytest.raises(ConfigError):
        auroc([0.1, 0.2], [1, 1])


def test_auprc_examples():
    assert auprc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auprc([0.4] * 8, [1, 0, 0, 0, 1, 0, 0, 0]) == pytest.approx(0.25)
    assert auprc([0.9, 0.8, 0.3], [1, 0, 1]) == pytest.approx(5 / 6, abs=1e-15)
    with pytest.raises(ConfigError):
        auprc([0.1, 0.2], [0, 0])


scores_labels = st.integers(2, 60).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.7, 0.9, 1.0]) | st.floats(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
).filter(lambda sl: 0 < sum(sl[1]) < n))


@settings(max_examples=150, deadline=None)
@given(scores_labels)
def test_against_oracles(sl):
    s, y = sl
    assert auroc(s, y) == pytest.approx(pairwise_auroc(s, y), abs=1e-9)
    assert auprc(s, y) == pytest.approx(brute_force_auprc(s, y), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(scores_labels)
def test_auroc_invariant_under_monotone_transform(sl):
    s, y = sl
    s = np.round(np.asarray(s) * 64) / 64  # coarse grid so the transform cannot merge distinct scores
    t = np.exp(3 * s) - 7
    assert auroc(t, y) == pytest.approx(auroc(s, y), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(scores_labels)
def test_complement_swaps_sensitivity_and_specificity(sl):
    s, y = sl
    s = np.asarray(s)
    s = np.where(s == 0.5, 0.51, s)  # keep clear of the >= tie rule at the threshold
    a = evaluate(s, y)
    b = evaluate(1 - s, 1 - np.asarray(y))
    assert a.sensitivity == pytest.approx(b.specificity)
    assert a.specificity == pytest.approx(b.sensitivity)


def test_zero_precision_denominator_flagged():
    r = evaluate([0.1, 0.2, 0.3], [0, 1, 0])
    assert r.precision == 0.0
    assert "precision_undefined" in r.flags


def test_report_identities():
    r = evaluate([0.9, 0.6, 0.4, 0.2, 0.7], [1, 0, 1, 0, 0])
    assert r.accuracy == (r.tp + r.tn) / 5
    assert r.sensitivity == r.tp / (r.tp + r.fn)
    assert r.specificity == r.tn / (r.tn + r.fp)
    assert r.threshold == 0.5


def test_mean_report():
    a = evaluate([0.9, 0.1, 0.8, 0.3], [1, 0, 0, 1])
    b = evaluate([0.9, 0.1], [1, 0])
    m = mean_report([a, b])
    assert m.auroc == pytest.approx((a.auroc + b.auroc) / 2)
    a.auroc, b.auroc = 0.8, 0.9
    assert mean_report([a, b]).auroc == pytest.approx(0.85)


def test_patient_mode_pooling():
    probs = [np.array([0.1, 0.7]), np.array([0.2, 0.3, 0.1])]
    labels = [np.array([0, 1]), np.array([0, 0, 0])]
    p, y = pool_predictions(probs, labels, "patient")
    assert p.tolist() == [0.7, 0.3] and y.tolist() == [1, 0]
    p, y = pool_predictions(probs, labels, "timestep")
    assert p.size == 5
    with pytest.raises(ConfigError):
        pool_predictions(probs, labels, "hourly")


def test_table_csv(tmp_path):
    r = evaluate([0.9, 0.1], [1, 0])
    path = tmp_path / "t.csv"
    write_table_csv(path, [("RNN_40e", r)])
    lines = path.read_text().splitlines()
    assert lines[0] == "Model,Specificity,Sensitivity,Precision,Accuracy,AUROC,AUPRC"
    assert lines[1].startswith("RNN_40e,1.000000")
