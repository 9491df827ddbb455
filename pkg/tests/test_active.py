from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from alrt import active
from alrt.active import (
    ExperimentConfig,
    RunSeeds,
    derive_seed,
    make_folds,
    quota,
    run_alrt,
    run_baseline,
    run_cross_validation,
    seed_pool,
)
from alrt.errors import ConfigError
from alrt.model import ModelParams
from alrt.preprocess import ClassWeights, FeatureSequence
from conftest import make_record

WEIGHTS = ClassWeights(1.0, 1.0)


def make_sequences(n, n_pos=None, T=6, seed=0, dim=36):
    rng = np.random.default_rng(seed)
    n_pos = n // 5 if n_pos is None else n_pos
    out = []
    for i in range(n):
        labels = np.zeros(T, dtype=np.int8)
        if i < n_pos:
            labels[T // 2:] = 1
        out.append(FeatureSequence(f"s{i:03d}", rng.normal(size=(T, dim)), labels))
    return out


def labels_cohort(n_pos, n_neg):
    records = [make_record(2, [0, 1], pid=f"pos{i:02d}") for i in range(n_pos)]
    records += [make_record(2, pid=f"neg{i:02d}") for i in range(n_neg)]
    return records


def test_quota_uses_exact_arithmetic():
    assert quota(0.2, 5) == 1
    assert quota(0.6, 5) == 3  # 0.6 * 5 is 3.0000000000000004 in floats
    assert quota(Fraction(1, 3), 10) == 4
    assert quota(1.5, 4) == 4


def test_derive_seed_is_stable_and_named():
    assert derive_seed(0, "folds") == derive_seed(0, "folds")
    assert derive_seed(0, "folds") != derive_seed(1, "folds")
    assert derive_seed(0, "fold", 1) != derive_seed(0, "fold", 2)


def test_folds_are_stratified():
    plan = make_folds(labels_cohort(10, 40), seed=3)
    for k in range(5):
        test = plan.test_ids(k)
        assert len(test) == 10
        assert sum(pid.startswith("pos") for pid in test) == 2
        assert set(test).isdisjoint(plan.train_ids(k))
    assert Counter(plan.assignments.values()) == {k: 10 for k in range(5)}


def test_folds_deterministic_and_seeded():
    cohort = labels_cohort(10, 40)
    assert make_folds(cohort, 3).assignments == make_folds(list(reversed(cohort)), 3).assignments
    assert make_folds(cohort, 3).assignments != make_folds(cohort, 4).assignments


def test_folds_need_five_per_class():
    with pytest.raises(ConfigError):
        make_folds(labels_cohort(4, 40), 0)


def test_seed_pool_stratified():
    ids = [f"p{i:03d}" for i in range(100)]
    labels = {pid: int(i < 20) for i, pid in enumerate(ids)}
    pool = seed_pool(ids, labels, 0.2, seed=1)
    assert len(pool.labeled) == 20
    assert sum(labels[p] for p in pool.labeled) == 4
    assert sorted(pool.labeled + pool.unlabeled) == ids
    full = seed_pool(ids, labels, 1.0, seed=1)
    assert full.labeled == ids and full.unlabeled == []
    with pytest.raises(ConfigError):
        seed_pool(ids, labels, 0.0, seed=1)


def test_schedule_for_five_patients():
    seqs = make_sequences(5, n_pos=1)
    sizes = []
    result = run_alrt(seqs, ExperimentConfig(hidden_dim=4), WEIGHTS,
                      on_round=lambda pool: sizes.append(len(pool.labeled)))
    assert sizes == [2, 3, 4, 5]
    assert [s.n_labeled for s in result.snapshots] == [1, 2, 3, 4, 5]
    assert [s.percent for s in result.snapshots] == [20, 40, 60, 80, 100]
    assert [len(r.transferred) for r in result.pool.history] == [1, 1, 1, 1]


def test_uninformative_model_transfers_in_id_order(monkeypatch):
    monkeypatch.setattr(active.rnn, "init_params", lambda H, seed, input_dim=36: ModelParams.zeros(H, input_dim))
    seqs = make_sequences(10, n_pos=2)
    cfg = ExperimentConfig(hidden_dim=3, learning_rate=0.0)
    result = run_alrt(seqs, cfg, WEIGHTS)
    transferred = [pid for r in result.pool.history for pid, _ in r.transferred]
    initial = sorted(set(s.patient_id for s in seqs) - set(transferred))
    assert transferred == sorted(set(s.patient_id for s in seqs) - set(initial))
    assert all(score == pytest.approx(np.log(2)) for r in result.pool.history for _, score in r.transferred)


@pytest.mark.parametrize("method", ["lc", "margin", "entropy"])
def test_pool_invariants(method):
    seqs = make_sequences(23, n_pos=5, seed=2)
    all_ids = {s.patient_id for s in seqs}
    cfg = ExperimentConfig(method=method, hidden_dim=4)
    seen = []

    def check(pool):
        assert set(pool.labeled).isdisjoint(pool.unlabeled)
        assert set(pool.labeled) | set(pool.unlabeled) == all_ids
        assert len(set(pool.labeled)) == len(pool.labeled)
        assert len(pool.labeled) == cfg.target_size(pool.round, 23)
        if seen:
            assert set(seen[-1]) <= set(pool.labeled)
        seen.append(list(pool.labeled))

    result = run_alrt(seqs, cfg, WEIGHTS, on_round=check)
    assert len(seen) == 4
    assert result.pool.unlabeled == []
    assert [len(s) for s in seen] == [10, 14, 19, 23]


def test_transfers_are_most_uncertain():
    seqs = make_sequences(20, n_pos=4, seed=5)
    result = run_alrt(seqs, ExperimentConfig(hidden_dim=4, method="entropy"), WEIGHTS)
    for record in result.pool.history:
        assert [s for _, s in record.transferred] == sorted((s for _, s in record.transferred), reverse=True)


def test_baseline_matches_full_initial_pool():
    seqs = make_sequences(12, n_pos=3, seed=4)
    seeds = RunSeeds.derive(9)
    cfg = ExperimentConfig(hidden_dim=5, initial_fraction=1.0)
    alrt = run_alrt(seqs, cfg, WEIGHTS, seeds)
    base, trace = run_baseline(seqs, cfg, WEIGHTS, seeds)
    assert alrt.params.equals(base)
    assert trace == [s.train_loss for s in alrt.snapshots]


def test_run_is_deterministic():
    seqs = make_sequences(15, n_pos=3, seed=6)
    a = run_alrt(seqs, ExperimentConfig(hidden_dim=4, seed=2), WEIGHTS)
    b = run_alrt(list(reversed(seqs)), ExperimentConfig(hidden_dim=4, seed=2), WEIGHTS)
    assert a.params.equals(b.params)
    assert a.pool.history == b.pool.history


def test_cold_start_differs_from_warm_start():
    seqs = make_sequences(15, n_pos=3, seed=6)
    warm = run_alrt(seqs, ExperimentConfig(hidden_dim=4), WEIGHTS)
    cold = run_alrt(seqs, ExperimentConfig(hidden_dim=4, warm_start=False), WEIGHTS)
    assert not warm.params.equals(cold.params)


def test_bad_configs():
    with pytest.raises(ConfigError):
        ExperimentConfig(method="bald")
    with pytest.raises(ConfigError):
        ExperimentConfig(initial_fraction=0.2, increment=0.1, rounds=5)
    with pytest.raises(ConfigError):
        run_alrt([], ExperimentConfig(), WEIGHTS)


def test_cross_validation_rows_and_isolation(small_cohort):
    cfg = ExperimentConfig(hidden_dim=4, seed=1)
    cv = run_cross_validation(small_cohort, cfg, folds=[0, 1])
    assert len(cv.folds[0].rows) == 16
    names = [r.name for r in cv.folds[0].rows]
    assert names[:5] == ["RNN_20lc", "RNN_40lc", "RNN_60lc", "RNN_80lc", "RNN_100lc"]
    assert names[-1] == "RNN"
    assert set(cv.mean) == set(names)
    for fold in cv.folds:
        assert set(fold.train_ids).isdisjoint(fold.test_ids)
        for pool in fold.pools.values():
            assert set(pool.labeled) == set(fold.train_ids)
    # lc and margin rank binary outputs identically
    for pct in (20, 40, 60, 80, 100):
        assert cv.mean[f"RNN_{pct}lc"].auroc == cv.mean[f"RNN_{pct}m"].auroc
    again = run_cross_validation(small_cohort, cfg, folds=[0, 1])
    assert [c["auroc"] for c in again.curves] == [c["auroc"] for c in cv.curves]
