import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botshape.classify import LeakageError
from botshape.evaluation import (
    REPORT_COLUMNS,
    ConfusionCounts,
    Corpus,
    EvalConfig,
    FeatureBuilder,
    confusion,
    majority_accuracy,
    metrics,
    run_matrix,
    run_set,
    split,
)
from botshape.ingest import LabeledDataset
from botshape.synth import SynthConfig, generate


def dataset(n, n_pos=None):
    n_pos = n // 2 if n_pos is None else n_pos
    return LabeledDataset("BotSet1", tuple(f"a{i}" for i in range(n)), np.array([1] * n_pos + [0] * (n - n_pos)))


# -- split -------------------------------------------------------------------------


def test_split_sizes_and_tags():
    train, test = split(dataset(10), 0.7, seed=0)
    assert (len(train), len(test)) == (7, 3)
    assert (train.split, test.split) == ("train", "test")


@given(st.integers(2, 60), st.integers(0, 10**6), st.sampled_from([0.3, 0.5, 0.7, 0.9]), st.booleans())
def test_split_partitions_and_is_deterministic(n, seed, ratio, stratified):
    ds = dataset(n)
    try:
        a = split(ds, ratio, seed, stratified)
    except ValueError:
        return  # too small to leave both parts non-empty
    b = split(ds, ratio, seed, stratified)
    assert a[0].account_ids == b[0].account_ids and a[1].account_ids == b[1].account_ids
    tr, te = set(a[0].account_ids), set(a[1].account_ids)
    assert not tr & te and tr | te == set(ds.account_ids)
    if not stratified:
        assert len(tr) == round(ratio * n)


def test_stratified_split_keeps_class_shares():
    train, test = split(dataset(100, 20), 0.7, seed=5, stratified=True)
    assert (train.n_positive, test.n_positive) == (14, 6)


def test_split_errors():
    with pytest.raises(ValueError):
        split(dataset(10), 1.0)
    with pytest.raises(ValueError):
        split(dataset(1, 1), 0.5)


# -- confusion and metrics -------------------------------------------------------------


def test_confusion_examples():
    assert confusion([1, 1, 0, 0], [1, 0, 1, 0]) == ConfusionCounts(1, 1, 1, 1)
    assert confusion([1, 1], [1, 1]) == ConfusionCounts(2, 0, 0, 0)
    with pytest.raises(ValueError):
        confusion([1, 0], [1])
    with pytest.raises(ValueError):
        confusion([2], [1])


def test_metrics_example():
    m = metrics(ConfusionCounts(tp=3, fp=1, tn=4, fn=2))
    assert (m.accuracy, m.precision, m.recall) == (0.7, 0.75, 0.6)
    assert m.f1 == pytest.approx(2 / 3)
    assert m.flags == ()


def test_metrics_zero_denominators_flagged():
    m = metrics(ConfusionCounts(tp=0, fp=0, tn=5, fn=0))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 0.0, 0.0, 0.0)
    assert set(m.flags) == {"precision_undefined", "recall_undefined", "f1_undefined"}
    with pytest.raises(ValueError):
        metrics(ConfusionCounts(0, 0, 0, 0))


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_metrics_bounded_and_consistent(pairs):
    t, p = zip(*pairs)
    c = confusion(t, p)
    assert c.total == len(pairs)
    m = metrics(c)
    assert all(0.0 <= v <= 1.0 for v in m)
    assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12


def test_majority_accuracy():
    assert majority_accuracy([1, 1, 0]) == pytest.approx(2 / 3)
    assert majority_accuracy([0, 0, 0, 1]) == 0.75


# -- end-to-end matrix on a small corpus ------------------------------------------------------


def small_config(**kw):
    hp = {
        "logreg": {"epochs": 300},
        "linear_svm": {"epochs": 50},
        "mlp": {"hidden_sizes": [8], "epochs": 200},
        "random_forest": {"n_trees": 10},
    }
    return EvalConfig(n_weekly=2, n_monthly=2, candidate_stride=2, hyperparameters=hp, **kw)


@pytest.fixture(scope="module")
def corpus():
    regs, events, _ = generate(SynthConfig(n_genuine=30, n_bots=30, seed=2))
    return Corpus.from_records(regs, events)


def test_matrix_has_every_cell(corpus):
    report = run_matrix(corpus, small_config())
    assert len(report.cells) == 36
    assert all(c.error is None for c in report.cells)
    csv_lines = report.to_csv().splitlines()
    assert csv_lines[0] == ",".join(REPORT_COLUMNS) and len(csv_lines) == 37
    payload = json.loads(report.to_json())
    assert len(payload["gains"]) == 12 and set(payload["majority_baseline_accuracy"]) == {"BotSet1", "BotSet2", "BotSet3"}
    table = report.to_table()
    assert "Accuracy" in table and "F1 Score" in table and "gain" in table


def test_failing_set_is_recorded_not_raised(corpus):
    only_genuine = Corpus({k: v for k, v in corpus.registrations.items() if k.startswith("g")}, corpus.timelines)
    report = run_matrix(only_genuine, small_config(sets=("BotSet1",), feature_sets=("account",), classifiers=("logreg",)))
    assert report.cells[0].error and report.cells[0].counts is None
    assert report.to_csv().splitlines()[1].startswith("BotSet1,account,logreg,,")


def test_unknown_names_rejected():
    with pytest.raises(ValueError):
        EvalConfig(sets=("BotSet4",))
    with pytest.raises(ValueError):
        EvalConfig(classifiers=("knn",))


def test_pattern_fit_rejects_test_split(corpus):
    builder = FeatureBuilder(corpus)
    ds = dataset(4)
    with pytest.raises(LeakageError):
        builder.fit_pattern(dataclasses.replace(ds, split="test"), small_config())


def test_test_rows_cannot_influence_fitted_models(corpus):
    cfg = small_config()
    clean = run_set(corpus, "BotSet2", cfg)
    test_ids = set(clean.test.account_ids)
    rng = np.random.default_rng(0)
    poisoned_timelines = dict(corpus.timelines)
    poisoned_regs = dict(corpus.registrations)
    for a in test_ids:
        reg = corpus.registrations[a]
        poisoned_regs[a] = dataclasses.replace(reg, statuses_count=10**7, followers_count=0)
        poisoned_timelines[a] = np.sort(reg.created_at + rng.integers(1, 360 * 86400, size=500))
    dirty = run_set(Corpus(poisoned_regs, poisoned_timelines), "BotSet2", cfg)
    assert dirty.train.account_ids == clean.train.account_ids
    assert dirty.pattern_model.to_json() == clean.pattern_model.to_json()
    for key, model in clean.models.items():
        assert dirty.models[key].to_json() == model.to_json(), key
