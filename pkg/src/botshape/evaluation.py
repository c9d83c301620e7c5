"""Train/test protocol, metrics and the classifier x feature-set x ground-truth report."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import classify
from .classify import FeatureMatrix, standardize_apply, standardize_fit_transform
from .ingest import (
    BOT_SETS,
    EventRecord,
    LabeledDataset,
    RegistrationRecord,
    build_ground_truth,
    group_events,
)
from .pattern import PatternModel, fit_pattern_model, pattern_features
from .sequence import ACCOUNT_FEATURE_NAMES, account_features, gen_sequence_features, sequence_feature_names

REPORT_COLUMNS = ["set", "features", "classifier", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1"]
CLASSIFIER_LABELS = {"linear_svm": "SVM", "logreg": "LR", "mlp": "MLP", "random_forest": "RF"}


# -- corpus --------------------------------------------------------------------


@dataclass
class Corpus:
    """Registrations plus per-account sorted event timestamps."""

    registrations: dict[str, RegistrationRecord]
    timelines: dict[str, np.ndarray]

    @classmethod
    def from_records(cls, registrations: Iterable[RegistrationRecord], events: Iterable[EventRecord]) -> "Corpus":
        regs = {r.account_id: r for r in registrations}
        return cls(regs, group_events(events))

    def timeline(self, account_id: str) -> np.ndarray:
        return self.timelines.get(account_id, np.zeros(0, dtype=np.int64))

    def t_reg(self, account_id: str) -> int:
        return self.registrations[account_id].created_at


# -- split, confusion, metrics ----------------------------------------------------------


def split(dataset: LabeledDataset, ratio: float = 0.7, seed: int = 0, stratified: bool = False):
    """Seeded shuffle, then the first ``round(ratio*n)`` rows train and the rest test.

    With ``stratified`` the same rule is applied within each class.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least two rows to split")
    rng = np.random.default_rng(seed)
    if stratified:
        train_idx, test_idx = [], []
        for cls in (0, 1):
            members = np.flatnonzero(dataset.labels == cls)
            members = members[rng.permutation(members.size)]
            cut = int(round(ratio * members.size))
            train_idx.extend(members[:cut])
            test_idx.extend(members[cut:])
        train_idx, test_idx = sorted(train_idx), sorted(test_idx)
    else:
        order = rng.permutation(n)
        cut = int(round(ratio * n))
        train_idx, test_idx = order[:cut], order[cut:]
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise ValueError(f"split of {n} rows at ratio {ratio} leaves an empty part")
    return dataset.subset(train_idx, "train"), dataset.subset(test_idx, "test")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(y_true, y_pred) -> ConfusionCounts:
    t = np.asarray(y_true).astype(np.int64).ravel()
    p = np.asarray(y_pred).astype(np.int64).ravel()
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} labels vs {p.size} predictions")
    for arr in (t, p):
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("labels must be binary 0/1")
    return ConfusionCounts(
        tp=int(np.sum((t == 1) & (p == 1))),
        fp=int(np.sum((t == 0) & (p == 1))),
        tn=int(np.sum((t == 0) & (p == 0))),
        fn=int(np.sum((t == 1) & (p == 0))),
    )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()

    def __iter__(self):
        return iter((self.accuracy, self.precision, self.recall, self.f1))


def metrics(c: ConfusionCounts) -> Metrics:
    """Accuracy, precision, recall and F1; an undefined ratio is reported as 0 and flagged."""
    if c.total <= 0:
        raise ValueError("metrics need a non-empty confusion table")
    flags = []
    accuracy = (c.tp + c.tn) / c.total
    if c.tp + c.fp == 0:
        precision = 0.0
        flags.append("precision_undefined")
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall = 0.0
        flags.append("recall_undefined")
    else:
        recall = c.tp / (c.tp + c.fn)
    if precision + recall == 0:
        f1 = 0.0
        flags.append("f1_undefined")
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(accuracy, precision, recall, f1, tuple(flags))


def majority_accuracy(y) -> float:
    y = np.asarray(y)
    share = float(np.mean(y == 1))
    return max(share, 1.0 - share)


# -- feature matrices --------------------------------------------------------------


class FeatureBuilder:
    """Caches split-independent per-account features for one corpus."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self._account: dict[str, np.ndarray] = {}
        self._sequence: dict[str, np.ndarray] = {}

    def _rows(self, cache, fn, ids):
        for a in ids:
            if a not in cache:
                cache[a] = fn(a)
        return np.asarray([cache[a] for a in ids], dtype=np.float64).reshape(len(ids), -1)

    def account(self, ids: Sequence[str], split_tag=None) -> FeatureMatrix:
        c = self.corpus
        X = self._rows(self._account, lambda a: account_features(c.registrations[a], c.timeline(a)), ids)
        return FeatureMatrix(X.reshape(len(ids), 6), list(ACCOUNT_FEATURE_NAMES), "account", tuple(ids), split_tag)

    def sequence(self, ids: Sequence[str], split_tag=None) -> FeatureMatrix:
        c = self.corpus
        names = sequence_feature_names()
        X = self._rows(self._sequence, lambda a: gen_sequence_features(c.timeline(a), c.t_reg(a)), ids)
        return FeatureMatrix(X.reshape(len(ids), len(names)), names, "sequence", tuple(ids), split_tag)

    def fit_pattern(self, train: LabeledDataset, cfg: "EvalConfig") -> PatternModel:
        if train.split == "test":
            raise classify.LeakageError("refusing to fit shapelets on a test split")
        c = self.corpus
        ids = train.account_ids
        return fit_pattern_model(
            [c.timeline(a) for a in ids],
            [c.t_reg(a) for a in ids],
            train.labels,
            n_weekly=cfg.n_weekly,
            n_monthly=cfg.n_monthly,
            candidate_stride=cfg.candidate_stride,
            profile_days=cfg.profile_days,
        )

    def pattern(self, ids: Sequence[str], model: PatternModel, split_tag=None) -> FeatureMatrix:
        c = self.corpus
        X = pattern_features([c.timeline(a) for a in ids], [c.t_reg(a) for a in ids], model)
        return FeatureMatrix(X, model.feature_names(), "pattern", tuple(ids), split_tag)


# -- the evaluation matrix ---------------------------------------------------------------


@dataclass
class EvalConfig:
    sets: tuple[str, ...] = ("BotSet1", "BotSet2", "BotSet3")
    feature_sets: tuple[str, ...] = classify.FEATURE_SETS
    classifiers: tuple[str, ...] = ("linear_svm", "logreg", "mlp", "random_forest")
    seed: int = 0
    ratio: float = 0.7
    stratified: bool = False
    n_weekly: int = 8
    n_monthly: int = 8
    candidate_stride: int = 1
    profile_days: int = 365
    hyperparameters: dict = field(default_factory=lambda: {k: dict(v) for k, v in classify.DEFAULT_HYPERPARAMETERS.items()})

    def __post_init__(self):
        for s in self.sets:
            if s not in BOT_SETS:
                raise ValueError(f"unknown ground-truth set {s!r}")
        for f in self.feature_sets:
            if f not in classify.FEATURE_SETS:
                raise ValueError(f"unknown feature set {f!r}")
        for k in self.classifiers:
            if k not in classify.KINDS:
                raise ValueError(f"unknown classifier {k!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("sets", "feature_sets", "classifiers"):
            d[key] = list(d[key])
        return d


@dataclass
class Cell:
    set_id: str
    feature_set: str
    classifier: str
    counts: ConfusionCounts | None = None
    scores: Metrics | None = None
    error: str | None = None

    def row(self) -> dict:
        row = {"set": self.set_id, "features": self.feature_set, "classifier": self.classifier}
        if self.counts is None:
            row.update({k: "" for k in REPORT_COLUMNS[3:]})
            return row
        row.update(asdict(self.counts))
        for name, value in zip(("accuracy", "precision", "recall", "f1"), self.scores):
            row[name] = f"{value:.6f}"
        return row


@dataclass
class SetRun:
    """Everything fitted for one ground-truth set; kept for leakage checks."""

    set_id: str
    train: LabeledDataset
    test: LabeledDataset
    pattern_model: PatternModel | None = None
    models: dict = field(default_factory=dict)  # (feature_set, classifier) -> ClassifierModel
    predictions: dict = field(default_factory=dict)
    column_manifest: dict = field(default_factory=dict)
    cells: list[Cell] = field(default_factory=list)


def run_set(corpus: Corpus, set_id: str, cfg: EvalConfig, builder: FeatureBuilder | None = None) -> SetRun:
    builder = builder or FeatureBuilder(corpus)
    dataset = build_ground_truth(set_id, list(corpus.registrations.values()))
    train, test = split(dataset, cfg.ratio, cfg.seed, cfg.stratified)
    run = SetRun(set_id, train, test)
    for fs in cfg.feature_sets:
        try:
            if fs == "pattern":
                run.pattern_model = builder.fit_pattern(train, cfg)
                F_train = builder.pattern(train.account_ids, run.pattern_model, "train")
                F_test = builder.pattern(test.account_ids, run.pattern_model, "test")
            else:
                F_train = getattr(builder, fs)(train.account_ids, "train")
                F_test = getattr(builder, fs)(test.account_ids, "test")
            scaler, X_train = standardize_fit_transform(F_train)
            X_test = standardize_apply(scaler, F_test)
            run.column_manifest[fs] = F_train.column_names
        except Exception as exc:  # a failing feature set aborts its cells only
            for kind in cfg.classifiers:
                run.cells.append(Cell(set_id, fs, kind, error=f"{type(exc).__name__}: {exc}"))
            continue
        for kind in cfg.classifiers:
            cell = Cell(set_id, fs, kind)
            try:
                model = classify.train(kind, X_train, train.labels, seed=cfg.seed, **cfg.hyperparameters.get(kind, {}))
                y_pred, _ = classify.predict(model, X_test)
                cell.counts = confusion(test.labels, y_pred)
                cell.scores = metrics(cell.counts)
                run.models[(fs, kind)] = model
                run.predictions[(fs, kind)] = y_pred
            except Exception as exc:
                cell.error = f"{type(exc).__name__}: {exc}"
            run.cells.append(cell)
    return run


@dataclass
class EvalReport:
    config: EvalConfig
    cells: list[Cell]
    baselines: dict[str, float]  # set -> majority-class accuracy on its test split
    split_sizes: dict[str, dict[str, int]]
    column_manifest: dict[str, list[str]]

    def cell(self, set_id: str, feature_set: str, classifier: str) -> Cell:
        for c in self.cells:
            if (c.set_id, c.feature_set, c.classifier) == (set_id, feature_set, classifier):
                return c
        raise KeyError((set_id, feature_set, classifier))

    def gains(self) -> dict[tuple[str, str], dict[str, float | None]]:
        """Pattern minus account accuracy and F1 per (set, classifier)."""
        out = {}
        for s in self.config.sets:
            for k in self.config.classifiers:
                try:
                    pat, acc = self.cell(s, "pattern", k), self.cell(s, "account", k)
                except KeyError:
                    continue
                if pat.scores is None or acc.scores is None:
                    out[(s, k)] = {"gain_accuracy": None, "gain_f1": None}
                else:
                    out[(s, k)] = {
                        "gain_accuracy": pat.scores.accuracy - acc.scores.accuracy,
                        "gain_f1": pat.scores.f1 - acc.scores.f1,
                    }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for c in self.cells:
            writer.writerow(c.row())
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "config": self.config.to_dict(),
            "split_sizes": self.split_sizes,
            "majority_baseline_accuracy": {k: round(v, 6) for k, v in self.baselines.items()},
            "column_manifest": self.column_manifest,
            "cells": [
                {
                    **c.row(),
                    "flags": list(c.scores.flags) if c.scores else [],
                    "error": c.error,
                }
                for c in self.cells
            ],
            "gains": [
                {
                    "set": s,
                    "classifier": k,
                    **{name: (None if v is None else round(v, 6)) for name, v in g.items()},
                }
                for (s, k), g in self.gains().items()
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Fixed-width table: classifiers x (accuracy, F1) rows, sets x feature sets + gain columns."""
        feats = list(self.config.feature_sets)
        show_gain = "pattern" in feats and "account" in feats
        sub = feats + (["gain"] if show_gain else [])
        gains = self.gains()
        width = 10
        head1 = f"{'':<6}{'':<10}" + "".join(f"{s:^{width * len(sub)}}" for s in self.config.sets)
        head2 = f"{'':<6}{'':<10}" + "".join(f"{f:>{width}}" for _ in self.config.sets for f in sub)
        lines = [head1, head2, "-" * len(head2)]

        def pct(v):
            return f"{100 * v:.2f}%" if v is not None and not (isinstance(v, float) and math.isnan(v)) else "n/a"

        for k in self.config.classifiers:
            for metric in ("accuracy", "f1"):
                label = CLASSIFIER_LABELS.get(k, k) if metric == "accuracy" else ""
                line = f"{label:<6}{('Accuracy' if metric == 'accuracy' else 'F1 Score'):<10}"
                for s in self.config.sets:
                    for f in feats:
                        try:
                            c = self.cell(s, f, k)
                            v = getattr(c.scores, metric) if c.scores else None
                        except KeyError:
                            v = None
                        line += f"{pct(v):>{width}}"
                    if show_gain:
                        g = gains.get((s, k), {}).get(f"gain_{metric}")
                        line += f"{pct(g):>{width}}"
                lines.append(line)
        lines.append("")
        lines.append(
            "majority-class baseline accuracy: "
            + ", ".join(f"{s}={100 * v:.2f}%" for s, v in self.baselines.items())
        )
        failed = [c for c in self.cells if c.error]
        for c in failed:
            lines.append(f"failed cell {c.set_id}/{c.feature_set}/{c.classifier}: {c.error}")
        flagged = [c for c in self.cells if c.scores and c.scores.flags]
        for c in flagged:
            lines.append(f"zero-denominator {c.set_id}/{c.feature_set}/{c.classifier}: {','.join(c.scores.flags)}")
        return "\n".join(lines) + "\n"


def run_matrix(corpus: Corpus, cfg: EvalConfig | None = None) -> EvalReport:
    """Evaluate every (set, feature set, classifier) cell; failures are recorded, not raised."""
    cfg = cfg or EvalConfig()
    builder = FeatureBuilder(corpus)
    cells: list[Cell] = []
    baselines, sizes, manifest = {}, {}, {}
    for set_id in cfg.sets:
        try:
            run = run_set(corpus, set_id, cfg, builder)
        except Exception as exc:
            for fs in cfg.feature_sets:
                for kind in cfg.classifiers:
                    cells.append(Cell(set_id, fs, kind, error=f"{type(exc).__name__}: {exc}"))
            continue
        cells.extend(run.cells)
        baselines[set_id] = majority_accuracy(run.test.labels)
        sizes[set_id] = {
            "train": len(run.train),
            "test": len(run.test),
            "positive": run.train.n_positive + run.test.n_positive,
            "negative": run.train.n_negative + run.test.n_negative,
        }
        manifest.update(run.column_manifest)
    return EvalReport(cfg, cells, baselines, sizes, manifest)
