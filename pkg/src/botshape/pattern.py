"""Seasonality profiles and shapelet features computed from behavioral sequences."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ingest import SECONDS_PER_DAY
from .sequence import MONTHLY, WEEKLY, _epochs, gen_bhv_sequence

HOUR_OF_DAY = "hour_of_day"
DAY_OF_WEEK = "day_of_week"
SEASONAL_KEYS = {HOUR_OF_DAY: 24, DAY_OF_WEEK: 7}
SHAPELET_FORMAT_VERSION = 1

# 1970-01-01 was a Thursday; weekday 0 is Monday.
_EPOCH_WEEKDAY = 3


def hour_of_day(epochs: np.ndarray) -> np.ndarray:
    return (epochs // 3600) % 24


def day_of_week(epochs: np.ndarray) -> np.ndarray:
    return (epochs // SECONDS_PER_DAY + _EPOCH_WEEKDAY) % 7


def _groups(epochs: np.ndarray, key: str) -> np.ndarray:
    if key == HOUR_OF_DAY:
        return hour_of_day(epochs)
    if key == DAY_OF_WEEK:
        return day_of_week(epochs)
    raise ValueError(f"unknown seasonal key {key!r}")


@dataclass(frozen=True)
class SeasonalProfile:
    key: str
    values: np.ndarray


def weekday_occurrences(t_reg: int, dur_days: int) -> np.ndarray:
    """How often each weekday occurs among the ``dur_days`` calendar days starting at the registration date."""
    first = int(day_of_week(np.int64(t_reg)))
    days = (first + np.arange(dur_days)) % 7
    return np.bincount(days, minlength=7)


def seasonal_profile(events, t_reg: int, dur_days: int, key: str) -> SeasonalProfile:
    """Mean events per occurrence of each hour (or weekday) in the first ``dur_days`` days."""
    if key not in SEASONAL_KEYS:
        raise ValueError(f"unknown seasonal key {key!r}")
    if dur_days < (7 if key == DAY_OF_WEEK else 1):
        raise ValueError(f"dur_days={dur_days} too short for {key}")
    epochs = _epochs(events)
    offsets = epochs - int(t_reg)
    inside = epochs[(offsets > 0) & (offsets <= dur_days * SECONDS_PER_DAY)]
    counts = np.bincount(_groups(inside, key), minlength=SEASONAL_KEYS[key]).astype(np.float64)
    if key == HOUR_OF_DAY:
        occurrences = np.full(24, float(dur_days))
    else:
        occurrences = weekday_occurrences(t_reg, dur_days).astype(np.float64)
    return SeasonalProfile(key, counts / occurrences)


def population_seasonality(events, key: str) -> np.ndarray:
    """Share of all events falling in each hour (or weekday)."""
    epochs = _epochs(events)
    if epochs.size == 0:
        raise ValueError("population_seasonality needs at least one event")
    counts = np.bincount(_groups(epochs, key), minlength=SEASONAL_KEYS[key])
    return counts / counts.sum()


# -- shapelets ---------------------------------------------------------------


def shapelet_distance(shapelet, series) -> float:
    """Smallest Euclidean distance between the shapelet and any equal-length window, divided by sqrt(L)."""
    s = np.asarray(shapelet, dtype=np.float64)
    x = np.asarray(series, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty shapelet")
    if s.size > x.size:
        raise ValueError(f"shapelet length {s.size} exceeds series length {x.size}")
    windows = sliding_window_view(x, s.size)
    sq = np.min(np.sum((windows - s) ** 2, axis=1))
    return math.sqrt(sq / s.size)


def shapelet_transform(shapelets: Sequence[np.ndarray], series: np.ndarray) -> np.ndarray:
    """Distances from every row of ``series`` (n, m) to every shapelet -> (n, n_shapelets)."""
    series = np.atleast_2d(np.asarray(series, dtype=np.float64))
    out = np.empty((series.shape[0], len(shapelets)))
    for j, s in enumerate(shapelets):
        s = np.asarray(s, dtype=np.float64)
        if s.size > series.shape[1]:
            raise ValueError(f"shapelet length {s.size} exceeds series length {series.shape[1]}")
        windows = sliding_window_view(series, s.size, axis=1)
        out[:, j] = np.sqrt(np.min(np.sum((windows - s) ** 2, axis=2), axis=1) / s.size)
    return out


def entropy(n_pos, n_total):
    """Binary entropy in bits of a node with ``n_pos`` positives out of ``n_total``."""
    n_pos = np.asarray(n_pos, dtype=np.float64)
    n_total = np.asarray(n_total, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n_total > 0, n_pos / np.where(n_total > 0, n_total, 1), 0.0)
        terms = [np.where(q > 0, -q * np.log2(np.where(q > 0, q, 1)), 0.0) for q in (p, 1 - p)]
    return terms[0] + terms[1]


def best_splits(distances: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Best single-threshold information gain per row of ``distances`` (c, n).

    Thresholds are midpoints between consecutive distinct sorted distances;
    samples with distance below the threshold go left. Among equal gains the
    smaller threshold wins. Rows with a single distinct distance get gain 0
    and that distance as threshold.
    """
    distances = np.atleast_2d(distances)
    c, n = distances.shape
    y = np.asarray(labels, dtype=np.float64)
    order = np.argsort(distances, axis=1, kind="stable")
    d_sorted = np.take_along_axis(distances, order, axis=1)
    y_sorted = y[order]
    base = entropy(y.sum(), n)
    if n < 2:
        return np.zeros(c), d_sorted[:, 0].copy()
    left_n = np.arange(1, n, dtype=np.float64)
    left_pos = np.cumsum(y_sorted, axis=1)[:, :-1]
    right_pos = y.sum() - left_pos
    after = (left_n * entropy(left_pos, left_n) + (n - left_n) * entropy(right_pos, n - left_n)) / n
    gain = base - after
    valid = d_sorted[:, 1:] > d_sorted[:, :-1]
    gain = np.where(valid, gain, -np.inf)
    idx = np.argmax(gain, axis=1)
    rows = np.arange(c)
    best = gain[rows, idx]
    thr = (d_sorted[rows, idx] + d_sorted[rows, idx + 1]) / 2
    none = ~np.isfinite(best)
    best = np.where(none, 0.0, np.maximum(best, 0.0))
    thr = np.where(none, d_sorted[:, 0], thr)
    return best, thr


@dataclass(frozen=True)
class Shapelet:
    values: np.ndarray
    gran: str
    threshold: float
    info_gain: float
    source: tuple[int, int] = (-1, -1)  # (training series index, start)

    def to_dict(self) -> dict:
        return {
            "gran": self.gran,
            "length": int(self.values.size),
            "values": [float(v) for v in self.values],
            "threshold": float(self.threshold),
            "info_gain": float(self.info_gain),
        }


@dataclass(frozen=True)
class ShapeletModel:
    shapelets: tuple[Shapelet, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.shapelets)

    def transform(self, series) -> np.ndarray:
        return shapelet_transform([s.values for s in self.shapelets], series)

    def to_json(self) -> str:
        payload = {
            "format_version": SHAPELET_FORMAT_VERSION,
            "shapelets": [s.to_dict() for s in self.shapelets],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ShapeletModel":
        payload = json.loads(text)
        if payload.get("format_version") != SHAPELET_FORMAT_VERSION:
            raise ValueError(f"unsupported shapelet model version {payload.get('format_version')!r}")
        shapelets = []
        for item in payload["shapelets"]:
            values = np.asarray(item["values"], dtype=np.float64)
            if values.size != item["length"]:
                raise ValueError("shapelet length field disagrees with values")
            shapelets.append(Shapelet(values, item["gran"], item["threshold"], item["info_gain"]))
        return cls(tuple(shapelets))


def shapelet_length(series_length: int, length_fraction: float) -> int:
    if not 0 < length_fraction <= 1:
        raise ValueError("length_fraction must be in (0, 1]")
    return max(1, int(round(length_fraction * series_length)))


def _candidate_distances(cands: np.ndarray, windows: np.ndarray, win_sq: np.ndarray) -> np.ndarray:
    """Min squared distance of each candidate (c, L) to each series' windows (n, w, L) -> (c, n)."""
    n, w, L = windows.shape
    cross = cands @ windows.reshape(n * w, L).T
    sq = (cands**2).sum(axis=1)[:, None] + win_sq.reshape(1, -1) - 2 * cross
    return np.maximum(sq, 0).reshape(len(cands), n, w).min(axis=2)


def discover_shapelets(
    sequences,
    labels,
    length_fraction: float,
    n_shapelets: int = 8,
    candidate_stride: int = 1,
    gran: str = "",
) -> ShapeletModel:
    """Exhaustive information-gain shapelet search.

    Every window of length ``round(length_fraction * m)`` (start positions
    stepped by ``candidate_stride``) of every training series is scored by the
    best threshold split of the training set on its shapelet distance. The
    ``n_shapelets`` highest-gain candidates with distinct values are kept,
    ties going to the earlier series and start position.

    Distances inside the search use the expanded square norm, which is exact
    for integer-valued series.
    """
    X = np.asarray(
        [s.values if hasattr(s, "values") else s for s in sequences], dtype=np.float64
    )
    if X.ndim != 2:
        raise ValueError("sequences must share one length")
    y = np.asarray(labels).astype(np.int64)
    if len(y) != len(X):
        raise ValueError("labels and sequences differ in length")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("shapelet discovery needs both classes")
    if counts.min() < 2:
        raise ValueError("shapelet discovery needs at least 2 sequences per class")
    if n_shapelets < 1:
        raise ValueError("n_shapelets must be >= 1")
    if candidate_stride < 1:
        raise ValueError("candidate_stride must be >= 1")
    n, m = X.shape
    L = shapelet_length(m, length_fraction)
    if L > m:
        raise ValueError(f"sequence length {m} shorter than shapelet length {L}")

    windows = sliding_window_view(X, L, axis=1)  # (n, m-L+1, L)
    win_sq = (windows**2).sum(axis=2)
    starts = np.arange(0, m - L + 1, candidate_stride)
    gains, thresholds = [], []
    for i in range(n):
        cands = windows[i, starts]
        sq = _candidate_distances(cands, windows, win_sq)
        g, t = best_splits(np.sqrt(sq / L), y)
        gains.append(g)
        thresholds.append(t)
    gains = np.concatenate(gains)
    thresholds = np.concatenate(thresholds)
    src_series = np.repeat(np.arange(n), len(starts))
    src_start = np.tile(starts, n)

    # descending gain, then series, then start
    order = np.lexsort((src_start, src_series, -gains))
    chosen: list[Shapelet] = []
    seen: set[bytes] = set()
    for idx in order:
        i, s = int(src_series[idx]), int(src_start[idx])
        values = X[i, s : s + L].copy()
        key = values.tobytes()
        if key in seen:
            continue
        seen.add(key)
        chosen.append(Shapelet(values, gran, float(thresholds[idx]), float(gains[idx]), (i, s)))
        if len(chosen) == n_shapelets:
            break
    return ShapeletModel(tuple(chosen))


# -- pattern feature set ---------------------------------------------------------

WEEKLY_FRACTION = 0.3
MONTHLY_FRACTION = 0.5
PROFILE_DAYS = 365


@dataclass(frozen=True)
class PatternModel:
    """Shapelets fitted on a training split for the weekly and monthly sequences."""

    weekly: ShapeletModel
    monthly: ShapeletModel
    profile_days: int = PROFILE_DAYS

    def feature_names(self) -> list[str]:
        return (
            [f"hour_{h:02d}" for h in range(24)]
            + [f"dow_{d}" for d in range(7)]
            + [f"shp_w{j + 1:02d}" for j in range(len(self.weekly))]
            + [f"shp_m{j + 1:02d}" for j in range(len(self.monthly))]
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "format_version": SHAPELET_FORMAT_VERSION,
                "profile_days": self.profile_days,
                "weekly": json.loads(self.weekly.to_json()),
                "monthly": json.loads(self.monthly.to_json()),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PatternModel":
        payload = json.loads(text)
        return cls(
            ShapeletModel.from_json(json.dumps(payload["weekly"])),
            ShapeletModel.from_json(json.dumps(payload["monthly"])),
            payload.get("profile_days", PROFILE_DAYS),
        )


def _granular(timelines, t_regs, spec) -> np.ndarray:
    _, dur, gran, _ = spec
    return np.asarray(
        [gen_bhv_sequence(ts, t, dur, gran).values for ts, t in zip(timelines, t_regs)],
        dtype=np.float64,
    )


def fit_pattern_model(
    timelines: Sequence[np.ndarray],
    t_regs: Sequence[int],
    labels,
    n_weekly: int = 8,
    n_monthly: int = 8,
    candidate_stride: int = 1,
    profile_days: int = PROFILE_DAYS,
) -> PatternModel:
    """Fit weekly and monthly shapelets. Pass training accounts only."""
    weekly = discover_shapelets(
        _granular(timelines, t_regs, WEEKLY), labels, WEEKLY_FRACTION, n_weekly, candidate_stride, "weekly"
    )
    monthly = discover_shapelets(
        _granular(timelines, t_regs, MONTHLY), labels, MONTHLY_FRACTION, n_monthly, candidate_stride, "monthly"
    )
    return PatternModel(weekly, monthly, profile_days)


def pattern_features(timelines: Sequence[np.ndarray], t_regs: Sequence[int], model: PatternModel) -> np.ndarray:
    """Hour profile (24), weekday profile (7), weekly then monthly shapelet distances."""
    rows = []
    for ts, t in zip(timelines, t_regs):
        rows.append(
            np.concatenate(
                [
                    seasonal_profile(ts, t, model.profile_days, HOUR_OF_DAY).values,
                    seasonal_profile(ts, t, model.profile_days, DAY_OF_WEEK).values,
                ]
            )
        )
    profiles = np.asarray(rows).reshape(len(rows), 31)
    weekly = model.weekly.transform(_granular(timelines, t_regs, WEEKLY)) if len(rows) else np.empty((0, len(model.weekly)))
    monthly = model.monthly.transform(_granular(timelines, t_regs, MONTHLY)) if len(rows) else np.empty((0, len(model.monthly)))
    return np.hstack([profiles, weekly, monthly])
