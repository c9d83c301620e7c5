"""Measurement views: box-plot statistics per window and DTW k-medoids clustering."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np

BOT_CLUSTERS = 5
GENUINE_CLUSTERS = 6
SAMPLE_PER_GROUP = 200


def dtw(a, b) -> float:
    """Dynamic time warping distance with |a_i - b_j| local cost and no window."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("dtw needs non-empty series")
    n, m = a.size, b.size
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    cost = np.abs(a[:, None] - b[None, :])
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return float(acc[n, m])


def dtw_matrix(series) -> np.ndarray:
    """Pairwise DTW between rows of an (n, m) array, vectorised over pairs."""
    X = np.asarray(series, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("dtw_matrix expects a non-empty 2-D array")
    n, m = X.shape
    ii, jj = np.triu_indices(n, k=1)
    A, B = X[ii], X[jj]
    # acc[p, j] holds the running row for pair p
    prev = np.full((len(ii), m + 1), np.inf)
    prev[:, 0] = 0.0
    for i in range(m):
        cur = np.full_like(prev, np.inf)
        cost = np.abs(A[:, i : i + 1] - B)
        for j in range(1, m + 1):
            cur[:, j] = cost[:, j - 1] + np.minimum(np.minimum(prev[:, j], cur[:, j - 1]), prev[:, j - 1])
        prev = cur
    D = np.zeros((n, n))
    D[ii, jj] = prev[:, m]
    D[jj, ii] = prev[:, m]
    return D


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    account_ids: tuple[str, ...]
    labels: np.ndarray
    medoids: np.ndarray  # row indices into the input set
    centroids: np.ndarray
    inertia: float
    inertia_trace: tuple[float, ...]
    n_iter: int

    @property
    def mean_within_distance(self) -> float:
        return self.inertia / len(self.labels)

    def assignments(self) -> dict[str, int]:
        return dict(zip(self.account_ids, (int(c) for c in self.labels)))


def _assign(D: np.ndarray, medoids: np.ndarray) -> np.ndarray:
    return np.argmin(D[:, medoids], axis=1)


def dtw_kmedoids(
    series,
    k: int,
    max_iter: int = 100,
    seed: int = 0,
    account_ids: Sequence[str] | None = None,
    distances: np.ndarray | None = None,
) -> ClusterAssignment:
    """Alternating k-medoids under DTW with seeded random initial medoids."""
    X = np.asarray(series, dtype=np.float64)
    n = len(X)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds number of series ({n})")
    D = dtw_matrix(X) if distances is None else distances
    rng = np.random.default_rng(seed)
    medoids = np.sort(rng.choice(n, size=k, replace=False))
    labels = _assign(D, medoids)
    trace = [float(D[np.arange(n), medoids[labels]].sum())]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_medoids = medoids.copy()
        for c in range(k):
            members = np.flatnonzero(labels == c)
            if members.size == 0:
                continue
            within = D[np.ix_(members, members)].sum(axis=1)
            new_medoids[c] = members[np.argmin(within)]
        new_labels = _assign(D, new_medoids)
        trace.append(float(D[np.arange(n), new_medoids[new_labels]].sum()))
        stable = np.array_equal(new_labels, labels) and np.array_equal(new_medoids, medoids)
        medoids, labels = new_medoids, new_labels
        if stable:
            break
    ids = tuple(account_ids) if account_ids is not None else tuple(str(i) for i in range(n))
    return ClusterAssignment(k, ids, labels, medoids, X[medoids].copy(), trace[-1], tuple(trace), n_iter)


@dataclass(frozen=True)
class BoxStats:
    min: float
    q1: float
    mean: float
    q3: float
    max: float
    n: int


def boxplot_stats(values) -> BoxStats:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("boxplot_stats needs at least one value")
    q1, q3 = np.quantile(v, [0.25, 0.75], method="linear")
    return BoxStats(float(v.min()), float(q1), float(v.mean()), float(q3), float(v.max()), int(v.size))


COHORT_COLUMNS = ["label", "window", "min", "q1", "mean", "q3", "max", "n"]


def cohort_report(groups: Mapping[str, np.ndarray], mode: str = "raw") -> list[dict]:
    """Box statistics per window for each label.

    ``groups`` maps a label to an (accounts, windows) array of raw counts.
    In ``accumulated`` mode each account's sequence is prefix-summed first.
    """
    if mode not in ("raw", "accumulated"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(groups) < 2:
        raise ValueError("cohort_report needs both labels")
    rows = []
    for label, seqs in groups.items():
        arr = np.asarray(seqs, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError(f"no sequences for label {label!r}")
        if mode == "accumulated":
            arr = np.cumsum(arr, axis=1)
        for w in range(arr.shape[1]):
            s = boxplot_stats(arr[:, w])
            rows.append(
                {"label": label, "window": w + 1, "min": s.min, "q1": s.q1, "mean": s.mean,
                 "q3": s.q3, "max": s.max, "n": s.n}
            )
    return rows


def _fmt(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_cohort_report(rows: Sequence[dict], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COHORT_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in COHORT_COLUMNS])


def write_clusters(assignment: ClusterAssignment, out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["account_id", "cluster"])
    for account_id, c in zip(assignment.account_ids, assignment.labels):
        writer.writerow([account_id, int(c)])
