"""Registration-aligned behavioral sequences.

A behavioral sequence counts an account's events in consecutive windows of
``gran`` days, starting at the registration instant. Window ``k`` (1-based)
holds events whose offset ``o`` from registration satisfies
``gran*(k-1) < o <= gran*k`` (in days, compared in whole seconds), so an event
posted at the registration instant is never counted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import SECONDS_PER_DAY, RegistrationRecord

STATISTICS = ("count",)

# (name, dur, gran, column prefix)
DAILY = ("daily", 30, 1, "d")
WEEKLY = ("weekly", 371, 7, "w")
MONTHLY = ("monthly", 360, 30, "m")
SEQUENCE_LAYOUT = (DAILY, WEEKLY, MONTHLY)

ACCOUNT_FEATURE_NAMES = [
    "acct_statuses",
    "acct_followers",
    "acct_friends",
    "acct_favourites",
    "acct_listed",
    "acct_tweets_y1",
]


class InvalidSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SequenceSpec:
    dur: int
    gran: int
    statistic: str = "count"

    def __post_init__(self):
        if self.gran < 1:
            raise InvalidSpecError(f"gran must be >= 1 day, got {self.gran}")
        if self.dur < self.gran:
            raise InvalidSpecError(f"dur ({self.dur}) must be >= gran ({self.gran})")
        if self.statistic not in STATISTICS:
            raise InvalidSpecError(f"unsupported statistic {self.statistic!r}")

    @property
    def win(self) -> int:
        return self.dur // self.gran


@dataclass(frozen=True)
class BehavioralSequence:
    account_id: str
    spec: SequenceSpec
    values: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.values)


def _epochs(events) -> np.ndarray:
    """Coerce event timestamps (ints or EventRecords) to an int64 array."""
    if isinstance(events, np.ndarray):
        return events.astype(np.int64, copy=False)
    events = list(events)
    if events and hasattr(events[0], "occurred_at"):
        return np.fromiter((e.occurred_at for e in events), dtype=np.int64, count=len(events))
    return np.asarray(events, dtype=np.int64).reshape(-1)


def window_index(offsets: np.ndarray, gran: int) -> np.ndarray:
    """1-based window of each offset (seconds); 0 or less for offsets <= 0."""
    width = gran * SECONDS_PER_DAY
    return -(-offsets // width)


def gen_bhv_sequence(events, t_reg: int, dur: int, gran: int, account_id: str = "") -> BehavioralSequence:
    spec = SequenceSpec(dur, gran)
    offsets = _epochs(events) - int(t_reg)
    k = window_index(offsets, gran)
    k = k[(k >= 1) & (k <= spec.win)]
    values = np.bincount(k - 1, minlength=spec.win).astype(np.int64)
    return BehavioralSequence(account_id, spec, values)


def gen_sequence_features(events, t_reg: int) -> np.ndarray:
    """Daily(30) + weekly(53) + monthly(12) counts, 95 entries in that order."""
    ts = _epochs(events)
    parts = [gen_bhv_sequence(ts, t_reg, dur, gran).values for _, dur, gran, _ in SEQUENCE_LAYOUT]
    return np.concatenate(parts)


def sequence_feature_names() -> list[str]:
    names = []
    for _, dur, gran, prefix in SEQUENCE_LAYOUT:
        names += [f"{prefix}{k:02d}" for k in range(1, dur // gran + 1)]
    return names


def accumulate(seq: BehavioralSequence) -> BehavioralSequence:
    return BehavioralSequence(seq.account_id, seq.spec, np.cumsum(seq.values))


def account_features(reg: RegistrationRecord, events) -> np.ndarray:
    """Five profile counters plus the number of events in the first 365 days."""
    offsets = _epochs(events) - reg.created_at
    first_year = int(np.sum((offsets > 0) & (offsets <= 365 * SECONDS_PER_DAY)))
    return np.asarray([*reg.counters, first_year], dtype=np.float64)


def observed_days(reg: RegistrationRecord, corpus_end: int) -> float:
    return (corpus_end - reg.created_at) / SECONDS_PER_DAY
