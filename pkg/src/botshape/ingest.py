"""Registration and event log parsing, activity filtering and ground-truth sets."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

SECONDS_PER_DAY = 86400

REGISTRATION_COLUMNS = [
    "account_id",
    "created_at",
    "statuses_count",
    "followers_count",
    "friends_count",
    "favourites_count",
    "listed_count",
    "group",
]
COUNTER_COLUMNS = REGISTRATION_COLUMNS[2:7]
EVENT_COLUMNS = ["account_id", "occurred_at"]
FORMATS = ("csv", "jsonl")


class IngestError(ValueError):
    """Fatal problem with an input file (unreadable stream, missing column, duplicate id)."""


class Group(str, Enum):
    GENUINE = "genuine"
    SOCIAL_BOT = "social_bot"
    TRADITIONAL_BOT = "traditional_bot"
    FAKE_FOLLOWER = "fake_follower"


BOT_SETS: dict[str, frozenset[Group]] = {
    "BotSet1": frozenset({Group.SOCIAL_BOT}),
    "BotSet2": frozenset({Group.SOCIAL_BOT, Group.TRADITIONAL_BOT}),
    "BotSet3": frozenset({Group.SOCIAL_BOT, Group.TRADITIONAL_BOT, Group.FAKE_FOLLOWER}),
}


@dataclass(frozen=True)
class RegistrationRecord:
    account_id: str
    created_at: int  # epoch seconds, UTC
    statuses_count: int = 0
    followers_count: int = 0
    friends_count: int = 0
    favourites_count: int = 0
    listed_count: int = 0
    group: Group = Group.GENUINE

    @property
    def counters(self) -> tuple[int, int, int, int, int]:
        return (
            self.statuses_count,
            self.followers_count,
            self.friends_count,
            self.favourites_count,
            self.listed_count,
        )


@dataclass(frozen=True)
class EventRecord:
    account_id: str
    occurred_at: int  # epoch seconds, UTC


class Reject(NamedTuple):
    line: int
    reason: str


class ParseResult(NamedTuple):
    records: list
    rejects: list[Reject]


@dataclass(frozen=True)
class LabeledDataset:
    set_id: str
    account_ids: tuple[str, ...]
    labels: np.ndarray  # 1 = bot, 0 = genuine
    split: str | None = None  # "train" / "test" once split

    def __post_init__(self):
        if len(self.account_ids) != len(self.labels):
            raise ValueError("account_ids and labels differ in length")
        if len(set(self.account_ids)) != len(self.account_ids):
            raise ValueError("duplicate account_id in dataset")

    def __len__(self) -> int:
        return len(self.account_ids)

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n_negative(self) -> int:
        return int(np.sum(self.labels == 0))

    def subset(self, index: Sequence[int], split: str | None = None) -> "LabeledDataset":
        index = list(index)
        return LabeledDataset(
            self.set_id,
            tuple(self.account_ids[i] for i in index),
            self.labels[index].copy(),
            split,
        )


# -- timestamps -------------------------------------------------------------


def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 timestamp into UTC epoch seconds.

    A trailing ``Z`` is accepted; naive timestamps are taken as UTC.
    Sub-second precision is truncated.
    """
    text = text.strip()
    if not text:
        raise ValueError("empty timestamp")
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() // 1)


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# -- parsing ----------------------------------------------------------------


def _decode(stream: IO | bytes | str) -> str:
    try:
        if isinstance(stream, (bytes, bytearray)):
            return bytes(stream).decode("utf-8")
        if isinstance(stream, str):
            return stream
        data = stream.read()
        return data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    except (UnicodeDecodeError, OSError) as exc:
        raise IngestError(f"unreadable stream: {exc}") from exc


def _rows(stream, fmt: str, required: Sequence[str]) -> Iterable[tuple[int, dict | None, str]]:
    """Yield (line number, row mapping or None, error reason)."""
    if fmt not in FORMATS:
        raise IngestError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    text = _decode(stream)
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text, newline=""))
        header = reader.fieldnames
        if header is None:
            raise IngestError("csv stream has no header row")
        for col in required:
            if col not in header:
                raise IngestError(f"missing mandatory column: {col}")
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                yield reader.line_num, None, "wrong number of fields"
            else:
                yield reader.line_num, row, ""
        return
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            yield lineno, None, f"invalid json: {exc.msg}"
            continue
        if not isinstance(obj, dict):
            yield lineno, None, "not a json object"
            continue
        missing = [col for col in required if col not in obj]
        if missing:
            yield lineno, None, f"missing field: {missing[0]}"
            continue
        yield lineno, obj, ""


def _counter(value) -> int:
    if isinstance(value, bool):
        raise ValueError("boolean counter")
    if isinstance(value, str):
        value = value.strip()
    n = int(value)
    if n < 0:
        raise ValueError("negative counter")
    return n


def parse_registrations(stream, fmt: str = "csv") -> ParseResult:
    """Parse a registrations file into :class:`RegistrationRecord` objects.

    Malformed rows are returned as rejects with their line numbers. A missing
    column or a duplicated ``account_id`` is fatal.
    """
    records: list[RegistrationRecord] = []
    rejects: list[Reject] = []
    seen: set[str] = set()
    for line, row, reason in _rows(stream, fmt, REGISTRATION_COLUMNS):
        if row is None:
            rejects.append(Reject(line, reason))
            continue
        account_id = str(row["account_id"]).strip()
        if not account_id:
            rejects.append(Reject(line, "empty account_id"))
            continue
        try:
            created_at = parse_timestamp(str(row["created_at"]))
        except ValueError:
            rejects.append(Reject(line, f"unparseable created_at: {row['created_at']!r}"))
            continue
        try:
            counters = [_counter(row[col]) for col in COUNTER_COLUMNS]
        except (TypeError, ValueError):
            rejects.append(Reject(line, "invalid counter value"))
            continue
        try:
            group = Group(str(row["group"]).strip())
        except ValueError:
            rejects.append(Reject(line, f"unknown group: {row['group']!r}"))
            continue
        if account_id in seen:
            raise IngestError(f"duplicate account_id {account_id!r} at line {line}")
        seen.add(account_id)
        records.append(RegistrationRecord(account_id, created_at, *counters, group=group))
    return ParseResult(records, rejects)


def parse_events(
    stream,
    fmt: str = "csv",
    registrations: Sequence[RegistrationRecord] | None = None,
) -> ParseResult:
    """Parse an events file.

    When ``registrations`` is given, events of unknown accounts and events
    stamped before their account's registration are dropped and reported.
    """
    created = None if registrations is None else {r.account_id: r.created_at for r in registrations}
    records: list[EventRecord] = []
    rejects: list[Reject] = []
    for line, row, reason in _rows(stream, fmt, EVENT_COLUMNS):
        if row is None:
            rejects.append(Reject(line, reason))
            continue
        account_id = str(row["account_id"]).strip()
        if not account_id:
            rejects.append(Reject(line, "empty account_id"))
            continue
        try:
            occurred_at = parse_timestamp(str(row["occurred_at"]))
        except ValueError:
            rejects.append(Reject(line, f"unparseable occurred_at: {row['occurred_at']!r}"))
            continue
        if created is not None:
            if account_id not in created:
                rejects.append(Reject(line, "unknown account_id"))
                continue
            if occurred_at < created[account_id]:
                rejects.append(Reject(line, "event precedes registration"))
                continue
        records.append(EventRecord(account_id, occurred_at))
    return ParseResult(records, rejects)


def read_registrations(path, fmt: str | None = None) -> ParseResult:
    fmt = fmt or _guess_format(path)
    with open(path, "rb") as fh:
        return parse_registrations(fh, fmt)


def read_events(path, registrations=None, fmt: str | None = None) -> ParseResult:
    fmt = fmt or _guess_format(path)
    with open(path, "rb") as fh:
        return parse_events(fh, fmt, registrations)


def _guess_format(path) -> str:
    return "jsonl" if str(path).endswith((".jsonl", ".json")) else "csv"


# -- serialization ------------------------------------------------------------


def _registration_row(r: RegistrationRecord) -> dict:
    return {
        "account_id": r.account_id,
        "created_at": format_timestamp(r.created_at),
        "statuses_count": r.statuses_count,
        "followers_count": r.followers_count,
        "friends_count": r.friends_count,
        "favourites_count": r.favourites_count,
        "listed_count": r.listed_count,
        "group": r.group.value,
    }


def _event_row(e: EventRecord) -> dict:
    return {"account_id": e.account_id, "occurred_at": format_timestamp(e.occurred_at)}


def _dump(rows: Iterable[dict], columns: Sequence[str], fmt: str, out: IO[str]) -> None:
    if fmt == "csv":
        writer = csv.DictWriter(out, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    elif fmt == "jsonl":
        for row in rows:
            out.write(json.dumps(row, sort_keys=False) + "\n")
    else:
        raise IngestError(f"unknown format {fmt!r}")


def write_registrations(records: Iterable[RegistrationRecord], out: IO[str], fmt: str = "csv") -> None:
    _dump((_registration_row(r) for r in records), REGISTRATION_COLUMNS, fmt, out)


def write_events(records: Iterable[EventRecord], out: IO[str], fmt: str = "csv") -> None:
    _dump((_event_row(e) for e in records), EVENT_COLUMNS, fmt, out)


def write_rejects(rejects: Iterable[Reject], out: IO[str]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["line", "reason"])
    writer.writerows(rejects)


# -- filtering and ground truth ----------------------------------------------------


def group_events(events: Iterable[EventRecord]) -> dict[str, np.ndarray]:
    """Map account_id to a sorted int64 array of event epoch seconds."""
    buckets: dict[str, list[int]] = defaultdict(list)
    for e in events:
        buckets[e.account_id].append(e.occurred_at)
    return {k: np.sort(np.asarray(v, dtype=np.int64)) for k, v in buckets.items()}


def _as_timeline(events) -> dict[str, np.ndarray]:
    if isinstance(events, dict):
        return events
    return group_events(events)


def filter_active(
    registrations: Sequence[RegistrationRecord],
    events,
    window_days: int = 30,
) -> list[RegistrationRecord]:
    """Keep accounts with at least one event in ``[0, window_days]`` days after registering.

    ``events`` is either a list of :class:`EventRecord` or the mapping returned
    by :func:`group_events`. Both bounds are inclusive.
    """
    if window_days < 1:
        raise ValueError("window_days must be >= 1")
    timeline = _as_timeline(events)
    limit = window_days * SECONDS_PER_DAY
    kept = []
    for reg in registrations:
        ts = timeline.get(reg.account_id)
        if ts is None or ts.size == 0:
            continue
        offsets = ts - reg.created_at
        if np.any((offsets >= 0) & (offsets <= limit)):
            kept.append(reg)
    return kept


def build_ground_truth(set_id: str, registrations: Sequence[RegistrationRecord]) -> LabeledDataset:
    """Label accounts for one of the three escalating bot sets.

    Genuine users are the negatives in every set; accounts from groups outside
    the set's bot scope are left out.
    """
    if set_id not in BOT_SETS:
        raise ValueError(f"unknown ground-truth set {set_id!r}; expected one of {sorted(BOT_SETS)}")
    positives = BOT_SETS[set_id]
    ids, labels = [], []
    for reg in registrations:
        if reg.group in positives:
            ids.append(reg.account_id)
            labels.append(1)
        elif reg.group is Group.GENUINE:
            ids.append(reg.account_id)
            labels.append(0)
    y = np.asarray(labels, dtype=np.int64)
    if not np.any(y == 1):
        raise ValueError(f"{set_id}: no positive (bot) accounts in corpus")
    if not np.any(y == 0):
        raise ValueError(f"{set_id}: no negative (genuine) accounts in corpus")
    return LabeledDataset(set_id, tuple(ids), y)
