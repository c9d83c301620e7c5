"""Seeded synthetic corpora with the bot/genuine behavioral contrasts built in.

Events come from an inhomogeneous Poisson process with a piecewise-constant
hourly intensity: diurnal profile x weekly multipliers x life-cycle envelope.

Genuine users post from registration onwards with a first-week burst, peak
around 05:00 UTC (per-account phase jitter of up to +-4h) and irregular
week-to-week volume. Bots belong to gangs; each gang registers its accounts
in a batch at a fixed hour and shares one event template (offsets from
registration). A bot takes ``round(synchrony * T)`` events from the template
and draws the rest of its ``T`` events on its own. Bot activity is confined to
days (14, 56] and (91, 180] after registration and peaks around 17:00 UTC.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .ingest import SECONDS_PER_DAY, EventRecord, Group, RegistrationRecord, parse_timestamp

HOUR = 3600
BOT_ACTIVE_DAYS = ((14, 56), (91, 180))
GENUINE_PEAK_HOUR = 5.0
BOT_PEAK_HOUR = 17.0

# SeedSequence branch codes; each account/gang gets its own stream
_GENUINE, _BOT, _GANG = 1, 2, 3


@dataclass(frozen=True)
class SynthConfig:
    n_genuine: int = 400
    n_bots: int = 400
    corpus_days: int = 365
    seed: int = 1
    bot_synchrony: float = 0.8
    n_gangs: int = 4
    noise_rate: float = 0.02  # idiosyncratic bot events per active day
    start: str = "2014-01-01T00:00:00Z"
    start_window_days: int = 30
    bot_groups: tuple[str, ...] = field(
        default=(Group.SOCIAL_BOT.value, Group.TRADITIONAL_BOT.value, Group.FAKE_FOLLOWER.value)
    )

    def __post_init__(self):
        if min(self.n_genuine, self.n_bots, self.corpus_days, self.n_gangs, self.start_window_days) < 0:
            raise ValueError("synth counts must be >= 0")
        if self.n_bots > 0 and self.n_gangs < 1:
            raise ValueError("bots need at least one gang")
        if not 0.0 <= self.bot_synchrony <= 1.0:
            raise ValueError("bot_synchrony must lie in [0, 1]")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be >= 0")
        for g in self.bot_groups:
            if Group(g) is Group.GENUINE:
                raise ValueError("bot_groups cannot contain 'genuine'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bot_groups"] = list(self.bot_groups)
        return d


def _rng(seed: int, branch: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, branch, index]))


def diurnal_profile(peak_hour: float, concentration: float = 1.5, floor: float = 0.15) -> np.ndarray:
    """24 hourly weights (summing to 1) with a smooth peak at ``peak_hour``."""
    h = np.arange(24)
    w = floor + np.exp(concentration * np.cos(2 * np.pi * (h - peak_hour) / 24))
    return w / w.sum()


def _poisson_offsets(rng, intensity: np.ndarray) -> np.ndarray:
    """Event offsets (seconds) for per-hour expected counts; bin i yields offsets in (i, i+1] hours."""
    counts = rng.poisson(intensity)
    bins = np.repeat(np.arange(len(intensity)), counts)
    return np.sort(bins * HOUR + rng.integers(1, HOUR + 1, size=bins.size))


def _bot_envelope(n_hours: int) -> np.ndarray:
    day = np.arange(n_hours) // 24
    active = np.zeros(n_hours, dtype=bool)
    for lo, hi in BOT_ACTIVE_DAYS:
        # hour bins of day d yield offsets in (d, d+1] days
        active |= (day >= lo) & (day < hi)
    return active.astype(np.float64)


def _bot_hours() -> int:
    return BOT_ACTIVE_DAYS[-1][1] * 24


@dataclass(frozen=True)
class _Gang:
    reg_hour: int
    template: np.ndarray  # offsets from registration, seconds
    group: Group


def _make_gang(cfg: SynthConfig, g: int) -> _Gang:
    rng = _rng(cfg.seed, _GANG, g)
    reg_hour = int(rng.integers(0, 24))
    n_hours = _bot_hours()
    # hour-of-day of offset bin i, given registration at reg_hour:00
    hod = (reg_hour + np.arange(n_hours)) % 24
    peak = BOT_PEAK_HOUR + rng.uniform(-1.0, 1.0)
    diurnal = diurnal_profile(peak, concentration=3.0, floor=0.02)[hod] * 24
    weekly = rng.gamma(shape=1.5, scale=1 / 1.5, size=n_hours // (7 * 24) + 1)[np.arange(n_hours) // (7 * 24)]
    rate = rng.uniform(1.0, 3.0)  # events per active day
    intensity = rate / 24 * diurnal * weekly * _bot_envelope(n_hours)
    template = _poisson_offsets(rng, intensity)
    group = Group(cfg.bot_groups[g % len(cfg.bot_groups)])
    return _Gang(reg_hour, template, group)


def _own_bot_offsets(rng, n: int) -> np.ndarray:
    """``n`` idiosyncratic events spread over the bot envelope with a private phase."""
    if n <= 0:
        return np.zeros(0, dtype=np.int64)
    n_hours = _bot_hours()
    weights = _bot_envelope(n_hours) * diurnal_profile(rng.uniform(0, 24), 1.0)[np.arange(n_hours) % 24]
    bins = rng.choice(n_hours, size=n, p=weights / weights.sum())
    return np.sort(bins * HOUR + rng.integers(1, HOUR + 1, size=n))


def _noise_offsets(rng, rate: float) -> np.ndarray:
    n_hours = _bot_hours()
    active = np.flatnonzero(_bot_envelope(n_hours))
    n = rng.poisson(rate * active.size / 24)
    bins = rng.choice(active, size=n)
    return np.sort(bins * HOUR + rng.integers(1, HOUR + 1, size=n))


def _counters(rng, n_events: int, bot: bool) -> dict:
    shift = -0.4 if bot else 0.0
    return {
        "statuses_count": int(n_events + rng.lognormal(4.0, 1.2)),
        "followers_count": int(rng.lognormal(5.0 + shift, 1.3)),
        "friends_count": int(rng.lognormal(5.0 - shift / 2, 1.1)),
        "favourites_count": int(rng.lognormal(4.0 + 2 * shift, 1.6)),
        "listed_count": int(rng.poisson(rng.lognormal(0.5 + shift, 1.0))),
    }


def _genuine(cfg: SynthConfig, i: int, start: int, horizon: int):
    rng = _rng(cfg.seed, _GENUINE, i)
    t_reg = start + int(rng.integers(0, max(cfg.start_window_days, 1) * SECONDS_PER_DAY))
    n_hours = max(0, -(-(horizon - t_reg) // HOUR))
    abs_hour = (t_reg // HOUR + np.arange(n_hours))
    hod = abs_hour % 24
    dow = ((t_reg + np.arange(n_hours) * HOUR) // SECONDS_PER_DAY + 3) % 7
    peak = GENUINE_PEAK_HOUR + rng.uniform(-4.0, 4.0)
    diurnal = diurnal_profile(peak)[hod] * 24
    dow_weight = np.array([0.9, 0.9, 0.9, 0.95, 1.05, 1.15, 1.15])[dow]
    week = np.arange(n_hours) // (7 * 24)
    weekly = rng.gamma(shape=1.0, scale=1.0, size=week.max() + 1 if n_hours else 1)[week]
    envelope = np.where(week == 0, 4.0, 1.0)
    rate = rng.lognormal(np.log(1.5), 0.7)
    offsets = _poisson_offsets(rng, rate / 24 * diurnal * dow_weight * weekly * envelope)
    offsets = offsets[offsets > 0]
    times = t_reg + offsets
    times = times[times <= horizon]
    return t_reg, times, _counters(rng, times.size, bot=False)


def _bot(cfg: SynthConfig, i: int, gang: _Gang, start: int, horizon: int):
    rng = _rng(cfg.seed, _BOT, i)
    day = int(rng.integers(0, max(cfg.start_window_days, 1)))
    t_reg = start + day * SECONDS_PER_DAY + gang.reg_hour * HOUR + int(rng.integers(0, 1200))
    total = gang.template.size
    n_shared = int(round(cfg.bot_synchrony * total))
    shared = np.sort(rng.choice(gang.template, size=n_shared, replace=False)) if n_shared else gang.template[:0]
    own = _own_bot_offsets(rng, total - n_shared)
    noise = _noise_offsets(rng, cfg.noise_rate) if cfg.noise_rate > 0 else own[:0]
    offsets = np.sort(np.concatenate([shared, own, noise]))
    offsets = offsets[offsets > 0]
    times = t_reg + offsets
    times = times[times <= horizon]
    return t_reg, times, _counters(rng, times.size, bot=True)


def generate(cfg: SynthConfig):
    """Build ``(registrations, events, labels)``; labels map account_id to 1 (bot) or 0."""
    start = parse_timestamp(cfg.start)
    horizon = start + cfg.corpus_days * SECONDS_PER_DAY
    registrations: list[RegistrationRecord] = []
    events: list[EventRecord] = []
    labels: dict[str, int] = {}

    for i in range(cfg.n_genuine):
        account_id = f"g{i:05d}"
        t_reg, times, counters = _genuine(cfg, i, start, horizon)
        registrations.append(RegistrationRecord(account_id, t_reg, group=Group.GENUINE, **counters))
        events.extend(EventRecord(account_id, int(t)) for t in times)
        labels[account_id] = 0

    gangs = [_make_gang(cfg, g) for g in range(cfg.n_gangs)] if cfg.n_bots else []
    for i in range(cfg.n_bots):
        gang = gangs[i % cfg.n_gangs]
        account_id = f"b{i:05d}"
        t_reg, times, counters = _bot(cfg, i, gang, start, horizon)
        registrations.append(RegistrationRecord(account_id, t_reg, group=gang.group, **counters))
        events.extend(EventRecord(account_id, int(t)) for t in times)
        labels[account_id] = 1
    return registrations, events, labels


def gang_of(cfg: SynthConfig, bot_index: int) -> int:
    return bot_index % cfg.n_gangs
