import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from botshape.ingest import RegistrationRecord
from botshape.sequence import (
    InvalidSpecError,
    SequenceSpec,
    accumulate,
    account_features,
    gen_bhv_sequence,
    gen_sequence_features,
    sequence_feature_names,
)
from oracles import window_counts

DAY = 86400
H = 3600
T0 = 1_398_902_400  # 2014-05-01T00:00:00Z


def test_no_events_gives_zeros():
    seq = gen_bhv_sequence([], T0, 30, 1)
    assert seq.values.tolist() == [0] * 30


def test_hand_counted_windows():
    events = [T0 + o for o in (1 * H, 25 * H, 26 * H, 73 * H)]
    assert gen_bhv_sequence(events, T0, 3, 1).values.tolist() == [1, 2, 0]


def test_monthly_grid_length():
    assert len(gen_bhv_sequence([], T0, 360, 30)) == 12


def test_registration_instant_is_excluded_and_upper_bound_included():
    events = [T0, T0 + DAY, T0 + DAY + 1]
    assert gen_bhv_sequence(events, T0, 2, 1).values.tolist() == [1, 1]


def test_invalid_spec():
    with pytest.raises(InvalidSpecError):
        gen_bhv_sequence([], T0, 3, 7)
    with pytest.raises(InvalidSpecError):
        SequenceSpec(10, 0)
    assert SequenceSpec(371, 7).win == 53


def test_sequence_features_empty_and_layout():
    v = gen_sequence_features([], T0)
    assert v.shape == (95,) and not v.any()
    names = sequence_feature_names()
    assert names[0] == "d01" and names[29] == "d30" and names[30] == "w01" and names[82] == "w53"
    assert names[83] == "m01" and names[-1] == "m12" and len(names) == 95


def test_single_event_placement():
    v = gen_sequence_features([T0 + 10 * DAY], T0)
    daily, weekly, monthly = v[:30], v[30:83], v[83:]
    assert np.flatnonzero(daily).tolist() == [9]  # window 10
    assert np.flatnonzero(weekly).tolist() == [1]  # week 2
    assert np.flatnonzero(monthly).tolist() == [0]  # month 1
    assert v.sum() == 3


@given(st.lists(st.integers(-5 * DAY, 40 * DAY), max_size=40))
def test_daily_segment_conserves_first_month(offsets):
    v = gen_sequence_features([T0 + o for o in offsets], T0)
    assert v[:30].sum() == sum(1 for o in offsets if 0 < o <= 30 * DAY)


def test_accumulate_examples():
    seq = gen_bhv_sequence([T0 + o for o in (H, 25 * H, 26 * H)], T0, 3, 1)
    assert accumulate(seq).values.tolist() == [1, 3, 3]
    assert accumulate(gen_bhv_sequence([], T0, 5, 1)).values.tolist() == [0] * 5


@given(st.lists(st.integers(0, 400 * DAY), max_size=50))
def test_accumulate_monotone_and_conserving(offsets):
    seq = gen_bhv_sequence([T0 + o for o in offsets], T0, 360, 30)
    acc = accumulate(seq).values
    assert np.all(np.diff(acc) >= 0)
    assert acc[-1] == seq.values.sum()
    assert accumulate(seq).spec == seq.spec


def test_account_features_examples():
    r0 = RegistrationRecord("a", T0)
    assert account_features(r0, []).tolist() == [0] * 6
    r = RegistrationRecord("a", T0, 10, 5, 3, 2, 1)
    assert account_features(r, [T0 + 100 * DAY]).tolist() == [10, 5, 3, 2, 1, 1]
    assert account_features(r, [T0 + 366 * DAY]).tolist() == [10, 5, 3, 2, 1, 0]
    assert account_features(r, [T0 + 365 * DAY]).tolist()[-1] == 1


fixtures = st.tuples(
    st.lists(st.integers(-3 * DAY, 200 * DAY), max_size=50),
    st.integers(1, 120),
    st.integers(1, 30),
)


@given(fixtures)
def test_matches_window_oracle(fixture):
    offsets, dur, gran = fixture
    if dur < gran:
        dur, gran = gran, dur
    events = [T0 + o for o in offsets]
    assert gen_bhv_sequence(events, T0, dur, gran).values.tolist() == window_counts(events, T0, dur, gran)


@given(st.lists(st.integers(-DAY, 100 * DAY), max_size=50), st.randoms(use_true_random=False))
def test_permutation_invariance(offsets, rnd):
    events = [T0 + o for o in offsets]
    shuffled = events[:]
    rnd.shuffle(shuffled)
    a = gen_bhv_sequence(events, T0, 84, 7).values
    b = gen_bhv_sequence(np.asarray(shuffled, dtype=np.int64), T0, 84, 7).values
    assert a.tolist() == b.tolist()


@given(st.lists(st.integers(-DAY, 130 * DAY), max_size=50), st.integers(1, 10), st.integers(1, 6))
def test_refinement_consistency(offsets, g, pairs):
    dur = 2 * g * pairs
    events = [T0 + o for o in offsets]
    fine = gen_bhv_sequence(events, T0, dur, g).values
    coarse = gen_bhv_sequence(events, T0, dur, 2 * g).values
    assert (fine[0::2] + fine[1::2]).tolist() == coarse.tolist()


@given(st.lists(st.integers(-DAY, 400 * DAY), max_size=50), st.integers(1, 400), st.integers(1, 40))
def test_sum_bounded_by_events_in_horizon(offsets, dur, gran):
    if dur < gran:
        dur, gran = gran, dur
    seq = gen_bhv_sequence([T0 + o for o in offsets], T0, dur, gran)
    win = dur // gran
    assert len(seq) == win
    assert seq.values.min(initial=0) >= 0
    assert seq.values.sum() <= sum(1 for o in offsets if 0 < o <= win * gran * DAY)
