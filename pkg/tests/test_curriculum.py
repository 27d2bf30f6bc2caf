import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clot.curriculum import (
    DEFAULT_PARAMS,
    CompletionTracker,
    CurriculumParam,
    CurriculumState,
    load_curriculum,
    preshift_max_seconds,
    push_interval_range,
    update,
)

from oracles import curriculum_oracle

RATES = {
    "reward_penalty": 3e-6,
    "reward_limits": 2.5e-7,
    "push_interval": 1.5e-5,
    "observation_preshift": 5e-6,
    "termination_distance": 3e-6,
    "termination_scale": 1e-5,
    "noise": 3e-6,
}


def test_default_table():
    assert {p.name: p.rate for p in DEFAULT_PARAMS} == RATES
    state = CurriculumState()
    assert state.current("reward_penalty") == 0.05
    assert state.current("termination_distance") == 2.5
    assert state.threshold == 0.8


def test_single_update_is_exact_product():
    state = CurriculumState()
    before = state.snapshot()
    state.update(0.9)
    for p in DEFAULT_PARAMS:
        assert state.current(p.name) == before[p.name] * (1.0 + p.rate)


def test_no_update_at_or_below_threshold():
    state = CurriculumState()
    before = state.snapshot()
    state.update(0.8)
    state.update(0.1)
    assert state.snapshot() == before
    assert state.iteration == 2


def test_many_updates_match_oracle():
    state = CurriculumState()
    for _ in range(5000):
        state.update(1.0)
    for p in DEFAULT_PARAMS:
        assert state.current(p.name) == curriculum_oracle(p.lo, p.hi, p.rate, 5000)


def test_clamps_at_upper_bound():
    state = CurriculumState([CurriculumParam("x", 0.5, 1.0, 2.0)])
    values = []
    for _ in range(5):
        values.append(update(state, 0.95).current("x"))
    assert values == [1.5, 2.0, 2.0, 2.0, 2.0]


@settings(max_examples=100, deadline=None)
@given(etas=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=200))
def test_monotone_and_bounded(etas):
    state = CurriculumState([CurriculumParam("a", 0.05, 0.1, 0.3), CurriculumParam("b", 0.2, 1.0, 1.0)])
    prev = state.values
    for eta in etas:
        state.update(eta)
        now = state.values
        assert np.all(now >= prev)
        assert np.all(now <= [0.3, 1.0])
        prev = now


def test_rejects_bad_completion_ratio():
    with pytest.raises(ValueError):
        CurriculumState().update(1.2)


def test_rejects_bad_params():
    with pytest.raises(ValueError):
        CurriculumState([CurriculumParam("x", 0.0, 1.0, 2.0)])
    with pytest.raises(ValueError):
        CurriculumState([CurriculumParam("x", 0.1, 3.0, 2.0)])
    with pytest.raises(ValueError):
        CurriculumState(threshold=1.0)


def test_unknown_name():
    with pytest.raises(KeyError, match="nope"):
        CurriculumState().current("nope")


def test_json_round_trip(tmp_path):
    path = tmp_path / "c.json"
    state = CurriculumState(threshold=0.7)
    path.write_text(json.dumps(state.to_dict()))
    again = load_curriculum(path)
    assert again.params == state.params and again.threshold == 0.7


def test_log_row_format():
    state = CurriculumState()
    state.update(0.9)
    header = state.log_header().split(",")
    row = state.log_row(0.9).split(",")
    assert header[:2] == ["iteration", "eta"] and len(header) == len(row)
    assert float(row[header.index("noise")]) == state.current("noise")


def test_completion_tracker_window():
    tracker = CompletionTracker(window=4)
    assert tracker.ratio == 0.0
    for done in (True, True, False, True, False):
        tracker.record(done)
    assert tracker.ratio == 0.5


def test_push_interval_window_shrinks():
    state = CurriculumState()
    assert push_interval_range(state) == (3.0, 6.0)
    for _ in range(400_000):
        state.update(1.0)
    lo, hi = push_interval_range(state)
    assert lo == 3.0 and hi == pytest.approx(3.0)


def test_preshift_starts_at_one_second():
    assert preshift_max_seconds(CurriculumState()) == 1.0
