import pytest
from pilotwave_study.models.toy_models import (CYCLE_YEARS, DAYS_PER_YEAR, ShoemakerState, calendar, clock_independent,
                                               cycle_determinism, full_pause_years, is_deterministic,
                                               non_markov_witness, paused_in, run, step, trace_frame,
                                               transition_table)


def test_calendar():
    assert calendar(0) == (1, 1)
    assert calendar(364) == (1, 365)
    assert calendar(DAYS_PER_YEAR) == (2, 1)
    assert CYCLE_YEARS == 60


def test_each_civilization_pauses_in_its_years():
    trace = run(12)
    for state in trace[:-1]:
        assert state.paused == (state.year % 3 == 0, state.year % 4 == 0, state.year % 5 == 0)
    final = trace[-1]
    # 12 years: A pauses in 3, 6, 9, 12; B in 4, 8, 12; C in 5, 10
    assert final.progress == (8 * DAYS_PER_YEAR, 9 * DAYS_PER_YEAR, 10 * DAYS_PER_YEAR)


def test_whole_universe_pauses_only_every_sixtieth_year():
    assert full_pause_years(150) == [60, 120]
    assert all(paused_in(60)) and not all(paused_in(30))


def test_visible_history_has_a_witness_within_sixty_one_years():
    witness = non_markov_witness(61)
    assert witness is not None
    assert witness.first_calendar[0] == 60
    assert witness.second_calendar == (60, DAYS_PER_YEAR)
    assert witness.first_successor != witness.second_successor
    summary = witness.to_dict()
    assert summary['visible_state']['paused'] == {'A': True, 'B': True, 'C': True}


def test_no_witness_before_the_first_full_pause():
    assert non_markov_witness(59) is None


def test_clock_makes_the_history_markov():
    assert non_markov_witness(61, augmented=True) is None
    assert cycle_determinism(1)
    assert clock_independent(samples=50, seed=1)


def test_visible_transitions_are_not_deterministic():
    trace = run(61)
    assert not is_deterministic(transition_table(trace, lambda s: s.visible))
    assert is_deterministic(transition_table(trace, lambda s: s.augmented))


def test_late_start_keeps_the_calendar():
    start = ShoemakerState.start(59 * DAYS_PER_YEAR)
    assert start.year == 60 and all(start.paused)
    assert step(start).progress == (0, 0, 0)


def test_universe_steps_in_whole_days():
    with pytest.raises(ValueError):
        step(ShoemakerState.start(), dt=0.5)


def test_trace_frame_columns():
    trace = run(1)
    frame = trace_frame(trace)
    assert len(frame) == DAYS_PER_YEAR + 1
    assert {'clock', 'year', 'day', 'progress_A', 'paused_C'} <= set(frame.columns)
    visible = trace_frame(trace, visible_only=True)
    assert 'clock' not in visible.columns and 'year' not in visible.columns
