"""
The Shoemaker universe: three civilizations whose visible history is not
Markovian, made Markovian by one latent clock.

Civilization A pauses during calendar years divisible by 3, B during years
divisible by 4 and C during years divisible by 5, so the whole universe pauses
every 60th year. The calendar (year, day of year) is a function of the latent
clock Q alone; the visible state is the progress counters and paused flags.
"""
from dataclasses import dataclass, replace
from typing import Callable, Dict, Hashable, List, Optional, Tuple
import numpy as np
import pandas as pd
from tqdm import tqdm

CIVILIZATIONS = ('A', 'B', 'C')
PERIODS = (3, 4, 5)
DAYS_PER_YEAR = 365
CYCLE_YEARS = int(np.lcm.reduce(PERIODS))


def calendar(q: float) -> Tuple[int, int]:
    """(year, day of year) of the day that starts at clock reading q, in days."""
    elapsed = int(np.floor(q + 1e-9))
    return elapsed // DAYS_PER_YEAR + 1, elapsed % DAYS_PER_YEAR + 1


def paused_in(year: int) -> Tuple[bool, ...]:
    return tuple(year % period == 0 for period in PERIODS)


@dataclass(frozen=True)
class ShoemakerState:
    """
    Args:
        progress: days of progress of A, B and C
        paused: whether each civilization is paused on the coming day
        clock: latent Q in days
    """
    progress: Tuple[int, int, int] = (0, 0, 0)
    paused: Tuple[bool, bool, bool] = (False, False, False)
    clock: float = 0.0

    @classmethod
    def start(cls, clock: float = 0.0) -> 'ShoemakerState':
        """Initial state; a non-zero clock starts the universe later in its calendar."""
        return cls((0, 0, 0), paused_in(calendar(clock)[0]), float(clock))

    @property
    def year(self) -> int:
        return calendar(self.clock)[0]

    @property
    def day(self) -> int:
        return calendar(self.clock)[1]

    @property
    def visible(self) -> Tuple:
        return self.progress, self.paused

    @property
    def augmented(self) -> Tuple:
        return self.progress, self.paused, self.clock


def step(state: ShoemakerState, dt: float = 1.0) -> ShoemakerState:
    """
    Lives one day: civilizations not paused in the current year gain a day of
    progress, then dQ/dt = 1 advances the clock. The clock update never reads
    the visible state.
    """
    if dt != 1.0:
        raise ValueError('the Shoemaker universe advances in whole days (dt = 1)')
    paused = paused_in(state.year)
    progress = tuple(p if stop else p + 1 for p, stop in zip(state.progress, paused))
    clock = state.clock + dt
    return ShoemakerState(progress, paused_in(calendar(clock)[0]), clock)


def run(years: int, start: ShoemakerState = None, progress: bool = False) -> List[ShoemakerState]:
    """Trace of states at the start of every day, plus the state after the last day."""
    state = ShoemakerState.start() if start is None else start
    trace = [state]
    for _ in tqdm(range(years * DAYS_PER_YEAR), desc='Shoemaker', disable=not progress):
        state = step(state)
        trace.append(state)
    return trace


@dataclass
class NonMarkovWitness:
    first: int
    second: int
    visible: Tuple
    first_successor: Tuple
    second_successor: Tuple
    first_calendar: Tuple[int, int]
    second_calendar: Tuple[int, int]

    def to_dict(self) -> dict:
        def plain(visible):
            progress, paused = visible
            return {'progress': dict(zip(CIVILIZATIONS, map(int, progress))),
                    'paused': dict(zip(CIVILIZATIONS, map(bool, paused)))}
        return {
            'first_step': self.first,
            'second_step': self.second,
            'first_calendar': {'year': self.first_calendar[0], 'day': self.first_calendar[1]},
            'second_calendar': {'year': self.second_calendar[0], 'day': self.second_calendar[1]},
            'visible_state': plain(self.visible),
            'first_successor': plain(self.first_successor),
            'second_successor': plain(self.second_successor),
        }


def transition_table(trace: List[ShoemakerState], key: Callable[[ShoemakerState], Hashable],
                     successor: Callable[[ShoemakerState], Hashable] = None) -> Dict[Hashable, set]:
    """Maps each observed key to the set of keys observed one step later."""
    successor = key if successor is None else successor
    table: Dict[Hashable, set] = {}
    for current, following in zip(trace[:-1], trace[1:]):
        table.setdefault(key(current), set()).add(successor(following))
    return table


def is_deterministic(table: Dict[Hashable, set]) -> bool:
    return all(len(successors) == 1 for successors in table.values())


def find_witness(trace: List[ShoemakerState], key: Callable[[ShoemakerState], Hashable]) -> Optional[NonMarkovWitness]:
    """First pair of times with equal keys whose successors differ, scanning in time order."""
    first_seen: Dict[Hashable, int] = {}
    for k in range(len(trace) - 1):
        current = key(trace[k])
        if current not in first_seen:
            first_seen[current] = k
            continue
        j = first_seen[current]
        if key(trace[j + 1]) != key(trace[k + 1]):
            return NonMarkovWitness(j, k, trace[k].visible, trace[j + 1].visible, trace[k + 1].visible,
                                    (trace[j].year, trace[j].day), (trace[k].year, trace[k].day))
    return None


def non_markov_witness(horizon_years: int, augmented: bool = False,
                       start: ShoemakerState = None) -> Optional[NonMarkovWitness]:
    """
    Scans a trace of horizon_years for two times with identical observed states
    but different observed successors. With augmented=True the clock is part of
    the observed state.
    """
    trace = run(horizon_years, start)
    return find_witness(trace, (lambda s: s.augmented) if augmented else (lambda s: s.visible))


def cycle_key(state: ShoemakerState) -> Tuple:
    """Paused flags plus the clock reduced to one full pause cycle."""
    return state.paused, state.clock % (CYCLE_YEARS * DAYS_PER_YEAR)


def increment_key(previous: ShoemakerState):
    def successor(state: ShoemakerState) -> Tuple:
        return tuple(np.subtract(state.progress, previous.progress)), cycle_key(state)
    return successor


def cycle_determinism(cycles: int = 2, start: ShoemakerState = None) -> bool:
    """
    Exhaustive check over `cycles` pause cycles that (visible, latent) fixes
    the next state: re-stepping every traced state reproduces its successor,
    and the cycle-reduced key always maps to one progress increment.
    """
    trace = run(cycles * CYCLE_YEARS, start)
    if any(step(a) != b for a, b in zip(trace[:-1], trace[1:])):
        return False
    table: Dict[Hashable, set] = {}
    for current, following in zip(trace[:-1], trace[1:]):
        table.setdefault(cycle_key(current), set()).add(increment_key(current)(following))
    return is_deterministic(table)


def full_pause_years(years: int) -> List[int]:
    """Years in which no civilization advances."""
    return [y for y in range(1, years + 1) if all(paused_in(y))]


def clock_independent(samples: int = 100, seed: int = 0) -> bool:
    """The clock's next value does not depend on the visible state."""
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        clock = float(rng.integers(0, 2 * CYCLE_YEARS * DAYS_PER_YEAR))
        base = ShoemakerState.start(clock)
        other = replace(base, progress=tuple(int(p) for p in rng.integers(0, 10 ** 6, size=3)),
                        paused=tuple(bool(b) for b in rng.integers(0, 2, size=3)))
        if step(base).clock != step(other).clock:
            return False
    return True


def trace_frame(trace: List[ShoemakerState], visible_only: bool = False) -> pd.DataFrame:
    """Plot-ready table of a trace; visible_only drops the clock and calendar."""
    rows = []
    for k, s in enumerate(trace):
        row = {'step': k}
        if not visible_only:
            row.update({'clock': s.clock, 'year': s.year, 'day': s.day})
        for name, p, stop in zip(CIVILIZATIONS, s.progress, s.paused):
            row[f'progress_{name}'] = p
            row[f'paused_{name}'] = stop
        rows.append(row)
    return pd.DataFrame(rows)
