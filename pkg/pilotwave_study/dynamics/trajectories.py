"""
Particle ensembles moved by a guiding velocity field, and the equivariance
statistics comparing them with the Born density.

The integrator is classic RK4. A particle whose first-stage displacement
|v| dt exceeds two grid spacings has its step halved (recursively) until it
does not. Particles are processed in fixed-size chunks, optionally on a thread
pool; results do not depend on the number of threads.
"""
import struct
import warnings
from dataclasses import dataclass, field
from functools import partial
from multiprocessing.pool import ThreadPool
from typing import Callable, List, Sequence, Union
import numpy as np
import pandas as pd
from tqdm import tqdm
from pilotwave_study.fields.grid import Grid, RealField
from pilotwave_study.fields.field_io import VERSION, MODES
from pilotwave_study.dynamics.schrodinger import SnapshotSeries
from pilotwave_study.dynamics.bohm import SnapshotVelocity, VelocityProvider, DEFAULT_FLOOR, sample_ensemble
from pilotwave_study.utilities.errors import NumericalError
from pilotwave_study.utilities.metrics import ensemble_tv, ks_statistics, resampling_baseline

TRAJECTORY_MAGIC = b'PWTRAJ\x00\x00'
MAX_HALVINGS = 12


@dataclass
class TrajectoryEnsemble:
    """
    Args:
        grid: configuration-space grid the particles live on
        times: (T,) increasing storage times
        positions: (N, T, n) positions at the storage times
        seed: seed of the initial sample
        source_hash: config hash of the snapshot series that guided the run
        exited: (N,) True for particles frozen after leaving a dirichlet range
    """
    grid: Grid
    times: np.ndarray
    positions: np.ndarray
    seed: int = 0
    source_hash: str = None
    exited: np.ndarray = None

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[1:] != (len(self.times), self.grid.ndim):
            raise ValueError(f'positions must have shape (N, {len(self.times)}, {self.grid.ndim}), '
                             f'got {self.positions.shape}')
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError('trajectory times must be strictly increasing')
        if self.exited is None:
            self.exited = np.zeros(len(self.positions), dtype=bool)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.positions[:, -1]

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f'ensemble has no stored positions at t={t}')
        return k

    def at(self, t: float) -> np.ndarray:
        return self.positions[:, self.index_of(t)]

    def to_frame(self) -> pd.DataFrame:
        """Long table: particle id, t, q1..qn."""
        n, T, d = self.positions.shape
        columns = {'particle': np.repeat(np.arange(n), T), 't': np.tile(self.times, n)}
        for axis in range(d):
            columns[f'q{axis + 1}'] = self.positions[:, :, axis].ravel()
        return pd.DataFrame(columns)

    def save_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    def to_bytes(self) -> bytes:
        """
        Binary block mirroring the field format: magic, version, particle
        count, time count, grid axes, times, then float64 positions (N, T, n).
        """
        n, T, d = self.positions.shape
        header = TRAJECTORY_MAGIC + struct.pack('<II', VERSION, 0) + struct.pack('<IQI', d, n, T)
        for lo, hi, count, mode in zip(self.grid.lower, self.grid.upper, self.grid.counts, self.grid.boundaries):
            header += struct.pack('<ddII', lo, hi, count, MODES[mode])
        return header + self.times.astype('<f8').tobytes() + self.positions.astype('<f8').tobytes()

    def save_binary(self, path: str) -> None:
        with open(path, 'wb') as f:
            f.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, buffer: bytes, grid: Grid = None) -> 'TrajectoryEnsemble':
        if buffer[:8] != TRAJECTORY_MAGIC:
            raise ValueError('not a pilotwave trajectory file (bad magic)')
        version, _ = struct.unpack_from('<II', buffer, 8)
        if version != VERSION:
            raise ValueError(f'unsupported format version {version}')
        d, n, T = struct.unpack_from('<IQI', buffer, 16)
        offset = 32
        lower, upper, counts, modes = [], [], [], []
        inverse = {v: k for k, v in MODES.items()}
        for _ in range(d):
            lo, hi, count, mode = struct.unpack_from('<ddII', buffer, offset)
            offset += 24
            lower.append(lo)
            upper.append(hi)
            counts.append(count)
            modes.append(inverse[mode])
        if grid is None:
            grid = Grid(lower, upper, counts, modes)
        times = np.frombuffer(buffer, dtype='<f8', count=T, offset=offset)
        positions = np.frombuffer(buffer, dtype='<f8', count=n * T * d, offset=offset + 8 * T)
        return cls(grid, times.copy(), positions.reshape(n, T, d).copy())

    @classmethod
    def load_binary(cls, path: str, grid: Grid = None) -> 'TrajectoryEnsemble':
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read(), grid)


def initial_ensemble(grid: Grid, positions: np.ndarray, t0: float, seed: int = 0,
                     source_hash: str = None) -> TrajectoryEnsemble:
    positions = grid.wrap(np.atleast_2d(positions))
    return TrajectoryEnsemble(grid, [t0], positions[:, None, :], seed, source_hash)


def _rk4(q: np.ndarray, t: float, dt: float, velocity: Callable, k1: np.ndarray) -> np.ndarray:
    k2 = velocity(q + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = velocity(q + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = velocity(q + dt * k3, t + dt)
    return q + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _adaptive_step(q: np.ndarray, t: float, dt: float, velocity: Callable, limit: float,
                   depth: int = 0) -> np.ndarray:
    k1 = velocity(q, t)
    too_fast = np.linalg.norm(k1, axis=1) * dt > limit
    if not np.any(too_fast) or depth >= MAX_HALVINGS:
        return _rk4(q, t, dt, velocity, k1)
    out = np.empty_like(q)
    slow = ~too_fast
    if np.any(slow):
        out[slow] = _rk4(q[slow], t, dt, velocity, k1[slow])
    fast = q[too_fast]
    fast = _adaptive_step(fast, t, dt / 2, velocity, limit, depth + 1)
    out[too_fast] = _adaptive_step(fast, t + dt / 2, dt / 2, velocity, limit, depth + 1)
    return out


def _integrate_chunk(q0: np.ndarray, grid: Grid, velocity: Callable, schedule: List[np.ndarray]):
    """Moves one chunk through every storage interval; returns (positions, exited)."""
    limit = 2 * float(np.min(grid.spacing))
    q = q0.copy()
    active = grid.contains(q)
    out = np.empty((len(q), len(schedule) + 1, grid.ndim))
    out[:, 0] = q
    for k, steps in enumerate(schedule):
        for t, dt in zip(steps[:-1], np.diff(steps)):
            if not np.any(active):
                break
            moved = grid.wrap(_adaptive_step(q[active], t, dt, velocity, limit))
            if not np.all(np.isfinite(moved)):
                raise NumericalError(f'non-finite particle position at t={t + dt}')
            inside = grid.contains(moved)
            index = np.flatnonzero(active)
            q[index[inside]] = moved[inside]
            active[index[~inside]] = False
        out[:, k + 1] = q
    return out, ~active


def advance_ensemble(ensemble: TrajectoryEnsemble, field: Union[SnapshotSeries, VelocityProvider],
                     dt_traj: float, t_end: float = None, store_times: Sequence[float] = None,
                     floor: float = DEFAULT_FLOOR, chunk_size: int = 2048, threads: int = 1,
                     progress: bool = False) -> TrajectoryEnsemble:
    """
    Integrates the guiding equation from the ensemble's last stored time.

    Args:
        ensemble: starting ensemble, its last time is the start time
        field: a SnapshotSeries (velocities derived from it) or a velocity provider
        dt_traj: trajectory step, at most the snapshot spacing
        t_end: final time, defaults to the end of the field's time range
        store_times: times to store positions at, defaults to the snapshot times
        floor: relative density guard when field is a SnapshotSeries
        chunk_size: particles per work unit
        threads: worker threads
        progress: show a tqdm bar over chunks
    Returns:
        ensemble with the new storage times appended
    """
    velocity = SnapshotVelocity.from_series(field, floor) if isinstance(field, SnapshotSeries) else field
    grid = ensemble.grid
    t_start = float(ensemble.times[-1])
    t_end = velocity.t_end if t_end is None else float(t_end)
    if dt_traj <= 0:
        raise ValueError('dt_traj must be positive')
    if len(velocity.times) > 1:
        spacing = float(np.min(np.diff(velocity.times)))
        if dt_traj > spacing * (1 + 1e-9):
            raise ValueError(f'dt_traj={dt_traj} exceeds the snapshot spacing {spacing}')
        if t_start < velocity.t_start - 1e-9 or t_end > velocity.t_end + 1e-9:
            raise ValueError(f'trajectory range [{t_start}, {t_end}] outside the velocity range '
                             f'[{velocity.t_start}, {velocity.t_end}]')
    if t_end < t_start:
        raise ValueError('t_end precedes the ensemble time')

    if store_times is None:
        store_times = velocity.times if len(velocity.times) > 1 else [t_end]
    store_times = np.asarray(store_times, dtype=float)
    store_times = store_times[(store_times > t_start + 1e-12) & (store_times <= t_end + 1e-12)]
    if len(store_times) == 0 or store_times[-1] < t_end - 1e-12:
        store_times = np.append(store_times, t_end)

    # each storage interval is split evenly so steps land on the storage times
    schedule, previous = [], t_start
    for t_next in store_times:
        n_steps = max(1, int(np.ceil((t_next - previous) / dt_traj - 1e-9)))
        schedule.append(np.linspace(previous, t_next, n_steps + 1))
        previous = t_next

    q0 = ensemble.positions[:, -1]
    chunks = [q0[i:i + chunk_size] for i in range(0, len(q0), chunk_size)]
    fn = partial(_integrate_chunk, grid=grid, velocity=velocity, schedule=schedule)
    with ThreadPool(threads) as pool:
        results = list(tqdm(pool.imap(fn, chunks), total=len(chunks), desc='Trajectories',
                            disable=not progress))
    moved = np.concatenate([r[0] for r in results])
    exited = np.concatenate([r[1] for r in results]) | ensemble.exited
    if np.any(exited):
        warnings.warn(f'{int(exited.sum())} particles left the grid and were frozen')

    return TrajectoryEnsemble(grid, np.concatenate([ensemble.times, store_times]),
                              np.concatenate([ensemble.positions, moved[:, 1:]], axis=1),
                              ensemble.seed, ensemble.source_hash, exited)


def ordering_preserved(ensemble: TrajectoryEnsemble) -> bool:
    """1D non-crossing: the particle order at t0 is the order at every stored time."""
    if ensemble.grid.ndim != 1:
        raise ValueError('ordering is only defined for one-dimensional ensembles')
    q = ensemble.positions[:, :, 0]
    order = np.argsort(q[:, 0], kind='stable')
    return bool(np.all(np.diff(q[order], axis=0) >= 0))


@dataclass
class EquivarianceReport:
    t: float
    n_particles: int
    seed: int
    tv: float
    ks: List[float]
    ks_pvalues: List[float]
    baseline: float
    baseline_std: float
    tv_threshold: float
    passed: bool = field(init=False)

    def __post_init__(self):
        below = self.tv_threshold is None or self.tv < self.tv_threshold
        self.passed = bool(below and self.tv <= 2 * self.baseline)

    def to_dict(self) -> dict:
        return {
            't': float(self.t),
            'n_particles': int(self.n_particles),
            'seed': int(self.seed),
            'tv_distance': float(self.tv),
            'ks_statistics': [float(s) for s in self.ks],
            'ks_pvalues': [float(p) for p in self.ks_pvalues],
            'baseline_tv': float(self.baseline),
            'baseline_tv_std': float(self.baseline_std),
            'tv_threshold': None if self.tv_threshold is None else float(self.tv_threshold),
            'passed': self.passed,
        }


def equivariance_report(ensemble: TrajectoryEnsemble, rho: RealField, t: float = None,
                        resamples: int = 20, tv_threshold: float = 0.05, threads: int = 1) -> EquivarianceReport:
    """
    Compares the ensemble at time t (default rho.t) with the Born density.
    TV is measured over grid cells; KS per axis against the marginals of rho.
    The baseline is the mean TV of fresh samples of the same size from rho.
    """
    t = rho.t if t is None else t
    points = ensemble.at(t)
    stats, pvalues = ks_statistics(points, rho)
    baseline, spread = resampling_baseline(rho, len(points), resamples, seed=ensemble.seed + 7919,
                                           num_processes=threads)
    return EquivarianceReport(t, len(points), ensemble.seed, ensemble_tv(points, rho), stats, pvalues,
                              baseline, spread, tv_threshold)


def sampled_ensemble(rho: RealField, n_particles: int, seed: int, source_hash: str = None) -> TrajectoryEnsemble:
    """Quantum-equilibrium ensemble at rho.t."""
    return initial_ensemble(rho.grid, sample_ensemble(rho, n_particles, seed), rho.t, seed, source_hash)
