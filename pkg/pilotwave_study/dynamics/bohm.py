"""
The pilot-wave layer on top of the wave function: Born density, polar form,
probability currents, the continuity audit and the guiding velocity field.

Currents are always formed as J_i = hbar sum_j mu_ij Im(conj(Psi) d_j Psi), so
the phase S is never differenced and atan2 branch cuts never enter.
"""
from dataclasses import dataclass
from typing import Callable, List, Sequence, Union
import numpy as np
from pilotwave_study.fields.grid import Grid, RealField, ComplexField
from pilotwave_study.fields.operators import diff_values, raise_index, interpolate_points
from pilotwave_study.dynamics.schrodinger import SnapshotSeries

DEFAULT_FLOOR = 1e-12


@dataclass
class PolarPair:
    """Psi = R exp(iS / hbar). S is meaningful only where `valid` is True."""
    R: RealField
    S: RealField
    valid: np.ndarray
    hbar: float = 1.0

    def reconstruct(self) -> ComplexField:
        psi = self.R.values * np.exp(1j * self.S.values / self.hbar)
        return ComplexField(self.R.grid, np.where(self.valid, psi, 0), self.R.t)


def born_density(psi: ComplexField) -> RealField:
    return RealField(psi.grid, psi.values.real ** 2 + psi.values.imag ** 2, psi.t)


def polar_decompose(psi: ComplexField, floor: float = DEFAULT_FLOOR, hbar: float = 1.0) -> PolarPair:
    """
    Amplitude and action of psi. S = hbar * atan2(Im, Re) on points with
    R >= floor and zero (flagged invalid) elsewhere.
    """
    if floor <= 0:
        raise ValueError('floor must be positive')
    R = np.abs(psi.values)
    valid = R >= floor
    S = np.where(valid, hbar * np.arctan2(psi.values.imag, psi.values.real), 0.0)
    return PolarPair(RealField(psi.grid, R, psi.t), RealField(psi.grid, S, psi.t), valid, hbar)


def current_values(values: np.ndarray, grid: Grid, metric=None, hbar: float = 1.0) -> np.ndarray:
    # values may carry a leading time axis
    conj = np.conj(values)
    covector = [hbar * np.imag(conj * diff_values(values, grid, j)) for j in range(grid.ndim)]
    if metric is None:
        metric = grid.metric
    metric = np.asarray(metric)
    return np.stack(raise_index(covector, grid, metric), axis=-grid.ndim - 1)


def current_densities(psi: ComplexField, metric: np.ndarray = None, hbar: float = 1.0) -> List[RealField]:
    """
    Probability currents J_i = hbar sum_j mu_ij Im(conj(Psi) d_j Psi).

    Args:
        psi: wave function
        metric: inverse-mass metric, defaults to the grid's own
        hbar: reduced Planck constant
    """
    currents = current_values(psi.values, psi.grid, metric, hbar)
    return [RealField(psi.grid, c, psi.t) for c in currents]


def _interior(grid: Grid) -> tuple:
    return tuple(slice(None) if periodic else slice(1, -1) for periodic in grid.periodic)


def continuity_residual(series: SnapshotSeries, currents: np.ndarray = None, densities: np.ndarray = None,
                        metric: np.ndarray = None) -> float:
    """
    Max over interior times and points of |d_t rho + div J|, with d_t rho a
    centered difference between neighbouring snapshots. The result is
    normalized by max rho / (duration of the series). Wall nodes of dirichlet
    axes are excluded.

    Args:
        series: at least three snapshots
        currents: optional override of shape (T, n, *grid.shape)
        densities: optional override of shape (T, *grid.shape)
        metric: metric used when currents are computed from the series
    """
    if len(series) < 3:
        raise ValueError(f'continuity residual needs at least 3 snapshots, got {len(series)}')
    grid = series.grid
    rho = series.densities() if densities is None else np.asarray(densities, dtype=float)
    J = current_values(series.values, grid, metric, series.hbar) if currents is None \
        else np.asarray(currents, dtype=float)
    if J.shape != (len(series), grid.ndim) + grid.shape:
        raise ValueError(f'currents must have shape {(len(series), grid.ndim) + grid.shape}, got {J.shape}')

    times = series.times
    rho_t = (rho[2:] - rho[:-2]) / (2 * series.store_interval)
    div_j = sum(diff_values(J[1:-1, i], grid, i) for i in range(grid.ndim))
    residual = np.abs(rho_t + div_j)[(slice(None),) + _interior(grid)]

    scale = np.max(rho) / (times[-1] - times[0])
    if scale == 0:
        return float(np.max(residual))
    return float(np.max(residual) / scale)


class SnapshotVelocity:
    """
    Guiding velocity v = J / max(rho, floor) at arbitrary points and times.

    Densities and currents are tabulated at snapshot times; between snapshots
    the velocities of the two neighbouring snapshots are blended linearly in
    time. The floor is relative: floor * max rho of each snapshot.

    Args:
        grid: spatial grid
        times: (T,) snapshot times, T >= 1
        densities: (T, *grid.shape)
        currents: (T, n, *grid.shape)
        floor: relative density guard
    """

    def __init__(self, grid: Grid, times: Sequence[float], densities: np.ndarray, currents: np.ndarray,
                 floor: float = DEFAULT_FLOOR):
        if floor <= 0:
            raise ValueError('floor must be positive')
        times = np.atleast_1d(np.asarray(times, dtype=float))
        densities = np.asarray(densities, dtype=float).reshape((len(times),) + grid.shape)
        currents = np.asarray(currents, dtype=float).reshape((len(times), grid.ndim) + grid.shape)
        self.grid = grid
        self.times = times
        self.floor = floor
        # rho first, currents after: one interpolation pass per snapshot
        self._table = np.concatenate([densities[:, None], currents], axis=1)
        self._floors = floor * np.max(densities.reshape(len(times), -1), axis=1)

    @classmethod
    def from_series(cls, series: SnapshotSeries, floor: float = DEFAULT_FLOOR,
                    metric: np.ndarray = None) -> 'SnapshotVelocity':
        currents = current_values(series.values, series.grid, metric, series.hbar)
        return cls(series.grid, series.times, series.densities(), currents, floor)

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def at_snapshot(self, k: int, points: np.ndarray) -> np.ndarray:
        values = interpolate_points(self._table[k], self.grid, points, check=False)
        rho = np.maximum(values[0], self._floors[k])
        return (values[1:] / rho).T

    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        points = np.atleast_2d(points)
        if len(self.times) == 1:
            return self.at_snapshot(0, points)
        span = self.times[-1] - self.times[0]
        if t < self.times[0] - 1e-9 * span or t > self.times[-1] + 1e-9 * span:
            raise ValueError(f't={t} outside the tabulated range [{self.times[0]}, {self.times[-1]}]')
        k = int(np.clip(np.searchsorted(self.times, t, side='right') - 1, 0, len(self.times) - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        if w <= 0:
            return self.at_snapshot(k, points)
        if w >= 1:
            return self.at_snapshot(k + 1, points)
        return (1 - w) * self.at_snapshot(k, points) + w * self.at_snapshot(k + 1, points)


class ShiftedVelocity:
    """base(q, t) + shift(q, t); used for gauge and divergence-free current terms."""

    def __init__(self, base: SnapshotVelocity, shift: Callable[[np.ndarray, float], np.ndarray]):
        self.base = base
        self.shift = shift
        self.grid = base.grid
        self.times = base.times

    @property
    def t_start(self) -> float:
        return self.base.t_start

    @property
    def t_end(self) -> float:
        return self.base.t_end

    def __call__(self, points: np.ndarray, t: float) -> np.ndarray:
        return self.base(points, t) + self.shift(np.atleast_2d(points), t)


VelocityProvider = Union[SnapshotVelocity, ShiftedVelocity]


def velocity_field(psi: ComplexField, metric: np.ndarray = None, floor: float = DEFAULT_FLOOR,
                   hbar: float = 1.0) -> SnapshotVelocity:
    """Time-independent guiding velocity of a single wave function."""
    currents = current_values(psi.values, psi.grid, metric, hbar)
    return SnapshotVelocity(psi.grid, [psi.t], born_density(psi).values[None], currents[None], floor)


def cell_bounds(grid: Grid, axis: int) -> np.ndarray:
    """(count, 2) cell edges of each node along axis, clipped to dirichlet walls."""
    x = grid.axes[axis]
    h = grid.spacing[axis]
    bounds = np.stack([x - h / 2, x + h / 2], axis=1)
    if not grid.periodic[axis]:
        bounds = np.clip(bounds, grid.lower[axis], grid.upper[axis])
    return bounds


def sample_ensemble(rho: RealField, n_particles: int, seed: int) -> np.ndarray:
    """
    Quantum-equilibrium initial positions: a multinomial draw over grid cells
    with probabilities rho * cell volume, then uniform jitter inside each cell.

    Returns:
        (n_particles, n) positions
    """
    grid = rho.grid
    if np.any(rho.values < 0):
        raise ValueError('density must be non-negative')
    mass = (rho.values * grid.quadrature_weights()).ravel()
    total = mass.sum()
    if not total > 0:
        raise ValueError('cannot sample from an all-zero density')
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(n_particles, mass / total)
    cells = rng.permutation(np.repeat(np.arange(grid.size), counts))
    index = np.unravel_index(cells, grid.shape)
    positions = np.empty((n_particles, grid.ndim))
    for axis in range(grid.ndim):
        bounds = cell_bounds(grid, axis)[index[axis]]
        positions[:, axis] = rng.uniform(bounds[:, 0], bounds[:, 1])
    return grid.wrap(positions)
