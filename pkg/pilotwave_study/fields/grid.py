"""
Discretized configuration spaces and the fields that live on them.

A Grid is a tensor-product mesh over n <= 4 axes. Periodic axes place `count`
nodes on [lower, upper) with spacing (upper - lower) / count; dirichlet-zero
axes place `count` nodes on [lower, upper] including both walls. Field values
are stored row-major, axis 0 slowest.
"""
from dataclasses import dataclass, field
from typing import Sequence, Tuple, List, Union
import numpy as np

PERIODIC = 'periodic'
DIRICHLET = 'dirichlet'
BOUNDARY_MODES = (PERIODIC, DIRICHLET)
DEFAULT_MAX_POINTS = 2 ** 24
MAX_DIMENSIONS = 4


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Args:
        lower: per-axis lower bound
        upper: per-axis upper bound
        counts: per-axis point count (>= 4)
        boundaries: per-axis boundary mode, 'periodic' or 'dirichlet'
        metric: None (unit masses), diagonal constants mu_i of shape (n,),
            or a symmetric field mu_ij(q) of shape (n, n, *counts)
        max_points: cap on the total number of nodes
    """
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    counts: Tuple[int, ...]
    boundaries: Tuple[str, ...] = None
    metric: np.ndarray = None
    max_points: int = DEFAULT_MAX_POINTS
    _axes: Tuple[np.ndarray, ...] = field(init=False, repr=False)

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        counts = tuple(int(v) for v in np.atleast_1d(self.counts))
        ndim = len(counts)
        boundaries = self.boundaries
        if boundaries is None:
            boundaries = (PERIODIC,) * ndim
        elif isinstance(boundaries, str):
            boundaries = (boundaries,) * ndim
        boundaries = tuple(boundaries)

        if not 1 <= ndim <= MAX_DIMENSIONS:
            raise ValueError(f'grid dimension must be in 1..{MAX_DIMENSIONS}, got {ndim}')
        if not (len(lower) == len(upper) == ndim == len(boundaries)):
            raise ValueError('lower, upper, counts and boundaries must have one entry per axis')
        for mode in boundaries:
            if mode not in BOUNDARY_MODES:
                raise ValueError(f'unknown boundary mode {mode!r}, expected one of {BOUNDARY_MODES}')
        if min(counts) < 4:
            raise ValueError(f'every axis needs at least 4 points, got {counts}')
        if any(u <= lo for lo, u in zip(lower, upper)):
            raise ValueError('upper bound must exceed lower bound on every axis')
        if int(np.prod(counts, dtype=np.int64)) > self.max_points:
            raise ValueError(f'grid of {int(np.prod(counts, dtype=np.int64))} points exceeds '
                             f'the cap of {self.max_points}')

        metric = self.metric
        if metric is None:
            metric = np.ones(ndim)
        metric = np.asarray(metric, dtype=float)
        if metric.shape == (ndim,):
            if np.any(metric <= 0):
                raise ValueError('diagonal metric entries (inverse masses) must be positive')
        elif metric.shape == (ndim, ndim) + counts:
            if not np.allclose(metric, np.swapaxes(metric, 0, 1), rtol=0, atol=1e-14):
                raise ValueError('metric array must be symmetric, mu_ij = mu_ji at every point')
        else:
            raise ValueError(f'metric must have shape {(ndim,)} or {(ndim, ndim) + counts}, '
                             f'got {metric.shape}')
        if not np.all(np.isfinite(metric)):
            raise ValueError('metric contains non-finite values')
        metric.setflags(write=False)

        axes = []
        for lo, u, n, mode in zip(lower, upper, counts, boundaries):
            if mode == PERIODIC:
                axes.append(lo + (u - lo) / n * np.arange(n))
            else:
                axes.append(np.linspace(lo, u, n))
        for ax in axes:
            ax.setflags(write=False)

        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)
        object.__setattr__(self, 'counts', counts)
        object.__setattr__(self, 'boundaries', boundaries)
        object.__setattr__(self, 'metric', metric)
        object.__setattr__(self, '_axes', tuple(axes))

    @classmethod
    def from_masses(cls, lower, upper, counts, boundaries=None, masses=None, **kwargs) -> 'Grid':
        """Grid with the diagonal metric mu_i = 1 / m_i."""
        ndim = len(np.atleast_1d(counts))
        masses = np.ones(ndim) if masses is None else np.broadcast_to(np.asarray(masses, float), (ndim,))
        return cls(lower, upper, counts, boundaries, metric=1.0 / masses, **kwargs)

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def axes(self) -> Tuple[np.ndarray, ...]:
        return self._axes

    @property
    def spacing(self) -> np.ndarray:
        return np.array([
            (u - lo) / (n if mode == PERIODIC else n - 1)
            for lo, u, n, mode in zip(self.lower, self.upper, self.counts, self.boundaries)
        ])

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def periodic(self) -> Tuple[bool, ...]:
        return tuple(mode == PERIODIC for mode in self.boundaries)

    @property
    def fully_periodic(self) -> bool:
        return all(self.periodic)

    @property
    def constant_diagonal_metric(self) -> bool:
        return self.metric.ndim == 1

    def mesh(self) -> List[np.ndarray]:
        """Coordinate arrays of shape counts, one per axis (ij indexing)."""
        return np.meshgrid(*self.axes, indexing='ij')

    def metric_tensor(self) -> np.ndarray:
        """Full metric of shape (n, n, *counts), broadcasting a diagonal metric."""
        if self.constant_diagonal_metric:
            full = np.zeros((self.ndim, self.ndim) + self.counts)
            for i, mu in enumerate(self.metric):
                full[i, i] = mu
            return full
        return np.array(self.metric)

    def metric_diagonal(self) -> np.ndarray:
        """The constants mu_i of a constant diagonal metric."""
        if not self.constant_diagonal_metric:
            raise ValueError('grid metric is position dependent, no constant diagonal available')
        return np.array(self.metric)

    def quadrature_weights(self) -> np.ndarray:
        """Cell volumes per node: Riemann weights on periodic axes, trapezoid on dirichlet axes."""
        weights = np.ones(self.counts)
        for axis, (n, h, periodic) in enumerate(zip(self.counts, self.spacing, self.periodic)):
            w = np.full(n, h)
            if not periodic:
                w[0] = w[-1] = h / 2
            shape = [1] * self.ndim
            shape[axis] = n
            weights = weights * w.reshape(shape)
        return weights

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Maps points into [lower, upper) along periodic axes; other axes untouched."""
        points = np.array(points, dtype=float, copy=True)
        for axis, periodic in enumerate(self.periodic):
            if periodic:
                lo, length = self.lower[axis], self.extent[axis]
                points[..., axis] = lo + np.mod(points[..., axis] - lo, length)
        return points

    def contains(self, points: np.ndarray) -> np.ndarray:
        """True for points inside the closed range of every dirichlet axis."""
        points = np.atleast_2d(points)
        inside = np.ones(points.shape[0], dtype=bool)
        for axis, periodic in enumerate(self.periodic):
            if not periodic:
                q = points[:, axis]
                inside &= (q >= self.lower[axis]) & (q <= self.upper[axis])
        return inside

    def nearest_index(self, points: np.ndarray) -> np.ndarray:
        """Flat index of the node whose cell contains each point."""
        points = np.atleast_2d(points)
        index = []
        for axis in range(self.ndim):
            k = np.rint((points[:, axis] - self.lower[axis]) / self.spacing[axis]).astype(np.int64)
            if self.periodic[axis]:
                k = np.mod(k, self.counts[axis])
            else:
                k = np.clip(k, 0, self.counts[axis] - 1)
            index.append(k)
        return np.ravel_multi_index(index, self.counts)

    def describe(self) -> dict:
        return {
            'lower': list(self.lower),
            'upper': list(self.upper),
            'counts': list(self.counts),
            'boundaries': list(self.boundaries),
            'metric': self.metric.tolist() if self.constant_diagonal_metric else 'field',
        }

    def same_as(self, other: 'Grid') -> bool:
        return (self.lower == other.lower and self.upper == other.upper
                and self.counts == other.counts and self.boundaries == other.boundaries
                and self.metric.shape == other.metric.shape
                and np.array_equal(self.metric, other.metric))


class Field:
    """
    Values on a grid at one instant. Fields are immutable; operations return new
    fields. Use RealField or ComplexField.
    """
    dtype = float

    def __init__(self, grid: Grid, values: Union[np.ndarray, Sequence], t: float = 0.0):
        values = np.array(values, dtype=self.dtype)
        if values.size != grid.size:
            raise ValueError(f'{values.size} values given for a grid of {grid.size} points')
        values = values.reshape(grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError('field values must be finite')
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.t = float(t)

    def __repr__(self):
        return f'{type(self).__name__}(shape={self.values.shape}, t={self.t})'

    def with_values(self, values: np.ndarray, t: float = None) -> 'Field':
        return type(self)(self.grid, values, self.t if t is None else t)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


class RealField(Field):
    dtype = float


class ComplexField(Field):
    dtype = complex

    @property
    def real(self) -> RealField:
        return RealField(self.grid, self.values.real, self.t)

    @property
    def imag(self) -> RealField:
        return RealField(self.grid, self.values.imag, self.t)


def as_values(f: Union[Field, np.ndarray]) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f)
