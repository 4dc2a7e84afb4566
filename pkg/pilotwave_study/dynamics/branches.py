"""
Measurement branches of a density and detection-screen statistics.
"""
from dataclasses import dataclass
from typing import List
import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid
from pilotwave_study.fields.grid import RealField
from pilotwave_study.fields.operators import integrate
from pilotwave_study.dynamics.schrodinger import SnapshotSeries
from pilotwave_study.dynamics.bohm import current_values
from pilotwave_study.dynamics.trajectories import TrajectoryEnsemble


@dataclass
class Branch:
    label: int
    mask: np.ndarray
    weight: float


@dataclass
class BranchDecomposition:
    branches: List[Branch]
    threshold: float
    below_threshold: float

    def __len__(self):
        return len(self.branches)

    def weights(self) -> List[float]:
        return [b.weight for b in self.branches]

    def label_of(self, index: np.ndarray) -> np.ndarray:
        """Branch label per flat grid index, -1 outside every branch."""
        labels = np.full(self.branches[0].mask.size if self.branches else 0, -1)
        for b in self.branches:
            labels[b.mask.ravel()] = b.label
        return labels[index]


def _merge_periodic(labels: np.ndarray, periodic) -> np.ndarray:
    # components touching across a periodic seam are one component
    parent = {k: k for k in range(1, labels.max() + 1)}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for axis, wraps in enumerate(periodic):
        if not wraps:
            continue
        first = np.take(labels, 0, axis=axis)
        last = np.take(labels, -1, axis=axis)
        for a, b in zip(first.ravel(), last.ravel()):
            if a and b:
                parent[find(a)] = find(b)
    roots = np.zeros(labels.max() + 1, dtype=int)
    for k in parent:
        roots[k] = find(k)
    return roots[labels]


def branch_decompose(rho: RealField, threshold: float) -> BranchDecomposition:
    """
    Face-connected components of {rho > threshold}, heaviest first.

    Weights are the integral of rho over each mask divided by the total
    integral; `below_threshold` is the mass outside every branch.
    """
    peak = float(np.max(rho.values))
    if not 0 < threshold < peak:
        raise ValueError(f'threshold must lie in (0, max rho = {peak})')
    above = rho.values > threshold
    if not np.any(above):
        raise ValueError('no points above the threshold')
    structure = ndimage.generate_binary_structure(rho.grid.ndim, 1)
    labels, count = ndimage.label(above, structure=structure)
    if any(rho.grid.periodic):
        labels = _merge_periodic(labels, rho.grid.periodic)

    total = float(integrate(rho))
    branches = []
    for k in np.unique(labels[labels > 0]):
        mask = labels == k
        branches.append(Branch(0, mask, float(integrate(np.where(mask, rho.values, 0), rho.grid)) / total))
    branches.sort(key=lambda b: -b.weight)
    for label, b in enumerate(branches):
        b.label = label
    return BranchDecomposition(branches, threshold, 1.0 - sum(b.weight for b in branches))


def mask_series(series: SnapshotSeries, mask: np.ndarray) -> SnapshotSeries:
    """Copy of the series with Psi zeroed outside mask at every time (norm not conserved)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != series.grid.shape:
        raise ValueError('mask must match the grid shape')
    return SnapshotSeries(series.grid, series.times, series.values * mask, hbar=series.hbar, dt=series.dt,
                          solver=series.solver, store_every=series.store_every,
                          config_hash=series.config_hash, check_norm=False)


def screen_crossings(ensemble: TrajectoryEnsemble, axis: int, position: float) -> np.ndarray:
    """
    Landing site of each particle: the first time its coordinate along axis
    passes `position` (upward), located by linear interpolation between stored
    steps. Returns (N, n) coordinates, NaN rows for particles that never land.
    """
    grid = ensemble.grid
    q = ensemble.positions
    s = q[:, :, axis] - position
    # steps that jump across a periodic seam are not crossings
    jump = np.abs(np.diff(q, axis=1)) < 0.5 * grid.extent
    crossed = (s[:, :-1] < 0) & (s[:, 1:] >= 0) & np.all(jump, axis=2)
    sites = np.full((len(q), grid.ndim), np.nan)
    hit = np.any(crossed, axis=1)
    first = np.argmax(crossed, axis=1)[hit]
    rows = np.flatnonzero(hit)
    a, b = q[rows, first], q[rows, first + 1]
    w = (-s[rows, first] / (s[rows, first + 1] - s[rows, first]))[:, None]
    sites[rows] = a + w * (b - a)
    return sites


def _screen_line(series: SnapshotSeries, axis: int, position: float) -> int:
    grid = series.grid
    if grid.ndim != 2:
        raise ValueError('screen statistics are defined for two-dimensional grids')
    k = int(np.rint((position - grid.lower[axis]) / grid.spacing[axis]))
    if not 0 <= k < grid.counts[axis]:
        raise ValueError(f'screen position {position} outside the grid')
    return k


def _normalized_line(series: SnapshotSeries, axis: int, values: np.ndarray, what: str):
    grid = series.grid
    other = 1 - axis
    total = values.sum() * grid.spacing[other]
    if not total > 0:
        raise ValueError(f'no {what} on the screen')
    return grid.axes[other], values / total


def screen_flux_distribution(series: SnapshotSeries, axis: int, position: float):
    """
    Born prediction for landing sites on a screen line: the current through the
    screen integrated over the series' time span, normalized, negative flux
    clipped. Only defined for two-dimensional grids.

    Returns:
        (coordinates along the other axis, normalized line density)
    """
    k = _screen_line(series, axis, position)
    J = current_values(series.values, series.grid, None, series.hbar)[:, axis]
    line = np.take(J, k, axis=1 + axis)
    flux = np.clip(trapezoid(line, series.times, axis=0), 0, None)
    return _normalized_line(series, axis, flux, 'probability flux through')


def screen_density_distribution(series: SnapshotSeries, axis: int, position: float):
    """
    |psi|^2 along the screen line integrated over the series' time span and
    normalized. This is the marginal a screen that records where the density
    sits, rather than where it crosses, would report.
    """
    k = _screen_line(series, axis, position)
    line = np.take(np.abs(series.values) ** 2, k, axis=1 + axis)
    return _normalized_line(series, axis, trapezoid(line, series.times, axis=0), 'density')
