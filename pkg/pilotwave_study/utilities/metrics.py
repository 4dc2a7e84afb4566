"""
Distribution comparisons between particle ensembles and grid densities.
"""
from functools import partial
from multiprocessing.pool import ThreadPool
from typing import List, Tuple
import numpy as np
from scipy.stats import kstest
from scipy.signal import find_peaks
from scipy.integrate import cumulative_trapezoid
from pilotwave_study.fields.grid import Grid, RealField


def cell_probabilities(rho: RealField) -> np.ndarray:
    """Probability of each grid cell, rho * cell volume normalized to one."""
    mass = rho.values * rho.grid.quadrature_weights()
    total = mass.sum()
    if not total > 0:
        raise ValueError('density has no mass')
    return mass / total


def histogram_cells(points: np.ndarray, grid: Grid) -> np.ndarray:
    """Relative frequency of particles per grid cell (nearest node)."""
    points = np.atleast_2d(points)
    counts = np.bincount(grid.nearest_index(points), minlength=grid.size)
    return (counts / len(points)).reshape(grid.shape)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """
    Total-variation distance between two histograms:

    tv = 1/2 * sum |p - q|

    :param p: first histogram, sums to one
    :param q: second histogram, same shape
    """
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f'histogram shapes differ: {p.shape} vs {q.shape}')
    return float(0.5 * np.sum(np.abs(p - q)))


def ensemble_tv(points: np.ndarray, rho: RealField) -> float:
    return total_variation(histogram_cells(points, rho.grid), cell_probabilities(rho))


def marginal_cdf(rho: RealField, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cell-edge coordinates and CDF values of the marginal along axis, with mass
    spread uniformly inside each cell (the same law sample_ensemble draws from).
    On periodic axes the edges start at lower - h/2.
    """
    grid = rho.grid
    probs = cell_probabilities(rho)
    others = tuple(a for a in range(grid.ndim) if a != axis)
    marginal = probs.sum(axis=others) if others else probs
    x, h = grid.axes[axis], grid.spacing[axis]
    edges = np.concatenate([x - h / 2, [x[-1] + h / 2]])
    if not grid.periodic[axis]:
        edges = np.clip(edges, grid.lower[axis], grid.upper[axis])
    cdf = np.concatenate([[0.0], np.cumsum(marginal)])
    return edges, cdf / cdf[-1]


def ks_statistics(points: np.ndarray, rho: RealField) -> Tuple[List[float], List[float]]:
    """
    One-dimensional Kolmogorov-Smirnov statistic and p-value per axis,
    comparing each coordinate of the ensemble with the matching marginal of rho.
    """
    grid = rho.grid
    points = np.atleast_2d(points)
    statistics, pvalues = [], []
    for axis in range(grid.ndim):
        edges, cdf = marginal_cdf(rho, axis)
        q = points[:, axis]
        if grid.periodic[axis]:
            # the last half cell belongs to node 0
            q = np.where(q >= edges[-1], q - grid.extent[axis], q)
        result = kstest(q, lambda s, e=edges, c=cdf: np.interp(s, e, c))
        statistics.append(float(result.statistic))
        pvalues.append(float(result.pvalue))
    return statistics, pvalues


def _resampled_tv(rho: RealField, n_particles: int, seed: int) -> float:
    from pilotwave_study.dynamics.bohm import sample_ensemble
    return ensemble_tv(sample_ensemble(rho, n_particles, seed), rho)


def resampling_baseline(rho: RealField, n_particles: int, resamples: int = 20, seed: int = 0,
                        num_processes: int = 1) -> Tuple[float, float]:
    """
    Monte-Carlo TV baseline: the TV distance of fresh samples of the same size
    drawn directly from rho.

    :param rho: reference density
    :param n_particles: ensemble size to mimic
    :param resamples: number of independent draws
    :param seed: first seed; draws use seed, seed + 1, ...
    :param num_processes: worker threads
    :return: mean and standard deviation of the resampled TV distances
    """
    seeds = [seed + k for k in range(resamples)]
    with ThreadPool(num_processes) as pool:
        fn = partial(_resampled_tv, rho, n_particles)
        scores = pool.map(fn, seeds)
    scores = np.asarray(scores)
    return float(scores.mean()), float(scores.std())


def bin_counts(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Relative histogram of finite values over the given edges."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    counts, _ = np.histogram(values, bins=edges)
    total = counts.sum()
    return counts / total if total else counts.astype(float)


def bin_density(x: np.ndarray, density: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Integrates a non-negative line density into bins, normalized to one."""
    fine = np.linspace(edges[0], edges[-1], 20 * (len(edges) - 1) + 1)
    values = np.interp(fine, x, np.clip(density, 0, None))
    cumulative = cumulative_trapezoid(values, fine, initial=0.0)
    mass = np.diff(np.interp(edges, fine, cumulative))
    return mass / mass.sum()


def count_peaks(histogram: np.ndarray, prominence: float = None) -> int:
    """Number of interior local maxima (fringes) of a histogram."""
    histogram = np.asarray(histogram, dtype=float)
    if prominence is None:
        prominence = 0.05 * histogram.max()
    peaks, _ = find_peaks(histogram, prominence=prominence)
    return len(peaks)
