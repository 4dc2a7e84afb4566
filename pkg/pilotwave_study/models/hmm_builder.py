"""
Deterministic hidden Markov models for smooth time-dependent densities.

Given rho(q, t) the construction adjoins a latent field r with
d_t(r^2) = d_t rho and r^2 = rho at t0 (so r = sqrt(rho) for all t), currents

    J_i = -c_i d_t integral_{a_i}^{q_i} r^2 dq_i',   sum_i c_i = 1,

and the guiding law dQ_i/dt = J_i / r^2. The continuity equation holds for any
admissible (c, a), so an ensemble drawn from rho(., t0) stays rho-distributed.
"""
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence
import numpy as np
import yaml
from pilotwave_study.fields.grid import Grid, RealField
from pilotwave_study.fields.operators import cumulative_integral, diff_values, integrate
from pilotwave_study.fields.field_io import save_field
from pilotwave_study.dynamics.bohm import SnapshotVelocity, DEFAULT_FLOOR
from pilotwave_study.dynamics.trajectories import (advance_ensemble, equivariance_report, sampled_ensemble,
                                                   EquivarianceReport)
from pilotwave_study.utilities.errors import NumericalError

NORMALIZATION_TOLERANCE = 1e-4
COEFFICIENT_TOLERANCE = 1e-12


class DensityProvider:
    """rho(q, t) on a fixed grid."""
    grid: Grid
    descriptor: Dict

    def density(self, t: float) -> RealField:
        raise NotImplementedError

    def time_derivative(self, t: float) -> RealField:
        raise NotImplementedError

    def audit(self, t: float) -> float:
        """Normalization error at t; raises for negative densities."""
        rho = self.density(t)
        if np.any(rho.values < 0):
            raise ValueError(f'density is negative at t={t}')
        return float(abs(integrate(rho) - 1))


class AnalyticDensity(DensityProvider):
    """
    Args:
        grid: evaluation grid
        rho: (coords, t) -> array
        rho_t: (coords, t) -> array, analytic time derivative (optional)
        descriptor: plain description for manifests
        delta: time step of the centered difference used without rho_t
    """

    def __init__(self, grid: Grid, rho: Callable, rho_t: Callable = None, descriptor: Dict = None,
                 delta: float = 1e-4):
        self.grid = grid
        self._rho = rho
        self._rho_t = rho_t
        self.descriptor = descriptor or {'kind': 'analytic'}
        self.delta = delta

    def _evaluate(self, fn: Callable, t: float) -> np.ndarray:
        values = np.broadcast_to(np.asarray(fn(self.grid.mesh(), t), dtype=float), self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NumericalError(f'density provider returned non-finite values at t={t}')
        return values

    def density(self, t: float) -> RealField:
        return RealField(self.grid, self._evaluate(self._rho, t), t)

    def time_derivative(self, t: float) -> RealField:
        if self._rho_t is not None:
            return RealField(self.grid, self._evaluate(self._rho_t, t), t)
        ahead = self._evaluate(self._rho, t + self.delta)
        behind = self._evaluate(self._rho, t - self.delta)
        return RealField(self.grid, (ahead - behind) / (2 * self.delta), t)

    @property
    def analytic_derivative(self) -> bool:
        return self._rho_t is not None


class TabulatedDensity(DensityProvider):
    """
    Densities stored at increasing times. Between stored times rho is linear in
    t; d_t rho is a centered difference over the stored spacing (one-sided at
    the two ends), interpolated the same way.
    """

    def __init__(self, grid: Grid, times: Sequence[float], densities: np.ndarray, descriptor: Dict = None):
        times = np.asarray(times, dtype=float)
        densities = np.asarray(densities, dtype=float)
        if len(times) < 2:
            raise ValueError('a tabulated density needs at least two times')
        if densities.shape != (len(times),) + grid.shape:
            raise ValueError(f'densities must have shape {(len(times),) + grid.shape}')
        if np.any(densities < 0):
            raise ValueError('tabulated density is negative')
        self.grid = grid
        self.times = times
        self.densities = densities
        self.rates = np.gradient(densities, times, axis=0, edge_order=1)
        self.descriptor = descriptor or {'kind': 'tabulated', 'times': len(times)}

    @classmethod
    def from_provider(cls, provider: DensityProvider, times: Sequence[float]) -> 'TabulatedDensity':
        return cls(provider.grid, times, np.stack([provider.density(t).values for t in times]),
                   {'kind': 'tabulated', 'source': provider.descriptor})

    @classmethod
    def from_series(cls, series) -> 'TabulatedDensity':
        return cls(series.grid, series.times, series.densities(), {'kind': 'tabulated', 'source': 'snapshots'})

    def _blend(self, table: np.ndarray, t: float) -> np.ndarray:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ValueError(f't={t} outside the tabulated range')
        k = int(np.clip(np.searchsorted(self.times, t, side='right') - 1, 0, len(self.times) - 2))
        w = np.clip((t - self.times[k]) / (self.times[k + 1] - self.times[k]), 0, 1)
        return (1 - w) * table[k] + w * table[k + 1]

    def density(self, t: float) -> RealField:
        return RealField(self.grid, self._blend(self.densities, t), t)

    def time_derivative(self, t: float) -> RealField:
        return RealField(self.grid, self._blend(self.rates, t), t)


def _gaussian(x, mean, sigma):
    return np.exp(-0.5 * ((x - mean) / sigma) ** 2) / (np.sqrt(2 * np.pi) * sigma)


def moving_gaussian(grid: Grid, velocity: Sequence[float] = 1.0, sigma: float = 1.0,
                    center: Sequence[float] = None) -> AnalyticDensity:
    """Product Gaussian translating rigidly: rho = prod_i N(q_i; c_i + v_i t, sigma^2)."""
    v = np.broadcast_to(np.asarray(velocity, dtype=float), (grid.ndim,))
    c = np.zeros(grid.ndim) if center is None else np.asarray(center, dtype=float)

    def rho(q, t):
        return np.prod([_gaussian(x, c[i] + v[i] * t, sigma) for i, x in enumerate(q)], axis=0)

    def rho_t(q, t):
        drift = sum(v[i] * (x - c[i] - v[i] * t) for i, x in enumerate(q)) / sigma ** 2
        return rho(q, t) * drift

    return AnalyticDensity(grid, rho, rho_t, {'kind': 'moving-gaussian', 'velocity': v.tolist(),
                                              'sigma': sigma, 'center': c.tolist()})


def breathing_gaussian(grid: Grid, sigma: float = 1.0, amplitude: float = 0.3, omega: float = 2.0) -> AnalyticDensity:
    """Centered Gaussian with width sigma (1 + amplitude sin(omega t)) on every axis."""
    if not 0 <= amplitude < 1:
        raise ValueError('amplitude must lie in [0, 1)')

    def width(t):
        return sigma * (1 + amplitude * np.sin(omega * t))

    def width_rate(t):
        return sigma * amplitude * omega * np.cos(omega * t)

    def rho(q, t):
        return np.prod([_gaussian(x, 0.0, width(t)) for x in q], axis=0)

    def rho_t(q, t):
        s = width(t)
        return rho(q, t) * width_rate(t) / s * sum((x / s) ** 2 - 1 for x in q)

    return AnalyticDensity(grid, rho, rho_t, {'kind': 'breathing-gaussian', 'sigma': sigma,
                                              'amplitude': amplitude, 'omega': omega})


def _bump(x):
    # odd, bounded by 1, and orthogonal to the unit Gaussian
    return x * np.exp(-(x ** 2 - 1) / 2)


def oscillating_copula(grid: Grid, epsilon: float = 0.5, omega: float = 2.0) -> AnalyticDensity:
    """
    2D density phi(q1) phi(q2) [1 + epsilon sin(omega t) h(q1) h(q2)] with
    phi the unit Gaussian. Both line marginals are static, so every
    coefficient vector c gives currents that vanish on the box walls.
    """
    if grid.ndim != 2:
        raise ValueError('the oscillating copula density is two-dimensional')
    if not 0 <= epsilon < 1:
        raise ValueError('epsilon must lie in [0, 1)')

    def rho(q, t):
        return _gaussian(q[0], 0, 1) * _gaussian(q[1], 0, 1) * (1 + epsilon * np.sin(omega * t) * _bump(q[0]) * _bump(q[1]))

    def rho_t(q, t):
        return _gaussian(q[0], 0, 1) * _gaussian(q[1], 0, 1) * epsilon * omega * np.cos(omega * t) \
            * _bump(q[0]) * _bump(q[1])

    return AnalyticDensity(grid, rho, rho_t, {'kind': 'oscillating-copula', 'epsilon': epsilon, 'omega': omega})


def build_r(provider: DensityProvider, times: Sequence[float]) -> np.ndarray:
    """
    Latent field r at the given times. With r^2 = rho at the first time the
    defining equation d_t(r^2) = d_t rho integrates to r = sqrt(rho).

    Returns:
        (T, *grid.shape) non-negative array
    """
    out = []
    for t in times:
        rho = provider.density(t).values
        if np.any(rho < 0):
            raise ValueError(f'density is negative at t={t}')
        out.append(np.sqrt(rho))
    return np.stack(out)


def default_coefficients(ndim: int) -> np.ndarray:
    return np.full(ndim, 1.0 / ndim)


def default_references(grid: Grid) -> np.ndarray:
    return np.asarray(grid.lower, dtype=float)


def check_coefficients(c: Sequence[float]) -> None:
    total = float(np.sum(c))
    if abs(total - 1) > COEFFICIENT_TOLERANCE:
        raise ValueError(f'coefficients must sum to one, got {total!r}')


def build_currents(provider: DensityProvider, c: Sequence[float], a: Sequence[float], t: float,
                   method: str = 'simpson', allow_invalid: bool = False) -> List[RealField]:
    """
    J_i = -c_i integral_{a_i}^{q_i} d_t rho dq_i' at time t.

    Args:
        provider: density with a time derivative
        c: coefficients, summing to one
        a: per-axis reference points inside the grid bounds
        t: time
        method: cumulative quadrature, 'simpson' or 'trapezoid'
        allow_invalid: skip the coefficient-sum check (negative controls only)
    """
    grid = provider.grid
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float)
    if len(c) != grid.ndim or len(a) != grid.ndim:
        raise ValueError(f'need one coefficient and one reference point per axis ({grid.ndim})')
    if not allow_invalid:
        check_coefficients(c)
    rate = provider.time_derivative(t)
    return [RealField(grid, -c[i] * cumulative_integral(rate, i, a[i], method).values, t)
            for i in range(grid.ndim)]


@dataclass
class HmmModel:
    """
    Tabulated latent-field model: r, rho and J at increasing times.

    Args:
        provider: density provider the model was built from
        times: (T,) build times
        c: coefficients
        a: reference points
        r: (T, *shape) latent field
        currents: (T, n, *shape)
        audits: residuals recorded while building
    """
    provider: DensityProvider
    times: np.ndarray
    c: np.ndarray
    a: np.ndarray
    r: np.ndarray
    currents: np.ndarray
    audits: Dict[str, float] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.provider.grid

    @property
    def densities(self) -> np.ndarray:
        return self.r ** 2

    def density(self, k: int) -> RealField:
        return RealField(self.grid, self.densities[k], self.times[k])

    def manifest(self) -> dict:
        return {
            'density': self.provider.descriptor,
            'coefficients': self.c.tolist(),
            'references': self.a.tolist(),
            'grid': self.grid.describe(),
            'times': self.times.tolist(),
            'audits': {k: float(v) for k, v in self.audits.items()},
        }

    def save(self, directory: str) -> None:
        """manifest.yaml plus rho and J per time in the binary field format."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, 'manifest.yaml'), 'w') as f:
            yaml.safe_dump(self.manifest(), f, sort_keys=False)
        for k, t in enumerate(self.times):
            save_field(os.path.join(directory, f'density_{k:05d}.bin'), RealField(self.grid, self.densities[k], t))
            for i in range(self.grid.ndim):
                save_field(os.path.join(directory, f'current{i + 1}_{k:05d}.bin'),
                           RealField(self.grid, self.currents[k, i], t))


def continuity_audit(provider: DensityProvider, currents: np.ndarray, times: Sequence[float]) -> float:
    """max |d_t rho + div J| over interior nodes, scaled by max rho / time span."""
    grid = provider.grid
    interior = tuple(slice(None) if p else slice(1, -1) for p in grid.periodic)
    worst, peak = 0.0, 0.0
    for k, t in enumerate(times):
        rate = provider.time_derivative(t).values
        div = sum(diff_values(currents[k, i], grid, i) for i in range(grid.ndim))
        worst = max(worst, float(np.max(np.abs(rate + div)[interior])))
        peak = max(peak, float(np.max(provider.density(t).values)))
    span = max(float(times[-1] - times[0]), 1.0)
    return worst * span / peak


def build_model(provider: DensityProvider, times: Sequence[float], c: Sequence[float] = None,
                a: Sequence[float] = None, method: str = 'simpson', allow_invalid: bool = False) -> HmmModel:
    """Builds r, J at every time and records the r^2 = rho, normalization and continuity audits."""
    grid = provider.grid
    times = np.asarray(times, dtype=float)
    c = default_coefficients(grid.ndim) if c is None else np.asarray(c, dtype=float)
    a = default_references(grid) if a is None else np.asarray(a, dtype=float)
    r = build_r(provider, times)
    currents = np.stack([np.stack([j.values for j in build_currents(provider, c, a, t, method, allow_invalid)])
                         for t in times])
    rho = np.stack([provider.density(t).values for t in times])
    audits = {
        'latent_residual': float(np.max(np.abs(r ** 2 - rho))),
        'normalization': max(provider.audit(t) for t in times),
        'continuity': continuity_audit(provider, currents, times),
        'coefficient_sum': float(np.sum(c)),
    }
    if audits['normalization'] > NORMALIZATION_TOLERANCE:
        raise NumericalError(f"density is not normalized on the grid (error {audits['normalization']:.2e})")
    return HmmModel(provider, times, c, a, r, currents, audits)


def hmm_velocity(model: HmmModel, floor: float = DEFAULT_FLOOR, extra_currents: np.ndarray = None) -> SnapshotVelocity:
    """
    dQ_i/dt = J_i / r^2 with the same guarded interpolation as pilot-wave
    guidance. extra_currents (T, n, *shape) adds a divergence-free term.
    """
    currents = model.currents if extra_currents is None else model.currents + extra_currents
    return SnapshotVelocity(model.grid, model.times, model.densities, currents, floor)


@dataclass
class Certification:
    reports: List[EquivarianceReport]
    model: Dict
    n_particles: int
    seed: int

    @property
    def certified(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def worst_tv(self) -> float:
        return max(r.tv for r in self.reports)

    def to_dict(self) -> dict:
        return {
            'certified': self.certified,
            'worst_tv_distance': float(self.worst_tv),
            'n_particles': int(self.n_particles),
            'seed': int(self.seed),
            'model': self.model,
            'reports': [r.to_dict() for r in self.reports],
        }


def certify_equivariance(model: HmmModel, n_particles: int, seed: int, horizon: float = None,
                         dt_traj: float = None, floor: float = DEFAULT_FLOOR, resamples: int = 20,
                         tv_threshold: float = 0.05, chunk_size: int = 2048, threads: int = 1,
                         extra_currents: np.ndarray = None, progress: bool = False) -> Certification:
    """
    Samples from rho(., t0), flows the sample under hmm_velocity and compares
    it with rho at every build time up to the horizon.
    """
    velocity = hmm_velocity(model, floor, extra_currents)
    t0 = float(model.times[0])
    t_end = float(model.times[-1]) if horizon is None else min(t0 + horizon, float(model.times[-1]))
    dt_traj = float(np.min(np.diff(model.times))) if dt_traj is None else dt_traj
    ensemble = sampled_ensemble(model.density(0), n_particles, seed)
    ensemble = advance_ensemble(ensemble, velocity, dt_traj, t_end=t_end, chunk_size=chunk_size,
                                threads=threads, progress=progress)
    reports = []
    for k, t in enumerate(model.times):
        if t > ensemble.times[-1] + 1e-12:
            break
        reports.append(equivariance_report(ensemble, model.density(k), t, resamples, tv_threshold, threads))
    return Certification(reports, model.manifest(), n_particles, seed)
