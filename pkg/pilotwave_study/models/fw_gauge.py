"""
Foldy-Wouthuysen gauge transformations.

Two realizations are provided:
    - Hilbert space: a time-dependent unitary V(t) maps Psi -> V Psi,
      A -> V A V^dagger and H -> V H V^dagger - i hbar V d_t V^dagger.
    - Configuration space: the phase-factor subclass Psi -> exp(i lambda / hbar) Psi,
      under which currents shift by rho mu grad(lambda). Gauges whose current
      shift has vanishing generalized divergence keep the continuity equation.

Divergence-free current terms (the current ambiguity) live here as well.
"""
import warnings
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Callable, Dict, List, Optional, Sequence, Union
import numpy as np
from scipy.linalg import expm
from scipy.integrate import solve_ivp
from scipy.stats import unitary_group
from pilotwave_study.fields.grid import Grid, RealField, ComplexField
from pilotwave_study.fields.operators import diff_values, divergence, raise_index, interpolate_points
from pilotwave_study.dynamics.schrodinger import SnapshotSeries
from pilotwave_study.dynamics.bohm import SnapshotVelocity, ShiftedVelocity, DEFAULT_FLOOR
from pilotwave_study.dynamics.trajectories import (TrajectoryEnsemble, advance_ensemble, equivariance_report,
                                                   EquivarianceReport)
from pilotwave_study.utilities.errors import NumericalError

UNITARY_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12
DEFAULT_RESTRICTION_TOLERANCE = 1e-3

Coordinates = Sequence[np.ndarray]


# ---------------------------------------------------------------------------
# configuration-space gauge functions
# ---------------------------------------------------------------------------

@dataclass
class GaugeFunction:
    """
    A gauge function lambda(q, t) in action units.

    Args:
        value: (coords, t) -> array, or None for gauges only known through their gradient
        gradient: (coords, t) -> list of arrays, analytic gradient (optional)
        time_derivative: (coords, t) -> array, analytic d_t lambda (optional)
        multivalued: lambda itself is not single valued (e.g. an angle); only the
            gradient may be used and phase factors are refused
        core_radius: radius around `center` where the gradient is singular and
            is set to zero; those points are excluded from audits
        center: center of the singular core
        descriptor: plain description for reports
    """
    value: Optional[Callable[[Coordinates, float], np.ndarray]] = None
    gradient: Optional[Callable[[Coordinates, float], List[np.ndarray]]] = None
    time_derivative: Optional[Callable[[Coordinates, float], np.ndarray]] = None
    multivalued: bool = False
    core_radius: float = 0.0
    center: Sequence[float] = None
    descriptor: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.value is None and self.gradient is None:
            raise ValueError('a gauge function needs a value or a gradient provider')
        if self.multivalued and self.gradient is None:
            raise ValueError('multivalued gauge functions must provide their gradient')

    def values(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        if self.multivalued or self.value is None:
            raise ValueError('this gauge function is only defined through its gradient')
        values = np.broadcast_to(np.asarray(self.value(grid.mesh(), t), dtype=float), grid.shape)
        if not np.all(np.isfinite(values)):
            raise NumericalError('gauge function is not finite')
        return values

    def numeric_gradient(self, grid: Grid, t: float = 0.0) -> List[np.ndarray]:
        values = self.values(grid, t)
        return [diff_values(values, grid, axis) for axis in range(grid.ndim)]

    def gradient_values(self, grid: Grid, t: float = 0.0) -> List[np.ndarray]:
        """grad(lambda) on the grid; analytic when available, zero inside the core."""
        if self.gradient is None:
            return self.numeric_gradient(grid, t)
        coords = grid.mesh()
        grads = [np.broadcast_to(np.asarray(g, dtype=float), grid.shape) for g in self.gradient(coords, t)]
        core = self.core_mask(coords)
        grads = [np.where(core, 0.0, g) for g in grads]
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise NumericalError('gauge gradient is not finite')
        return grads

    def gradient_at(self, points: np.ndarray, t: float = 0.0, grid: Grid = None) -> np.ndarray:
        """(N, n) gradient at arbitrary points; interpolated when no analytic gradient exists."""
        points = np.atleast_2d(points)
        if self.gradient is None:
            if grid is None:
                raise ValueError('a grid is needed to interpolate a numeric gradient')
            return interpolate_points(np.stack(self.numeric_gradient(grid, t)), grid, points, check=False).T
        coords = [points[:, axis] for axis in range(points.shape[1])]
        grads = np.stack([np.broadcast_to(np.asarray(g, dtype=float), (len(points),))
                          for g in self.gradient(coords, t)], axis=1)
        return np.where(self.core_mask(coords)[:, None], 0.0, grads)

    def core_mask(self, coords: Coordinates) -> np.ndarray:
        if self.core_radius <= 0:
            return np.zeros(np.shape(coords[0]), dtype=bool)
        center = np.zeros(len(coords)) if self.center is None else self.center
        r2 = sum((c - c0) ** 2 for c, c0 in zip(coords, center))
        return r2 < self.core_radius ** 2

    def audit(self, grid: Grid, t: float = 0.0) -> float:
        """Max difference between the analytic and the numeric gradient."""
        if self.gradient is None or self.value is None or self.multivalued:
            return 0.0
        analytic = self.gradient_values(grid, t)
        numeric = self.numeric_gradient(grid, t)
        interior = tuple(slice(None) if p else slice(1, -1) for p in grid.periodic)
        return float(max(np.max(np.abs(a - b)[interior]) for a, b in zip(analytic, numeric)))


def constant_gauge(c: float) -> GaugeFunction:
    return GaugeFunction(value=lambda q, t: np.full(np.shape(q[0]), float(c)),
                         gradient=lambda q, t: [np.zeros(np.shape(x)) for x in q],
                         time_derivative=lambda q, t: np.zeros(np.shape(q[0])),
                         descriptor={'kind': 'constant', 'value': float(c)})


def linear_gauge(p: Sequence[float]) -> GaugeFunction:
    """lambda = p . q, a uniform boost of the velocity field by mu p."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return GaugeFunction(value=lambda q, t: sum(pi * x for pi, x in zip(p, q)),
                         gradient=lambda q, t: [np.full(np.shape(x), pi) for pi, x in zip(p, q)],
                         time_derivative=lambda q, t: np.zeros(np.shape(q[0])),
                         descriptor={'kind': 'linear', 'momentum': p.tolist()})


def quadratic_gauge(strength: float = 1.0, axis: int = 0) -> GaugeFunction:
    """lambda = strength * q_axis^2; not restricted for generic densities."""
    def gradient(q, t):
        return [2 * strength * x if a == axis else np.zeros(np.shape(x)) for a, x in enumerate(q)]
    return GaugeFunction(value=lambda q, t: strength * q[axis] ** 2, gradient=gradient,
                         time_derivative=lambda q, t: np.zeros(np.shape(q[0])),
                         descriptor={'kind': 'quadratic', 'strength': strength, 'axis': axis})


def azimuthal_gauge(strength: float = 1.0, center: Sequence[float] = (0.0, 0.0),
                    core_radius: float = 0.5) -> GaugeFunction:
    """
    lambda = strength * atan2(y - y0, x - x0) in the plane of the first two
    axes. Multivalued; grad(lambda) = strength (-(y - y0), x - x0) / r^2.
    """
    center = np.asarray(center, dtype=float)

    def gradient(q, t):
        dx, dy = q[0] - center[0], q[1] - center[1]
        r2 = dx ** 2 + dy ** 2
        safe = np.where(r2 > 0, r2, 1.0)
        grads = [np.where(r2 > 0, -strength * dy / safe, 0.0), np.where(r2 > 0, strength * dx / safe, 0.0)]
        return grads + [np.zeros(np.shape(x)) for x in q[2:]]

    return GaugeFunction(gradient=gradient, multivalued=True, core_radius=core_radius,
                         center=center,
                         descriptor={'kind': 'azimuthal', 'strength': strength, 'center': center.tolist(),
                                     'core_radius': core_radius})


def random_smooth_gauge(grid: Grid, seed: int, modes: int = 3, amplitude: float = 0.5) -> GaugeFunction:
    """A few random Fourier modes, periodic on the grid extent."""
    rng = np.random.default_rng(seed)
    waves = rng.integers(1, 3, size=(modes, grid.ndim)) * 2 * np.pi / grid.extent
    phases = rng.uniform(0, 2 * np.pi, size=modes)
    weights = amplitude * rng.normal(size=modes) / modes
    lower = np.asarray(grid.lower)

    def arg(q, m):
        return sum(waves[m, a] * (x - lower[a]) for a, x in enumerate(q)) + phases[m]

    def value(q, t):
        return sum(weights[m] * np.sin(arg(q, m)) for m in range(modes))

    def gradient(q, t):
        return [sum(weights[m] * waves[m, a] * np.cos(arg(q, m)) for m in range(modes)) for a in range(len(q))]

    return GaugeFunction(value=value, gradient=gradient, time_derivative=lambda q, t: np.zeros(np.shape(q[0])),
                         descriptor={'kind': 'random', 'seed': seed, 'modes': modes, 'amplitude': amplitude})


def make_gauge(kind: str, grid: Grid, strength: float = 1.0, center=(0.0, 0.0), core_radius: float = 0.5,
               seed: int = 0) -> GaugeFunction:
    """Gauge from the `gauge` config section."""
    if kind == 'constant':
        return constant_gauge(strength)
    if kind == 'linear':
        return linear_gauge(np.full(grid.ndim, strength))
    if kind == 'quadratic':
        return quadratic_gauge(strength)
    if kind == 'azimuthal':
        if grid.ndim < 2:
            raise ValueError('the azimuthal gauge needs at least two axes')
        return azimuthal_gauge(strength, center, core_radius)
    if kind == 'random':
        return random_smooth_gauge(grid, seed, amplitude=strength)
    raise ValueError(f'unknown gauge kind {kind!r}')


def apply_gauge_config(psi: ComplexField, gauge: GaugeFunction, t: float = None, hbar: float = 1.0) -> ComplexField:
    """Psi' = exp(i lambda / hbar) Psi, point-wise."""
    t = psi.t if t is None else t
    if gauge.multivalued:
        raise ValueError('refusing exp(i lambda / hbar) for a multivalued gauge function, use its gradient')
    return ComplexField(psi.grid, psi.values * np.exp(1j * gauge.values(psi.grid, t) / hbar), psi.t)


def gauged_potential_term(gauge: GaugeFunction, grid: Grid, t: float) -> np.ndarray:
    """The extra potential -d_t lambda that a time-dependent phase gauge adds to H."""
    if gauge.time_derivative is None:
        raise ValueError('gauge function has no time derivative')
    return -np.broadcast_to(np.asarray(gauge.time_derivative(grid.mesh(), t), dtype=float), grid.shape)


def gauge_current_shift(rho: RealField, gauge: GaugeFunction, metric: np.ndarray = None,
                        t: float = None) -> List[RealField]:
    """Delta J_i = rho sum_j mu_ij d_j lambda."""
    t = rho.t if t is None else t
    grid = rho.grid
    shifted = raise_index(gauge.gradient_values(grid, t), grid, grid.metric if metric is None else metric)
    return [RealField(grid, rho.values * s, rho.t) for s in shifted]


def _spread(rho: RealField) -> float:
    # rms radius of rho, the length scale used to normalize divergences
    weights = rho.values * rho.grid.quadrature_weights()
    weights = weights / weights.sum()
    variance = 0.0
    for q in rho.grid.mesh():
        mean = np.sum(weights * q)
        variance += np.sum(weights * (q - mean) ** 2)
    return float(np.sqrt(variance))


def check_restricted(gauge: GaugeFunction, rho: RealField, metric: np.ndarray = None, t: float = None) -> float:
    """
    Normalized sup-norm of the generalized divergence sum_i d_i(rho sum_j mu_ij d_j lambda).

    The divergence is scaled by max |Delta J| / ell with ell the rms spread of
    rho. Dirichlet wall nodes and the gauge's singular core (plus one grid
    spacing) are excluded.
    """
    shift = gauge_current_shift(rho, gauge, metric, t)
    scale = max(s.max_abs() for s in shift)
    if scale == 0:
        return 0.0
    div = divergence(shift).values
    grid = rho.grid
    keep = np.ones(grid.shape, dtype=bool)
    if gauge.core_radius > 0:
        padded = GaugeFunction(gradient=gauge.gradient, core_radius=gauge.core_radius + float(np.max(grid.spacing)),
                               center=gauge.center)
        keep &= ~padded.core_mask(grid.mesh())
    for axis, periodic in enumerate(grid.periodic):
        if not periodic:
            index = [slice(None)] * grid.ndim
            index[axis] = [0, -1]
            keep[tuple(index)] = False
    return float(np.max(np.abs(div[keep])) * _spread(rho) / scale)


def gauge_velocity(gauge: GaugeFunction, grid: Grid, metric: np.ndarray = None) -> Callable:
    """(points, t) -> mu grad(lambda), the velocity shift of a phase gauge."""
    metric = grid.metric if metric is None else np.asarray(metric)

    def shift(points, t):
        grad = gauge.gradient_at(points, t, grid)
        if metric.ndim == 1:
            return grad * metric
        mu = interpolate_points(metric, grid, points, check=False)
        return np.einsum('ijn,nj->ni', mu, grad)

    return shift


@dataclass
class GaugeComparison:
    gauge: Dict
    restriction_residual: float
    restricted: bool
    times: np.ndarray
    max_deviation: np.ndarray
    reference: EquivarianceReport
    gauged: EquivarianceReport
    histogram_tv: float
    seed: int
    config_hash: str = None

    def to_dict(self) -> dict:
        return {
            'gauge': self.gauge,
            'restriction_residual': float(self.restriction_residual),
            'restricted': self.restricted,
            'times': self.times.tolist(),
            'max_trajectory_deviation': self.max_deviation.tolist(),
            'final_max_deviation': float(self.max_deviation[-1]),
            'histogram_tv_between_runs': float(self.histogram_tv),
            'reference_run': self.reference.to_dict(),
            'gauged_run': self.gauged.to_dict(),
            'seed': int(self.seed),
            'config_hash': self.config_hash,
        }


def minimal_image(delta: np.ndarray, grid: Grid) -> np.ndarray:
    """Displacements reduced to the nearest periodic image."""
    delta = np.array(delta, dtype=float)
    for axis, periodic in enumerate(grid.periodic):
        if periodic:
            length = grid.extent[axis]
            delta[..., axis] -= length * np.round(delta[..., axis] / length)
    return delta


def gauge_velocity_shift(ensemble: TrajectoryEnsemble, series: SnapshotSeries, gauge: GaugeFunction,
                         dt_traj: float, tolerance: float = DEFAULT_RESTRICTION_TOLERANCE,
                         floor: float = DEFAULT_FLOOR, chunk_size: int = 2048, threads: int = 1,
                         resamples: int = 20, tv_threshold: float = 0.05) -> GaugeComparison:
    """
    Dual pilot-wave run from identical initial positions: once with the plain
    currents and once with the gauged velocities v + mu grad(lambda). The two
    runs execute concurrently.

    A gauge failing the restriction check is flagged (with a warning) and the
    comparison still runs.
    """
    from pilotwave_study.utilities.metrics import histogram_cells, total_variation

    residual = max(check_restricted(gauge, series.density(k)) for k in range(len(series)))
    restricted = residual < tolerance
    if not restricted:
        warnings.warn(f'gauge fails the restriction check (residual {residual:.2e} >= {tolerance:.0e}); '
                      f'continuity is not preserved')

    base = SnapshotVelocity.from_series(series, floor)
    shifted = ShiftedVelocity(base, gauge_velocity(gauge, series.grid))

    def run(velocity):
        return advance_ensemble(ensemble, velocity, dt_traj, chunk_size=chunk_size, threads=threads)

    with ThreadPool(2) as pool:
        reference, gauged = pool.map(run, [base, shifted])

    deviation = np.linalg.norm(minimal_image(gauged.positions - reference.positions, series.grid), axis=2)
    rho_final = series.density(len(series) - 1)
    t_final = float(series.times[-1])
    return GaugeComparison(
        gauge=gauge.descriptor,
        restriction_residual=residual,
        restricted=restricted,
        times=reference.times,
        max_deviation=deviation.max(axis=0),
        reference=equivariance_report(reference, rho_final, t_final, resamples, tv_threshold, threads),
        gauged=equivariance_report(gauged, rho_final, t_final, resamples, tv_threshold, threads),
        histogram_tv=total_variation(histogram_cells(reference.final, series.grid),
                                     histogram_cells(gauged.final, series.grid)),
        seed=ensemble.seed,
        config_hash=series.config_hash,
    )


# ---------------------------------------------------------------------------
# divergence-free current terms
# ---------------------------------------------------------------------------

def curl_currents(chi: Union[RealField, np.ndarray], grid: Grid = None, axes=(0, 1)) -> List[np.ndarray]:
    """W = (-d_j chi, d_i chi) in the (i, j) plane, zero along other axes."""
    grid = chi.grid if grid is None else grid
    values = chi.values if isinstance(chi, RealField) else np.asarray(chi)
    i, j = axes
    if grid.ndim < 2:
        raise ValueError('curl terms need at least two axes')
    lead = values.shape[:values.ndim - grid.ndim]
    W = [np.zeros(lead + grid.shape) for _ in range(grid.ndim)]
    W[i] = -diff_values(values, grid, j)
    W[j] = diff_values(values, grid, i)
    return W


def density_curl_term(densities: np.ndarray, grid: Grid, epsilon: float = 0.5, axes=(0, 1)) -> np.ndarray:
    """
    Divergence-free currents W = curl(epsilon rho) for a stack of densities,
    shape (T, n, *grid.shape). W / rho stays bounded wherever log rho is smooth.
    """
    return np.stack(curl_currents(epsilon * np.asarray(densities), grid, axes), axis=1)


def divergence_audit(W: Sequence[np.ndarray], grid: Grid) -> float:
    """max |div W| scaled by max |W| / h; wall nodes of dirichlet axes excluded."""
    W = [np.asarray(w) for w in W]
    scale = max(float(np.max(np.abs(w))) for w in W)
    if scale == 0:
        return 0.0
    div = sum(diff_values(w, grid, axis) for axis, w in enumerate(W))
    interior = (Ellipsis,) + tuple(slice(None) if p else slice(2, -2) for p in grid.periodic)
    return float(np.max(np.abs(div[interior])) * float(np.min(grid.spacing)) / scale)


def deotto_ghirardi_modify(J: Sequence[Union[RealField, np.ndarray]], W: Sequence[np.ndarray], grid: Grid = None,
                           tolerance: float = DEFAULT_RESTRICTION_TOLERANCE) -> List[np.ndarray]:
    """
    J' = J + W for a divergence-free W. Continuity is untouched because
    div W = 0; W is audited first.
    """
    grid = J[0].grid if grid is None else grid
    residual = divergence_audit(W, grid)
    if residual > tolerance:
        raise ValueError(f'added current term is not divergence free (audit {residual:.2e} > {tolerance:.0e})')
    return [(j.values if isinstance(j, RealField) else np.asarray(j)) + np.asarray(w) for j, w in zip(J, W)]


def modified_velocity(series: SnapshotSeries, W: np.ndarray, floor: float = DEFAULT_FLOOR) -> SnapshotVelocity:
    """Guidance by (J + W) / rho for a stack W of shape (T, n, *grid.shape)."""
    from pilotwave_study.dynamics.bohm import current_values
    J = current_values(series.values, series.grid, None, series.hbar)
    currents = np.stack([np.stack(deotto_ghirardi_modify(list(J[k]), list(W[k]), series.grid))
                         for k in range(len(series))])
    return SnapshotVelocity(series.grid, series.times, series.densities(), currents, floor)


# ---------------------------------------------------------------------------
# Hilbert-space gauge transformations
# ---------------------------------------------------------------------------

def _dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermiticity_error(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - _dagger(m))))


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (a + _dagger(a))


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return psi / np.linalg.norm(psi)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(d, random_state=rng)


def expectation(observable: np.ndarray, psi: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, observable @ psi)))


@dataclass
class FiniteQuantumSystem:
    """
    Args:
        state: unit-norm complex d-vector
        hamiltonian: Hermitian d x d matrix, or t -> matrix
        observables: name -> Hermitian d x d matrix
        hbar: reduced Planck constant
        t: time the state refers to
    """
    state: np.ndarray
    hamiltonian: Union[np.ndarray, Callable[[float], np.ndarray]]
    observables: Dict[str, np.ndarray] = field(default_factory=dict)
    hbar: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=complex)
        norm = np.linalg.norm(self.state)
        if abs(norm - 1) > 1e-10:
            raise ValueError(f'state must have unit norm, got {norm}')
        for name, a in self.observables.items():
            if hermiticity_error(np.asarray(a)) > HERMITIAN_TOLERANCE:
                raise ValueError(f'observable {name!r} is not Hermitian')
        self.hamiltonian_at(self.t)

    @property
    def dimension(self) -> int:
        return len(self.state)

    def hamiltonian_at(self, t: float) -> np.ndarray:
        h = self.hamiltonian(t) if callable(self.hamiltonian) else self.hamiltonian
        h = np.asarray(h, dtype=complex)
        if h.shape != (self.dimension, self.dimension):
            raise ValueError(f'Hamiltonian must be {self.dimension} x {self.dimension}')
        if hermiticity_error(h) > HERMITIAN_TOLERANCE * max(1.0, float(np.max(np.abs(h)))):
            raise ValueError(f'Hamiltonian is not Hermitian at t={t}')
        return h

    def expectations(self) -> Dict[str, float]:
        return {name: expectation(a, self.state) for name, a in self.observables.items()}


class UnitaryPath:
    """
    V(t) with its time derivative. Without an analytic derivative a centered
    difference with step 1e-6 * timescale is used.
    """

    def __init__(self, operator: Callable[[float], np.ndarray], derivative: Callable[[float], np.ndarray] = None,
                 timescale: float = 1.0):
        self.operator = operator
        self.derivative = derivative
        self.delta = 1e-6 * timescale

    def at(self, t: float) -> np.ndarray:
        v = np.asarray(self.operator(t), dtype=complex)
        error = float(np.max(np.abs(v @ _dagger(v) - np.eye(len(v)))))
        if error > UNITARY_TOLERANCE:
            raise ValueError(f'V(t={t}) is not unitary (|V V^dagger - I| = {error:.2e})')
        return v

    def derivative_at(self, t: float) -> np.ndarray:
        if self.derivative is not None:
            return np.asarray(self.derivative(t), dtype=complex)
        return (self.at(t + self.delta) - self.at(t - self.delta)) / (2 * self.delta)

    @property
    def analytic(self) -> bool:
        return self.derivative is not None


def constant_path(v: np.ndarray) -> UnitaryPath:
    v = np.asarray(v, dtype=complex)
    return UnitaryPath(lambda t: v, lambda t: np.zeros_like(v))


def exponential_path(generator: np.ndarray, omega: float = 1.0) -> UnitaryPath:
    """V(t) = exp(-i omega t G) for Hermitian G."""
    generator = np.asarray(generator, dtype=complex)
    return UnitaryPath(lambda t: expm(-1j * omega * t * generator),
                       lambda t: -1j * omega * generator @ expm(-1j * omega * t * generator),
                       timescale=1.0 / max(abs(omega), 1e-12))


def interaction_picture_path(hamiltonian: np.ndarray, hbar: float = 1.0) -> UnitaryPath:
    """V(t) = exp(i H t / hbar); removes a constant H entirely."""
    h = np.asarray(hamiltonian, dtype=complex)
    return UnitaryPath(lambda t: expm(1j * h * t / hbar), lambda t: 1j * h / hbar @ expm(1j * h * t / hbar))


@dataclass
class GaugedSystem:
    state: np.ndarray
    observables: Dict[str, np.ndarray]
    hamiltonian: np.ndarray
    hermiticity_error: float


def _raw_transformed(system: FiniteQuantumSystem, path: UnitaryPath, t: float) -> np.ndarray:
    v = path.at(t)
    return v @ system.hamiltonian_at(t) @ _dagger(v) - 1j * system.hbar * v @ _dagger(path.derivative_at(t))


def transformed_hamiltonian(system: FiniteQuantumSystem, path: UnitaryPath, t: float) -> np.ndarray:
    """H' = V H V^dagger - i hbar V d_t V^dagger, audited for Hermiticity then symmetrized."""
    h = _raw_transformed(system, path, t)
    error = hermiticity_error(h)
    scale = max(1.0, float(np.max(np.abs(h))))
    tolerance = 1e-10 if path.analytic else 1e-5
    if error > tolerance * scale:
        raise NumericalError(f'transformed Hamiltonian is not Hermitian at t={t} (error {error:.2e})')
    return 0.5 * (h + _dagger(h))


def apply_gauge_hilbert(system: FiniteQuantumSystem, path: UnitaryPath, t: float = None) -> GaugedSystem:
    """Applies Psi' = V Psi, A' = V A V^dagger, H' = V H V^dagger - i hbar V d_t V^dagger at time t."""
    t = system.t if t is None else t
    v = path.at(t)
    return GaugedSystem(state=v @ system.state,
                        observables={name: v @ a @ _dagger(v) for name, a in system.observables.items()},
                        hamiltonian=transformed_hamiltonian(system, path, t),
                        hermiticity_error=hermiticity_error(_raw_transformed(system, path, t)))


def transform_system(system: FiniteQuantumSystem, path: UnitaryPath) -> FiniteQuantumSystem:
    """The whole transformed system, with H'(t) as a provider."""
    gauged = apply_gauge_hilbert(system, path)
    return FiniteQuantumSystem(state=gauged.state,
                               hamiltonian=lambda t: transformed_hamiltonian(system, path, t),
                               observables=gauged.observables, hbar=system.hbar, t=system.t)


def evolve_state(hamiltonian: Union[np.ndarray, Callable[[float], np.ndarray]], state: np.ndarray, t0: float,
                 t1: float, hbar: float = 1.0, t_eval: Sequence[float] = None, rtol: float = 1e-10,
                 atol: float = 1e-12) -> np.ndarray:
    """
    Integrates i hbar d_t psi = H(t) psi with DOP853.

    Returns:
        (len(t_eval), d) states, or the final state when t_eval is None
    """
    provider = hamiltonian if callable(hamiltonian) else (lambda t, h=np.asarray(hamiltonian, complex): h)
    state = np.asarray(state, dtype=complex)
    if t1 == t0:
        return state[None] if t_eval is not None else state

    def rhs(t, psi):
        return -1j / hbar * (provider(t) @ psi)

    solution = solve_ivp(rhs, (t0, t1), state, method='DOP853', t_eval=t_eval, rtol=rtol, atol=atol)
    if not solution.success:
        raise NumericalError(f'state evolution failed: {solution.message}')
    return solution.y.T if t_eval is not None else solution.y[:, -1]


def covariant_derivative_residual(states: np.ndarray, hamiltonian: Union[np.ndarray, Callable[[float], np.ndarray]],
                                  hbar: float, dt: float, t0: float = 0.0) -> float:
    """
    max over interior samples of |(psi_{k+1} - psi_{k-1}) / 2dt + (i / hbar) H(t_k) psi_k|,
    the discrete covariant derivative D_t psi = d_t psi + (i / hbar) H psi.
    """
    states = np.asarray(states, dtype=complex)
    if len(states) < 3:
        raise ValueError(f'covariant derivative needs at least 3 samples, got {len(states)}')
    provider = hamiltonian if callable(hamiltonian) else (lambda t, h=np.asarray(hamiltonian, complex): h)
    residual = 0.0
    for k in range(1, len(states) - 1):
        d_t = (states[k + 1] - states[k - 1]) / (2 * dt)
        value = d_t + 1j / hbar * (provider(t0 + k * dt) @ states[k])
        residual = max(residual, float(np.linalg.norm(value)))
    return residual
