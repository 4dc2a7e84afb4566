"""
The phase space of the wave function itself.

A d-dimensional quantum state c is written c_k = (X_k + i Y_k) / sqrt(2 hbar).
With H_cl(X, Y) = <c|H|c> the Schrodinger equation becomes Hamilton's
equations dX/dt = dH_cl/dY, dY/dt = -dH_cl/dX. Writing H = A + iB (A real
symmetric, B real antisymmetric) and z = (X, Y):

    H_cl = 1/2 z^T K z,   K = (1 / hbar) [[A, -B], [B, A]].
"""
from dataclasses import dataclass
from functools import partial
from multiprocessing.pool import ThreadPool
from typing import Callable, Dict, Tuple
import numpy as np
from scipy.linalg import expm
from tqdm import tqdm
from pilotwave_study.fields.grid import ComplexField
from pilotwave_study.utilities.errors import NumericalError

SOLVE_TOLERANCE = 1e-12


def symplectic_form(d: int) -> np.ndarray:
    """Omega = [[0, I], [-I, 0]] in (X, Y) ordering."""
    eye = np.eye(d)
    zero = np.zeros((d, d))
    return np.block([[zero, eye], [-eye, zero]])


@dataclass
class PhasePoint:
    X: np.ndarray
    Y: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.X.shape != self.Y.shape or self.X.ndim != 1:
            raise ValueError('X and Y must be vectors of equal length')

    @classmethod
    def from_state(cls, c: np.ndarray, hbar: float = 1.0) -> 'PhasePoint':
        c = np.asarray(c, dtype=complex)
        scale = np.sqrt(2 * hbar)
        return cls(scale * c.real, scale * c.imag, hbar)

    @classmethod
    def from_field(cls, psi: ComplexField, hbar: float = 1.0) -> 'PhasePoint':
        """Flattened grid wave function; cell volumes folded in so norms agree."""
        return cls.from_state(psi.values.ravel() * np.sqrt(psi.grid.cell_volume), hbar)

    @classmethod
    def from_vector(cls, z: np.ndarray, hbar: float = 1.0) -> 'PhasePoint':
        d = len(z) // 2
        return cls(z[:d], z[d:], hbar)

    @property
    def dimension(self) -> int:
        return len(self.X)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.X, self.Y])

    def to_state(self) -> np.ndarray:
        return (self.X + 1j * self.Y) / np.sqrt(2 * self.hbar)

    def norm_squared(self) -> float:
        """||c||^2 = (||X||^2 + ||Y||^2) / 2 hbar."""
        return float((self.X @ self.X + self.Y @ self.Y) / (2 * self.hbar))


class QuadraticHamiltonian:
    """H_cl(z) = 1/2 z^T K z with K symmetric."""

    def __init__(self, K: np.ndarray):
        K = np.asarray(K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] % 2:
            raise ValueError('K must be a square matrix of even size')
        if not np.allclose(K, K.T, rtol=0, atol=1e-12):
            raise ValueError('K must be symmetric')
        self.K = K

    @classmethod
    def from_quantum(cls, H: np.ndarray, hbar: float = 1.0) -> 'QuadraticHamiltonian':
        H = np.asarray(H, dtype=complex)
        if not np.allclose(H, H.conj().T, rtol=0, atol=1e-12):
            raise ValueError('H must be Hermitian')
        A, B = H.real, H.imag
        return cls(np.block([[A, -B], [B, A]]) / hbar)

    @classmethod
    def oscillator(cls, m: float, k: float) -> 'QuadraticHamiltonian':
        """H = p^2 / 2m + k q^2 / 2 with z = (q, p)."""
        return cls(np.diag([k, 1.0 / m]))

    def value(self, z: np.ndarray, t: float = 0.0) -> float:
        return float(0.5 * z @ self.K @ z)

    def gradient(self, z: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.K @ z

    def generator(self) -> np.ndarray:
        """Matrix of the linear flow dz/dt = Omega K z."""
        return symplectic_form(len(self.K) // 2) @ self.K


class FunctionHamiltonian:
    """
    Arbitrary H_cl(X, Y, t) with an optional gradient; missing gradients use
    central differences with step delta.
    """

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray, float], float],
                 gradient: Callable[[np.ndarray, float], np.ndarray] = None, delta: float = 1e-6):
        self.fn = fn
        self._gradient = gradient
        self.delta = delta

    def value(self, z: np.ndarray, t: float = 0.0) -> float:
        d = len(z) // 2
        return float(self.fn(z[:d], z[d:], t))

    def gradient(self, z: np.ndarray, t: float = 0.0) -> np.ndarray:
        if self._gradient is not None:
            return np.asarray(self._gradient(z, t), dtype=float)
        return _numeric_gradient(lambda w: self.value(w, t), z, self.delta)


def _numeric_gradient(f: Callable[[np.ndarray], float], z: np.ndarray, delta: float) -> np.ndarray:
    grad = np.empty(len(z))
    for i in range(len(z)):
        step = np.zeros(len(z))
        step[i] = delta
        grad[i] = (f(z + step) - f(z - step)) / (2 * delta)
    return grad


def classical_from_quantum(H: np.ndarray, hbar: float = 1.0) -> Callable[[np.ndarray, np.ndarray], float]:
    """H_cl(X, Y) = <c|H|c> evaluated through the state, for cross-checks."""
    H = np.asarray(H, dtype=complex)

    def fn(X, Y, t=0.0):
        c = PhasePoint(X, Y, hbar).to_state()
        return float(np.real(np.vdot(c, H @ c)))

    return fn


def poisson_bracket(f: Callable[[np.ndarray], float], g: Callable[[np.ndarray], float], point: PhasePoint,
                    delta: float = 1e-5) -> float:
    """
    {f, g} = sum_k (df/dX_k dg/dY_k - dg/dX_k df/dY_k), derivatives by central
    differences. f and g take the phase vector z = (X, Y).
    """
    if delta <= 0:
        raise ValueError('delta must be positive')
    z = point.vector
    d = point.dimension
    df = _numeric_gradient(f, z, delta)
    dg = _numeric_gradient(g, z, delta)
    return float(df[:d] @ dg[d:] - dg[:d] @ df[d:])


def coordinate(k: int, d: int) -> Callable[[np.ndarray], float]:
    return lambda z: z[k]


def momentum(k: int, d: int) -> Callable[[np.ndarray], float]:
    return lambda z: z[d + k]


def hamilton_step(point: PhasePoint, hamiltonian, dt: float, t: float = 0.0, tol: float = SOLVE_TOLERANCE,
                  max_iter: int = 100) -> PhasePoint:
    """
    Implicit midpoint rule z1 = z0 + dt Omega grad H((z0 + z1) / 2). Quadratic
    Hamiltonians are solved exactly; others by fixed-point iteration.
    """
    z0 = point.vector
    if isinstance(hamiltonian, QuadraticHamiltonian):
        return PhasePoint.from_vector(_cayley(hamiltonian, dt) @ z0, point.hbar)
    omega = symplectic_form(point.dimension)
    z1 = z0 + dt * omega @ hamiltonian.gradient(z0, t)
    for _ in range(max_iter):
        update = z0 + dt * omega @ hamiltonian.gradient(0.5 * (z0 + z1), t + 0.5 * dt)
        if np.max(np.abs(update - z1)) <= tol * max(1.0, float(np.max(np.abs(update)))):
            return PhasePoint.from_vector(update, point.hbar)
        z1 = update
    raise NumericalError(f'implicit midpoint iteration did not converge in {max_iter} iterations at t={t}')


def _cayley(hamiltonian: QuadraticHamiltonian, dt: float) -> np.ndarray:
    # (I - dt/2 L)^-1 (I + dt/2 L) for the linear flow dz/dt = L z
    L = hamiltonian.generator()
    eye = np.eye(len(L))
    return np.linalg.solve(eye - 0.5 * dt * L, eye + 0.5 * dt * L)


def hamilton_flow(point: PhasePoint, hamiltonian, dt: float, steps: int, t0: float = 0.0,
                  progress: bool = False) -> np.ndarray:
    """(steps + 1, 2d) phase vectors along the implicit midpoint flow."""
    out = np.empty((steps + 1, 2 * point.dimension))
    out[0] = point.vector
    if isinstance(hamiltonian, QuadraticHamiltonian):
        step_matrix = _cayley(hamiltonian, dt)
        for n in tqdm(range(steps), desc='Hamilton flow', disable=not progress):
            out[n + 1] = step_matrix @ out[n]
        return out
    current = point
    for n in tqdm(range(steps), desc='Hamilton flow', disable=not progress):
        current = hamilton_step(current, hamiltonian, dt, t0 + n * dt)
        out[n + 1] = current.vector
    return out


def flow_equivalence(H: np.ndarray, c0: np.ndarray, hbar: float = 1.0, duration: float = 1.0,
                     dt: float = 1e-4) -> float:
    """
    Max distance between the Hamilton flow of H_cl and the Schrodinger
    evolution exp(-iHt / hbar) c0, compared as states over [0, duration].
    """
    steps = int(round(duration / dt))
    point = PhasePoint.from_state(c0, hbar)
    flow = hamilton_flow(point, QuadraticHamiltonian.from_quantum(H, hbar), dt, steps)
    propagator = expm(-1j * np.asarray(H, dtype=complex) * dt / hbar)
    c = np.asarray(c0, dtype=complex)
    worst = 0.0
    for n in range(steps + 1):
        worst = max(worst, float(np.max(np.abs(PhasePoint.from_vector(flow[n], hbar).to_state() - c))))
        c = propagator @ c
    return worst


def unitary_real_form(U: np.ndarray) -> np.ndarray:
    """Real 2d x 2d matrix of c -> U c acting on (X, Y)."""
    U = np.asarray(U, dtype=complex)
    return np.block([[U.real, -U.imag], [U.imag, U.real]])


def numeric_jacobian(transform: Callable[[np.ndarray], np.ndarray], z: np.ndarray, delta: float = 1e-6) -> np.ndarray:
    columns = []
    for i in range(len(z)):
        step = np.zeros(len(z))
        step[i] = delta
        columns.append((np.asarray(transform(z + step)) - np.asarray(transform(z - step))) / (2 * delta))
    return np.stack(columns, axis=1)


def _symplectic_violation(transform: Callable, delta: float, z: np.ndarray) -> float:
    M = numeric_jacobian(transform, z, delta)
    omega = symplectic_form(len(z) // 2)
    return float(np.max(np.abs(M @ omega @ M.T - omega)))


@dataclass
class CanonicalReport:
    max_violation: float
    samples: int
    tolerance: float
    seed: int

    @property
    def canonical(self) -> bool:
        return self.max_violation < self.tolerance

    def to_dict(self) -> dict:
        return {'max_violation': self.max_violation, 'samples': self.samples, 'tolerance': self.tolerance,
                'seed': self.seed, 'canonical': self.canonical}


def canonical_check(transform: Callable[[np.ndarray], np.ndarray], dimension: int, samples: int = 20, seed: int = 0,
                    delta: float = 1e-6, tolerance: float = 1e-6, num_processes: int = 1) -> CanonicalReport:
    """
    Checks M Omega M^T = Omega for the numeric Jacobian M of `transform` at
    random phase points (bracket preservation).

    :param transform: map on phase vectors z = (X, Y) of length 2 * dimension
    :param dimension: d
    :param samples: number of random sample points
    :param seed: sampling seed
    :param delta: finite-difference step
    :param tolerance: largest accepted violation
    :param num_processes: worker threads
    """
    rng = np.random.default_rng(seed)
    points = list(rng.normal(size=(samples, 2 * dimension)))
    with ThreadPool(num_processes) as pool:
        fn = partial(_symplectic_violation, transform, delta)
        violations = pool.map(fn, points)
    return CanonicalReport(float(np.max(violations)), samples, tolerance, seed)


def ho_frame_swap(q: float, p: float, m: float, k: float) -> Tuple[float, float, float, float]:
    """
    The oscillator with position q, momentum p, mass m and spring k is also an
    oscillator with position p, momentum -q, mass 1/k and spring 1/m.
    """
    if m <= 0 or k <= 0:
        raise ValueError('mass and spring constant must be positive')
    return p, -q, 1.0 / k, 1.0 / m


def oscillator_energy(q: float, p: float, m: float, k: float) -> float:
    return p ** 2 / (2 * m) + k * q ** 2 / 2


def frame_swap_audit(q: float, p: float, m: float, k: float, dt: float = 1e-3, steps: int = 1000) -> Dict[str, float]:
    """
    Integrates the oscillator in both frames and maps the swapped trajectory
    back with (q, p) = (-p', q').
    """
    q2, p2, m2, k2 = ho_frame_swap(q, p, m, k)
    original = hamilton_flow(PhasePoint([q], [p]), QuadraticHamiltonian.oscillator(m, k), dt, steps)
    swapped = hamilton_flow(PhasePoint([q2], [p2]), QuadraticHamiltonian.oscillator(m2, k2), dt, steps)
    mapped_back = np.stack([-swapped[:, 1], swapped[:, 0]], axis=1)
    return {
        'energy_original': oscillator_energy(q, p, m, k),
        'energy_swapped': oscillator_energy(q2, p2, m2, k2),
        'energy_difference': abs(oscillator_energy(q, p, m, k) - oscillator_energy(q2, p2, m2, k2)),
        'max_trajectory_difference': float(np.max(np.abs(mapped_back - original))),
    }
