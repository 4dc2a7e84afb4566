"""
Time evolution of configuration-space wave functions under

    i hbar d_t Psi = -(hbar^2 / 2) Delta Psi + V Psi,   Delta = sum_ij d_i(mu_ij d_j .)

Two steppers are provided: Strang split-step Fourier for fully periodic grids
with a constant diagonal metric, and Crank-Nicolson with a preconditioned GMRES
solve for everything else. `evolve` picks one automatically.
"""
import os
from dataclasses import dataclass, field
from typing import Callable, Union, List
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import gmres, eigsh, LinearOperator
from tqdm import tqdm
import yaml
from pilotwave_study.fields.grid import Grid, ComplexField, RealField
from pilotwave_study.fields.operators import integrate
from pilotwave_study.fields.field_io import save_field, load_field
from pilotwave_study.utilities.errors import NumericalError

SPLIT_FOURIER = 'split-fourier'
CRANK_NICOLSON = 'crank-nicolson'
SOLVERS = (SPLIT_FOURIER, CRANK_NICOLSON)


@dataclass
class HamiltonianSpec:
    """
    H = -(hbar^2 / 2) Delta + V(q, t) on a grid.

    Args:
        grid: configuration-space grid (carries the metric mu_ij)
        potential: None (free), a static array, or a callable t -> array
        hbar: reduced Planck constant
    """
    grid: Grid
    potential: Union[None, np.ndarray, Callable[[float], np.ndarray]] = None
    hbar: float = 1.0

    @property
    def time_dependent(self) -> bool:
        return callable(self.potential)

    def potential_at(self, t: float) -> np.ndarray:
        if self.potential is None:
            return np.zeros(self.grid.shape)
        values = self.potential(t) if callable(self.potential) else self.potential
        values = np.broadcast_to(np.asarray(values, dtype=float), self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NumericalError(f'potential is not finite at t={t}')
        return values


def harmonic_potential(grid: Grid, spring: float = 1.0, center=None) -> np.ndarray:
    """V = (k / 2) |q - center|^2."""
    center = np.zeros(grid.ndim) if center is None else np.asarray(center, float)
    return 0.5 * spring * sum((q - c) ** 2 for q, c in zip(grid.mesh(), center))


def _embed(op_1d: sp.spmatrix, grid: Grid, axis: int) -> sp.csr_matrix:
    # row-major layout, axis 0 slowest
    before = int(np.prod(grid.counts[:axis]))
    after = int(np.prod(grid.counts[axis + 1:]))
    return sp.kron(sp.identity(before), sp.kron(op_1d, sp.identity(after)), format='csr')


def _forward_difference(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    op = sp.lil_matrix((n, n))
    for k in range(n):
        if k + 1 < n:
            op[k, k], op[k, k + 1] = -1.0, 1.0
        elif periodic:
            op[k, k], op[k, 0] = -1.0, 1.0
    return op.tocsr() / h


def _central_difference(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    op = sp.lil_matrix((n, n))
    for k in range(n):
        if periodic:
            op[k, (k + 1) % n] += 1.0
            op[k, (k - 1) % n] -= 1.0
        elif 0 < k < n - 1:
            op[k, k + 1], op[k, k - 1] = 1.0, -1.0
    return op.tocsr() / (2 * h)


def interior_mask(grid: Grid) -> np.ndarray:
    """False on the wall nodes of dirichlet axes, where Psi is pinned to zero."""
    mask = np.ones(grid.shape, dtype=bool)
    for axis, periodic in enumerate(grid.periodic):
        if not periodic:
            index = [slice(None)] * grid.ndim
            index[axis] = 0
            mask[tuple(index)] = False
            index[axis] = -1
            mask[tuple(index)] = False
    return mask


def kinetic_matrix(grid: Grid, hbar: float = 1.0) -> sp.csr_matrix:
    """
    Sparse -(hbar^2 / 2) Delta. Diagonal metric terms use the symmetric flux
    form -F^T diag(mu_edge) F; off-diagonal terms use symmetrized central
    differences. Wall nodes of dirichlet axes are decoupled.
    """
    metric = grid.metric_tensor()
    laplace = sp.csr_matrix((grid.size, grid.size))
    for a in range(grid.ndim):
        forward = _embed(_forward_difference(grid.counts[a], grid.spacing[a], grid.periodic[a]), grid, a)
        mu = metric[a, a]
        mu_edge = 0.5 * (mu + np.roll(mu, -1, axis=a))
        laplace = laplace - forward.T @ sp.diags(mu_edge.ravel()) @ forward
    for i in range(grid.ndim):
        for j in range(i + 1, grid.ndim):
            if not np.any(metric[i, j]):
                continue
            d_i = _embed(_central_difference(grid.counts[i], grid.spacing[i], grid.periodic[i]), grid, i)
            d_j = _embed(_central_difference(grid.counts[j], grid.spacing[j], grid.periodic[j]), grid, j)
            m_ij = sp.diags(metric[i, j].ravel())
            laplace = laplace + d_i @ m_ij @ d_j + d_j @ m_ij @ d_i
    pin = sp.diags(interior_mask(grid).ravel().astype(float))
    return (-0.5 * hbar ** 2 * (pin @ laplace @ pin)).tocsr()


def hamiltonian_matrix(spec: HamiltonianSpec, t: float = 0.0) -> sp.csr_matrix:
    """Sparse discrete Hamiltonian at time t; real symmetric for real V and mu."""
    potential = spec.potential_at(t) * interior_mask(spec.grid)
    return (kinetic_matrix(spec.grid, spec.hbar) + sp.diags(potential.ravel())).tocsr()


def ground_state(spec: HamiltonianSpec, t: float = 0.0) -> ComplexField:
    """Normalized lowest eigenvector of the discrete Hamiltonian (real, positive)."""
    h = hamiltonian_matrix(spec, t)
    _, vectors = eigsh(h, k=1, which='SA')
    phi = vectors[:, 0].reshape(spec.grid.shape)
    phi = phi * np.sign(phi.ravel()[np.argmax(np.abs(phi))])
    phi = phi / np.sqrt(integrate(phi ** 2, spec.grid))
    return ComplexField(spec.grid, phi, t)


class SplitFourierStepper:
    """
    Strang splitting exp(-iV dt/2hbar) exp(-iT dt/hbar) exp(-iV dt/2hbar),
    kinetic factor applied in Fourier space. V is sampled at the step midpoint.
    """

    def __init__(self, spec: HamiltonianSpec, dt: float):
        grid = spec.grid
        if not grid.fully_periodic:
            raise ValueError('split-step Fourier needs a fully periodic grid, use Crank-Nicolson')
        if not grid.constant_diagonal_metric:
            raise ValueError('split-step Fourier needs a constant diagonal metric, use Crank-Nicolson')
        self.spec = spec
        self.dt = dt
        wavenumbers = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n, d=h)
                                    for n, h in zip(grid.counts, grid.spacing)], indexing='ij')
        kinetic = 0.5 * spec.hbar ** 2 * sum(mu * k ** 2 for mu, k in zip(grid.metric, wavenumbers))
        self._exp_kinetic = np.exp(-1j * kinetic * dt / spec.hbar)
        self._exp_potential = None
        if not spec.time_dependent:
            self._exp_potential = self._half_potential(0.0)

    def _half_potential(self, t: float) -> np.ndarray:
        return np.exp(-0.5j * self.spec.potential_at(t) * self.dt / self.spec.hbar)

    def __call__(self, psi: np.ndarray, t: float) -> np.ndarray:
        half = self._exp_potential if self._exp_potential is not None \
            else self._half_potential(t + 0.5 * self.dt)
        psi_p = np.fft.fftn(psi * half)
        return np.fft.ifftn(psi_p * self._exp_kinetic) * half


class CrankNicolsonStepper:
    """
    (1 + iH dt/2hbar) Psi' = (1 - iH dt/2hbar) Psi, solved with Jacobi
    preconditioned GMRES. H is sampled at the step midpoint.
    """

    def __init__(self, spec: HamiltonianSpec, dt: float, tol: float = 1e-10, max_iter: int = 500):
        self.spec = spec
        self.dt = dt
        self.tol = tol
        self.max_iter = max_iter
        self._kinetic = kinetic_matrix(spec.grid, spec.hbar)
        self._pin = interior_mask(spec.grid).ravel()
        self._static = None
        if not spec.time_dependent:
            self._static = self._operators(0.0)

    def _operators(self, t: float):
        potential = self.spec.potential_at(t).ravel() * self._pin
        h = self._kinetic + sp.diags(potential)
        factor = 0.5j * self.dt / self.spec.hbar
        identity = sp.identity(self.spec.grid.size, format='csr')
        lhs = (identity + factor * h).tocsr()
        rhs = (identity - factor * h).tocsr()
        inverse_diagonal = 1.0 / lhs.diagonal()
        preconditioner = LinearOperator(lhs.shape, matvec=lambda x: inverse_diagonal * x, dtype=complex)
        return lhs, rhs, preconditioner

    def __call__(self, psi: np.ndarray, t: float) -> np.ndarray:
        if self.dt == 0:
            return psi.copy()
        lhs, rhs, preconditioner = self._static if self._static is not None \
            else self._operators(t + 0.5 * self.dt)
        b = rhs @ psi.ravel()
        scale = np.linalg.norm(b)
        if scale == 0:
            return np.zeros_like(psi)
        x, info = gmres(lhs, b, x0=psi.ravel(), rtol=self.tol, atol=0.0,
                        restart=min(self.spec.grid.size, 200), maxiter=self.max_iter, M=preconditioner)
        residual = np.linalg.norm(lhs @ x - b) / scale
        if info != 0 or residual > 10 * self.tol:
            raise NumericalError(f'Crank-Nicolson solve did not converge at t={t} '
                                 f'(info={info}, relative residual {residual:.2e})')
        return x.reshape(psi.shape)


def select_stepper(grid: Grid) -> str:
    """Split-step Fourier on periodic grids with constant diagonal metric, else Crank-Nicolson."""
    if grid.fully_periodic and grid.constant_diagonal_metric:
        return SPLIT_FOURIER
    return CRANK_NICOLSON


def make_stepper(spec: HamiltonianSpec, dt: float, solver: str = 'auto', tol: float = 1e-10,
                 max_iter: int = 500):
    solver = select_stepper(spec.grid) if solver == 'auto' else solver
    if solver == SPLIT_FOURIER:
        return SplitFourierStepper(spec, dt)
    if solver == CRANK_NICOLSON:
        return CrankNicolsonStepper(spec, dt, tol, max_iter)
    raise ValueError(f'unknown solver {solver!r}, expected auto or one of {SOLVERS}')


def step_split_fourier(psi: ComplexField, spec: HamiltonianSpec, dt: float) -> ComplexField:
    """One Strang split-step of length dt starting at psi.t."""
    stepper = SplitFourierStepper(spec, dt)
    return ComplexField(psi.grid, stepper(psi.values, psi.t), psi.t + dt)


def step_crank_nicolson(psi: ComplexField, spec: HamiltonianSpec, dt: float, tol: float = 1e-10,
                        max_iter: int = 500) -> ComplexField:
    """One Crank-Nicolson step of length dt starting at psi.t."""
    stepper = CrankNicolsonStepper(spec, dt, tol, max_iter)
    return ComplexField(psi.grid, stepper(psi.values, psi.t), psi.t + dt)


class SnapshotSeries:
    """
    Time-indexed wave functions on one grid, the interface between PDE
    evolution and trajectory integration.

    Args:
        grid: common grid of every snapshot
        times: strictly increasing, uniformly spaced timestamps, shape (T,)
        values: complex array of shape (T, *grid.shape)
        hbar, dt, solver, store_every: provenance recorded in the manifest
        check_norm: enforce the 1e-6 relative norm invariant
    """

    def __init__(self, grid: Grid, times, values, hbar: float = 1.0, dt: float = None,
                 solver: str = None, store_every: int = 1, config_hash: str = None,
                 check_norm: bool = True):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=complex)
        if values.shape != (len(times),) + grid.shape:
            raise ValueError(f'values shape {values.shape} does not match {len(times)} snapshots '
                             f'on a grid of shape {grid.shape}')
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError('snapshot timestamps must be strictly increasing')
        if not np.all(np.isfinite(values)):
            raise NumericalError('snapshot series contains non-finite values')
        self.grid = grid
        self.times = times
        step = self.store_interval
        if len(times) > 2 and np.max(np.abs(np.diff(times) - step)) > 1e-9 * step:
            raise ValueError('snapshots must be stored at a uniform interval')
        self.values = values
        self.hbar = hbar
        self.dt = dt
        self.solver = solver
        self.store_every = store_every
        self.config_hash = config_hash
        if check_norm and len(times) > 1:
            drift = self.norm_drift()
            if drift > 1e-6:
                raise NumericalError(f'snapshot norms drift by {drift:.2e} relative to the first snapshot')

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, k: int) -> ComplexField:
        return ComplexField(self.grid, self.values[k], self.times[k])

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    @property
    def store_interval(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self) > 1 else 0.0

    def norms(self) -> np.ndarray:
        return integrate(np.abs(self.values) ** 2, self.grid)

    def norm_drift(self) -> float:
        norms = self.norms()
        return float(np.max(np.abs(norms - norms[0])) / norms[0])

    def densities(self) -> np.ndarray:
        return self.values.real ** 2 + self.values.imag ** 2

    def density(self, k: int) -> RealField:
        return RealField(self.grid, self.densities()[k], self.times[k])

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f'no snapshot stored at t={t}')
        return k

    def manifest(self) -> dict:
        return {
            'grid': self.grid.describe(),
            'hbar': self.hbar,
            'dt': self.dt,
            'store_every': self.store_every,
            'step_count': int(round((self.times[-1] - self.times[0]) / self.dt)) if self.dt else 0,
            'solver': self.solver,
            'config_hash': self.config_hash,
            'times': self.times.tolist(),
            'files': [f'snapshot_{k:05d}.bin' for k in range(len(self))],
        }

    def save(self, directory: str) -> None:
        """Directory with manifest.yaml plus one binary field file per snapshot."""
        os.makedirs(directory, exist_ok=True)
        manifest = self.manifest()
        with open(os.path.join(directory, 'manifest.yaml'), 'w') as f:
            yaml.safe_dump(manifest, f, sort_keys=False)
        for k, name in enumerate(manifest['files']):
            save_field(os.path.join(directory, name), self[k])

    @classmethod
    def load(cls, directory: str, grid: Grid = None) -> 'SnapshotSeries':
        with open(os.path.join(directory, 'manifest.yaml'), 'r') as f:
            manifest = yaml.safe_load(f)
        fields = [load_field(os.path.join(directory, name), grid=grid) for name in manifest['files']]
        grid = fields[0].grid if grid is None else grid
        return cls(grid, [f.t for f in fields], np.stack([f.values for f in fields]),
                   hbar=manifest['hbar'], dt=manifest['dt'], solver=manifest['solver'],
                   store_every=manifest['store_every'], config_hash=manifest.get('config_hash'))


def evolve(psi0: ComplexField, spec: HamiltonianSpec, t0: float, t1: float, dt: float,
           store_every: int = 1, solver: str = 'auto', tol: float = 1e-10, max_iter: int = 500,
           progress: bool = False, config_hash: str = None) -> SnapshotSeries:
    """
    Repeated stepping from t0 to t1 recording every store_every-th state.
    store_every must divide the step count so snapshots are evenly spaced;
    a value beyond the step count stores only the endpoints.
    """
    if t1 < t0:
        raise ValueError('t1 must not precede t0')
    if store_every < 1:
        raise ValueError('store_every must be a positive integer')
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    span = t1 - t0
    n_steps = int(round(span / dt)) if span > 0 else 0
    if n_steps and abs(n_steps * dt - span) > 1e-9 * span:
        raise ValueError(f'dt={dt} does not divide the interval [{t0}, {t1}]')
    store_every = min(store_every, n_steps) if n_steps else store_every
    if n_steps % store_every:
        raise ValueError(f'store_every={store_every} does not divide the {n_steps} steps of the run')
    solver = select_stepper(spec.grid) if solver == 'auto' else solver
    stepper = make_stepper(spec, dt, solver, tol, max_iter) if n_steps else None

    psi = np.array(psi0.values, dtype=complex)
    if not all(spec.grid.periodic):
        psi = psi * interior_mask(spec.grid)
    times: List[float] = [t0]
    stored = [psi.copy()]
    for step in tqdm(range(1, n_steps + 1), desc='Evolving', disable=not progress):
        psi = stepper(psi, t0 + (step - 1) * dt)
        if step % store_every == 0:
            if not np.all(np.isfinite(psi)):
                raise NumericalError(f'wave function became non-finite at step {step}')
            times.append(t0 + step * dt)
            stored.append(psi.copy())
    return SnapshotSeries(spec.grid, times, np.stack(stored), hbar=spec.hbar, dt=dt, solver=solver,
                          store_every=store_every, config_hash=config_hash)
