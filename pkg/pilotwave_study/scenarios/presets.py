"""
Named initial states and density providers, built from the resolved `grid`,
`state`, `solver` and `hmm` config sections.
"""
from argparse import Namespace
from typing import Callable, Dict
import numpy as np
from pilotwave_study.dynamics.schrodinger import HamiltonianSpec, ground_state, harmonic_potential
from pilotwave_study.fields.grid import Grid, ComplexField
from pilotwave_study.fields.operators import integrate
from pilotwave_study.models.hmm_builder import (DensityProvider, TabulatedDensity, breathing_gaussian,
                                                moving_gaussian, oscillating_copula)
from pilotwave_study.utilities.errors import ConfigError


def _per_axis(values, ndim: int, name: str) -> np.ndarray:
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if len(values) == 1:
        values = np.repeat(values, ndim)
    if len(values) != ndim:
        raise ConfigError(f'{name} needs {ndim} entries, got {len(values)}')
    return values


def build_grid(grid: Namespace) -> Grid:
    ndim = len(np.atleast_1d(grid.points))
    boundary = grid.boundary if isinstance(grid.boundary, str) else list(grid.boundary)
    if not isinstance(boundary, str) and len(boundary) == 1:
        boundary = boundary * ndim
    try:
        return Grid.from_masses(_per_axis(grid.lower, ndim, 'grid.lower'), _per_axis(grid.upper, ndim, 'grid.upper'),
                                np.atleast_1d(grid.points), boundary, _per_axis(grid.masses, ndim, 'grid.masses'),
                                max_points=grid.max_points)
    except ValueError as err:
        raise ConfigError(f'grid: {err}') from err


def build_hamiltonian(config: Namespace, grid: Grid) -> HamiltonianSpec:
    solver = config.solver
    if solver.potential == 'free':
        return HamiltonianSpec(grid, None, solver.hbar)
    if solver.potential == 'harmonic':
        center = _per_axis(config.state.center, grid.ndim, 'state.center')
        return HamiltonianSpec(grid, harmonic_potential(grid, solver.spring, center), solver.hbar)
    raise ConfigError(f'unknown potential {solver.potential!r}, expected free or harmonic')


def normalized(grid: Grid, values: np.ndarray, t: float = 0.0) -> ComplexField:
    norm = integrate(np.abs(values) ** 2, grid)
    if not norm > 0:
        raise ConfigError('initial state vanishes on the grid')
    return ComplexField(grid, values / np.sqrt(norm), t)


def gaussian_values(grid: Grid, center, sigma, momentum, hbar: float = 1.0) -> np.ndarray:
    """Product Gaussian with position spread sigma_i (of |Psi|^2) and mean momentum p_i."""
    psi = np.ones(grid.shape, dtype=complex)
    for q, c, s, p in zip(grid.mesh(), center, sigma, momentum):
        psi = psi * np.exp(-(q - c) ** 2 / (4 * s ** 2) + 1j * p * q / hbar)
    return psi


def gaussian_packet(grid: Grid, state: Namespace, hbar: float) -> ComplexField:
    n = grid.ndim
    return normalized(grid, gaussian_values(grid, _per_axis(state.center, n, 'state.center'),
                                            _per_axis(state.sigma, n, 'state.sigma'),
                                            _per_axis(state.momentum, n, 'state.momentum'), hbar))


def two_packet(grid: Grid, state: Namespace, hbar: float) -> ComplexField:
    """Equal-weight superposition of two packets split by `separation` along the first axis."""
    n = grid.ndim
    center = _per_axis(state.center, n, 'state.center')
    sigma = _per_axis(state.sigma, n, 'state.sigma')
    momentum = _per_axis(state.momentum, n, 'state.momentum')
    offset = np.zeros(n)
    offset[0] = 0.5 * state.separation
    return normalized(grid, gaussian_values(grid, center - offset, sigma, momentum, hbar)
                      + gaussian_values(grid, center + offset, sigma, momentum, hbar))


def harmonic_ground(grid: Grid, state: Namespace, hbar: float, spring: float = 1.0) -> ComplexField:
    center = _per_axis(state.center, grid.ndim, 'state.center')
    return ground_state(HamiltonianSpec(grid, harmonic_potential(grid, spring, center), hbar))


def plane_wave(grid: Grid, state: Namespace, hbar: float) -> ComplexField:
    """exp(i p.q / hbar); p is snapped to the nearest wave vector the periodic box supports."""
    if not grid.fully_periodic:
        raise ConfigError('the plane-wave preset needs a fully periodic grid')
    momentum = _per_axis(state.momentum, grid.ndim, 'state.momentum')
    k = 2 * np.pi / grid.extent
    momentum = hbar * k * np.round(momentum / (hbar * k))
    phase = sum(p * q for p, q in zip(momentum, grid.mesh())) / hbar
    return normalized(grid, np.exp(1j * phase))


def double_slit(grid: Grid, state: Namespace, hbar: float) -> ComplexField:
    """
    The state just behind a double slit: two packets split by `separation`
    along the first axis, both moving along the second axis towards the screen.
    """
    if grid.ndim != 2:
        raise ConfigError('the double-slit preset is two-dimensional')
    if np.all(_per_axis(state.momentum, 2, 'state.momentum')[1:] == 0):
        raise ConfigError('the double-slit preset needs a momentum along the second axis')
    return two_packet(grid, state, hbar)


def vortex_packet(grid: Grid, state: Namespace, hbar: float) -> ComplexField:
    """Gaussian times (x + iy)^2 about the center: a charge-two vortex with rho ~ r^4 at its core."""
    if grid.ndim < 2:
        raise ConfigError('the vortex-packet preset needs at least two axes')
    center = _per_axis(state.center, grid.ndim, 'state.center')
    q = grid.mesh()
    vortex = ((q[0] - center[0]) + 1j * (q[1] - center[1])) ** 2
    return normalized(grid, vortex * gaussian_values(grid, center, _per_axis(state.sigma, grid.ndim, 'state.sigma'),
                                                     _per_axis(state.momentum, grid.ndim, 'state.momentum'), hbar))


PRESETS: Dict[str, Callable] = {
    'gaussian-packet': gaussian_packet,
    'two-packet': two_packet,
    'plane-wave': plane_wave,
    'double-slit': double_slit,
    'vortex-packet': vortex_packet,
}


def initial_state(config: Namespace, grid: Grid) -> ComplexField:
    """Psi(., t0) for the configured preset."""
    preset = config.state.preset
    hbar = config.solver.hbar
    if preset == 'harmonic-ground':
        psi = harmonic_ground(grid, config.state, hbar, config.solver.spring)
    elif preset in PRESETS:
        psi = PRESETS[preset](grid, config.state, hbar)
    else:
        raise ConfigError(f'unknown state preset {preset!r}, expected one of '
                          f'{", ".join(sorted(PRESETS) + ["harmonic-ground"])}')
    return psi.with_values(psi.values, config.solver.t0)


def density_provider(config: Namespace, grid: Grid, series=None) -> DensityProvider:
    """
    Density for the hmm section. 'pilot-wave' tabulates |Psi|^2 of an evolved
    series, which makes the pilot-wave model one instance of the recipe.
    """
    hmm = config.hmm
    try:
        if hmm.density == 'moving-gaussian':
            return moving_gaussian(grid, hmm.velocity, hmm.sigma)
        if hmm.density == 'breathing-gaussian':
            return breathing_gaussian(grid, hmm.sigma, hmm.amplitude, hmm.omega)
        if hmm.density == 'oscillating-copula':
            return oscillating_copula(grid, hmm.epsilon, hmm.omega)
    except ValueError as err:
        raise ConfigError(f'hmm: {err}') from err
    if hmm.density == 'pilot-wave':
        if series is None:
            raise ConfigError('the pilot-wave density needs an evolved series')
        return TabulatedDensity.from_series(series)
    raise ConfigError(f'unknown hmm density {hmm.density!r}')
