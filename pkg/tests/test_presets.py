from argparse import Namespace
import numpy as np
import pytest
from pilotwave_study.fields.operators import integrate
from pilotwave_study.scenarios.presets import (PRESETS, build_grid, build_hamiltonian, density_provider,
                                               initial_state)
from pilotwave_study.utilities.errors import ConfigError
from pilotwave_study.utilities.utils import load_scenario_config


def scenario(**overrides):
    sections = load_scenario_config(None)
    for section, values in overrides.items():
        sections[section].update(values)
    return Namespace(**{name: Namespace(**values) for name, values in sections.items()})


PLANE = {'lower': [-5.0, -5.0], 'upper': [5.0, 5.0], 'points': [32, 32]}


def test_default_scenario_is_a_normalized_free_packet():
    config = scenario()
    grid = build_grid(config.grid)
    psi = initial_state(config, grid)
    assert grid.shape == (256,)
    assert integrate(np.abs(psi.values) ** 2, grid) == pytest.approx(1.0)
    assert build_hamiltonian(config, grid).potential is None


def test_bad_grids_are_config_errors():
    with pytest.raises(ConfigError):
        build_grid(scenario(grid={'points': [2]}).grid)
    with pytest.raises(ConfigError):
        build_grid(scenario(grid={'lower': [0.0, 0.0]}).grid)
    with pytest.raises(ConfigError):
        build_grid(scenario(grid={'points': [1024], 'max_points': 512}).grid)


@pytest.mark.parametrize('preset', sorted(PRESETS))
def test_every_preset_is_normalized(preset):
    config = scenario(grid=PLANE, state={'preset': preset, 'momentum': [0.0, 1.0]})
    grid = build_grid(config.grid)
    psi = initial_state(config, grid)
    assert psi.values.shape == (32, 32)
    assert integrate(np.abs(psi.values) ** 2, grid) == pytest.approx(1.0)


def test_plane_wave_momentum_snaps_to_the_box():
    config = scenario(state={'preset': 'plane-wave', 'momentum': [1.0]})
    grid = build_grid(config.grid)
    psi = initial_state(config, grid)
    k = 2 * np.pi / 40.0
    p = k * np.round(1.0 / k)
    np.testing.assert_allclose(np.angle(psi.values[1] / psi.values[0]), p * grid.spacing[0], atol=1e-12)


def test_plane_wave_needs_periodic_axes():
    config = scenario(grid={'boundary': ['dirichlet']}, state={'preset': 'plane-wave'})
    with pytest.raises(ConfigError):
        initial_state(config, build_grid(config.grid))


def test_two_dimensional_presets_reject_lines():
    for preset in ('double-slit', 'vortex-packet'):
        config = scenario(state={'preset': preset})
        with pytest.raises(ConfigError):
            initial_state(config, build_grid(config.grid))
    config = scenario(grid=PLANE, state={'preset': 'double-slit', 'momentum': [1.0, 0.0]})
    with pytest.raises(ConfigError):
        initial_state(config, build_grid(config.grid))


def test_vortex_has_a_node_at_the_center():
    config = scenario(grid={'lower': [-4.0, -4.0], 'upper': [4.0, 4.0], 'points': [33, 33],
                            'boundary': ['dirichlet']},
                      state={'preset': 'vortex-packet'})
    psi = initial_state(config, build_grid(config.grid))
    assert psi.values[16, 16] == 0


def test_harmonic_ground_state_preset():
    config = scenario(grid={'lower': [-8.0], 'upper': [8.0], 'points': [128], 'boundary': ['dirichlet']},
                      state={'preset': 'harmonic-ground'}, solver={'potential': 'harmonic', 't0': 0.5})
    grid = build_grid(config.grid)
    psi = initial_state(config, grid)
    assert psi.t == 0.5
    rho = np.abs(psi.values) ** 2
    assert np.argmax(rho) in (63, 64)
    assert build_hamiltonian(config, grid).potential is not None


def test_unknown_names_are_config_errors():
    config = scenario(state={'preset': 'three-slit'})
    with pytest.raises(ConfigError):
        initial_state(config, build_grid(config.grid))
    with pytest.raises(ConfigError):
        build_hamiltonian(scenario(solver={'potential': 'coulomb'}), build_grid(config.grid))


def test_density_provider_choices():
    config = scenario(grid={'boundary': ['dirichlet']})
    grid = build_grid(config.grid)
    assert density_provider(config, grid).density(0.0).values.shape == grid.shape
    with pytest.raises(ConfigError):
        density_provider(scenario(hmm={'density': 'pilot-wave'}), grid)
    with pytest.raises(ConfigError):
        density_provider(scenario(hmm={'density': 'lorentzian'}), grid)
    with pytest.raises(ConfigError):
        density_provider(scenario(hmm={'density': 'breathing-gaussian', 'amplitude': 1.0}), grid)
