import numpy as np
import pytest
from pilotwave_study.fields.grid import Grid, RealField, DIRICHLET
from pilotwave_study.dynamics.schrodinger import HamiltonianSpec, evolve
from pilotwave_study.dynamics.bohm import born_density
from pilotwave_study.dynamics.branches import branch_decompose, mask_series, screen_crossings, \
    screen_density_distribution, screen_flux_distribution
from pilotwave_study.dynamics.trajectories import TrajectoryEnsemble, advance_ensemble, sampled_ensemble
from pilotwave_study.scenarios.presets import normalized, gaussian_values


def line(n=512):
    return Grid([-20.0], [20.0], [n], DIRICHLET)


def split_packets(grid):
    return normalized(grid, gaussian_values(grid, [-6.0], [1.0], [-2.0]) + gaussian_values(grid, [6.0], [1.0], [2.0]))


def test_single_packet_is_one_branch():
    grid = line()
    rho = born_density(normalized(grid, gaussian_values(grid, [0.0], [1.0], [0.0])))
    branches = branch_decompose(rho, 1e-3 * rho.values.max())
    assert len(branches) == 1
    assert branches.weights()[0] == pytest.approx(1.0, abs=1e-3)
    assert branches.below_threshold == pytest.approx(0.0, abs=1e-3)


def test_separated_packets_are_two_equal_branches():
    grid = line()
    rho = born_density(split_packets(grid))
    branches = branch_decompose(rho, 1e-3 * rho.values.max())
    assert len(branches) == 2
    for weight in branches.weights():
        assert weight == pytest.approx(0.5, abs=0.01)
    labels = branches.label_of(np.array([grid.nearest_index(np.array([[-6.0]]))[0],
                                         grid.nearest_index(np.array([[6.0]]))[0], 0]))
    assert set(labels[:2]) == {0, 1}
    assert labels[2] == -1


def test_packet_across_a_periodic_seam_is_one_branch():
    grid = Grid([0.0], [10.0], [100])
    x = grid.axes[0]
    rho = RealField(grid, np.exp(-np.minimum(x, 10 - x) ** 2))
    assert len(branch_decompose(rho, 1e-3)) == 1


def test_threshold_must_lie_below_the_peak():
    rho = RealField(line(64), np.ones(64))
    with pytest.raises(ValueError):
        branch_decompose(rho, 1.0)
    with pytest.raises(ValueError):
        branch_decompose(rho, 0.0)


def test_each_branch_guides_its_own_particles():
    grid = line()
    series = evolve(split_packets(grid), HamiltonianSpec(grid), 0.0, 1.0, 0.005, store_every=10)
    left = grid.axes[0] < 0
    masked = mask_series(series, left)
    assert masked.norms()[0] == pytest.approx(0.5, abs=1e-3)

    rho_left = RealField(grid, np.where(left, series.density(0).values, 0.0))
    ensemble = sampled_ensemble(rho_left, 200, seed=5)
    full = advance_ensemble(ensemble, series, dt_traj=0.01)
    alone = advance_ensemble(ensemble, masked, dt_traj=0.01)
    assert np.max(np.abs(full.positions - alone.positions)) < 1e-6
    with pytest.raises(ValueError):
        mask_series(series, np.ones(10, dtype=bool))


def test_screen_crossings_interpolate_between_steps():
    grid = Grid([-5.0, 0.0], [5.0, 10.0], [16, 16], DIRICHLET)
    positions = np.array([
        [[1.0, 0.0], [1.0, 4.0], [2.0, 8.0]],
        [[-1.0, 0.0], [-1.0, 1.0], [-1.0, 2.0]],
    ])
    ensemble = TrajectoryEnsemble(grid, [0.0, 1.0, 2.0], positions)
    sites = screen_crossings(ensemble, axis=1, position=6.0)
    np.testing.assert_allclose(sites[0], [1.5, 6.0])
    assert np.all(np.isnan(sites[1]))


def test_screen_flux_of_a_moving_packet_is_normalized():
    grid = Grid([-8.0, -8.0], [8.0, 8.0], [64, 64])
    psi0 = normalized(grid, gaussian_values(grid, [0.0, -2.0], [1.0, 1.0], [0.0, 2.0]))
    series = evolve(psi0, HamiltonianSpec(grid), 0.0, 2.0, 0.01, store_every=5)
    x, density = screen_flux_distribution(series, axis=1, position=2.0)
    assert np.sum(density) * grid.spacing[0] == pytest.approx(1.0)
    assert abs(x[np.argmax(density)]) < 0.5
    with pytest.raises(ValueError):
        screen_flux_distribution(series, axis=1, position=30.0)


def test_screen_density_of_a_moving_packet_is_normalized():
    grid = Grid([-8.0, -8.0], [8.0, 8.0], [64, 64])
    psi0 = normalized(grid, gaussian_values(grid, [1.0, -2.0], [1.0, 1.0], [0.0, 2.0]))
    series = evolve(psi0, HamiltonianSpec(grid), 0.0, 2.0, 0.01, store_every=5)
    x, density = screen_density_distribution(series, axis=1, position=2.0)
    assert np.sum(density) * grid.spacing[0] == pytest.approx(1.0)
    assert abs(x[np.argmax(density)] - 1.0) < 0.5
    assert np.all(density >= 0)
    _, flux = screen_flux_distribution(series, axis=1, position=2.0)
    assert 0.5 * np.sum(np.abs(density - flux)) * grid.spacing[0] < 0.5
    with pytest.raises(ValueError):
        screen_density_distribution(series, axis=1, position=-30.0)
    with pytest.raises(ValueError):
        screen_density_distribution(evolve(split_packets(line()), HamiltonianSpec(line()), 0.0, 0.1, 0.01),
                                    axis=0, position=0.0)
