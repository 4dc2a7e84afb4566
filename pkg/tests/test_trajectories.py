import numpy as np
import pytest
from pilotwave_study.fields.grid import Grid, DIRICHLET
from pilotwave_study.dynamics.schrodinger import HamiltonianSpec, CRANK_NICOLSON, evolve, ground_state, \
    harmonic_potential
from pilotwave_study.dynamics.bohm import SnapshotVelocity, current_values
from pilotwave_study.dynamics.trajectories import (TRAJECTORY_MAGIC, TrajectoryEnsemble, advance_ensemble,
                                                   equivariance_report, initial_ensemble, ordering_preserved,
                                                   sampled_ensemble)
from pilotwave_study.scenarios.presets import normalized, gaussian_values


def free_packet_series(n=256, t1=2.0):
    grid = Grid([-20.0], [20.0], [n])
    psi0 = normalized(grid, gaussian_values(grid, [-2.0], [1.0], [1.0]))
    return evolve(psi0, HamiltonianSpec(grid), 0.0, t1, 0.005, store_every=10, config_hash='free')


def uniform_velocity(grid, speed, times=(0.0, 1.0)):
    T = len(times)
    return SnapshotVelocity(grid, times, np.ones((T,) + grid.shape), np.full((T, 1) + grid.shape, speed))


@pytest.mark.slow
def test_free_packet_ensemble_stays_born_distributed():
    series = free_packet_series()
    ensemble = sampled_ensemble(series.density(0), 10000, seed=10, source_hash=series.config_hash)
    ensemble = advance_ensemble(ensemble, series, dt_traj=0.01, threads=2)
    reports = [equivariance_report(ensemble, series.density(k), resamples=5) for k in range(len(series))]
    assert len(reports) == 41
    assert reports[-1].t == pytest.approx(2.0)
    for report in reports:
        assert report.tv < 0.05, f't={report.t}'
        assert report.passed, f't={report.t}'
    assert ordering_preserved(ensemble)


def test_one_dimensional_ensembles_never_cross():
    series = free_packet_series(t1=0.5)
    ensemble = sampled_ensemble(series.density(0), 300, seed=1)
    ensemble = advance_ensemble(ensemble, series, dt_traj=0.01)
    assert ensemble.positions.shape == (300, len(series), 1)
    assert ordering_preserved(ensemble)


def test_ground_state_particles_stand_still():
    grid = Grid([-8.0], [8.0], [128])
    spec = HamiltonianSpec(grid, harmonic_potential(grid, 1.0))
    series = evolve(ground_state(spec), spec, 0.0, 1.0, 0.01, store_every=10, solver=CRANK_NICOLSON)
    ensemble = advance_ensemble(sampled_ensemble(series.density(0), 100, seed=2), series, dt_traj=0.05)
    displacement = np.abs(ensemble.positions - ensemble.positions[:, :1])
    assert np.max(displacement) < 1e-6


def test_uniform_velocity_translates_and_wraps():
    grid = Grid([0.0], [1.0], [10])
    ensemble = initial_ensemble(grid, [[0.2], [0.9]], 0.0)
    moved = advance_ensemble(ensemble, uniform_velocity(grid, 0.5), dt_traj=0.1)
    np.testing.assert_allclose(moved.final[:, 0], [0.7, 0.4], atol=1e-12)
    np.testing.assert_allclose(moved.times, [0.0, 1.0])


def test_particles_leaving_a_wall_are_frozen():
    grid = Grid([0.0], [1.0], [11], DIRICHLET)
    ensemble = initial_ensemble(grid, [[0.1], [0.85]], 0.0)
    with pytest.warns(UserWarning):
        moved = advance_ensemble(ensemble, uniform_velocity(grid, 0.5), dt_traj=0.1)
    assert moved.exited.tolist() == [False, True]
    assert moved.final[0, 0] == pytest.approx(0.6)
    assert moved.final[1, 0] <= 1.0


def test_runs_are_bit_reproducible_and_thread_independent(tmp_path):
    series = free_packet_series(t1=0.5)
    runs = []
    for threads, chunk in ((1, 2048), (3, 64)):
        ensemble = sampled_ensemble(series.density(0), 400, seed=5)
        runs.append(advance_ensemble(ensemble, series, dt_traj=0.025, chunk_size=chunk, threads=threads))
    assert runs[0].to_bytes() == runs[1].to_bytes()
    runs[0].save_csv(str(tmp_path / 'a.csv'))
    runs[1].save_csv(str(tmp_path / 'b.csv'))
    assert (tmp_path / 'a.csv').read_bytes() == (tmp_path / 'b.csv').read_bytes()


def test_trajectory_step_may_not_exceed_the_snapshot_spacing():
    series = free_packet_series(t1=0.5)
    ensemble = sampled_ensemble(series.density(0), 10, seed=0)
    with pytest.raises(ValueError):
        advance_ensemble(ensemble, series, dt_traj=0.1)
    with pytest.raises(ValueError):
        advance_ensemble(ensemble, series, dt_traj=0.0)


def test_binary_trajectory_layout(tmp_path):
    grid = Grid([-1.0, 0.0], [1.0, 2.0], [8, 8], ['periodic', 'dirichlet'])
    positions = np.random.default_rng(0).uniform(0, 1, size=(5, 3, 2))
    ensemble = TrajectoryEnsemble(grid, [0.0, 0.5, 1.0], positions, seed=3)
    buffer = ensemble.to_bytes()
    assert buffer[:8] == TRAJECTORY_MAGIC
    assert len(buffer) == 32 + 2 * 24 + 8 * 3 + 8 * positions.size

    path = tmp_path / 'trajectories.bin'
    ensemble.save_binary(str(path))
    loaded = TrajectoryEnsemble.load_binary(str(path))
    np.testing.assert_array_equal(loaded.positions, positions)
    assert loaded.grid.boundaries == grid.boundaries
    with pytest.raises(ValueError):
        TrajectoryEnsemble.from_bytes(b'X' + buffer[1:])


def test_ensemble_validation_and_lookup():
    grid = Grid([0.0], [1.0], [8])
    with pytest.raises(ValueError):
        TrajectoryEnsemble(grid, [0.0, 1.0], np.zeros((4, 3, 1)))
    with pytest.raises(ValueError):
        TrajectoryEnsemble(grid, [1.0, 0.0], np.zeros((4, 2, 1)))
    ensemble = TrajectoryEnsemble(grid, [0.0, 1.0], np.zeros((4, 2, 1)))
    assert ensemble.at(1.0).shape == (4, 1)
    with pytest.raises(ValueError):
        ensemble.at(0.5)
    frame = ensemble.to_frame()
    assert list(frame.columns) == ['particle', 't', 'q1']
    assert len(frame) == 8


def test_ordering_is_one_dimensional_only():
    grid = Grid([0.0, 0.0], [1.0, 1.0], [8, 8])
    with pytest.raises(ValueError):
        ordering_preserved(TrajectoryEnsemble(grid, [0.0], np.zeros((3, 1, 2))))


def test_reversed_guidance_leaves_the_born_density():
    series = free_packet_series(t1=2.0)
    J = current_values(series.values, series.grid)
    reversed_field = SnapshotVelocity(series.grid, series.times, series.densities(), -J)
    ensemble = sampled_ensemble(series.density(0), 2000, seed=4)
    ensemble = advance_ensemble(ensemble, reversed_field, dt_traj=0.01)
    report = equivariance_report(ensemble, series.density(len(series) - 1), resamples=5)
    assert report.tv > 4 * report.baseline
    assert not report.passed
