import numpy as np
import pytest
from pilotwave_study.fields.grid import Grid, RealField, DIRICHLET
from pilotwave_study.dynamics.bohm import sample_ensemble
from pilotwave_study.utilities.metrics import (bin_counts, bin_density, cell_probabilities, count_peaks,
                                               ensemble_tv, histogram_cells, ks_statistics, resampling_baseline,
                                               total_variation)


def gaussian_density(n=201, shift=0.0):
    grid = Grid([-6.0], [6.0], [n], DIRICHLET)
    return RealField(grid, np.exp(-(grid.axes[0] - shift) ** 2 / 2))


def test_total_variation_bounds():
    p = np.array([0.5, 0.5, 0.0])
    assert total_variation(p, p) == 0.0
    assert total_variation(p, np.array([0.0, 0.0, 1.0])) == 1.0
    with pytest.raises(ValueError):
        total_variation(p, np.ones(2) / 2)


def test_cell_probabilities_sum_to_one():
    rho = gaussian_density()
    assert cell_probabilities(rho).sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cell_probabilities(RealField(rho.grid, np.zeros(rho.grid.shape)))


def test_histogram_uses_the_nearest_node():
    grid = Grid([0.0], [1.0], [4])
    hist = histogram_cells(np.array([[0.01], [0.24], [0.51], [0.99]]), grid)
    np.testing.assert_allclose(hist, [0.5, 0.25, 0.25, 0.0])


def test_born_sample_scores_near_its_baseline():
    rho = gaussian_density()
    points = sample_ensemble(rho, 5000, seed=1)
    baseline, spread = resampling_baseline(rho, 5000, resamples=8, seed=100)
    assert spread < baseline
    assert ensemble_tv(points, rho) < baseline + 4 * spread


def test_baseline_does_not_depend_on_threads():
    rho = gaussian_density()
    assert resampling_baseline(rho, 500, 6, seed=3) == resampling_baseline(rho, 500, 6, seed=3, num_processes=3)


def test_ks_detects_a_shifted_ensemble():
    rho = gaussian_density()
    stats, pvalues = ks_statistics(sample_ensemble(rho, 2000, seed=2), rho)
    assert stats[0] < 0.05
    assert pvalues[0] > 1e-3
    shifted = ks_statistics(sample_ensemble(gaussian_density(shift=0.5), 2000, seed=2), rho)
    assert shifted[0][0] > 0.1


def test_ks_on_periodic_axis_wraps_the_last_half_cell():
    grid = Grid([0.0], [1.0], [10])
    rho = RealField(grid, np.ones(10))
    points = np.random.default_rng(0).uniform(0, 1, size=(4000, 1))
    stats, _ = ks_statistics(points, rho)
    assert stats[0] < 0.05


def test_bin_counts_skip_missing_sites():
    edges = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(bin_counts([0.5, 1.5, 1.7, np.nan], edges), [1 / 3, 2 / 3])
    assert np.all(bin_counts([np.nan], edges) == 0)


def test_bin_density_of_a_flat_line():
    x = np.linspace(0, 4, 41)
    np.testing.assert_allclose(bin_density(x, np.ones_like(x), np.arange(5.0)), 0.25)


def test_count_peaks_of_a_fringe_pattern():
    centers = np.arange(48) + 0.5 - 24
    hist = np.cos(np.pi * centers / 4.2) ** 2 * np.exp(-centers ** 2 / 200)
    assert count_peaks(hist / hist.sum()) >= 5
    assert count_peaks(np.exp(-centers ** 2 / 50)) == 1
