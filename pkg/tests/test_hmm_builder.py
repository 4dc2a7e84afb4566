import os
import numpy as np
import pytest
from pilotwave_study.fields.grid import Grid, DIRICHLET
from pilotwave_study.models.hmm_builder import (AnalyticDensity, TabulatedDensity, breathing_gaussian, build_currents,
                                                build_model, build_r, certify_equivariance, hmm_velocity,
                                                moving_gaussian, oscillating_copula)
from pilotwave_study.utilities.errors import NumericalError


def fine_line():
    return Grid([-10.0], [10.0], [1001], DIRICHLET)


def test_moving_gaussian_velocity_is_recovered():
    grid = fine_line()
    provider = moving_gaussian(grid, velocity=1.0, sigma=1.0)
    t = 0.5
    J = build_currents(provider, [1.0], [-10.0], t, method='simpson')[0].values
    rho = provider.density(t).values
    support = rho >= 0.1 * rho.max()
    assert np.max(np.abs(J[support] / rho[support] - 1.0)) < 1e-6


def test_latent_field_squares_to_the_density():
    provider = breathing_gaussian(fine_line())
    times = np.linspace(0, 1, 5)
    r = build_r(provider, times)
    assert np.all(r >= 0)
    for k, t in enumerate(times):
        np.testing.assert_allclose(r[k] ** 2, provider.density(t).values, rtol=1e-14, atol=0)


def test_coefficients_must_sum_to_one():
    provider = moving_gaussian(fine_line())
    with pytest.raises(ValueError):
        build_currents(provider, [0.5], [-10.0], 0.0)
    with pytest.raises(ValueError):
        build_currents(provider, [1.0, 0.0], [-10.0], 0.0)


def test_invalid_coefficients_break_continuity():
    provider = moving_gaussian(fine_line())
    times = np.linspace(0, 1, 11)
    valid = build_model(provider, times, c=[1.0])
    broken = build_model(provider, times, c=[0.5], allow_invalid=True)
    assert valid.audits['continuity'] < 1e-3
    assert broken.audits['continuity'] > 0.1


def test_unnormalized_density_is_a_numerical_error():
    provider = moving_gaussian(Grid([-2.0], [2.0], [81], DIRICHLET))
    with pytest.raises(NumericalError):
        build_model(provider, [0.0, 0.1])


def test_numeric_time_derivative_matches_the_analytic_one():
    grid = fine_line()
    analytic = moving_gaussian(grid, velocity=0.7)
    numeric = AnalyticDensity(grid, lambda q, t: np.exp(-0.5 * (q[0] - 0.7 * t) ** 2) / np.sqrt(2 * np.pi))
    assert not numeric.analytic_derivative
    np.testing.assert_allclose(numeric.time_derivative(0.3).values, analytic.time_derivative(0.3).values,
                               atol=1e-6)


def test_negative_densities_are_rejected():
    grid = Grid([0.0], [1.0], [8], DIRICHLET)
    provider = AnalyticDensity(grid, lambda q, t: q[0] - 0.5)
    with pytest.raises(ValueError):
        provider.audit(0.0)
    with pytest.raises(ValueError):
        build_r(provider, [0.0])


def test_density_family_parameters():
    with pytest.raises(ValueError):
        breathing_gaussian(fine_line(), amplitude=1.0)
    with pytest.raises(ValueError):
        oscillating_copula(fine_line())
    plane = Grid([-5.0, -5.0], [5.0, 5.0], [41, 41], DIRICHLET)
    with pytest.raises(ValueError):
        oscillating_copula(plane, epsilon=1.5)


def test_tabulated_density_blends_linearly():
    grid = Grid([0.0], [1.0], [8], DIRICHLET)
    table = TabulatedDensity(grid, [0.0, 1.0, 2.0], np.stack([np.full(8, v) for v in (1.0, 3.0, 7.0)]))
    np.testing.assert_allclose(table.density(0.5).values, 2.0)
    np.testing.assert_allclose(table.time_derivative(0.0).values, 2.0)
    np.testing.assert_allclose(table.time_derivative(1.0).values, 3.0)
    with pytest.raises(ValueError):
        table.density(2.5)
    with pytest.raises(ValueError):
        TabulatedDensity(grid, [0.0], np.ones((1, 8)))


def test_copula_currents_vanish_on_the_walls():
    grid = Grid([-6.0, -6.0], [6.0, 6.0], [121, 121], DIRICHLET)
    provider = oscillating_copula(grid, epsilon=0.5, omega=2.0)
    for c in ([0.5, 0.5], [0.25, 0.75], [1.0, 0.0]):
        J = build_currents(provider, c, grid.lower, 0.3)
        scale = max(j.max_abs() for j in J)
        assert np.max(np.abs(J[0].values[-1])) < 1e-4 * scale
        assert np.max(np.abs(J[1].values[:, -1])) < 1e-4 * scale


def test_copula_model_is_continuous_for_any_coefficients():
    grid = Grid([-6.0, -6.0], [6.0, 6.0], [121, 121], DIRICHLET)
    provider = oscillating_copula(grid)
    times = np.linspace(0, 1, 6)
    for c in ([0.5, 0.5], [0.25, 0.75]):
        model = build_model(provider, times, c=c)
        assert model.audits['continuity'] < 1e-2
        assert model.audits['latent_residual'] < 1e-14


def test_breathing_gaussian_is_certified():
    grid = Grid([-8.0], [8.0], [161], DIRICHLET)
    model = build_model(breathing_gaussian(grid, sigma=1.0, amplitude=0.3, omega=2.0), np.linspace(0, 1.5, 16))
    certificate = certify_equivariance(model, 4000, seed=10, resamples=5, tv_threshold=None)
    assert certificate.certified
    assert len(certificate.reports) == 16
    assert certificate.to_dict()['model']['density']['kind'] == 'breathing-gaussian'


@pytest.mark.slow
def test_copula_model_is_certified_in_two_dimensions():
    grid = Grid([-5.0, -5.0], [5.0, 5.0], [49, 49], DIRICHLET)
    model = build_model(oscillating_copula(grid), np.linspace(0, 1, 11), c=[0.25, 0.75])
    certificate = certify_equivariance(model, 5000, seed=3, resamples=5, tv_threshold=None, threads=2)
    assert certificate.certified


def test_moving_gaussian_particles_translate_rigidly():
    grid = Grid([-8.0], [8.0], [801], DIRICHLET)
    model = build_model(moving_gaussian(grid, velocity=1.0), np.linspace(0, 1, 11), c=[1.0])
    velocity = hmm_velocity(model)
    points = np.array([[-1.0], [0.0], [1.2]])
    np.testing.assert_allclose(velocity(points, 0.35), 1.0, atol=1e-4)


def test_model_directory(tmp_path):
    grid = Grid([-8.0], [8.0], [161], DIRICHLET)
    model = build_model(moving_gaussian(grid), [0.0, 0.5])
    model.save(str(tmp_path))
    assert sorted(os.listdir(tmp_path)) == ['current1_00000.bin', 'current1_00001.bin', 'density_00000.bin',
                                            'density_00001.bin', 'manifest.yaml']
    manifest = model.manifest()
    assert manifest['coefficients'] == [1.0]
    assert manifest['references'] == [-8.0]
