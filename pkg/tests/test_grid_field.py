import numpy as np
import pytest
from scipy.stats import norm
from pilotwave_study.fields.grid import Grid, RealField, ComplexField, PERIODIC, DIRICHLET
from pilotwave_study.fields.operators import (gradient, gradients, divergence, laplacian, integrate,
                                              cumulative_integral, interpolate, interpolate_points)
from pilotwave_study.fields.field_io import (MAGIC, field_to_bytes, field_from_bytes, save_field, load_field,
                                             field_to_frame)


def periodic_line(n, length=2 * np.pi):
    return Grid([0.0], [length], [n], PERIODIC)


def test_grid_rejects_small_axes_and_large_grids():
    with pytest.raises(ValueError):
        Grid([0.0], [1.0], [3])
    with pytest.raises(ValueError):
        Grid([0.0, 0.0], [1.0, 1.0], [64, 64], max_points=1000)
    with pytest.raises(ValueError):
        Grid([1.0], [0.0], [8])


def test_grid_rejects_asymmetric_metric():
    metric = np.zeros((2, 2, 8, 8))
    metric[0, 0] = metric[1, 1] = 1.0
    metric[0, 1] = 0.1
    with pytest.raises(ValueError):
        Grid([0.0, 0.0], [1.0, 1.0], [8, 8], metric=metric)


def test_spacing_depends_on_boundary_mode():
    assert Grid([0.0], [1.0], [10], PERIODIC).spacing[0] == pytest.approx(0.1)
    assert Grid([0.0], [1.0], [11], DIRICHLET).spacing[0] == pytest.approx(0.1)


def test_field_values_must_be_finite_and_match_the_grid():
    grid = periodic_line(8)
    with pytest.raises(ValueError):
        RealField(grid, np.full(8, np.nan))
    with pytest.raises(ValueError):
        RealField(grid, np.zeros(7))


def test_gradient_of_constant_is_exactly_zero():
    grid = Grid([-1.0, -1.0], [1.0, 1.0], [9, 12], [PERIODIC, DIRICHLET])
    f = RealField(grid, np.full(grid.shape, 3.7))
    for g in gradients(f):
        assert np.all(g.values == 0)


def test_gradient_of_linear_field_on_dirichlet_axis():
    grid = Grid([-2.0], [3.0], [17], DIRICHLET)
    f = RealField(grid, grid.axes[0])
    np.testing.assert_allclose(gradient(f, 0).values, 1.0, atol=1e-12)


def test_gradient_axis_out_of_range():
    grid = periodic_line(8)
    with pytest.raises(ValueError):
        gradient(RealField(grid, np.zeros(8)), 1)


def test_gradient_converges_at_second_order():
    errors = []
    for n in (32, 64):
        grid = periodic_line(n, 10.0)
        x = grid.axes[0]
        k = 2 * np.pi / 10.0
        g = gradient(RealField(grid, np.sin(k * x)), 0)
        errors.append(np.max(np.abs(g.values - k * np.cos(k * x))))
    assert errors[0] / errors[1] > 3.5


def test_divergence_of_zero_and_constant_fields():
    grid = Grid([0.0, 0.0], [1.0, 1.0], [8, 8], [DIRICHLET, PERIODIC])
    zero = [RealField(grid, np.zeros(grid.shape))] * 2
    const = [RealField(grid, np.full(grid.shape, 2.0)), RealField(grid, np.full(grid.shape, -1.0))]
    assert np.all(divergence(zero).values == 0)
    assert np.max(np.abs(divergence(const).values)) < 1e-12


def test_divergence_needs_one_component_per_axis():
    grid = Grid([0.0, 0.0], [1.0, 1.0], [8, 8])
    with pytest.raises(ValueError):
        divergence([RealField(grid, np.zeros(grid.shape))])


def test_azimuthal_divergence_vanishes_at_second_order():
    errors = []
    for n in (64, 128):
        grid = Grid([-6.0, -6.0], [6.0, 6.0], [n, n])
        x, y = grid.mesh()
        r2 = x ** 2 + y ** 2
        safe = np.where(r2 > 0, r2, 1.0)
        rho = np.exp(-r2)
        v = [RealField(grid, np.where(r2 > 0, -y * rho / safe, 0.0)),
             RealField(grid, np.where(r2 > 0, x * rho / safe, 0.0))]
        div = divergence(v).values
        errors.append(np.max(np.abs(div[r2 > 1.5 ** 2])))
    assert errors[0] / errors[1] > 3.5


def test_laplacian_is_divergence_of_gradients():
    grid = Grid([0.0, 0.0], [2 * np.pi, 2 * np.pi], [24, 16], metric=[1.0, 0.5])
    x, y = grid.mesh()
    f = RealField(grid, np.sin(x) * np.cos(2 * y))
    direct = divergence(gradients(f), weights=grid.metric).values
    np.testing.assert_allclose(laplacian(f).values, direct, atol=1e-14)


def test_integrate_constant_and_gaussian():
    box = Grid([0.0, 0.0], [2.0, 3.0], [10, 12])
    assert integrate(RealField(box, np.ones(box.shape))) == pytest.approx(6.0)

    grid = Grid([-12.0], [12.0], [401], DIRICHLET)
    x = grid.axes[0]
    assert integrate(RealField(grid, norm.pdf(x, 0.5, 1.2))) == pytest.approx(1.0, abs=1e-6)


def test_integrate_is_linear_over_disjoint_bumps():
    grid = Grid([-10.0], [10.0], [400])
    x = grid.axes[0]
    a = np.exp(-(x + 5) ** 2)
    b = 3 * np.exp(-(x - 5) ** 2)
    assert integrate(RealField(grid, a + b)) == pytest.approx(
        integrate(RealField(grid, a)) + integrate(RealField(grid, b)), rel=1e-14)


def test_discrete_divergence_theorem_on_periodic_grid():
    grid = Grid([0.0, 0.0], [1.0, 1.0], [20, 30])
    rng = np.random.default_rng(3)
    f = RealField(grid, rng.normal(size=grid.shape))
    for g in gradients(f):
        assert abs(integrate(g)) < 1e-10 * f.max_abs()


def test_cumulative_integral_of_one_from_lower_bound():
    grid = Grid([-1.0], [4.0], [26], DIRICHLET)
    f = RealField(grid, np.ones(grid.shape))
    for method in ('trapezoid', 'simpson'):
        F = cumulative_integral(f, 0, grid.lower[0], method)
        np.testing.assert_allclose(F.values, grid.axes[0] - grid.lower[0], atol=1e-12)


def test_cumulative_integral_of_zero_and_reference_node():
    grid = Grid([-1.0], [1.0], [21], DIRICHLET)
    assert np.all(cumulative_integral(RealField(grid, np.zeros(21)), 0, 0.0).values == 0)
    F = cumulative_integral(RealField(grid, np.exp(grid.axes[0])), 0, 0.3)
    assert F.values[13] == 0.0


def test_cumulative_integral_of_gaussian_is_its_cdf():
    grid = Grid([-10.0], [10.0], [401], DIRICHLET)
    x = grid.axes[0]
    F = cumulative_integral(RealField(grid, norm.pdf(x)), 0, grid.lower[0])
    assert np.max(np.abs(F.values - norm.cdf(x))) < 1e-4


def test_cumulative_integral_bounds():
    grid = Grid([-1.0], [1.0], [21], DIRICHLET)
    f = RealField(grid, np.ones(21))
    with pytest.raises(ValueError):
        cumulative_integral(f, 0, 1.5)
    with pytest.raises(ValueError):
        cumulative_integral(f, 0, 0.0, method='midpoint')


def test_cumulative_integral_then_gradient_recovers_the_integrand():
    errors = []
    for n in (41, 81):
        grid = Grid([-4.0], [4.0], [n], DIRICHLET)
        x = grid.axes[0]
        f = RealField(grid, np.cos(x) * np.exp(-x ** 2 / 4))
        back = gradient(cumulative_integral(f, 0, 0.0), 0).values
        errors.append(np.max(np.abs(back - f.values)[2:-2]))
    assert errors[0] / errors[1] > 3.5


def test_interpolate_on_nodes_and_linear_fields():
    grid = Grid([-1.0, 0.0], [1.0, 2.0], [11, 9], [DIRICHLET, DIRICHLET])
    x, y = grid.mesh()
    f = RealField(grid, 2 * x - 3 * y + 1)
    assert interpolate(f, [grid.axes[0][4], grid.axes[1][2]]) == pytest.approx(f.values[4, 2])
    assert interpolate(f, [0.123, 1.377]) == pytest.approx(2 * 0.123 - 3 * 1.377 + 1)


def test_interpolate_quadratic_mid_cell_error_bound():
    grid = Grid([0.0], [1.0], [11], DIRICHLET)
    h = grid.spacing[0]
    f = RealField(grid, grid.axes[0] ** 2)
    mid = grid.axes[0][:-1] + h / 2
    values = interpolate_points(f.values, grid, mid[:, None])
    assert np.max(np.abs(values - mid ** 2)) <= 0.25 * 2.0 * h ** 2 + 1e-15


def test_interpolate_outside_dirichlet_range_raises_and_periodic_wraps():
    walls = Grid([0.0], [1.0], [11], DIRICHLET)
    with pytest.raises(ValueError):
        interpolate(RealField(walls, np.zeros(11)), [1.5])

    ring = periodic_line(16, 1.0)
    f = ComplexField(ring, np.exp(2j * np.pi * ring.axes[0]))
    assert interpolate(f, [1.25]) == pytest.approx(interpolate(f, [0.25]))


def test_interpolate_points_carries_leading_dimensions():
    grid = Grid([0.0, 0.0], [1.0, 1.0], [8, 8])
    values = np.stack([np.ones(grid.shape), 2 * np.ones(grid.shape)])
    out = interpolate_points(values, grid, np.random.default_rng(0).uniform(0, 1, size=(5, 2)))
    assert out.shape == (2, 5)
    np.testing.assert_allclose(out[1], 2.0)


def test_binary_field_layout(tmp_path):
    grid = Grid([-1.0, 0.0], [1.0, 2.0], [4, 6], [PERIODIC, DIRICHLET])
    rng = np.random.default_rng(1)
    psi = ComplexField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape), t=0.75)
    buffer = field_to_bytes(psi)
    assert buffer[:8] == MAGIC
    # header, two axis records, timestamp, then re/im pairs
    assert len(buffer) == 20 + 2 * 24 + 8 + 16 * grid.size

    path = tmp_path / 'psi.bin'
    save_field(str(path), psi)
    loaded = load_field(str(path))
    assert loaded.t == 0.75
    assert loaded.grid.boundaries == (PERIODIC, DIRICHLET)
    np.testing.assert_array_equal(loaded.values, psi.values)


def test_binary_field_rejects_bad_magic():
    grid = periodic_line(8)
    buffer = bytearray(field_to_bytes(RealField(grid, np.zeros(8))))
    buffer[0:1] = b'X'
    with pytest.raises(ValueError):
        field_from_bytes(bytes(buffer))


def test_field_csv_columns():
    grid = Grid([0.0, 0.0], [1.0, 1.0], [4, 5])
    frame = field_to_frame(RealField(grid, np.arange(20.0), t=1.5))
    assert list(frame.columns) == ['t', 'q1', 'q2', 'value']
    assert len(frame) == 20
    assert frame['value'].iloc[7] == 7.0
