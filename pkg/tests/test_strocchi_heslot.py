import numpy as np
import pytest
from pilotwave_study.fields.grid import Grid
from pilotwave_study.fields.operators import integrate
from pilotwave_study.models.fw_gauge import random_hermitian, random_state, random_unitary
from pilotwave_study.models.strocchi_heslot import (
    FunctionHamiltonian, PhasePoint, QuadraticHamiltonian, canonical_check, classical_from_quantum, coordinate,
    flow_equivalence, frame_swap_audit, hamilton_flow, hamilton_step, ho_frame_swap, momentum, poisson_bracket,
    symplectic_form, unitary_real_form)
from pilotwave_study.scenarios.presets import normalized, gaussian_values
from pilotwave_study.utilities.errors import NumericalError


def test_symplectic_form_squares_to_minus_one():
    omega = symplectic_form(3)
    np.testing.assert_array_equal(omega @ omega, -np.eye(6))
    np.testing.assert_array_equal(omega.T, -omega)


def test_phase_point_round_trip_and_norm():
    rng = np.random.default_rng(0)
    c = random_state(5, rng)
    point = PhasePoint.from_state(c, hbar=0.5)
    np.testing.assert_allclose(point.to_state(), c, atol=1e-15)
    assert point.norm_squared() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        PhasePoint([1.0, 2.0], [1.0])


def test_phase_point_of_a_grid_wave_function_keeps_the_norm():
    grid = Grid([-8.0], [8.0], [64])
    psi = normalized(grid, gaussian_values(grid, [0.0], [1.0], [1.0]))
    point = PhasePoint.from_field(psi)
    assert point.dimension == 64
    assert point.norm_squared() == pytest.approx(integrate(np.abs(psi.values) ** 2, grid))


def test_canonical_brackets():
    d = 3
    point = PhasePoint.from_state(random_state(d, np.random.default_rng(1)))
    for j in range(d):
        for k in range(d):
            assert poisson_bracket(coordinate(j, d), momentum(k, d), point) == pytest.approx(float(j == k), abs=1e-8)
            assert poisson_bracket(coordinate(j, d), coordinate(k, d), point) == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(ValueError):
        poisson_bracket(coordinate(0, d), momentum(0, d), point, delta=0.0)


def test_classical_hamiltonian_is_the_expectation_value():
    rng = np.random.default_rng(2)
    for hbar in (1.0, 0.3):
        H = random_hermitian(4, rng)
        point = PhasePoint.from_state(random_state(4, rng), hbar)
        quadratic = QuadraticHamiltonian.from_quantum(H, hbar)
        expected = classical_from_quantum(H, hbar)(point.X, point.Y)
        assert quadratic.value(point.vector) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize('d', [2, 4, 8])
def test_hamilton_flow_is_schrodinger_evolution(d):
    rng = np.random.default_rng(d)
    assert flow_equivalence(random_hermitian(d, rng), random_state(d, rng), duration=1.0, dt=1e-4) < 1e-6


def test_flow_conserves_the_norm():
    rng = np.random.default_rng(3)
    point = PhasePoint.from_state(random_state(4, rng))
    flow = hamilton_flow(point, QuadraticHamiltonian.from_quantum(random_hermitian(4, rng)), 0.05, 400)
    assert flow.shape == (401, 8)
    assert PhasePoint.from_vector(flow[-1]).norm_squared() == pytest.approx(1.0, abs=1e-12)


def test_nonlinear_hamiltonian_by_fixed_point_iteration():
    hamiltonian = FunctionHamiltonian(lambda X, Y, t: 0.25 * (X @ X + Y @ Y) ** 2)
    point = PhasePoint([1.0], [0.5])
    flow = hamilton_flow(point, hamiltonian, 0.01, 200)
    energies = [hamiltonian.value(z) for z in flow]
    assert max(energies) - min(energies) < 1e-8
    with pytest.raises(NumericalError):
        hamilton_step(point, hamiltonian, 0.5, max_iter=1)


def test_unitaries_are_canonical_and_scalings_are_not():
    rng = np.random.default_rng(4)
    R = unitary_real_form(random_unitary(3, rng))
    report = canonical_check(lambda z: R @ z, 3, samples=10, seed=1, num_processes=2)
    assert report.canonical
    assert report.to_dict()['samples'] == 10
    assert not canonical_check(lambda z: 2 * z, 3, samples=5).canonical


def test_quadratic_hamiltonian_validation():
    with pytest.raises(ValueError):
        QuadraticHamiltonian(np.eye(3))
    with pytest.raises(ValueError):
        QuadraticHamiltonian(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        QuadraticHamiltonian.from_quantum(np.array([[0, 1], [0, 0]]))


@pytest.mark.parametrize('m, k', [(1.0, 1.0), (2.0, 8.0)])
def test_oscillator_frame_swap(m, k):
    audit = frame_swap_audit(0.7, -0.3, m, k, dt=1e-3, steps=1000)
    assert audit['energy_difference'] < 1e-14
    assert audit['max_trajectory_difference'] < 1e-10


def test_frame_swap_needs_positive_parameters():
    assert ho_frame_swap(1.0, 2.0, 2.0, 8.0) == (2.0, -1.0, 0.125, 0.5)
    with pytest.raises(ValueError):
        ho_frame_swap(1.0, 2.0, 0.0, 1.0)
