import numpy as np
import pytest

from processing.errors import ConfigurationError, DomainError
from processing.spectral import (PhasePoint, basis_functions, build_basis, eval_at_point,
                                 inner_product, norm_alpha)
from processing.sweep import seeded_rng


def test_interval_eigenvalues_are_exact():
    basis = build_basis('interval', 1, 3)
    np.testing.assert_allclose(basis.lam, np.pi ** 2 * np.array([1.0, 4.0, 9.0]))
    np.testing.assert_allclose(basis.mu, basis.lam)
    assert basis.size == 3
    assert basis.dim == 1


def test_plate_power_squares_the_laplacian():
    basis = build_basis('interval', 2, 2)
    np.testing.assert_allclose(basis.mu, (np.pi ** 2 * np.array([1.0, 4.0])) ** 2)


def test_square_modes_sorted_by_eigenvalue_then_index():
    basis = build_basis('square', 1, 2)
    assert [tuple(k) for k in basis.indices] == [(1, 1), (1, 2), (2, 1), (2, 2)]
    np.testing.assert_allclose(basis.lam, np.pi ** 2 * np.array([2.0, 5.0, 5.0, 8.0]))
    assert basis.position((2, 1)) == 2
    assert basis.mu1 == pytest.approx(2 * np.pi ** 2)


def test_ode_geometry_sorts_given_eigenvalues():
    basis = build_basis('ode', 1, 0, [3.0, 1.0])
    np.testing.assert_allclose(basis.mu, [1.0, 3.0])
    assert basis.position(2) == 0
    assert basis.dim == 0


@pytest.mark.parametrize('geometry, p, n, eigenvalues', [
    ('disk', 2, 4, None),
    ('interval', 3, 4, None),
    ('interval', 2, 0, None),
    ('ode', 1, 1, None),
    ('ode', 1, 1, [1.0, -2.0]),
])
def test_invalid_bases_are_rejected(geometry, p, n, eigenvalues):
    with pytest.raises(ConfigurationError):
        build_basis(geometry, p, n, eigenvalues)


def test_position_rejects_unknown_modes(square_basis):
    with pytest.raises(ConfigurationError):
        square_basis.position((4, 1))
    with pytest.raises(ConfigurationError):
        square_basis.position(1)


def test_vector_accumulates_entries(square_basis):
    w = square_basis.vector([((1, 1), 2.0), ((1, 1), 0.5), ((2, 2), -1.0)])
    assert w[0] == 2.5
    assert w[square_basis.position((2, 2))] == -1.0
    assert np.count_nonzero(w) == 2


def test_fractional_norms(interval_basis):
    w = interval_basis.zeros()
    w[1] = 3.0
    assert norm_alpha(interval_basis, w, 0.0) == pytest.approx(3.0)
    assert norm_alpha(interval_basis, w, 0.5) == pytest.approx(3.0 * np.sqrt(interval_basis.mu[1]))
    assert norm_alpha(interval_basis, w, -0.5) == pytest.approx(3.0 / np.sqrt(interval_basis.mu[1]))
    with pytest.raises(ValueError):
        norm_alpha(interval_basis, w, -2.0)


def test_inner_product_checks_lengths(interval_basis):
    assert inner_product(interval_basis, np.ones(4), np.arange(4.0)) == 6.0
    with pytest.raises(ValueError):
        inner_product(interval_basis, np.ones(4), np.ones(3))


def test_point_evaluation_of_sine_modes(interval_basis):
    values = basis_functions(interval_basis, 0.5)
    np.testing.assert_allclose(values, np.sqrt(2.0) * np.array([1.0, 0.0, -1.0, 0.0]), atol=1e-14)
    w = np.array([1.0, 0.0, 2.0, 0.0])
    assert eval_at_point(interval_basis, w, 0.5) == pytest.approx(-np.sqrt(2.0))
    assert eval_at_point(interval_basis, w, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_point_evaluation_on_the_square(square_basis):
    x = (0.25, 0.5)
    expected = 2.0 * np.sin(np.pi * 0.25) * np.sin(np.pi * 0.5)
    assert basis_functions(square_basis, x)[0] == pytest.approx(expected)


def test_point_evaluation_domain_errors(interval_basis, square_basis):
    with pytest.raises(DomainError):
        basis_functions(interval_basis, 1.5)
    with pytest.raises(DomainError):
        basis_functions(square_basis, 0.5)
    with pytest.raises(ConfigurationError):
        basis_functions(build_basis('ode', 1, 1, [1.0]), 0.5)


def test_phase_point_energy_norm(interval_basis):
    u = interval_basis.zeros()
    v = interval_basis.zeros()
    u[0], v[2] = 1.0, 2.0
    point = PhasePoint(u, v)
    assert point.energy_norm(interval_basis) == pytest.approx(np.sqrt(interval_basis.mu[0] + 4.0))
    with pytest.raises(ValueError):
        PhasePoint(np.zeros(2), np.zeros(3))


@pytest.mark.parametrize('geometry, p, n', [('interval', 2, 8), ('square', 1, 4), ('square', 2, 3)])
def test_interpolation_inequality_on_random_vectors(geometry, p, n):
    basis = build_basis(geometry, p, n)
    rng = seeded_rng(21)
    for _ in range(50):
        w = rng.standard_normal(basis.size)
        top = norm_alpha(basis, w, 0.5)
        for delta in (0.05, 0.25, 0.5):
            lower = norm_alpha(basis, w, 0.5 - delta)
            assert lower <= basis.mu1 ** -delta * top * (1.0 + 1e-12)


def test_norm_is_nondecreasing_in_alpha(square_basis):
    rng = seeded_rng(22)
    alphas = np.linspace(-1.0, 1.0, 41)
    for _ in range(20):
        w = rng.standard_normal(square_basis.size)
        norms = np.array([norm_alpha(square_basis, w, a) for a in alphas])
        assert np.all(np.diff(norms) >= -1e-12 * norms[:-1])
