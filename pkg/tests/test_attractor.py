import math

import numpy as np
import pytest

from processing import attractor
from processing.errors import ConfigurationError, InsufficientDataError, PreconditionError
from processing.integrator import StepperConfig, simulate
from processing.sweep import seeded_rng

from tests.helpers import scalar_linear_problem


def test_circle_has_correlation_dimension_one():
    cloud = attractor.synthetic_cloud('circle', 1500, 8, seed=0)
    estimate = attractor.correlation_dimension(cloud)
    assert estimate.plateau
    assert estimate.slope == pytest.approx(1.0, abs=0.15)
    assert len(estimate.radii) == attractor.RADII


def test_square_has_correlation_dimension_two():
    cloud = attractor.synthetic_cloud('square', 1500, 8, seed=0)
    estimate = attractor.correlation_dimension(cloud)
    assert estimate.plateau
    assert estimate.slope == pytest.approx(2.0, abs=0.2)


def test_synthetic_embedding_is_isometric():
    cloud = attractor.synthetic_cloud('circle', 200, 5, seed=3)
    assert cloud.points.shape == (200, 5)
    np.testing.assert_allclose(np.linalg.norm(cloud.points, axis=1), 1.0)
    with pytest.raises(PreconditionError):
        attractor.synthetic_cloud('circle', 200, 1)
    with pytest.raises(ConfigurationError):
        attractor.synthetic_cloud('torus', 200, 5)


def test_degenerate_cloud_has_no_plateau():
    cloud = attractor.PointCloud(np.zeros((150, 3)))
    estimate = attractor.correlation_dimension(cloud)
    assert not estimate.plateau
    assert estimate.slope == 0.0
    assert cloud.diameter == 0.0


def test_correlation_sums_need_two_points():
    with pytest.raises(InsufficientDataError):
        attractor.correlation_dimension(attractor.PointCloud(np.zeros((1, 2))))


def test_large_clouds_sample_pairs_without_self_pairs():
    cloud = attractor.synthetic_cloud('square', 2500, 4, seed=1)
    distances = attractor.pair_distances(cloud, seed=2, max_pairs=1000)
    assert distances.shape == (1000,)
    assert np.all(distances > 0)


def test_sample_cloud_uses_energy_coordinates():
    problem = scalar_linear_problem(mu=4.0)
    trace = simulate(problem, StepperConfig(0.01, 20.0))
    cloud = attractor.sample_cloud(trace, burn_in=5.0, stride=10)
    assert len(cloud) == 151
    # the free oscillation stays on the circle of radius sqrt(mu) in (sqrt(mu) u, v)
    np.testing.assert_allclose(np.linalg.norm(cloud.points, axis=1), 2.0, rtol=1e-9)


def test_sample_cloud_preconditions():
    trace = simulate(scalar_linear_problem(mu=4.0), StepperConfig(0.01, 2.0))
    with pytest.raises(PreconditionError):
        attractor.sample_cloud(trace, burn_in=3.0, stride=10)
    with pytest.raises(PreconditionError):
        attractor.sample_cloud(trace, burn_in=0.0, stride=500)
    with pytest.raises(InsufficientDataError):
        attractor.sample_cloud(trace, burn_in=0.0, stride=10)


def test_fit_attraction_recovers_the_rate():
    times = np.linspace(0.0, 10.0, 1001)
    distances = 1e-3 * np.exp(-3.0 * times)
    fit = attractor.fit_attraction(times, distances)
    assert not fit.flagged
    assert fit.rate == pytest.approx(3.0, rel=1e-6)
    assert fit.constant == pytest.approx(1e-3, rel=1e-6)
    assert fit.onset == 0.0


def test_growing_distances_are_flagged():
    times = np.linspace(0.0, 1.0, 101)
    fit = attractor.fit_attraction(times, np.exp(times))
    assert fit.flagged


def test_attraction_rate_of_a_damped_oscillator():
    problem = scalar_linear_problem(mu=4.0, k_damp=2.0, tau0=0.0, a=0.0)
    fit = attractor.attraction_rate(problem, StepperConfig(0.01, 10.0), m=4, spread=1e-3)
    assert not fit.flagged
    assert fit.rate == pytest.approx(1.0, rel=0.25)


def test_attraction_rate_preconditions():
    problem = scalar_linear_problem(mu=4.0, k_damp=1.0)
    with pytest.raises(PreconditionError):
        attractor.attraction_rate(problem, StepperConfig(0.01, 1.0), m=3)
    fit = attractor.attraction_rate(problem, StepperConfig(0.01, 1.0), m=4, spread=0.0)
    assert fit.flagged
    assert math.isnan(fit.rate)


def test_dimension_ignores_point_order_and_rotation():
    cloud = attractor.synthetic_cloud('square', 1500, 6, seed=4)
    reference = attractor.correlation_dimension(cloud)
    assert reference.plateau

    rng = seeded_rng(44)
    shuffled = attractor.PointCloud(cloud.points[rng.permutation(len(cloud))])
    permuted = attractor.correlation_dimension(shuffled)
    assert permuted.window == reference.window
    assert permuted.slope == reference.slope

    rotation, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    rotated = attractor.correlation_dimension(attractor.PointCloud(cloud.points @ rotation.T))
    assert rotated.window == reference.window
    assert rotated.slope == pytest.approx(reference.slope, rel=1e-9)
