import math

import numpy as np
import pytest
import scipy.stats

import pcopt
from pcopt import GaussianParams, MixtureModel
from pcopt.errors import (
    DimensionMismatchError,
    InvalidDomainError,
    InvalidInputError,
    ModelDegeneracyError,
)


def std_normal(dim=1):
    return pcopt.single_gaussian_mixture(GaussianParams(np.zeros(dim), np.eye(dim)))


def random_mixture(rng, dim=2, max_components=3):
    m = int(rng.integers(1, max_components + 1))
    comps = []
    for _ in range(m):
        mean = rng.normal(scale=2.0, size=dim)
        a = rng.normal(size=(dim, dim))
        cov = a @ a.T + 0.3 * np.eye(dim)
        comps.append(GaussianParams(mean, cov))
    w = rng.uniform(0.2, 1.0, size=m)
    return MixtureModel(tuple(comps), w / w.sum())


def test_gaussian_params_validation():
    with pytest.raises(DimensionMismatchError):
        GaussianParams(np.zeros(2), np.eye(3))
    with pytest.raises(InvalidInputError):
        GaussianParams(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ModelDegeneracyError):
        GaussianParams(np.zeros(2), np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        GaussianParams(np.array([np.nan, 0.0]), np.eye(2))


def test_mixture_model_validation():
    g = GaussianParams(np.zeros(2), np.eye(2))
    with pytest.raises(InvalidInputError):
        MixtureModel((), np.array([]))
    with pytest.raises(InvalidInputError):
        MixtureModel((g, g), np.array([0.7, 0.7]))
    with pytest.raises(InvalidInputError):
        MixtureModel((g, g), np.array([-0.5, 1.5]))
    with pytest.raises(DimensionMismatchError):
        MixtureModel((g, GaussianParams(np.zeros(3), np.eye(3))), np.array([0.5, 0.5]))


def test_density_standard_normal_mode():
    got = pcopt.density(std_normal(), np.array([0.0]))
    assert got == pytest.approx(1.0 / math.sqrt(2 * math.pi), abs=1e-12)


def test_density_identical_components_collapse():
    g = GaussianParams(np.array([1.0, -1.0]), np.eye(2))
    single = pcopt.single_gaussian_mixture(g)
    double = MixtureModel((g, g), np.array([0.5, 0.5]))
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(50, 2))
    assert np.allclose(pcopt.density(double, pts), pcopt.density(single, pts), rtol=1e-14)


def test_density_zero_weight_component_is_inert():
    a = GaussianParams(np.zeros(1), np.eye(1))
    b = GaussianParams(np.array([40.0]), np.eye(1))
    model = MixtureModel((a, b), np.array([1.0, 0.0]))
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(50, 1))
    single = pcopt.single_gaussian_mixture(a)
    assert np.allclose(pcopt.density(model, pts), pcopt.density(single, pts), rtol=1e-14)


def test_log_density_agrees_with_density():
    rng = np.random.default_rng(2)
    for _ in range(20):
        model = random_mixture(rng)
        pts = rng.normal(scale=3.0, size=(30, 2))
        d = pcopt.density(model, pts)
        ld = pcopt.log_density(model, pts)
        mask = d > 1e-300
        assert np.allclose(ld[mask], np.log(d[mask]), rtol=0, atol=1e-10)


def test_density_integrates_to_one_1d():
    rng = np.random.default_rng(3)
    for _ in range(5):
        model = random_mixture(rng, dim=1)
        lo = min(float(c.mean[0]) - 8 * math.sqrt(c.covariance[0, 0]) for c in model.components)
        hi = max(float(c.mean[0]) + 8 * math.sqrt(c.covariance[0, 0]) for c in model.components)
        grid = np.linspace(lo, hi, 20001)
        vals = pcopt.density(model, grid[:, None])
        assert np.trapezoid(vals, grid) == pytest.approx(1.0, abs=1e-6)


def test_density_rejects_wrong_dimension():
    with pytest.raises(DimensionMismatchError):
        pcopt.density(std_normal(2), np.array([1.0, 2.0, 3.0]))


def test_draw_samples_component_fractions():
    a = GaussianParams(np.zeros(1), np.eye(1))
    b = GaussianParams(np.array([100.0]), np.eye(1))
    model = MixtureModel((a, b), np.array([0.9, 0.1]))
    drawn = pcopt.draw_samples(model, 10_000, np.random.default_rng(4))
    frac = float(np.mean(drawn.points[:, 0] < 50.0))
    assert abs(frac - 0.9) < 3 * math.sqrt(0.09 / 10_000)


def test_draw_samples_deterministic_under_seed():
    model = std_normal(2)
    one = pcopt.draw_samples(model, 1, np.random.default_rng(5))
    two = pcopt.draw_samples(model, 1, np.random.default_rng(5))
    assert np.array_equal(one.points, two.points)
    assert np.array_equal(one.proposal_densities, two.proposal_densities)


def test_draw_samples_tiny_variance():
    g = GaussianParams(np.array([5.0, 5.0]), 1e-8 * np.eye(2))
    drawn = pcopt.draw_samples(pcopt.single_gaussian_mixture(g), 200, np.random.default_rng(6))
    assert np.all(np.abs(drawn.points - 5.0) < 1e-3)


def test_draw_samples_densities_are_mixture_densities():
    rng = np.random.default_rng(7)
    model = random_mixture(rng)
    drawn = pcopt.draw_samples(model, 100, rng)
    assert np.allclose(drawn.proposal_densities, pcopt.density(model, drawn.points), rtol=1e-12)


def test_draw_samples_rejects_bad_count():
    with pytest.raises(InvalidInputError):
        pcopt.draw_samples(std_normal(), 0, np.random.default_rng(0))


def test_draw_samples_distribution_ks():
    drawn = pcopt.draw_samples(std_normal(), 10_000, np.random.default_rng(8))
    stat = scipy.stats.kstest(drawn.points[:, 0], "norm").statistic
    # 1% critical value for the one-sample KS statistic
    assert stat < 1.628 / math.sqrt(10_000)


def test_uniform_initial_proposal_densities():
    rng = np.random.default_rng(9)
    unit = pcopt.uniform_initial_proposal([[0.0, 1.0], [0.0, 1.0]], 10, rng)
    assert np.array_equal(unit.proposal_densities, np.ones(10))
    two = pcopt.uniform_initial_proposal([[0.0, 2.0], [0.0, 2.0]], 10, rng)
    assert np.allclose(two.proposal_densities, 0.25, rtol=0, atol=0)
    assert np.all(two.points >= 0.0) and np.all(two.points <= 2.0)


def test_uniform_initial_proposal_mean():
    drawn = pcopt.uniform_initial_proposal([[0.0, 1.0]], 100_000, np.random.default_rng(10))
    se = (1.0 / math.sqrt(12.0)) / math.sqrt(100_000)
    assert abs(float(drawn.points[:, 0].mean()) - 0.5) < 3 * se


def test_uniform_initial_proposal_errors():
    rng = np.random.default_rng(11)
    with pytest.raises(InvalidDomainError):
        pcopt.uniform_initial_proposal([[0.0, 0.0]], 5, rng)
    with pytest.raises(InvalidDomainError):
        pcopt.uniform_initial_proposal([[0.0, np.inf]], 5, rng)
    with pytest.raises(InvalidDomainError):
        pcopt.uniform_initial_proposal([0.0, 1.0], 5, rng)
    with pytest.raises(InvalidInputError):
        pcopt.uniform_initial_proposal([[0.0, 1.0]], 0, rng)


def test_model_text_round_trip_is_exact():
    rng = np.random.default_rng(12)
    model = random_mixture(rng, dim=3)
    back = pcopt.model_from_text(pcopt.model_to_text(model))
    assert back.component_count == model.component_count
    assert np.array_equal(back.mixing_weights, model.mixing_weights)
    for a, b in zip(back.components, model.components):
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.covariance, b.covariance)


def test_model_from_text_errors():
    with pytest.raises(InvalidInputError):
        pcopt.model_from_text("wrong-header\n")
    text = pcopt.model_to_text(std_normal(2))
    broken = "\n".join(ln for ln in text.splitlines() if not ln.startswith("mean"))
    with pytest.raises(InvalidInputError):
        pcopt.model_from_text(broken)


def test_em_responsibilities_single_component():
    resp = pcopt.em_responsibilities(std_normal(2), np.zeros(2))
    assert np.array_equal(resp, [1.0])


def test_em_responsibilities_symmetric_midpoint():
    a = GaussianParams(np.array([-1.0]), np.eye(1))
    b = GaussianParams(np.array([1.0]), np.eye(1))
    model = MixtureModel((a, b), np.array([0.5, 0.5]))
    resp = pcopt.em_responsibilities(model, np.array([0.0]))
    assert np.allclose(resp, [0.5, 0.5], rtol=0, atol=1e-14)


def test_em_responsibilities_identical_components_keep_prior():
    g = GaussianParams(np.zeros(1), np.eye(1))
    model = MixtureModel((g, g), np.array([0.99, 0.01]))
    resp = pcopt.em_responsibilities(model, np.array([0.3]))
    assert np.allclose(resp, [0.99, 0.01], rtol=0, atol=1e-14)


def test_em_responsibilities_batch_rows_sum_to_one():
    rng = np.random.default_rng(13)
    model = random_mixture(rng, max_components=3)
    pts = rng.normal(size=(25, 2))
    resp = pcopt.em_responsibilities(model, pts)
    assert resp.shape == (25, model.component_count)
    assert np.allclose(resp.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert np.all(resp >= 0)
