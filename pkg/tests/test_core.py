import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infofilter.core import (
    GaussianBelief,
    ItemDistribution,
    ProblemInstance,
    ProjectionDistribution,
    ScalarBelief,
    basis_instance,
    conditional_scalar_belief,
    l1_normalize,
    mean_projection,
    nonzero_count,
    projection_distribution,
    psd_repair,
    sample_item,
    update_multivariate,
    update_scalar,
)
from infofilter.errors import ConfigurationError, DomainError


@pytest.mark.parametrize("v, expected", [
    ((1, 1, 0), (0.5, 0.5, 0.0)),
    ((0.2, 0.8), (0.2, 0.8)),
    ((2, 0, 6), (0.25, 0.0, 0.75)),
])
def test_l1_normalize(v, expected):
    np.testing.assert_allclose(l1_normalize(v), expected, atol=1e-15)


def test_l1_normalize_rejects_zero_vector_with_label():
    with pytest.raises(DomainError, match="item 'x7'"):
        l1_normalize([0, 0, 0], label="x7")


@pytest.mark.parametrize("v, n", [((0.5, 0, 0.5), 2), ((0, 0, 0), 0), ((0.1, 0.2, 0.3, 0.4), 4)])
def test_nonzero_count(v, n):
    assert nonzero_count(v) == n


def test_sample_item_point_mass():
    dist = ItemDistribution.catalog([[1.0, 0.0]], [1.0])
    rng = np.random.default_rng(0)
    for _ in range(20):
        np.testing.assert_array_equal(sample_item(dist, rng), [1.0, 0.0])


def test_sample_item_basis_frequency():
    inst = basis_instance()
    idx = inst.items.sample_indices(np.random.default_rng(1), 1_000_000)
    p = 100 / 199
    freq = np.mean(idx == 0)
    assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / 1e6)


def test_sample_item_empirical_uniform():
    dist = ItemDistribution.empirical_from([[1.0, 0.0], [0.0, 1.0]])
    idx = dist.sample_indices(np.random.default_rng(2), 100_000)
    assert abs(np.mean(idx == 0) - 0.5) < 0.01


def test_empty_distribution_rejected():
    with pytest.raises(ConfigurationError):
        ItemDistribution.empirical_from(np.zeros((0, 2)))


def test_update_multivariate_example():
    b = GaussianBelief([0.3, 0.3], np.eye(2))
    out = update_multivariate(b, [1.0, 0.0], 0.5, 0.1)
    np.testing.assert_allclose(out.mean, [0.503 / 1.01, 0.3], atol=1e-12)
    np.testing.assert_allclose(out.covariance, np.diag([1 / 101, 1.0]), atol=1e-12)


def test_update_multivariate_uninformative_limit():
    b = GaussianBelief([0.1, -0.2], [[1.0, 0.3], [0.3, 0.5]])
    x = np.array([0.4, 0.6])
    out = update_multivariate(b, x, float(x @ b.mean), 1e6)
    np.testing.assert_allclose(out.mean, b.mean, atol=1e-6)
    np.testing.assert_allclose(out.covariance, b.covariance, atol=1e-6)


def test_update_multivariate_degenerate_prior():
    b = GaussianBelief([0.3, 0.7], np.zeros((2, 2)))
    out = update_multivariate(b, [0.5, 0.5], 3.0, 0.1)
    np.testing.assert_array_equal(out.mean, b.mean)
    np.testing.assert_array_equal(out.covariance, np.zeros((2, 2)))


def test_update_multivariate_rejects_zero_item():
    with pytest.raises(DomainError):
        update_multivariate(GaussianBelief.isotropic(2), [0.0, 0.0], 1.0, 0.1)


@pytest.mark.parametrize("mu, beta, x, y, lam, mu_new, beta_new", [
    (0.3, 1.0, 1.0, 0.5, 0.1, 0.503 / 1.01, 101.0),
    (0.3, 1.0, 0.0, 123.0, 0.1, 0.3, 1.0),
    (0.0, 4.0, 0.5, 0.0, 0.1, 0.0, 29.0),
])
def test_update_scalar_examples(mu, beta, x, y, lam, mu_new, beta_new):
    out = update_scalar(ScalarBelief(mu, beta), x, y, lam)
    assert out.mean == pytest.approx(mu_new, abs=1e-12)
    assert out.precision == pytest.approx(beta_new, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(mu=st.floats(-5, 5), var=st.floats(0.01, 10), y=st.floats(-10, 10),
       lam=st.floats(0.01, 3))
def test_conjugate_consistency(mu, var, y, lam):
    k, j = 3, 1
    cov = np.diag([0.7, var, 2.0])
    b = GaussianBelief([0.0, mu, 1.0], cov)
    multi = update_multivariate(b, np.eye(k)[j], y, lam)
    scalar = update_scalar(ScalarBelief.from_variance(mu, var), 1.0, y, lam)
    assert multi.mean[j] == pytest.approx(scalar.mean, abs=1e-10)
    assert multi.covariance[j, j] == pytest.approx(scalar.variance, abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(x=st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda v: sum(v) > 1e-3),
       y=st.floats(-5, 5), lam=st.floats(0.05, 2), beta=st.floats(0.1, 100))
def test_precision_monotonicity(x, y, lam, beta):
    b = GaussianBelief([0.1, 0.2, 0.3], [[1.0, 0.2, 0.1], [0.2, 0.8, 0.0], [0.1, 0.0, 0.5]])
    out = update_multivariate(b, x, y, lam)
    assert np.all(np.diag(out.covariance) <= np.diag(b.covariance) + 1e-10)
    s = update_scalar(ScalarBelief(0.0, beta), x[0], y, lam)
    assert s.precision >= beta


def test_martingale_of_posterior_mean():
    rng = np.random.default_rng(3)
    prior = GaussianBelief([0.2, -0.1], [[1.0, 0.4], [0.4, 0.6]])
    x = np.array([0.3, 0.7])
    n = 10_000
    theta = prior.sample(rng, n)
    y = theta @ x + math.sqrt(2) * 0.5 * rng.standard_normal(n)
    means = np.array([update_multivariate(prior, x, yi, 0.5).mean for yi in y])
    se = means.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(means.mean(axis=0) - prior.mean) < 3 * se)


def test_projection_distribution_examples():
    inst = basis_instance()
    g = projection_distribution(np.eye(100)[0], inst.items)
    np.testing.assert_allclose(g.support, [0.0, 1.0])
    np.testing.assert_allclose(g.probabilities, [99 / 199, 100 / 199], atol=1e-15)
    items = ItemDistribution.catalog([[1.0, 0.0]], [1.0])
    g = projection_distribution([0.5, 0.5], items)
    np.testing.assert_allclose(g.support, [1.0])
    d = np.array([0.2, 0.3, 0.5])
    g = projection_distribution(d, ItemDistribution.catalog([d], [1.0]))
    assert g.support.tolist() == [1.0] and mean_projection(g) == 1.0


def test_projection_distribution_rejects_zero_direction():
    with pytest.raises(DomainError):
        projection_distribution([0.0, 0.0], ItemDistribution.catalog([[1.0, 0.0]], [1.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda v: sum(v) > 0),
                min_size=1, max_size=6),
       st.integers(0, 5))
def test_projection_is_a_law(rows, which):
    items = ItemDistribution.catalog(np.array(rows), np.full(len(rows), 1 / len(rows)))
    g = projection_distribution(items.vectors[which % len(rows)], items)
    assert abs(g.probabilities.sum() - 1.0) <= 1e-12
    assert g.support.size <= len(rows)


def test_empirical_projection_is_histogram():
    rng = np.random.default_rng(4)
    items = ItemDistribution.empirical_from(rng.random((500, 3)))
    g = projection_distribution([1.0, 0.0, 0.0], items, bins=10)
    assert g.support.size <= 10
    assert abs(g.probabilities.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize("support, probs, m", [
    ([1.0, 0.0], [100 / 199, 99 / 199], 100 / 199),
    ([1.0], [1.0], 1.0),
    ([0.5, 1.5], [0.5, 0.5], 1.0),
])
def test_mean_projection(support, probs, m):
    assert mean_projection(ProjectionDistribution(support, probs)) == pytest.approx(m, abs=1e-15)


def test_conditional_scalar_belief_examples():
    prior = GaussianBelief([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    b = conditional_scalar_belief(prior, 0, [1.0])
    assert b.mean == pytest.approx(0.5) and b.variance == pytest.approx(0.75)
    prior = GaussianBelief([1.0, 2.0, 3.0], np.diag([0.5, 2.0, 3.0]))
    b = conditional_scalar_belief(prior, 1, [5.0, -4.0])
    assert b.mean == pytest.approx(2.0) and b.variance == pytest.approx(2.0)
    prior = GaussianBelief([0.3, 0.1], [[1.0, 1.0], [1.0, 1.0]])
    b = conditional_scalar_belief(prior, 0, [1.1])
    assert b.mean == pytest.approx(1.3, abs=1e-6) and b.variance <= 1e-6


def test_psd_repair():
    sym = np.array([[1.0, 0.2], [0.2, 1.0]])
    assert psd_repair(sym) is not sym
    np.testing.assert_array_equal(psd_repair(sym), sym)
    w = np.linalg.eigvalsh(psd_repair(np.ones((3, 3))))
    assert w.min() >= 1e-8 - 1e-15


def test_problem_instance_validation():
    inst = basis_instance(k=3)
    with pytest.raises(ConfigurationError):
        ProblemInstance(0.3, 1.0, 0.1, inst.prior, inst.items)
    with pytest.raises(ConfigurationError):
        ProblemInstance(0.3, 0.9, 0.0, inst.prior, inst.items)
    with pytest.raises(ConfigurationError):
        ProblemInstance(0.3, 0.9, 0.1, inst.prior, inst.items, horizon=0)
    r = ProblemInstance.from_rates(9.0, 1.0, cost=0.3, noise_scale=0.1, prior=inst.prior,
                                   items=inst.items)
    assert r.discount == pytest.approx(0.9)


def test_beliefs_are_immutable():
    b = GaussianBelief.isotropic(2)
    with pytest.raises(ValueError):
        b.mean[0] = 1.0
