import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infofilter.core import GaussianBelief, ItemDistribution, ProblemInstance, basis_instance
from infofilter.dp import DpCache
from infofilter.errors import ConfigurationError, DomainError, NumericalError
from infofilter.policies import (
    DTDDP,
    GridAnchor,
    PolicyConfig,
    PolicyKind,
    bind_policy,
    decide_dtddp,
    decide_dtducb,
    decide_lts,
    decide_pure_exploit,
    decide_ucb,
)

from conftest import FAST


def test_pure_exploit_examples():
    b = GaussianBelief([0.5, 0.5], np.eye(2))
    assert decide_pure_exploit(b, [1.0, 0.0], 0.3)
    assert decide_pure_exploit(b, [1.0, 0.0], 0.5)
    assert not decide_pure_exploit(GaussianBelief.isotropic(2, 0.0), [1.0, 0.0], 0.1)


def test_ucb_examples():
    b = GaussianBelief([0.3, 0.0], np.diag([0.04, 1.0]))
    assert decide_ucb(b, [1.0, 0.0], 0.4, 1.0)
    assert not decide_ucb(b, [1.0, 0.0], 0.51, 1.0)


def test_ucb_rejects_negative_variance():
    b = GaussianBelief([0.3, 0.0], np.diag([-0.01, 1.0]))
    with pytest.raises(NumericalError):
        decide_ucb(b, [1.0, 0.0], 0.4, 1.0)


@settings(max_examples=200, deadline=None)
@given(mean=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       var=st.floats(0, 2), x=st.floats(0.01, 1), c=st.floats(-2, 2))
def test_ucb_alpha_zero_is_pure_exploit(mean, var, x, c):
    b = GaussianBelief(mean, np.diag([var, 0.5]))
    item = [x, 1 - x]
    assert decide_ucb(b, item, c, 0.0) == decide_pure_exploit(b, item, c)
    z = GaussianBelief(mean, np.zeros((2, 2)))
    assert decide_ucb(z, item, c, 3.0) == decide_pure_exploit(z, item, c)


def test_lts_examples():
    b0 = GaussianBelief([0.3, 0.3], np.zeros((2, 2)))
    rng = np.random.default_rng(0)
    assert not decide_lts(b0, [1.0, 0.0], 0.3, rng)
    assert decide_lts(b0, [1.0, 0.0], 0.29, rng)
    b = GaussianBelief([0.3, 0.3], np.eye(2))
    assert all(decide_lts(b, [0.5, 0.5], -1e9, rng) for _ in range(100))
    freq = np.mean([decide_lts(b, [1.0, 0.0], 0.3, rng) for _ in range(10_000)])
    assert abs(freq - 0.5) <= 0.02


def test_lts_deterministic_given_seed():
    b = GaussianBelief([0.3, 0.3], np.eye(2))
    a = [decide_lts(b, [1.0, 0.0], 0.3, np.random.default_rng(s)) for s in range(50)]
    c = [decide_lts(b, [1.0, 0.0], 0.3, np.random.default_rng(s)) for s in range(50)]
    assert a == c


def test_dtducb_scaling_on_basis_instance():
    inst = basis_instance()
    policy = bind_policy(PolicyConfig(PolicyKind.DTDUCB, 1.0), inst)
    assert policy.scale[0] == pytest.approx(100 / 199, abs=1e-15)
    assert policy.scale[1] == pytest.approx(1 / 199, abs=1e-15)
    b = inst.prior
    e1, e2 = np.eye(100)[0], np.eye(100)[1]
    # X·μ = 0.3, σ = 1: bonus 100/199 forwards at c = 0.8, bonus 1/199 does not
    assert decide_dtducb(b, e1, 0.8, 1.0, inst.items)
    assert not decide_dtducb(b, e2, 0.8, 1.0, inst.items)


@settings(max_examples=200, deadline=None)
@given(mean=st.floats(-1, 1), var=st.floats(0, 1), alpha=st.floats(0, 5), c=st.floats(-2, 2))
def test_dtducb_point_mass_is_ucb(mean, var, alpha, c):
    item = np.array([0.4, 0.6])
    items = ItemDistribution.catalog([item], [1.0])
    b = GaussianBelief([mean, 0.1], np.diag([var, 0.3]))
    m, v = b.project(item)
    if abs(m + alpha * np.sqrt(v) - c) > 1e-12:
        assert decide_dtducb(b, item, c, alpha, items) == decide_ucb(b, item, c, alpha)


def test_zero_item_rejected():
    inst = basis_instance(k=3)
    with pytest.raises(DomainError):
        decide_dtducb(inst.prior, np.zeros(3), 0.3, 1.0, inst.items)
    with pytest.raises(DomainError):
        decide_dtddp(inst.prior, np.zeros(3), 0.3, 1.0, inst.items, 0.9, 0.1)


def test_dtddp_reductions():
    inst = basis_instance(k=3)
    b = GaussianBelief([0.3, 0.5, 0.2], np.zeros((3, 3)))
    for j in range(3):
        item = np.eye(3)[j]
        assert decide_dtddp(b, item, 0.3, 1.0, inst.items, 0.9, 0.1) == (b.mean[j] > 0.3)
    b = GaussianBelief([0.3, 0.5, 0.2], np.eye(3))
    cache = DpCache()
    for j in range(3):
        item = np.eye(3)[j]
        got = decide_dtddp(b, item, 0.35, 0.0, inst.items, 0.9, 0.1, cache, FAST)
        assert got == (b.mean[j] > 0.35)


def test_dtddp_cache_transparency():
    inst = basis_instance(k=4, heavy_weight=3.0)
    rng = np.random.default_rng(5)
    cache = DpCache()
    anchor = GridAnchor.for_prior(inst.prior)
    for _ in range(30):
        mean = rng.normal(0.3, 0.5, 4)
        b = GaussianBelief(mean, np.diag(rng.uniform(0.01, 1.0, 4)))
        item = np.eye(4)[rng.integers(4)]
        c = float(rng.choice([0.1, 0.3, 0.6]))
        with_cache = decide_dtddp(b, item, c, 1.0, inst.items, 0.9, 0.1, cache, FAST, anchor)
        without = decide_dtddp(b, item, c, 1.0, inst.items, 0.9, 0.1, None, FAST, anchor)
        assert with_cache == without
    assert cache.hits > 0


def test_dtddp_groups_items_by_projection_law():
    inst = basis_instance(k=5)
    policy = DTDDP(PolicyConfig(PolicyKind.DTDDP, 1.0, FAST), inst)
    assert len(set(policy.group.tolist())) == 2
    assert policy.group[1] == policy.group[4] != policy.group[0]


@pytest.mark.parametrize("kind", list(PolicyKind))
def test_forward_region_monotone_in_cost(kind):
    inst = basis_instance(k=3, heavy_weight=2.0)
    rng = np.random.default_rng(8)
    config = PolicyConfig(kind, 1.0, FAST)
    costs = np.linspace(-0.5, 1.0, 7)
    policies = [bind_policy(config, inst.with_cost(c), DpCache()) for c in costs]
    m = rng.normal(0.3, 0.5, 50)
    v = rng.uniform(0.0, 1.0, 50)
    idx = rng.integers(0, 3, 50)
    draws = rng.standard_normal(50)
    decisions = np.array([p.decide_batch(m, v, idx, draws) for p in policies])
    # forward at c implies forward at every smaller c
    assert np.all(decisions[1:] <= decisions[:-1])


def test_batch_matches_single_decisions():
    inst = basis_instance(k=3, heavy_weight=2.0)
    rng = np.random.default_rng(2)
    cache = DpCache()
    for kind in PolicyKind:
        config = PolicyConfig(kind, 0.7, FAST)
        policy = bind_policy(config, inst, cache)
        for _ in range(10):
            b = GaussianBelief(rng.normal(0.3, 0.4, 3), np.diag(rng.uniform(0, 1, 3)))
            j = int(rng.integers(3))
            item = np.eye(3)[j]
            m, v = b.project(item)
            z = float(rng.standard_normal())
            batch = bool(policy.decide_batch(np.array([m]), np.array([v]), np.array([j]),
                                             np.array([z]))[0])
            if kind is PolicyKind.PURE_EXPLOIT:
                single = decide_pure_exploit(b, item, inst.cost)
            elif kind is PolicyKind.UCB:
                single = decide_ucb(b, item, inst.cost, 0.7)
            elif kind is PolicyKind.LTS:
                single = m + np.sqrt(v) * z > inst.cost
            elif kind is PolicyKind.DTDUCB:
                single = decide_dtducb(b, item, inst.cost, 0.7, inst.items)
            else:
                single = decide_dtddp(b, item, inst.cost, 0.7, inst.items, inst.discount,
                                      inst.noise_scale, cache, FAST,
                                      GridAnchor.for_prior(inst.prior))
            assert batch == single


def test_policy_config_validation():
    with pytest.raises(ConfigurationError):
        PolicyConfig(PolicyKind.UCB, -1.0)
    assert PolicyConfig("DTDDP").kind is PolicyKind.DTDDP
    assert PolicyConfig(PolicyKind.DTDDP).alpha == 1.0
    assert not PolicyKind.LTS.tunable and PolicyKind.DTDUCB.tunable
