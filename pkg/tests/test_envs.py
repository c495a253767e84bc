import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tscomplex import envs, model, rng as rngmod
from tscomplex.envs import (PartitionActionSet, SubsetActionSet, fullinfo_likelihood, makespan_pmf,
                            max_likelihood)

from conftest import all_outcomes, instance_for

thetas = st.lists(st.floats(0.02, 0.98), min_size=4, max_size=4)


def enumerate_makespan(partition, p, durations=(1, 2)):
    """Oracle: sum over all 2^J joint duration outcomes."""
    lo, hi = durations
    out = {}
    for x in itertools.product([0, 1], repeat=len(p)):
        w = np.prod([pj if xj else 1 - pj for pj, xj in zip(p, x)])
        loads = {}
        for j, m in enumerate(partition):
            loads[m] = loads.get(m, 0) + (hi if x[j] else lo)
        span = max(loads.values())
        out[span] = out.get(span, 0.0) + w
    return out


def test_subset_order_and_count():
    s = SubsetActionSet(4, 2)
    assert len(s) == 6
    assert s.subsets == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_partition_counts():
    assert len(PartitionActionSet(3, 2, homogeneous=False)) == 8
    assert len(PartitionActionSet(3, 2, homogeneous=True)) == 4
    assert len(PartitionActionSet(4, 3, homogeneous=True)) == 14


def test_caps():
    with pytest.raises(envs.EnvironmentError_):
        SubsetActionSet(40, 20)
    with pytest.raises(envs.EnvironmentError_):
        PartitionActionSet(20, 3)


def test_fullinfo_fair_coins():
    np.testing.assert_allclose(fullinfo_likelihood([0.5, 0.5], (0, 1)), 0.25)


def test_fullinfo_product():
    p = fullinfo_likelihood([0.25, 0.75], (0, 1))
    assert p[0b01] == pytest.approx(0.75 * 0.75)
    assert fullinfo_likelihood([1 - 1e-9, 1 - 1e-9], (0, 1))[-1] > 1 - 1e-8


def test_max_examples():
    assert max_likelihood([0.5, 0.75], (0, 1))[1] == pytest.approx(0.875)
    assert max_likelihood([0.3, 0.9], (1,))[1] == pytest.approx(0.9)


def test_max_clamped_in_table():
    env = envs.make_env("max", 2, 2)
    inst = instance_for(env, [1 - 1e-7], [1 - 1e-7, 1 - 1e-7], gamma=1e-6)
    assert inst.table.values[0, 0, 1] == pytest.approx(1 - 1e-6)


def test_makespan_examples():
    u = np.array([0, 0.5, 0.5])
    np.testing.assert_allclose(makespan_pmf((0, 0), [u, u]), [0, 0, 0.25, 0.5, 0.25])
    np.testing.assert_allclose(makespan_pmf((0, 1), [u, u]), [0, 0.25, 0.75])
    np.testing.assert_allclose(makespan_pmf((0,), [u]), u)


@settings(max_examples=60, deadline=None)
@given(thetas, st.sampled_from(PartitionActionSet(4, 3, homogeneous=False).partitions))
def test_makespan_matches_enumeration(p, partition):
    pmfs = [envs.bernoulli_duration_pmf(q) for q in p]
    got = makespan_pmf(partition, pmfs)
    want = enumerate_makespan(partition, p)
    assert abs(got.sum() - 1) <= 1e-12
    for v, w in want.items():
        assert abs(got[v] - w) <= 1e-12
    assert abs(sum(got[v] for v in want) - 1) <= 1e-12


def test_scheduling_likelihood_rows_match_enumeration():
    env = envs.make_env("scheduling", 3, n_machines=2)
    theta = np.array([0.2, 0.6, 0.9])
    lik = env.likelihood(theta[None])[0]
    for a, part in enumerate(env.actions):
        want = enumerate_makespan(part, theta)
        for v, w in want.items():
            assert lik[a, env.obs_values.index(v)] == pytest.approx(w, abs=1e-12)
    np.testing.assert_allclose(env.reward_matrix()[0], -np.array(env.obs_values, dtype=float))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.02, 0.98), min_size=3, max_size=3))
def test_m1_envs_coincide_with_mab(theta):
    pts = np.array(theta)[None]
    mab = envs.make_env("mab", 3).likelihood(pts)
    np.testing.assert_allclose(envs.make_env("fullinfo", 3, 1).likelihood(pts), mab, atol=1e-15)
    np.testing.assert_allclose(envs.make_env("max", 3, 1).likelihood(pts), mab, atol=1e-15)


def test_alphabet_sizes():
    assert envs.make_env("fullinfo", 5, 3).n_obs == 8
    assert envs.make_env("max", 5, 3).n_obs == 2


@pytest.mark.parametrize("kind,m", [("fullinfo", 2), ("max", 2), ("mab", None)])
def test_observe_matches_likelihood_on_every_outcome(kind, m):
    env = envs.make_env(kind, 3, m)
    theta = np.array([0.2, 0.55, 0.7])
    lik = env.likelihood(theta[None])[0]
    xs = all_outcomes(3)
    w = np.prod(np.where(xs, theta, 1 - theta), axis=1)
    for a in range(env.n_actions):
        y = env.observe(xs, np.full(len(xs), a))
        np.testing.assert_allclose(np.bincount(y, weights=w, minlength=env.n_obs), lik[a], atol=1e-12)


def test_max_empirical_frequency():
    env = envs.make_env("max", 2, 2)
    g = rngmod.stream(12, 0, rngmod.ROLE_ENV)
    ys = [envs.sample_observation(env, [0.5, 0.75], 0, g) for _ in range(10_000)]
    assert abs(np.mean(ys) - 0.875) <= 0.01


def test_fullinfo_empirical_joint_chisquare():
    env = envs.make_env("fullinfo", 3, 2)
    theta = np.array([0.3, 0.6, 0.8])
    g = rngmod.stream(5, 0, rngmod.ROLE_ENV)
    x = g.random((10_000, 3)) < theta
    y = env.observe(x, np.full(10_000, 1))
    expected = env.likelihood(theta[None])[0, 1] * 10_000
    assert stats.chisquare(np.bincount(y, minlength=4), expected).pvalue > 0.01


def test_near_deterministic_sampling():
    env = envs.make_env("mab", 2)
    g = rngmod.stream(1, 0, 0)
    assert all(envs.sample_observation(env, [1e-9, 1 - 1e-9], 1, g) == 1 for _ in range(100))


def test_reward_stack_law_and_order_independence():
    probs = np.array([[0.2, 0.8], [0.7, 0.3]])
    a = envs.RewardStack(probs, [rngmod.stream(3, 0, rngmod.ROLE_STACK, i) for i in range(2)], chunk=64)
    b = envs.RewardStack(probs, [rngmod.stream(3, 0, rngmod.ROLE_STACK, i) for i in range(2)], chunk=64)
    seq_a = [a.next(0) for _ in range(300)] + [a.next(1) for _ in range(300)]
    inter = [(b.next(0), b.next(1)) for _ in range(300)]
    assert seq_a[:300] == [x for x, _ in inter]
    assert seq_a[300:] == [y for _, y in inter]
    assert abs(np.mean(seq_a[:300]) - 0.8) < 0.08


def test_true_means_and_instance():
    env = envs.make_env("fullinfo", 3, 2)
    np.testing.assert_allclose(env.true_means([0.1, 0.2, 0.3]), [0.3, 0.4, 0.5])
    desc = env.describe()
    assert desc["kind"] == "fullinfo" and desc["n_actions"] == math.comb(3, 2)
