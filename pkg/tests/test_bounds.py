import itertools
import math
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.optimize import brentq

from tscomplex import bounds, envs, geometry
from tscomplex.bounds import (BoundError, SearchTooLarge, bruteforce_search, c_log_t_bruteforce,
                              c_log_t_relaxation, chi, cor2_constant, cor3_bound, cor3_coefficients,
                              cor3_decoupled_form, decoupled_constant, prop2_bound)
from tscomplex.geometry import DecisionRegions, DivergenceMatrix, bernoulli_kl

from conftest import instance_for, random_tiny_instance, raw_instance


def synthetic(rows_by_action, n_actions):
    """Divergence matrix and regions built directly: the best action is the
    last one, row 0 is the truth, and ``rows_by_action[a]`` lists the
    divergence rows of the points in S'_a."""
    rows, region, sp = [np.zeros(n_actions)], [n_actions - 1], {}
    for a in range(n_actions - 1):
        start = len(rows)
        for r in rows_by_action.get(a, []):
            rows.append(np.append(np.asarray(r, float), 0.0))
            region.append(a)
        sp[a] = np.arange(start, len(rows))
    d = np.array(rows)
    regs = DecisionRegions(np.array(region), n_actions - 1, sp, {a: np.array([], int) for a in sp})
    return SimpleNamespace(n_actions=n_actions), DivergenceMatrix(d, 0), regs


def naive_bruteforce(dsub, chi_value, caps):
    """Every elimination order, and every lattice point of the full box at each step."""
    k = len(dsub)
    best = None

    def f(z, rows):
        return min(sum(z[j] * r[j] for j in range(k)) for r in rows)

    def rec(z, frozen):
        nonlocal best
        if len(frozen) == k:
            best = sum(z) if best is None else max(best, sum(z))
            return
        for i in range(k):
            if i in frozen:
                continue
            ranges = [range(z[j], caps[j] + 1) if j not in frozen else [z[j]] for j in range(k)]
            for nz in itertools.product(*ranges):
                zm = list(nz)
                zm[i] -= 1
                if f(nz, dsub[i]) >= chi_value and f(zm, dsub[i]) < chi_value:
                    rec(list(nz), frozen | {i})

    rec([0] * k, frozenset())
    return best


def test_chi():
    assert chi(0.1, 1000) == pytest.approx(11 / 9 * math.log(1000))
    assert chi(0.1, 1000) == pytest.approx(8.44281, abs=1e-5)
    assert chi(0.5, log_t=2.0) == pytest.approx(6.0)
    for bad in (0.0, 1.0):
        with pytest.raises(BoundError):
            chi(bad, 100)
    with pytest.raises(BoundError):
        chi(0.1, 1)


def test_one_dimensional_example_synthetic():
    inst, dm, reg = synthetic({0: [[0.5]]}, 2)
    assert c_log_t_bruteforce(inst, dm, reg, 0.1, 1000) == 17
    assert math.ceil(chi(0.1, 1000) / 0.5) == 17
    assert c_log_t_relaxation(inst, dm, reg, 0.1, 1000) == pytest.approx(2 * chi(0.1, 1000) / 0.5)
    assert c_log_t_relaxation(inst, dm, reg, 0.1, 1000) == pytest.approx(33.77, abs=5e-3)


def test_one_dimensional_example_real_instance():
    # action 0 observes Bernoulli(p) under the truth and Bernoulli(q) under theta',
    # with q solved so that the divergence is exactly 0.5
    q = brentq(lambda x: bernoulli_kl(0.5, x) - 0.5, 0.5, 1 - 1e-9)
    table = [[[0.5, 0.5], [0.4, 0.6]], [[1 - q, q], [0.4, 0.6]]]
    reward = [[0.0, 1.0], [0.0, 1.0]]
    inst = raw_instance(table, reward, [0.5, 0.5], 0)
    dm = geometry.divergence_matrix(inst)
    reg = geometry.decision_regions(inst, dm)
    assert list(reg.s_prime[0]) == [1] and dm.d[1, 0] == pytest.approx(0.5, abs=1e-12)
    assert c_log_t_bruteforce(inst, dm, reg, 0.1, 1000) == 17


def test_single_play_suffices_when_chi_is_small():
    env = envs.make_env("mab", 3)
    inst = instance_for(env, [0.02, 0.5, 0.98], [0.02, 0.5, 0.98])
    dm = geometry.divergence_matrix(inst)
    reg = geometry.decision_regions(inst, dm)
    gs = geometry.gap_summary(reg, dm)
    assert gs.delta_min > chi(0.1, 2)
    assert c_log_t_bruteforce(inst, dm, reg, 0.1, 2) == inst.n_actions - 1


def test_box_bound_cases():
    d, n, T = 0.3, 4, 1e4
    c = chi(0.1, T)
    own_only = synthetic({a: [[d if j == a else 0.0 for j in range(n - 1)]] for a in range(n - 1)}, n)
    assert c_log_t_relaxation(*own_only, 0.1, T) == pytest.approx((n - 1) * 2 * c / d)
    flat = synthetic({a: [[d] * (n - 1)] for a in range(n - 1)}, n)
    assert c_log_t_relaxation(*flat, 0.1, T) <= (n - 1) * 2 * c / d
    assert c_log_t_relaxation(*flat, 0.1, T) == pytest.approx(prop2_bound(n, n - 1, d, 0.1, T), abs=1e-9)


def test_relaxation_matches_prop2_when_all_coordinates_are_large():
    rng = np.random.default_rng(3)
    delta, n, T = 0.2, 5, 1e5
    rows = {a: [np.full(n - 1, delta)] + [delta + rng.uniform(0, 1, n - 1) for _ in range(2)] for a in range(n - 1)}
    val = c_log_t_relaxation(*synthetic(rows, n), 0.1, T)
    assert val == pytest.approx(prop2_bound(n, n - 1, delta, 0.1, T), abs=1e-9)


def test_knapsack_fill_greedy():
    got = bounds.knapsack_fill(np.array([[1.0, 2.0, 0.0]]), 4.0, np.array([3.0, 3.0, 5.0]))
    assert got[0] == pytest.approx(5 + 3 + 0.5)


def test_relaxation_errors():
    with pytest.raises(BoundError, match="delta_a = 0"):
        c_log_t_relaxation(*synthetic({0: [[0.0, 0.4]], 1: [[0.3, 0.3]]}, 3), 0.1, 1e4)
    with pytest.raises(BoundError, match=r"theta=1, action=0"):
        c_log_t_relaxation(*synthetic({0: [[50.0, 0.4]], 1: [[0.3, 0.3]]}, 3), 0.1, 1e4)
    with pytest.raises(BoundError):
        bounds.coordinate_caps([np.array([[0.0]])], 1.0)


def test_empty_regions_are_inactive():
    inst, dm, reg = synthetic({0: [[0.5, 0.1]]}, 3)
    res = bruteforce_search(inst, dm, reg, 0.1, 1000)
    assert res.inactive == [1] and res.value == 17 and res.z == {0: 17}
    empty = synthetic({}, 3)
    assert c_log_t_bruteforce(*empty, 0.1, 1000) == 0
    assert c_log_t_relaxation(*empty, 0.1, 1000) == 0.0


def test_bruteforce_guards():
    with pytest.raises(SearchTooLarge, match="relaxation"):
        c_log_t_bruteforce(*synthetic({0: [[0.5] * 5]}, 6), 0.1, 100)
    with pytest.raises(SearchTooLarge):
        c_log_t_bruteforce(*synthetic({a: [[1e-4] * 3] for a in range(3)}, 4), 0.1, 1e6)


def test_coupled_example_by_hand():
    # theta in S'_0 is informative on both coordinates, theta in S'_1 only on its own
    inst, dm, reg = synthetic({0: [[1.0, 1.0]], 1: [[0.0, 1.0]]}, 3)
    c = chi(0.5, log_t=1.5)  # 4.5
    order_one_first = naive_bruteforce([dm.d[reg.s_prime[a]][:, :2] for a in (0, 1)], c, [20, 20])
    assert c_log_t_bruteforce(inst, dm, reg, 0.5, math.exp(1.5)) == order_one_first
    assert order_one_first == 10


def test_bruteforce_matches_naive_oracle():
    rng = np.random.default_rng(100)
    checked = 0
    for _ in range(30):
        _, inst = random_tiny_instance(rng)
        dm = geometry.divergence_matrix(inst)
        reg = geometry.decision_regions(inst, dm)
        active = [a for a in reg.suboptimal if len(reg.s_prime[a])]
        for T in (3.0, 10.0, 30.0):
            c = chi(0.1, T)
            dsub = [dm.d[np.ix_(reg.s_prime[a], active)] for a in active]
            caps = [2 * int(c / x[:, j].min()) + 3 for j, x in enumerate(dsub)]
            if math.prod(n + 1 for n in caps) > 3000:
                continue
            assert c_log_t_bruteforce(inst, dm, reg, 0.1, T) == naive_bruteforce(dsub, c, caps)
            checked += 1
    assert checked >= 60


def test_bruteforce_below_relaxation_and_monotone():
    rng = np.random.default_rng(7)
    for _ in range(25):
        _, inst = random_tiny_instance(rng)
        dm = geometry.divergence_matrix(inst)
        reg = geometry.decision_regions(inst, dm)
        vals = []
        for T in (1e2, 1e3, 1e4):
            bf = c_log_t_bruteforce(inst, dm, reg, 0.1, T)
            assert bf is not None and bf <= c_log_t_relaxation(inst, dm, reg, 0.1, T) + 1e-9
            vals.append(bf)
        assert vals == sorted(vals)
        assert c_log_t_bruteforce(inst, dm, reg, 0.2, 1e3) >= vals[1]


def test_prop2():
    assert prop2_bound(10, 4, 0.2, 0.1, log_t=10) == pytest.approx(733.3333333333, abs=1e-6)
    c = chi(0.1, 1e4)
    assert prop2_bound(10, 9, 0.2, 0.1, 1e4) == pytest.approx(2 * c / 0.2)
    assert prop2_bound(10, 1, 0.2, 0.1, 1e4) == pytest.approx(9 * 2 * c / 0.2)
    for L in range(1, 10):
        assert prop2_bound(10, L, 0.2, 0.1, 1e4) <= 9 / 0.2 * 2 * c
    for L in (0, 10):
        with pytest.raises(BoundError):
            prop2_bound(10, L, 0.2, 0.1, 1e4)


def test_cor2():
    want = 1 / bernoulli_kl(0.1, 0.5) + 1 / bernoulli_kl(0.2, 0.5)
    assert cor2_constant([0.1, 0.2, 0.5, 0.6], 2) == pytest.approx(want, abs=1e-12)
    assert cor2_constant([0.1, 0.2, 0.5, 0.6], 2) == pytest.approx(7.9051, abs=1e-4)
    assert cor2_constant([0.6, 0.1, 0.5, 0.2], 2) == cor2_constant([0.1, 0.2, 0.5, 0.6], 2)
    assert cor2_constant([0.3, 0.4, 0.7], 2) == pytest.approx(1 / bernoulli_kl(0.3, 0.4))
    with pytest.raises(BoundError):
        cor2_constant([0.1, 0.5, 0.5], 1)


def test_cor2_equals_decoupled_for_mab():
    mu = [0.1, 0.2, 0.3, 0.4, 0.5]
    env = envs.make_env("mab", 5)
    inst = instance_for(env, [round(0.1 * i, 10) for i in range(1, 10)], mu)
    dm = geometry.divergence_matrix(inst)
    gs = geometry.gap_summary(geometry.decision_regions(inst, dm), dm)
    assert decoupled_constant(gs) == pytest.approx(cor2_constant(mu, 1), abs=1e-9)


def test_decoupled_constant_arithmetic():
    gs = geometry.GapSummary(None, {}, {0: 0.5, 1: 0.25}, 0.25, 1, 0.25)
    assert decoupled_constant(gs) == 6.0
    assert decoupled_constant(geometry.GapSummary(None, {}, {}, None, 1, None, vacuous=True)) == 0.0


def test_cor3_coefficients_and_ratio():
    assert cor3_coefficients(5, 2) == (7, 11)
    assert math.comb(5, 2) == 10
    for N in range(3, 13):
        for M in range(1, (N - 1) // 2 + 1):
            c, d = cor3_coefficients(N, M)
            assert Fraction(c, d) == Fraction(1 + math.comb(N - 1, M), 1 + math.comb(N, M))
            ratio = cor3_bound(N, M, 0.3, 0.5, 0.1, 1e4) / cor3_decoupled_form(N, M, 0.3, 0.5, 0.1, 1e4)
            assert ratio == pytest.approx(c / d, rel=1e-14)


def test_cor3_value_and_guards():
    val = cor3_bound(5, 2, 0.25, 0.5, 0.1, 1e4)
    assert val == pytest.approx(math.log(2) * 11 / 9 * 7 * math.log(1e4) / (0.0625 * 0.5))
    for M in (0, 3):
        with pytest.raises(BoundError):
            cor3_bound(5, M, 0.25, 0.5, 0.1, 1e4)
    with pytest.raises(BoundError):
        cor3_bound(5, 2, 1.0, 0.5, 0.1, 1e4)


def test_bound_report_two_arm(two_arm):
    env, inst = two_arm
    rep = bounds.bound_report(inst, 0.1, 1e4, True, env=env, truth=[0.25, 0.75])
    assert rep.c_bruteforce <= rep.c_relaxation
    assert rep.cor2_constant == pytest.approx(1 / bernoulli_kl(0.25, 0.75))
    assert rep.decoupled_constant == pytest.approx(rep.cor2_constant)
    d = rep.as_dict()
    assert d["units"] == "nats" and all(v is None or v >= 0 for k, v in d.items() if isinstance(v, float))


def test_bound_report_flags_vacuous():
    env = envs.make_env("mab", 2)
    from conftest import points_instance
    inst = points_instance(env, [[0.3, 0.6], [0.6, 0.3]], 0)
    rep = bounds.bound_report(inst, 0.1, 1e3, True)
    assert rep.c_bruteforce == 0 and rep.c_relaxation == 0.0 and rep.decoupled_constant == 0.0
    assert any("vacuous" in f for f in rep.flags)
