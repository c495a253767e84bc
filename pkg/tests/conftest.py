import itertools

import numpy as np
import pytest

from tscomplex import envs, model

ACCEPTANCE_RESULTS = []


def instance_for(env, values, truth, gamma=model.DEFAULT_GAMMA):
    grid = model.build_uniform_grid(values, env.n_arms)
    idx, dist = grid.nearest(truth)
    assert dist == 0
    return env.build_instance(grid, idx, gamma)


def points_instance(env, points, truth_index, prior=None):
    pts = np.asarray(points, dtype=float)
    prior = np.full(len(pts), 1.0 / len(pts)) if prior is None else prior
    return env.build_instance(model.ParameterGrid(pts, prior), truth_index)


def raw_instance(table, reward, prior, truth_index, points=None):
    """Instance from an explicit likelihood table (theta, action, obs)."""
    table = np.asarray(table, dtype=float)
    if points is None:
        points = np.linspace(0.1, 0.9, table.shape[0])[:, None]
    grid = model.ParameterGrid(points, prior)
    return model.InstanceDescriptor(grid, model.LikelihoodTable.from_raw(table), model.RewardMap(reward),
                                    truth_index)


@pytest.fixture
def two_arm():
    env = envs.make_env("mab", 2)
    return env, instance_for(env, [0.25, 0.75], [0.25, 0.75])


@pytest.fixture
def bernoulli_line():
    """One arm, grid {0.25, 0.75}, uniform prior."""
    env = envs.make_env("mab", 1)
    return env, instance_for(env, [0.25, 0.75], [0.75])


TINY_VALUES = (0.2, 0.35, 0.5, 0.65, 0.8)
_TINY_FULL = np.array(list(itertools.product(TINY_VALUES, repeat=3)))


def random_tiny_instance(rng):
    """A validated instance with three actions and at most ten grid points.

    The points are drawn from a 5^3 product grid, so at least one of them
    lies in some S' region of the full grid.
    """
    from tscomplex import geometry

    full = _TINY_FULL
    uniform = np.full(len(full), 1.0 / len(full))
    while True:
        kind = str(rng.choice(["mab", "fullinfo", "max"]))
        env = envs.make_env(kind, 3, None if kind == "mab" else 2)
        ti = int(rng.integers(len(full)))
        big = env.build_instance(model.ParameterGrid(full, uniform), ti)
        if not model.validate_instance(big).ok:
            continue
        reg = geometry.decision_regions(big, geometry.divergence_matrix(big))
        sp = np.concatenate(list(reg.s_prime.values()))
        if not len(sp):
            continue
        ns = int(rng.integers(1, min(len(sp), 6) + 1))
        pick = [int(i) for i in rng.choice(sp, ns, replace=False)]
        rest = [i for i in range(len(full)) if i != ti and i not in pick]
        pick += [int(i) for i in rng.choice(rest, int(rng.integers(0, 10 - ns)), replace=False)]
        idx = [ti] + pick
        rng.shuffle(idx)
        inst = env.build_instance(model.ParameterGrid(full[idx], np.full(len(idx), 1.0 / len(idx))), idx.index(ti))
        if model.validate_instance(inst).ok:
            return kind, inst


def all_outcomes(n):
    return np.array(list(itertools.product([0, 1], repeat=n)), dtype=bool)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
