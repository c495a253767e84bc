"""Complex-bandit environments over independent Bernoulli basic arms.

Each environment fixes an ordered action set, a dense observation alphabet,
the feedback map ``f(x, a)`` and the reward ``h`` as a function of the
observation. It can tabulate exact likelihoods for any batch of parameter
vectors and turn basic-arm outcomes into observation ids.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_GAMMA, InstanceDescriptor, LikelihoodTable, ModelError, ParameterGrid, RewardMap

ACTION_CAP = 10**5
OBS_CAP = 2**16
TABLE_CAP = 6 * 10**7


class EnvironmentError_(ModelError):
    pass


@dataclass(frozen=True)
class SubsetActionSet:
    n_arms: int
    size: int

    def __post_init__(self):
        if not 1 <= self.size <= self.n_arms:
            raise EnvironmentError_(f"subset size must lie in [1, {self.n_arms}]")
        if math.comb(self.n_arms, self.size) > ACTION_CAP:
            raise EnvironmentError_(f"C({self.n_arms},{self.size}) exceeds the action cap {ACTION_CAP}")

    @property
    def subsets(self) -> list[tuple[int, ...]]:
        return list(itertools.combinations(range(self.n_arms), self.size))

    def __len__(self):
        return math.comb(self.n_arms, self.size)


@dataclass(frozen=True)
class PartitionActionSet:
    """Assignments of jobs to machines. With homogeneous machines only one
    representative per relabelling is kept (restricted growth strings)."""

    n_jobs: int
    n_machines: int
    homogeneous: bool = True

    def __post_init__(self):
        if self.n_jobs < 1 or self.n_machines < 1:
            raise EnvironmentError_("need at least one job and one machine")
        if self.n_machines**self.n_jobs > ACTION_CAP:
            raise EnvironmentError_(f"K^J = {self.n_machines ** self.n_jobs} exceeds the action cap {ACTION_CAP}")

    @property
    def partitions(self) -> list[tuple[int, ...]]:
        allp = itertools.product(range(self.n_machines), repeat=self.n_jobs)
        if not self.homogeneous:
            return list(allp)
        out = []
        for p in allp:
            top = -1
            for m in p:
                if m > top + 1:
                    break
                top = max(top, m)
            else:
                out.append(p)
        return out

    def __len__(self):
        return len(self.partitions)


def fullinfo_likelihood(theta, subset) -> np.ndarray:
    """Law of the observed bit vector (first subset element = most significant bit)."""
    theta = np.asarray(theta, dtype=float)
    pts = np.atleast_2d(theta)
    m = len(subset)
    ids = np.arange(2**m)
    p = np.ones((pts.shape[0], 2**m))
    for k, arm in enumerate(subset):
        bit = (ids >> (m - 1 - k)) & 1
        p *= np.where(bit[None, :] == 1, pts[:, [arm]], 1.0 - pts[:, [arm]])
    return p[0] if theta.ndim == 1 else p


def max_likelihood(theta, subset) -> np.ndarray:
    """[P(max = 0), P(max = 1)] for the MAX of the chosen coordinates."""
    theta = np.asarray(theta, dtype=float)
    p0 = np.prod(1.0 - np.atleast_2d(theta)[:, list(subset)], axis=1)
    out = np.stack([p0, 1.0 - p0], axis=1)
    return out[0] if theta.ndim == 1 else out


def latency_pmf(job_pmfs) -> np.ndarray:
    """Sum of independent integer durations; pmf indexed by value from 0."""
    pmf = np.array([1.0])
    for p in job_pmfs:
        pmf = np.convolve(pmf, np.asarray(p, dtype=float))
    return pmf


def makespan_pmf(partition, job_pmfs) -> np.ndarray:
    """Distribution of the maximum machine latency.

    ``partition[j]`` is the machine of job j and ``job_pmfs[j]`` the pmf of its
    duration over 0, 1, 2, ... Machines without jobs have latency 0. Returns a
    pmf indexed by makespan value.
    """
    if len(partition) != len(job_pmfs):
        raise EnvironmentError_("every job needs exactly one machine")
    machines = sorted(set(partition)) or [0]
    lat = [latency_pmf([job_pmfs[j] for j, m in enumerate(partition) if m == k]) for k in machines]
    top = max(len(p) for p in lat)
    cdf = np.ones(top)
    for p in lat:
        c = np.cumsum(np.pad(p, (0, top - len(p))))
        cdf *= np.minimum(c, 1.0)
    return np.diff(cdf, prepend=0.0)


def bernoulli_duration_pmf(p: float, durations=(1, 2)) -> np.ndarray:
    lo, hi = durations
    pmf = np.zeros(max(lo, hi) + 1)
    pmf[lo] += 1.0 - p
    pmf[hi] += p
    return pmf


class Environment:
    """Base class. Subclasses set ``kind``, ``n_arms``, ``actions``,
    ``obs_values`` and implement ``likelihood``, ``reward_matrix`` and ``observe``."""

    kind = "abstract"
    n_arms: int
    actions: list
    obs_values: list

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_obs(self) -> int:
        return len(self.obs_values)

    def likelihood(self, points: np.ndarray) -> np.ndarray:
        """Unclamped table of shape (len(points), n_actions, n_obs)."""
        raise NotImplementedError

    def reward_matrix(self) -> np.ndarray:
        raise NotImplementedError

    def observe(self, outcomes: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Observation ids for a batch of basic-arm outcome rows (bool, shape (R, n_arms))."""
        raise NotImplementedError

    def observed_bits(self, action: int, obs: int):
        """(arm, bit) pairs revealed by an observation, or None when the
        feedback does not factor over arms."""
        return None

    @property
    def factorizes(self) -> bool:
        return False

    def true_means(self, mu) -> np.ndarray:
        lik = self.likelihood(np.asarray(mu, dtype=float)[None, :])[0]
        return np.einsum("ay,ay->a", lik, self.reward_matrix())

    def build_instance(self, grid: ParameterGrid, truth_index: int, gamma: float = DEFAULT_GAMMA) -> InstanceDescriptor:
        if grid.n_arms != self.n_arms:
            raise EnvironmentError_(f"grid has {grid.n_arms} arms, environment needs {self.n_arms}")
        size = len(grid) * self.n_actions * self.n_obs
        if size > TABLE_CAP:
            raise EnvironmentError_(f"likelihood table of {size} entries exceeds cap {TABLE_CAP}")
        table = LikelihoodTable.from_raw(self.likelihood(grid.points), gamma)
        return InstanceDescriptor(grid, table, RewardMap(self.reward_matrix()), truth_index,
                                  tuple(self.actions))

    def describe(self) -> dict:
        return {"kind": self.kind, "n_arms": self.n_arms, "n_actions": self.n_actions, "n_obs": self.n_obs}


class FullInfoSubsets(Environment):
    """Play a size-M subset, observe every chosen arm, reward = number of ones.
    With M = 1 this is the standard Bernoulli bandit."""

    kind = "fullinfo"

    def __init__(self, n_arms: int, subset_size: int):
        self.action_set = SubsetActionSet(n_arms, subset_size)
        if 2**subset_size > OBS_CAP:
            raise EnvironmentError_(f"2^{subset_size} observations exceeds cap {OBS_CAP}")
        self.n_arms = n_arms
        self.m = subset_size
        self.actions = self.action_set.subsets
        self.obs_values = list(itertools.product((0, 1), repeat=subset_size))
        self._members = np.array(self.actions, dtype=np.intp)
        self._shift = (self.m - 1 - np.arange(self.m))

    def likelihood(self, points):
        points = np.atleast_2d(points)
        out = np.empty((points.shape[0], self.n_actions, self.n_obs))
        for a, s in enumerate(self.actions):
            out[:, a, :] = fullinfo_likelihood(points, s)
        return out

    def reward_matrix(self):
        pop = np.array([sum(b) for b in self.obs_values], dtype=float)
        return np.tile(pop, (self.n_actions, 1))

    def observe(self, outcomes, actions):
        rows = np.arange(len(actions))[:, None]
        bits = outcomes[rows, self._members[actions]].astype(np.intp)
        return (bits << self._shift).sum(axis=1)

    def observed_bits(self, action, obs):
        return [(arm, (obs >> (self.m - 1 - k)) & 1) for k, arm in enumerate(self.actions[action])]

    @property
    def factorizes(self):
        return True

    def describe(self):
        return {**super().describe(), "subset_size": self.m}


class StandardMAB(FullInfoSubsets):
    kind = "mab"

    def __init__(self, n_arms: int):
        super().__init__(n_arms, 1)


class MaxSubsets(Environment):
    """Play a size-M subset, observe (and earn) only the MAX of its arms."""

    kind = "max"

    def __init__(self, n_arms: int, subset_size: int):
        self.action_set = SubsetActionSet(n_arms, subset_size)
        self.n_arms = n_arms
        self.m = subset_size
        self.actions = self.action_set.subsets
        self.obs_values = [0, 1]
        self._members = np.array(self.actions, dtype=np.intp)

    def likelihood(self, points):
        points = np.atleast_2d(points)
        p0 = np.prod(1.0 - points[:, self._members], axis=2)
        return np.stack([p0, 1.0 - p0], axis=2)

    def reward_matrix(self):
        return np.tile([0.0, 1.0], (self.n_actions, 1))

    def observe(self, outcomes, actions):
        rows = np.arange(len(actions))[:, None]
        return outcomes[rows, self._members[actions]].any(axis=1).astype(np.intp)

    def describe(self):
        return {**super().describe(), "subset_size": self.m}


class MakespanScheduling(Environment):
    """Assign J jobs to K machines, observe the makespan, earn its negative.

    Job j takes ``durations[1]`` with probability theta_j, else ``durations[0]``.
    """

    kind = "scheduling"

    def __init__(self, n_jobs: int, n_machines: int = 2, durations=(1, 2), homogeneous: bool = True):
        lo, hi = (int(d) for d in durations)
        if lo < 0 or hi < 0 or lo == hi:
            raise EnvironmentError_("durations must be two distinct nonnegative integers")
        self.action_set = PartitionActionSet(n_jobs, n_machines, homogeneous)
        self.n_arms = n_jobs
        self.n_machines = n_machines
        self.durations = (lo, hi)
        self.actions = self.action_set.partitions
        self._assign = np.array(self.actions, dtype=np.intp)
        vmax = n_jobs * max(lo, hi)
        support = np.zeros(vmax + 1, dtype=bool)
        half = np.full((1, n_jobs), 0.5)
        for a in range(self.n_actions):
            support |= self._pmf_batch(half, a)[0] > 0
        self.obs_values = [int(v) for v in np.flatnonzero(support)]
        if len(self.obs_values) > OBS_CAP:
            raise EnvironmentError_("makespan alphabet exceeds cap")
        self._value_to_id = np.full(vmax + 1, -1, dtype=np.intp)
        self._value_to_id[self.obs_values] = np.arange(len(self.obs_values))

    def _pmf_batch(self, points, a) -> np.ndarray:
        """Makespan pmf over values 0..J*d_hi for every row of ``points``."""
        lo, hi = self.durations
        n, vmax = points.shape[0], self.n_arms * max(lo, hi)
        cdf = np.ones((n, vmax + 1))
        for k in range(self.n_machines):
            lat = np.zeros((n, vmax + 1))
            lat[:, 0] = 1.0
            for j in np.flatnonzero(self._assign[a] == k):
                p = points[:, [j]]
                new = np.zeros_like(lat)
                new[:, lo:] += (1.0 - p) * lat[:, : vmax + 1 - lo]
                new[:, hi:] += p * lat[:, : vmax + 1 - hi]
                lat = new
            cdf *= np.minimum(np.cumsum(lat, axis=1), 1.0)
        return np.diff(cdf, axis=1, prepend=0.0)

    def likelihood(self, points):
        points = np.atleast_2d(points)
        out = np.empty((points.shape[0], self.n_actions, self.n_obs))
        for a in range(self.n_actions):
            out[:, a, :] = self._pmf_batch(points, a)[:, self.obs_values]
        return out

    def reward_matrix(self):
        return np.tile(-np.array(self.obs_values, dtype=float), (self.n_actions, 1))

    def observe(self, outcomes, actions):
        lo, hi = self.durations
        dur = np.where(outcomes, hi, lo)
        assign = self._assign[actions]
        lat = np.zeros((len(actions), self.n_machines), dtype=np.intp)
        for k in range(self.n_machines):
            lat[:, k] = (dur * (assign == k)).sum(axis=1)
        return self._value_to_id[lat.max(axis=1)]

    def describe(self):
        return {**super().describe(), "n_machines": self.n_machines, "durations": list(self.durations)}


def make_env(kind: str, n_arms: int, subset_size: int | None = None, n_machines: int = 2,
             durations=(1, 2), homogeneous: bool = True) -> Environment:
    if kind == "mab":
        return StandardMAB(n_arms)
    if kind == "fullinfo":
        return FullInfoSubsets(n_arms, subset_size)
    if kind == "max":
        return MaxSubsets(n_arms, subset_size)
    if kind == "scheduling":
        return MakespanScheduling(n_arms, n_machines, durations, homogeneous)
    raise EnvironmentError_(f"unknown environment kind {kind!r}")


def sample_observation(env: Environment, theta, action: int, rng: np.random.Generator) -> int:
    """Draw basic-arm outcomes under ``theta`` and apply the feedback map."""
    x = rng.random(env.n_arms) < np.asarray(theta, dtype=float)
    return int(env.observe(x[None, :], np.array([action]))[0])


class RewardStack:
    """Pre-drawn observation streams Q_a(1), Q_a(2), ... per action.

    The k-th play of action a returns Q_a(k) regardless of when it happens.
    Streams are filled in fixed-size chunks from one generator per action, so
    the values do not depend on the order of plays.
    """

    def __init__(self, probs: np.ndarray, generators, chunk: int = 4096):
        self._cdf = np.cumsum(np.asarray(probs, dtype=float), axis=1)
        self._cdf[:, -1] = 1.0
        self._gens = list(generators)
        self._chunk = chunk
        self._buf = [np.empty(0, dtype=np.intp) for _ in self._gens]
        self.counts = np.zeros(len(self._gens), dtype=np.int64)

    def next(self, action: int) -> int:
        k = self.counts[action]
        if k >= len(self._buf[action]):
            u = self._gens[action].random(self._chunk)
            new = np.searchsorted(self._cdf[action], u, side="right")
            self._buf[action] = np.concatenate([self._buf[action], new])
        self.counts[action] += 1
        return int(self._buf[action][k])
