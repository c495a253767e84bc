"""Decision policies and the episode loop.

Agents act on a batch of independent replications at once: every array has
one row per replication. Each replication owns its random streams (see
:mod:`tscomplex.rng`), so its trace does not depend on how many other
replications share the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .envs import Environment, RewardStack
from .model import InstanceDescriptor, optimal_action
from .posterior import DenseEngine, FactoredEngine, ParticleEngine, PosteriorState, sample

AGENT_KINDS = ("thompson", "thompson-decoupled", "ucb1", "random", "fixed")
DENSE_LIMIT = 10**5


# -- scalar policy rules --------------------------------------------------------


def ts_choose(posterior: PosteriorState, instance: InstanceDescriptor, rng: np.random.Generator) -> int:
    """Draw a parameter from the posterior and play its optimal action."""
    return optimal_action(instance, sample(posterior, rng))


@dataclass
class AgentState:
    kind: str
    counts: np.ndarray
    sums: np.ndarray
    posterior: PosteriorState | None = None

    @classmethod
    def fresh(cls, kind: str, n_actions: int) -> "AgentState":
        return cls(kind, np.zeros(n_actions, dtype=np.int64), np.zeros(n_actions))

    def record(self, action: int, reward: float):
        self.counts[action] += 1
        self.sums[action] += reward


def ucb1_index(counts: np.ndarray, sums: np.ndarray, t: int) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return sums / counts + np.sqrt(2.0 * math.log(t) / counts)


def ucb1_choose(state: AgentState, t: int) -> int:
    """Round-robin for the first |A| steps, then the largest UCB1 index.
    ``t`` counts steps from 1."""
    n = len(state.counts)
    if t <= n:
        return t - 1
    return int(np.argmax(ucb1_index(state.counts, state.sums, t)))


# -- batched agents --------------------------------------------------------------


def _normalized_rewards(instance: InstanceDescriptor) -> tuple[np.ndarray, float, float]:
    r = instance.rewards.reward
    lo, hi = float(r.min()), float(r.max())
    span = hi - lo if hi > lo else 1.0
    return (r - lo) / span, lo, span


def _inverse_cdf_rows(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    c = np.cumsum(w, axis=-1)
    k = (c <= (u * c[..., -1])[..., None]).sum(axis=-1)
    return np.minimum(k, w.shape[-1] - 1)


class ThompsonAgent:
    """Posterior sampling over the grid, then the sampled model's best action."""

    width = 1

    def __init__(self, instance: InstanceDescriptor, engine):
        self.engine = engine
        self.opt = instance.optimal_actions()

    def choose(self, t, u):
        return self.opt[self.engine.sample(u[:, 0])]

    def observe(self, actions, obs, rnorm):
        self.engine.update(actions, obs)


class DecoupledThompsonAgent:
    """Each complex action is its own arm with a 1-D grid posterior over its
    normalised mean reward.

    The grid of an action is the set of normalised means it takes across the
    coupled prior support (at most ``max_values`` points, evenly spaced when
    there are more). An observed normalised reward r counts as r successes and
    1 - r failures of a Bernoulli with that mean.
    """

    def __init__(self, instance: InstanceDescriptor, n_reps: int, max_values: int = 256):
        rn, lo, span = _normalized_rewards(instance)
        g = instance.table.gamma
        means = (instance.means - lo) / span
        grids = []
        for a in range(instance.n_actions):
            v = np.unique(np.round(means[:, a], 12))
            if len(v) > max_values:
                v = np.linspace(v[0], v[-1], max_values)
            grids.append(np.clip(v, g, 1 - g))
        width = max(len(v) for v in grids)
        self.vals = np.zeros((instance.n_actions, width))
        base = np.full((instance.n_actions, width), -np.inf)
        self.delta = np.zeros((instance.n_actions, rn.shape[1], width))
        for a, v in enumerate(grids):
            self.vals[a, : len(v)] = v
            base[a, : len(v)] = -math.log(len(v))
            self.delta[a, :, : len(v)] = rn[a][:, None] * np.log(v) + (1 - rn[a][:, None]) * np.log1p(-v)
        self.lw = np.tile(base, (n_reps, 1, 1))
        self.width = instance.n_actions
        self._rows = np.arange(n_reps)

    def choose(self, t, u):
        k = _inverse_cdf_rows(np.exp(self.lw), u)
        sampled = np.take_along_axis(self.vals[None], k[..., None], axis=2)[..., 0]
        return np.argmax(sampled, axis=1)

    def observe(self, actions, obs, rnorm):
        r = self._rows
        row = self.lw[r, actions] + self.delta[actions, obs]
        self.lw[r, actions] = row - row.max(axis=1, keepdims=True)


class UCB1Agent:
    width = 0

    def __init__(self, n_actions: int, n_reps: int):
        self.counts = np.zeros((n_reps, n_actions))
        self.sums = np.zeros((n_reps, n_actions))
        self.n_actions = n_actions

    def choose(self, t, u):
        if t <= self.n_actions:
            return np.full(len(self.counts), t - 1, dtype=np.intp)
        return np.argmax(ucb1_index(self.counts, self.sums, t), axis=1)

    def observe(self, actions, obs, rnorm):
        r = np.arange(len(actions))
        self.counts[r, actions] += 1
        self.sums[r, actions] += rnorm


class RandomAgent:
    width = 1

    def __init__(self, n_actions: int):
        self.n_actions = n_actions

    def choose(self, t, u):
        return np.minimum((u[:, 0] * self.n_actions).astype(np.intp), self.n_actions - 1)

    def observe(self, actions, obs, rnorm):
        pass


class FixedAgent:
    width = 0

    def __init__(self, action: int, n_reps: int):
        self.action = np.full(n_reps, action, dtype=np.intp)

    def choose(self, t, u):
        return self.action

    def observe(self, actions, obs, rnorm):
        pass


@dataclass
class AgentSpec:
    kind: str
    engine: str = "exact"
    n_particles: int = 1000
    action: int | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}; expected one of {AGENT_KINDS}")
        if self.engine not in ("exact", "particle"):
            raise ValueError(f"unknown posterior engine {self.engine!r}")

    @property
    def name(self) -> str:
        return self.label or self.kind


def make_posterior_engine(instance, env, spec: AgentSpec, n_reps, master_seed, agent_index, reps):
    if spec.engine == "particle":
        gens = [rngmod.stream(master_seed, r, rngmod.ROLE_FILTER, agent_index) for r in reps]
        return ParticleEngine(instance.grid, instance.table, spec.n_particles, gens)
    if (env is not None and env.factorizes and instance.grid.is_uniform_product
            and instance.table.clamped_rows == 0):
        return FactoredEngine(instance.grid, env, instance.table.gamma, n_reps)
    if len(instance.grid) > DENSE_LIMIT:
        raise ValueError(f"|Theta| = {len(instance.grid)} exceeds {DENSE_LIMIT}; use the particle engine")
    return DenseEngine(instance.grid, instance.table, n_reps)


def make_agent(instance, env, spec: AgentSpec, n_reps, master_seed=0, agent_index=0, reps=None):
    reps = list(range(n_reps)) if reps is None else reps
    if spec.kind == "thompson":
        return ThompsonAgent(instance, make_posterior_engine(instance, env, spec, n_reps, master_seed,
                                                             agent_index, reps))
    if spec.kind == "thompson-decoupled":
        return DecoupledThompsonAgent(instance, n_reps)
    if spec.kind == "ucb1":
        return UCB1Agent(instance.n_actions, n_reps)
    if spec.kind == "random":
        return RandomAgent(instance.n_actions)
    if spec.action is None:
        raise ValueError("the fixed agent needs an action")
    return FixedAgent(spec.action, n_reps)


# -- episodes -----------------------------------------------------------------------


@dataclass
class RegretTrace:
    """One episode: per-step action, observation, pseudo-regret, realised
    reward and cumulative number of suboptimal plays."""

    action: np.ndarray
    observation: np.ndarray
    regret: np.ndarray
    reward: np.ndarray
    suboptimal: np.ndarray
    seed: int
    replication: int
    agent: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.action)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regret)


def run_batch(instance: InstanceDescriptor, env: Environment, spec: AgentSpec, horizon: int,
              master_seed: int, reps, truth=None, agent_index: int = 0, env_mode: str = "fresh",
              snapshot_every: int = 0, on_snapshot=None) -> list[RegretTrace]:
    """Run one agent for ``horizon`` steps on every replication in ``reps``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    reps = list(reps)
    n = len(reps)
    mu = instance.grid.points[instance.truth_index] if truth is None else np.asarray(truth, dtype=float)
    true_means = env.true_means(mu)
    best = int(np.argmax(true_means))
    gaps = true_means[best] - true_means
    rn, _, _ = _normalized_rewards(instance)
    rewards = instance.rewards.reward

    agent = make_agent(instance, env, spec, n, master_seed, agent_index, reps)
    agent_u = rngmod.BatchUniforms([rngmod.stream(master_seed, r, rngmod.ROLE_AGENT, agent_index) for r in reps],
                                   agent.width)
    if env_mode == "fresh":
        env_u = rngmod.BatchUniforms([rngmod.stream(master_seed, r, rngmod.ROLE_ENV) for r in reps], env.n_arms)
        stacks = None
    elif env_mode == "reward-stack":
        probs = env.likelihood(mu[None, :])[0]
        stacks = [RewardStack(probs, [rngmod.stream(master_seed, r, rngmod.ROLE_STACK, a)
                                      for a in range(env.n_actions)]) for r in reps]
    else:
        raise ValueError(f"unknown environment mode {env_mode!r}")

    acts = np.empty((horizon, n), dtype=np.intp)
    obss = np.empty((horizon, n), dtype=np.intp)
    for t in range(1, horizon + 1):
        a = agent.choose(t, agent_u.next())
        if stacks is None:
            y = env.observe(env_u.next() < mu, a)
        else:
            y = np.array([s.next(int(ai)) for s, ai in zip(stacks, a)], dtype=np.intp)
        agent.observe(a, y, rn[a, y])
        acts[t - 1] = a
        obss[t - 1] = y
        if snapshot_every and on_snapshot is not None and t % snapshot_every == 0 and hasattr(agent, "engine"):
            for i, r in enumerate(reps):
                on_snapshot(t, r, agent.engine.weights(i))

    out = []
    for i, r in enumerate(reps):
        a, y = acts[:, i].copy(), obss[:, i].copy()
        out.append(RegretTrace(
            action=a, observation=y, regret=gaps[a], reward=rewards[a, y],
            suboptimal=np.cumsum(a != best), seed=int(master_seed), replication=int(r), agent=spec.name,
            meta={"best_action": best, "engine": getattr(getattr(agent, "engine", None), "name", None)},
        ))
    return out


def run_episode(instance, env, kind, horizon, seed, truth=None, **kw) -> RegretTrace:
    spec = kind if isinstance(kind, AgentSpec) else AgentSpec(kind)
    return run_batch(instance, env, spec, horizon, seed, [0], truth=truth, **kw)[0]
