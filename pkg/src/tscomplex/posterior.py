"""Posterior over a finite parameter grid.

Scalar helpers (``init_posterior``, ``update``, ``exact_from_history``,
``sample``, ``pf_update``) work on one posterior. The ``*Engine`` classes hold
one posterior per replication and advance all of them together; the harness
uses those.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LikelihoodTable, ParameterGrid


def _normalize_log(lw: np.ndarray, axis=-1) -> tuple[np.ndarray, np.ndarray]:
    top = np.max(lw, axis=axis, keepdims=True)
    z = top + np.log(np.sum(np.exp(lw - top), axis=axis, keepdims=True))
    return lw - z, np.squeeze(z, axis=axis)


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """Log-weights over the grid, normalised so that they exponentiate to a
    distribution. ``normalizer`` is the log-sum removed at the last step."""

    log_weights: np.ndarray
    normalizer: float = 0.0

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def log_ratio(self, truth_index: int) -> np.ndarray:
        """log W_t(theta): log-weight relative to the true parameter."""
        return self.log_weights - self.log_weights[truth_index]


@dataclass
class HistoryCounts:
    counts: np.ndarray

    @classmethod
    def empty(cls, n_actions: int, n_obs: int) -> "HistoryCounts":
        return cls(np.zeros((n_actions, n_obs), dtype=np.int64))

    @classmethod
    def from_pairs(cls, pairs, n_actions: int, n_obs: int) -> "HistoryCounts":
        h = cls.empty(n_actions, n_obs)
        for a, y in pairs:
            h.counts[a, y] += 1
        return h

    def add(self, action: int, obs: int):
        self.counts[action, obs] += 1

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def t(self) -> int:
        return int(self.counts.sum())


def _from_log(lw) -> PosteriorState:
    with np.errstate(divide="ignore"):
        norm, z = _normalize_log(np.asarray(lw, dtype=float))
    return PosteriorState(norm, float(z))


def init_posterior(grid: ParameterGrid) -> PosteriorState:
    with np.errstate(divide="ignore"):
        return _from_log(np.log(grid.prior))


def update(state: PosteriorState, action: int, obs: int, table: LikelihoodTable) -> PosteriorState:
    """One Bayes step: multiply by l(obs; action, theta) and renormalise."""
    return _from_log(state.log_weights + np.log(table.values[:, action, obs]))


def exact_from_history(grid: ParameterGrid, counts: HistoryCounts, table: LikelihoodTable) -> PosteriorState:
    """Posterior from the count matrix alone: prior times the product of
    likelihoods, one factor per (action, observation) occurrence."""
    ll = np.einsum("ay,kay->k", counts.counts.astype(float), table.log_values())
    with np.errstate(divide="ignore"):
        return _from_log(np.log(grid.prior) + ll)


def sample(state: PosteriorState, rng: np.random.Generator) -> int:
    return sample_with_uniform(state.weights, rng.random())


def sample_with_uniform(weights: np.ndarray, u: float) -> int:
    """Inverse CDF of ``weights`` at ``u`` in [0, 1)."""
    c = np.cumsum(weights)
    return int(min(np.searchsorted(c, u * c[-1], side="right"), len(c) - 1))


# -- particle filter ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    indices: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def grid_weights(self, n_theta: int) -> np.ndarray:
        return np.bincount(self.indices, weights=self.weights, minlength=n_theta)


def systematic_resample(weights: np.ndarray, u: float, n: int | None = None) -> np.ndarray:
    """``n`` indices (default ``len(weights)``) read off the weight CDF at
    the evenly spaced positions (u + i) / n."""
    n = len(weights) if n is None else n
    c = np.cumsum(weights)
    c /= c[-1]
    return np.minimum(np.searchsorted(c, (u + np.arange(n)) / n, side="right"), len(c) - 1)


def init_cloud(grid: ParameterGrid, n_particles: int, rng: np.random.Generator) -> ParticleCloud:
    idx = systematic_resample(grid.prior, rng.random(), n_particles)
    return ParticleCloud(idx, np.full(n_particles, 1.0 / n_particles))


def pf_update(cloud: ParticleCloud, action: int, obs: int, table: LikelihoodTable,
              rng: np.random.Generator, threshold: float = 0.5) -> ParticleCloud:
    """Reweight by the likelihood; resample systematically when ESS < threshold * n."""
    w = cloud.weights * table.values[cloud.indices, action, obs]
    w = w / w.sum()
    out = ParticleCloud(cloud.indices, w)
    if out.ess < threshold * cloud.n:
        pick = systematic_resample(w, rng.random())
        out = ParticleCloud(cloud.indices[pick], np.full(cloud.n, 1.0 / cloud.n))
    return out


def pf_sample(cloud: ParticleCloud, rng: np.random.Generator) -> int:
    return int(cloud.indices[sample_with_uniform(cloud.weights, rng.random())])


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# -- batched engines -----------------------------------------------------------


class DenseEngine:
    """Exact log-space posteriors, one row per replication."""

    name = "exact"

    def __init__(self, grid: ParameterGrid, table: LikelihoodTable, n_reps: int):
        self.loglik = np.ascontiguousarray(np.transpose(table.log_values(), (1, 2, 0)))
        with np.errstate(divide="ignore"):
            lp = np.log(grid.prior)
        self.lw = np.tile(lp, (n_reps, 1))
        self.n_theta = len(grid)

    def update(self, actions, obs):
        self.lw += self.loglik[actions, obs]
        self.lw -= self.lw.max(axis=1, keepdims=True)

    def sample(self, u: np.ndarray) -> np.ndarray:
        c = np.cumsum(np.exp(self.lw), axis=1)
        target = u * c[:, -1]
        idx = (c <= target[:, None]).sum(axis=1)
        return np.minimum(idx, self.n_theta - 1)

    def weights(self, r: int) -> np.ndarray:
        w = np.exp(self.lw[r])
        return w / w.sum()


class FactoredEngine:
    """Exact posteriors for a uniform product prior and arm-separable feedback.

    The posterior is then a product of per-arm posteriors over the value list.
    Sampling inverts the CDF of the full lexicographically ordered grid with a
    single uniform, one coordinate at a time, so it selects the same grid
    point as :class:`DenseEngine` for the same uniform (up to rounding).
    """

    name = "exact-factored"

    def __init__(self, grid: ParameterGrid, env, gamma: float, n_reps: int):
        if not grid.is_uniform_product or not env.factorizes:
            raise ValueError("factored posterior needs a uniform product grid and arm-separable feedback")
        vals = np.clip(np.array(grid.values), gamma, 1 - gamma)
        logf = np.stack([np.log1p(-vals), np.log(vals)])  # [bit, value]
        n, v = grid.n_arms, len(vals)
        self.delta = np.zeros((env.n_actions, env.n_obs, n, v))
        for a in range(env.n_actions):
            for y in range(env.n_obs):
                for arm, bit in env.observed_bits(a, y):
                    self.delta[a, y, arm] += logf[bit]
        self.lw = np.zeros((n_reps, n, v))
        self.n_arms, self.n_vals = n, v
        self.radix = v ** np.arange(n - 1, -1, -1)

    def update(self, actions, obs):
        self.lw += self.delta[actions, obs]
        self.lw -= self.lw.max(axis=2, keepdims=True)

    def sample(self, u: np.ndarray) -> np.ndarray:
        u = np.array(u, dtype=float)
        flat = np.zeros(len(u), dtype=np.int64)
        rows = np.arange(len(u))
        for i in range(self.n_arms):
            w = np.exp(self.lw[:, i, :])
            c = np.cumsum(w, axis=1)
            target = u * c[:, -1]
            k = np.minimum((c <= target[:, None]).sum(axis=1), self.n_vals - 1)
            lo = np.where(k > 0, c[rows, k - 1], 0.0)
            u = np.clip((target - lo) / w[rows, k], 0.0, np.nextafter(1.0, 0.0))
            flat += k * self.radix[i]
        return flat

    def weights(self, r: int) -> np.ndarray:
        out = np.ones(1)
        for i in range(self.n_arms):
            w = np.exp(self.lw[r, i])
            out = np.outer(out, w / w.sum()).ravel()
        return out


class ParticleEngine:
    """Particle clouds restricted to the grid, one per replication."""

    name = "particle"

    def __init__(self, grid: ParameterGrid, table: LikelihoodTable, n_particles: int, generators,
                 threshold: float = 0.5):
        self.loglik = np.ascontiguousarray(np.transpose(table.log_values(), (1, 2, 0)))
        self.gens = list(generators)
        self.n = n_particles
        self.threshold = threshold
        self.n_theta = len(grid)
        self.idx = np.stack([init_cloud(grid, n_particles, g).indices for g in self.gens])
        self.w = np.full(self.idx.shape, 1.0 / n_particles)
        self.resamples = np.zeros(len(self.gens), dtype=np.int64)

    def update(self, actions, obs):
        ll = np.take_along_axis(self.loglik[actions, obs], self.idx, axis=1)
        w = self.w * np.exp(ll - ll.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        self.w = w
        ess = 1.0 / np.sum(w**2, axis=1)
        for r in np.flatnonzero(ess < self.threshold * self.n):
            pick = systematic_resample(w[r], self.gens[r].random())
            self.idx[r] = self.idx[r, pick]
            self.w[r] = 1.0 / self.n
            self.resamples[r] += 1

    def sample(self, u: np.ndarray) -> np.ndarray:
        c = np.cumsum(self.w, axis=1)
        k = np.minimum((c <= (u * c[:, -1])[:, None]).sum(axis=1), self.n - 1)
        return self.idx[np.arange(len(u)), k]

    def weights(self, r: int) -> np.ndarray:
        return np.bincount(self.idx[r], weights=self.w[r], minlength=self.n_theta)
