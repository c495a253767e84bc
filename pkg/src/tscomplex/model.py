"""Finite bandit models: parameter grids, likelihood tables and reward maps.

An instance is the tuple (grid, likelihood table, reward map, truth index).
Actions and observations are plain integer ids; environments in
:mod:`tscomplex.envs` decide what the ids mean.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_GAMMA = 1e-6
DEFAULT_GRID_CAP = 10**6
NORM_TOL = 1e-12


class ModelError(ValueError):
    """Raised for malformed grids, tables or instances."""


class GridSizeError(ModelError):
    pass


class DomainError(ModelError):
    pass


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Finite prior support: ``points[k]`` is a vector of per-arm success
    probabilities and ``prior[k]`` its prior mass.

    ``values`` is set when the grid is the full Cartesian product of one
    per-arm value list (itertools.product order, first arm most significant).
    """

    points: np.ndarray
    prior: np.ndarray
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pri = np.asarray(self.prior, dtype=float).ravel()
        if pts.shape[0] != pri.shape[0]:
            raise ModelError("one prior weight per grid point is required")
        if pts.shape[0] == 0:
            raise ModelError("empty grid")
        if np.any(pri < 0) or abs(pri.sum() - 1.0) > NORM_TOL:
            raise ModelError("prior weights must be nonnegative and sum to 1")
        if np.any(pts <= 0) or np.any(pts >= 1):
            raise DomainError("per-arm probabilities must lie strictly in (0, 1)")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ModelError("duplicate grid points")
        pts.setflags(write=False)
        pri.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "prior", pri)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n_arms(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform_product(self) -> bool:
        return self.values is not None and np.allclose(self.prior, 1.0 / len(self), rtol=0, atol=1e-15)

    def nearest(self, theta) -> tuple[int, float]:
        """Index of the grid point closest to ``theta`` in the L-infinity norm."""
        dist = np.abs(self.points - np.asarray(theta, dtype=float)).max(axis=1)
        k = int(np.argmin(dist))
        return k, float(dist[k])


def build_uniform_grid(values, n_arms: int, cap: int = DEFAULT_GRID_CAP) -> ParameterGrid:
    """Cartesian grid ``values ** n_arms`` with uniform prior."""
    vals = [float(v) for v in values]
    if not vals:
        raise DomainError("per-arm value list is empty")
    if any(not 0.0 < v < 1.0 for v in vals):
        raise DomainError(f"per-arm values must lie in (0, 1): {vals}")
    if len(set(vals)) != len(vals):
        raise ModelError("per-arm values must be distinct")
    if n_arms < 1:
        raise ModelError("n_arms must be positive")
    size = len(vals) ** n_arms
    if size > cap:
        raise GridSizeError(f"grid of {size} points exceeds cap {cap}")
    points = np.array(list(itertools.product(vals, repeat=n_arms)), dtype=float)
    return ParameterGrid(points, np.full(size, 1.0 / size), values=tuple(vals))


def geometric_values(beta: float, depth: int) -> list[float]:
    """Per-arm values {1 - beta**depth, ..., 1 - beta**2, 1 - beta}."""
    if not 0.0 < beta < 1.0 or depth < 1:
        raise DomainError("need beta in (0, 1) and depth >= 1")
    return [1.0 - beta**r for r in range(depth, 0, -1)]


def spaced_values(step: float) -> list[float]:
    """Per-arm values {step, 2 step, ..., (floor(1/step) - 1) step}."""
    if not 0.0 < step < 1.0:
        raise DomainError("step must lie in (0, 1)")
    n = int(np.floor(1.0 / step + 1e-9))
    return [round(k * step, 12) for k in range(1, n)]


def clamp_rows(values: np.ndarray, gamma: float) -> tuple[np.ndarray, int]:
    """Force every distribution along the last axis into [gamma, 1 - gamma].

    Entries below gamma are pinned to gamma and the free entries rescaled to
    the remaining mass; an entry left above 1 - gamma is then pinned there and
    the rest rescaled again. Rows already inside the band are untouched.
    Returns the new array and the number of modified rows.
    """
    out = np.array(values, dtype=float, copy=True)
    flat = out.reshape(-1, out.shape[-1])
    k = flat.shape[1]
    if k * gamma > 1.0 or (k == 1 and gamma > 0):
        raise ModelError(f"gamma={gamma} is infeasible for an alphabet of size {k}")
    lo, hi = gamma, 1.0 - gamma
    bad = np.flatnonzero(((flat < lo) | (flat > hi)).any(axis=1))
    for r in bad:
        orig = flat[r].copy()
        low = np.zeros(k, dtype=bool)
        high = np.zeros(k, dtype=bool)
        row = orig
        for _ in range(2 * k + 1):
            free = ~(low | high)
            rest = 1.0 - low.sum() * lo - high.sum() * hi
            mass = orig[free].sum()
            scaled = orig * rest / mass if mass > 0 else np.full(k, rest / max(free.sum(), 1))
            row = np.where(low, lo, np.where(high, hi, scaled))
            new_low = free & (row < lo)
            if new_low.any():
                low |= new_low
                continue
            new_high = free & (row > hi)
            if not new_high.any():
                break
            high |= new_high
        flat[r] = row
    return out, len(bad)


@dataclass(frozen=True, eq=False)
class LikelihoodTable:
    """``values[k, a, y]`` = probability of observation y after action a under
    grid point k. Built through :meth:`from_raw`, which applies the gamma clamp."""

    values: np.ndarray
    gamma: float = DEFAULT_GAMMA
    clamped_rows: int = 0

    @classmethod
    def from_raw(cls, raw, gamma: float = DEFAULT_GAMMA) -> "LikelihoodTable":
        if not 0.0 < gamma < 0.5:
            raise ModelError("gamma must lie in (0, 1/2)")
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 3:
            raise ModelError("likelihood table must be 3-dimensional (theta, action, observation)")
        if np.any(raw < 0) or np.any(np.abs(raw.sum(axis=2) - 1.0) > 1e-9):
            raise ModelError("likelihood rows must be nonnegative and sum to 1")
        raw = raw / raw.sum(axis=2, keepdims=True)
        vals, n = clamp_rows(raw, gamma)
        if n:
            log.warning("clamped %d likelihood rows into [%g, %g]", n, gamma, 1 - gamma)
        vals.setflags(write=False)
        return cls(vals, gamma, n)

    @property
    def n_theta(self) -> int:
        return self.values.shape[0]

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]

    @property
    def n_obs(self) -> int:
        return self.values.shape[2]

    def log_values(self) -> np.ndarray:
        return np.log(self.values)


@dataclass(frozen=True, eq=False)
class RewardMap:
    """``reward[a, y]``: scalar reward received when action a yields observation y."""

    reward: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.reward, dtype=float)
        if r.ndim != 2 or not np.all(np.isfinite(r)):
            raise ModelError("reward map must be a finite (action, observation) matrix")
        r.setflags(write=False)
        object.__setattr__(self, "reward", r)

    def affine(self, scale: float, shift: float) -> "RewardMap":
        return RewardMap(self.reward * scale + shift)


@dataclass(frozen=True, eq=False)
class InstanceDescriptor:
    grid: ParameterGrid
    table: LikelihoodTable
    rewards: RewardMap
    truth_index: int
    action_labels: tuple = ()
    _means: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.table.n_theta != len(self.grid):
            raise ModelError("likelihood table and grid disagree on |Theta|")
        if self.rewards.reward.shape != self.table.values.shape[1:]:
            raise ModelError("reward map shape must be (actions, observations)")
        if not 0 <= self.truth_index < len(self.grid):
            raise ModelError("truth_index out of range")
        means = np.einsum("kay,ay->ka", self.table.values, self.rewards.reward)
        means.setflags(write=False)
        object.__setattr__(self, "_means", means)

    @property
    def n_actions(self) -> int:
        return self.table.n_actions

    @property
    def means(self) -> np.ndarray:
        """Expected reward of every (grid point, action) pair."""
        return self._means

    def optimal_actions(self) -> np.ndarray:
        # np.argmax returns the first maximiser: lowest-index tie-break
        return np.argmax(self._means, axis=1)

    @property
    def best_action(self) -> int:
        return int(np.argmax(self._means[self.truth_index]))


def expected_reward(instance: InstanceDescriptor, theta_index: int, action: int) -> float:
    return float(instance.table.values[theta_index, action] @ instance.rewards.reward[action])


def optimal_action(instance: InstanceDescriptor, theta_index: int) -> int:
    return int(np.argmax(instance.means[theta_index]))


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ModelError("; ".join(self.violations))


def validate_instance(instance: InstanceDescriptor, tol: float = NORM_TOL) -> ValidationReport:
    """Check row normalisation, the gamma band, grain of truth and a unique
    best action under the truth. Returns every violation found."""
    bad = []
    t = instance.table
    sums = t.values.sum(axis=2)
    if np.any(np.abs(sums - 1.0) > tol):
        bad.append(f"likelihood rows not normalised (max error {np.abs(sums - 1).max():.3g})")
    g = t.gamma
    # rows renormalised after clamping sit on the bound up to rounding
    if t.values.min() < g * (1 - 1e-9) or t.values.max() > (1 - g) + 1e-15:
        bad.append(f"likelihood outside [gamma, 1-gamma] with gamma={g}")
    p = instance.grid.prior[instance.truth_index]
    if not p > 0:
        bad.append("grain of truth: prior weight of the true parameter is zero")
    row = instance.means[instance.truth_index]
    if len(row) > 1:
        top = np.sort(row)[::-1]
        if top[0] - top[1] <= tol:
            bad.append("unique best action: top expected rewards tie under the true parameter")
    return ValidationReport(bad)
