"""KL-divergence geometry of a finite instance.

Every divergence here is in nats. ``dmatrix[k, a]`` is the divergence between
the observation laws of action ``a`` under the truth and under grid point k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import DomainError, InstanceDescriptor, LikelihoodTable

TOL_ZERO = 1e-12


def bernoulli_kl(p: float, q: float) -> float:
    """KL(Bern(p) || Bern(q)) in nats, with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p={p} outside [0, 1]")
    if not 0.0 < q < 1.0:
        raise DomainError(f"q={q} must lie strictly inside (0, 1)")
    out = 0.0
    if p > 0:
        out += p * math.log(p / q)
    if p < 1:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return max(out, 0.0)


def marginal_kl(table: LikelihoodTable, truth_index: int, theta_index: int, action: int) -> float:
    p = table.values[truth_index, action]
    q = table.values[theta_index, action]
    return max(float(np.sum(p * (np.log(p) - np.log(q)))), 0.0)


@dataclass(frozen=True, eq=False)
class DivergenceMatrix:
    d: np.ndarray
    truth_index: int

    @classmethod
    def from_instance(cls, instance: InstanceDescriptor) -> "DivergenceMatrix":
        lv = instance.table.log_values()
        p = instance.table.values[instance.truth_index]
        d = np.einsum("ay,kay->ka", p, lv[instance.truth_index][None] - lv)
        d = np.maximum(d, 0.0)
        d[instance.truth_index] = 0.0
        d.setflags(write=False)
        return cls(d, instance.truth_index)

    @property
    def max(self) -> float:
        return float(self.d.max())


def divergence_matrix(instance: InstanceDescriptor) -> DivergenceMatrix:
    return DivergenceMatrix.from_instance(instance)


@dataclass(frozen=True, eq=False)
class DecisionRegions:
    """``region_of[k]`` is the optimal action of grid point k. For each
    suboptimal action ``s_prime[a]`` holds the grid indices of S_a that match
    the truth at the best action, ``s_double_prime[a]`` the rest of S_a."""

    region_of: np.ndarray
    best_action: int
    s_prime: dict = field(default_factory=dict)
    s_double_prime: dict = field(default_factory=dict)

    @property
    def suboptimal(self) -> list[int]:
        return sorted(self.s_prime)

    def sizes(self) -> dict:
        return {int(a): {"S": int(np.sum(self.region_of == a)),
                         "S_prime": len(self.s_prime.get(a, ())),
                         "S_double_prime": len(self.s_double_prime.get(a, ()))}
                for a in range(int(self.region_of.max(initial=0)) + 1) if np.any(self.region_of == a)}


def decision_regions(instance: InstanceDescriptor, dmatrix: DivergenceMatrix, tol_zero: float = TOL_ZERO) -> DecisionRegions:
    region_of = instance.optimal_actions()
    best = instance.best_action
    at_best = dmatrix.d[:, best]
    sp, spp = {}, {}
    for a in range(instance.n_actions):
        if a == best:
            continue
        members = np.flatnonzero(region_of == a)
        match = at_best[members] <= tol_zero
        sp[a] = members[match]
        spp[a] = members[~match]
    return DecisionRegions(region_of, best, sp, spp)


@dataclass
class GapSummary:
    xi: float | None
    xi_per_action: dict
    delta_a: dict
    delta_min: float | None
    resolvability: int
    delta_threshold: float | None
    vacuous: bool = False

    def as_dict(self) -> dict:
        return {
            "xi": self.xi,
            "xi_per_action": {str(k): v for k, v in self.xi_per_action.items()},
            "delta_a": {str(k): v for k, v in self.delta_a.items()},
            "delta_min": self.delta_min,
            "L": self.resolvability,
            "delta_threshold": self.delta_threshold,
            "vacuous": self.vacuous,
        }


def gap_summary(regions: DecisionRegions, dmatrix: DivergenceMatrix, delta_threshold: float | None = None) -> GapSummary:
    """xi, delta_a, their minimum and the resolvability count L.

    L is the smallest number, over every suboptimal grid point in some S_a',
    of suboptimal actions whose divergence reaches ``delta_threshold``
    (default: the minimum delta_a).
    """
    d = dmatrix.d
    best = regions.best_action
    n_actions = d.shape[1]
    xi_per = {a: float(d[idx, best].min()) for a, idx in regions.s_double_prime.items() if len(idx)}
    xi = min(xi_per.values()) if xi_per else None
    delta_a = {a: float(d[idx, a].min()) for a, idx in regions.s_prime.items() if len(idx)}
    if not delta_a:
        return GapSummary(xi, xi_per, {}, None, n_actions - 1, delta_threshold, vacuous=True)
    delta_min = min(delta_a.values())
    thr = delta_min if delta_threshold is None else float(delta_threshold)
    others = [a for a in range(n_actions) if a != best]
    members = np.concatenate([idx for idx in regions.s_prime.values() if len(idx)])
    counts = (d[np.ix_(members, others)] >= thr).sum(axis=1)
    return GapSummary(xi, xi_per, delta_a, delta_min, int(counts.min()), thr)


def min_failure_product(mu, actions) -> float:
    """min over subsets a of prod_{i in a} (1 - mu_i): the mu_min of the MAX bounds."""
    mu = np.asarray(mu, dtype=float)
    return float(min(np.prod(1.0 - mu[list(a)]) for a in actions))


def pinsker_delta_floor(mu_min: float, beta: float) -> float:
    """Divergence floor 2 mu_min^2 (1 - beta) / log 2 for the geometric MAX grid,
    with ``mu_min`` from :func:`min_failure_product`."""
    return 2.0 * mu_min**2 * (1.0 - beta) / math.log(2.0)


def hypercube_resolvability(n_arms: int, subset_size: int) -> int:
    """C(N-1, M-1) - 1: the resolvability promised on the geometric MAX grid."""
    return math.comb(n_arms - 1, subset_size - 1) - 1


def geometry_report(instance: InstanceDescriptor, dmatrix_cap: int = 2000) -> dict:
    dm = divergence_matrix(instance)
    regions = decision_regions(instance, dm)
    gaps = gap_summary(regions, dm)
    out = {
        "units": "nats",
        "n_theta": len(instance.grid),
        "n_actions": instance.n_actions,
        "best_action": regions.best_action,
        "max_divergence": dm.max,
        "regions": {str(k): v for k, v in regions.sizes().items()},
        **gaps.as_dict(),
    }
    if dm.d.size <= dmatrix_cap:
        out["dmatrix"] = dm.d.tolist()
    else:
        out["dmatrix"] = None
        out["dmatrix_elided"] = f"{dm.d.shape[0]}x{dm.d.shape[1]} exceeds cap {dmatrix_cap}"
    return out
