"""Regret-bound constants for a finite instance.

All divergences and ``chi`` are in nats. The search and relaxation work on
the coordinates of suboptimal actions only; the best action's coordinate is
fixed at 0. A suboptimal action whose S' region is empty imposes no
elimination constraint, so its coordinate stays at 0 and it is reported in
``flags``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import (DecisionRegions, DivergenceMatrix, GapSummary, bernoulli_kl, decision_regions,
                       divergence_matrix, gap_summary, min_failure_product)
from .model import InstanceDescriptor, ModelError

DEFAULT_EPSILON = 0.1
MAX_BRUTEFORCE_ACTIONS = 5
MAX_BOX_POINTS = 2_000_000
MAX_WORK = 50_000_000


class BoundError(ModelError):
    pass


class SearchTooLarge(BoundError):
    pass


def chi(epsilon: float, T: float | None = None, log_t: float | None = None) -> float:
    """(1 + eps) / (1 - eps) * ln T. Pass ``log_t`` to give ln T directly."""
    if not 0.0 < epsilon < 1.0:
        raise BoundError(f"epsilon={epsilon} must lie in (0, 1)")
    if log_t is None:
        if T is None or T <= 1:
            raise BoundError(f"T={T} must exceed 1")
        log_t = math.log(T)
    return (1.0 + epsilon) / (1.0 - epsilon) * log_t


def _active(regions: DecisionRegions) -> tuple[list[int], list[int]]:
    active = [a for a in regions.suboptimal if len(regions.s_prime[a])]
    inactive = [a for a in regions.suboptimal if not len(regions.s_prime[a])]
    return active, inactive


# -- brute force ------------------------------------------------------------------


@dataclass
class BruteForceResult:
    value: int | None
    order: tuple | None
    z: dict | None
    inactive: list
    caps: dict
    evaluated: int

    @property
    def infeasible(self) -> bool:
        return self.value is None


def coordinate_caps(dsub: list[np.ndarray], chi_value: float) -> np.ndarray:
    """Largest value each coordinate can take on a feasible path.

    Coordinate j freezes when action j is eliminated, and minimality at that
    step gives (z(j) - 1) * delta_j < chi, so z(j) <= floor(chi / delta_j) + 1.
    """
    caps = np.zeros(len(dsub), dtype=np.int64)
    for j, d in enumerate(dsub):
        delta = d[:, j].min()
        if delta <= 0:
            raise BoundError(f"delta_a = 0 for coordinate {j}; the path search is unbounded")
        caps[j] = int(math.floor(chi_value / delta)) + 1
    return caps


def _box(z, free, caps):
    axes = [np.arange(z[j], caps[j] + 1) if j in free else np.array([z[j]]) for j in range(len(z))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(z))


def elimination_steps(z: np.ndarray, free, i: int, d: np.ndarray, chi_value: float,
                      caps: np.ndarray) -> np.ndarray:
    """Every z' >= z, equal to z off ``free`` and within ``caps``, that
    eliminates coordinate i: min_theta <z', D_theta> >= chi and
    min_theta <z' - e_i, D_theta> < chi over the rows of ``d``."""
    box = _box(z, free, caps)
    s = box @ d.T
    ok = (s.min(axis=1) >= chi_value) & ((s - d[:, i]).min(axis=1) < chi_value)
    return box[ok]


def _last_step(zs: np.ndarray, i: int, d: np.ndarray, chi_value: float, cap: int) -> np.ndarray:
    """Largest feasible z(i) for the final elimination, one per row of ``zs``
    (-1 where none). Only coordinate i may still grow."""
    rest = zs.astype(float).copy()
    rest[:, i] = 0
    b = rest @ d.T
    di = d[:, i]
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.where(di > 0, np.ceil((chi_value - b) / di), np.where(b < chi_value, cap, -1))
    z = np.minimum(hi.max(axis=1), cap).astype(np.int64)
    z = np.maximum(z, zs[:, i] - 1)

    def feasible(v):
        s = b + v[:, None] * di
        return (s.min(axis=1) >= chi_value) & ((s - di).min(axis=1) < chi_value)

    # the ceil above is exact up to rounding; settle boundary cases by direct evaluation
    for _ in range(3):
        up = (z < cap) & feasible(z + 1)
        z = np.where(up, z + 1, z)
    ok = feasible(z) & (z >= zs[:, i])
    for _ in range(3):
        redo = ~ok & (z - 1 >= zs[:, i])
        z = np.where(redo, z - 1, z)
        ok = ok | (redo & feasible(z))
    return np.where(ok, z, -1)


def bruteforce_search(instance: InstanceDescriptor, dmatrix: DivergenceMatrix, regions: DecisionRegions,
                      epsilon: float, T: float) -> BruteForceResult:
    """Exact maximum of the elimination-path objective by depth-first search.

    A path eliminates the active suboptimal actions one at a time. At each
    step the play-count vector may only grow on coordinates not yet frozen
    and must reach ``chi`` against every point of the eliminated action's S'
    region, while one fewer play of that action leaves some region point
    below ``chi``. The eliminated action's coordinate then freezes. The value
    is the final total count.
    """
    chi_value = chi(epsilon, T)
    active, inactive = _active(regions)
    if instance.n_actions > MAX_BRUTEFORCE_ACTIONS:
        raise SearchTooLarge(
            f"{instance.n_actions} actions exceeds the brute-force limit of {MAX_BRUTEFORCE_ACTIONS}; "
            "use c_log_t_relaxation instead")
    if not active:
        return BruteForceResult(0, (), {}, inactive, {}, 0)
    dsub = [dmatrix.d[np.ix_(regions.s_prime[a], active)] for a in active]
    caps = coordinate_caps(dsub, chi_value)
    if int(np.prod(caps + 1)) > MAX_BOX_POINTS:
        raise SearchTooLarge(f"coordinate caps {caps.tolist()} make the lattice too large; use c_log_t_relaxation")

    k = len(active)
    memo: dict = {}
    work = [0]

    def charge(n):
        work[0] += n
        if work[0] > MAX_WORK:
            raise SearchTooLarge("brute-force search exceeded its work budget; use c_log_t_relaxation")

    def best_from(frozen: int, z: tuple):
        # (value, order, final z) of the best completion, or None
        free = [j for j in range(k) if not frozen >> j & 1]
        if not free:
            return sum(z), (), z
        key = (frozen, z)
        if key in memo:
            return memo[key]
        zarr = np.array(z, dtype=np.int64)
        best = None
        for i in free:
            steps = elimination_steps(zarr, free, i, dsub[i], chi_value, caps)
            charge(len(steps) + 1)
            if len(steps) == 0:
                continue
            if len(free) == 2:
                last = free[0] if free[1] == i else free[1]
                zl = _last_step(steps, last, dsub[last], chi_value, int(caps[last]))
                good = np.flatnonzero(zl >= 0)
                if not len(good):
                    continue
                finals = steps[good].copy()
                finals[:, last] = zl[good]
                r = int(np.argmax(finals.sum(axis=1)))
                cand = (int(finals[r].sum()), (active[i], active[last]), tuple(int(v) for v in finals[r]))
            else:
                cand = None
                for nz in steps:
                    sub = best_from(frozen | 1 << i, tuple(int(v) for v in nz))
                    if sub is not None and (cand is None or sub[0] > cand[0]):
                        cand = (sub[0], (active[i],) + sub[1], sub[2])
            if cand is not None and (best is None or cand[0] > best[0]):
                best = cand
        memo[key] = best
        return best

    found = best_from(0, (0,) * k)
    cap_map = {active[j]: int(caps[j]) for j in range(k)}
    if found is None:
        return BruteForceResult(None, None, None, inactive, cap_map, work[0])
    value, order, zf = found
    return BruteForceResult(int(value), order, {active[j]: zf[j] for j in range(k)}, inactive, cap_map, work[0])


def c_log_t_bruteforce(instance, dmatrix, regions, epsilon=DEFAULT_EPSILON, T=1000.0) -> int | None:
    """Exact path-optimisation value; None when no elimination path exists."""
    return bruteforce_search(instance, dmatrix, regions, epsilon, T).value


# -- relaxation -------------------------------------------------------------------


def knapsack_fill(d: np.ndarray, budget: float, boxes: np.ndarray) -> np.ndarray:
    """max sum(z) s.t. <z, d_row> <= budget and 0 <= z <= boxes, per row of ``d``.

    Greedy in ascending divergence (ties by coordinate) is exact for this
    fractional knapsack.
    """
    d = np.atleast_2d(d)
    order = np.argsort(d, axis=1, kind="stable")
    ds = np.take_along_axis(d, order, axis=1)
    us = boxes[order]
    cost = ds * us
    spent_before = np.cumsum(cost, axis=1) - cost
    left = np.maximum(budget - spent_before, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        take = np.where(ds > 0, np.minimum(us, left / ds), us)
    return take.sum(axis=1)


def c_log_t_relaxation(instance, dmatrix, regions, epsilon=DEFAULT_EPSILON, T=1000.0) -> float:
    """Upper bound on the path value from a box and one coupling half-space.

    Maximises sum(z) over z >= 0 with z(b) <= 2 chi / delta_b for every
    active b and <z, D_theta> <= 2 chi for some theta in some S' region.
    """
    chi_value = chi(epsilon, T)
    active, _ = _active(regions)
    if not active:
        return 0.0
    members = np.concatenate([regions.s_prime[a] for a in active])
    d = dmatrix.d[np.ix_(members, active)]
    delta = np.array([dmatrix.d[regions.s_prime[a], a].min() for a in active])
    if np.any(delta <= 0):
        bad = active[int(np.flatnonzero(delta <= 0)[0])]
        raise BoundError(f"delta_a = 0 for action {bad}; the relaxation needs every delta_a > 0")
    if d.max() > chi_value:
        r, c = np.unravel_index(int(np.argmax(d)), d.shape)
        raise BoundError(f"divergence {d.max():.6g} at theta={int(members[r])}, action={active[c]} exceeds "
                         f"chi={chi_value:.6g}; increase T")
    return float(knapsack_fill(d, 2.0 * chi_value, 2.0 * chi_value / delta).max())


# -- closed forms ------------------------------------------------------------------


def prop2_bound(A_size: int, L: int, delta: float, epsilon: float = DEFAULT_EPSILON, T: float | None = None,
                log_t: float | None = None) -> float:
    """(|A| - L) / delta * 2 chi."""
    if not 1 <= L <= A_size - 1:
        raise BoundError(f"L={L} must lie in [1, {A_size - 1}]")
    if delta <= 0:
        raise BoundError("delta must be positive")
    return (A_size - L) / delta * 2.0 * chi(epsilon, T, log_t)


def cor2_constant(mu, M: int) -> float:
    """Sum over the N - M lowest arms of 1 / KL(mu_i || mu_(N-M+1)), arms sorted ascending."""
    mu = np.sort(np.asarray(mu, dtype=float))
    n = len(mu)
    if not 1 <= M < n:
        raise BoundError(f"M={M} must lie in [1, {n - 1}]")
    pivot = mu[n - M]
    if not mu[n - M - 1] < pivot:
        raise BoundError(f"needs mu_(N-M) < mu_(N-M+1); got {mu[n - M - 1]} and {pivot}")
    return float(sum(1.0 / bernoulli_kl(m, pivot) for m in mu[: n - M]))


def cor3_coefficients(N: int, M: int) -> tuple[int, int]:
    """(1 + C(N-1, M), 1 + C(N, M)): the coupled and decoupled multipliers."""
    _check_cor3(N, M)
    return 1 + math.comb(N - 1, M), 1 + math.comb(N, M)


def _check_cor3(N, M):
    if M < 1:
        raise BoundError("M must be at least 1; a single empty action has nothing to bound")
    if M > (N - 1) / 2:
        raise BoundError(f"M={M} violates M <= (N-1)/2 for N={N}")


def _cor3_scale(mu_min, beta, epsilon, T, log_t):
    if not 0 < mu_min < 1 or not 0 < beta < 1:
        raise BoundError("mu_min and beta must lie in (0, 1)")
    return math.log(2.0) * chi(epsilon, T, log_t) / (mu_min**2 * (1.0 - beta))


def cor3_bound(N: int, M: int, mu_min: float, beta: float, epsilon: float = DEFAULT_EPSILON,
               T: float | None = None, log_t: float | None = None) -> float:
    """log 2 * (1 + eps)/(1 - eps) * (1 + C(N-1, M)) * ln T / (mu_min^2 (1 - beta)).

    ``mu_min`` is the smallest failure product over subsets, see
    :func:`tscomplex.geometry.min_failure_product`.
    """
    return cor3_coefficients(N, M)[0] * _cor3_scale(mu_min, beta, epsilon, T, log_t)


def cor3_decoupled_form(N: int, M: int, mu_min: float, beta: float, epsilon: float = DEFAULT_EPSILON,
                        T: float | None = None, log_t: float | None = None) -> float:
    """The same expression with 1 + C(N, M) actions counted separately."""
    return cor3_coefficients(N, M)[1] * _cor3_scale(mu_min, beta, epsilon, T, log_t)


def decoupled_constant(gaps: GapSummary) -> float:
    """Sum of 1 / delta_a over suboptimal actions with a nonempty S' region."""
    return float(sum(1.0 / d for d in gaps.delta_a.values() if d > 0))


# -- report -------------------------------------------------------------------------


@dataclass
class BoundReport:
    epsilon: float
    T: float
    chi: float
    c_relaxation: float | None = None
    c_bruteforce: int | None = None
    prop2_bound: float | None = None
    cor2_constant: float | None = None
    cor3_bound: float | None = None
    decoupled_constant: float | None = None
    delta_min: float | None = None
    L: int | None = None
    units: str = "nats"
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def bound_report(instance: InstanceDescriptor, epsilon: float = DEFAULT_EPSILON, T: float = 1e4,
                 enable_bruteforce: bool = False, env=None, truth=None, grid_beta: float | None = None,
                 dmatrix: DivergenceMatrix | None = None) -> BoundReport:
    """Every bound that applies to the instance. Quantities whose
    preconditions fail are left as None with a note in ``flags``."""
    dm = dmatrix if dmatrix is not None else divergence_matrix(instance)
    regions = decision_regions(instance, dm)
    gaps = gap_summary(regions, dm)
    rep = BoundReport(epsilon=float(epsilon), T=float(T), chi=chi(epsilon, T), delta_min=gaps.delta_min,
                      L=gaps.resolvability)
    _, inactive = _active(regions)
    if inactive:
        rep.flags.append(f"empty S' region for actions {inactive}; they contribute 0")
    if gaps.vacuous:
        rep.flags.append("every S' region is empty; bounds are vacuous")
    rep.decoupled_constant = decoupled_constant(gaps)

    try:
        rep.c_relaxation = c_log_t_relaxation(instance, dm, regions, epsilon, T)
    except BoundError as exc:
        rep.flags.append(f"relaxation: {exc}")
    if enable_bruteforce:
        try:
            res = bruteforce_search(instance, dm, regions, epsilon, T)
            rep.c_bruteforce = res.value
            if res.infeasible:
                rep.flags.append("brute force: no feasible elimination path")
        except BoundError as exc:
            rep.flags.append(f"brute force: {exc}")

    if gaps.delta_min and 1 <= gaps.resolvability <= instance.n_actions - 1:
        rep.prop2_bound = prop2_bound(instance.n_actions, gaps.resolvability, gaps.delta_min, epsilon, T)
    else:
        rep.flags.append(f"prop2: needs delta > 0 and 1 <= L <= |A|-1 (L={gaps.resolvability})")

    if env is not None and truth is not None:
        mu = np.asarray(truth, dtype=float)
        if env.kind in ("mab", "fullinfo"):
            try:
                rep.cor2_constant = cor2_constant(mu, env.m)
            except BoundError as exc:
                rep.flags.append(f"cor2: {exc}")
        if env.kind == "max":
            if grid_beta is None:
                rep.flags.append("cor3: needs the geometric grid ratio beta")
            else:
                try:
                    mu_min = min_failure_product(mu, env.actions)
                    rep.cor3_bound = cor3_bound(env.n_arms, env.m, mu_min, grid_beta, epsilon, T)
                except BoundError as exc:
                    rep.flags.append(f"cor3: {exc}")
    return rep
