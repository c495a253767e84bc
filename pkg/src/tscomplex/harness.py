"""Experiment configs, replicated runs, aggregation and output files."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import agents as agentmod
from .agents import AgentSpec, RegretTrace
from .bounds import DEFAULT_EPSILON, BoundReport, bound_report
from .envs import Environment, make_env
from .geometry import geometry_report
from .model import (DEFAULT_GAMMA, InstanceDescriptor, ModelError, ParameterGrid, build_uniform_grid,
                    geometric_values, spaced_values, validate_instance)

log = logging.getLogger(__name__)

TRACE_HEADER = "# tscomplex-trace v1"
TRACE_COLUMNS = ("step", "action", "observation", "regret", "reward", "suboptimal_plays")
ENV_MODES = ("fresh", "reward-stack")


class ConfigError(ValueError):
    pass


# -- configuration ------------------------------------------------------------------


@dataclass
class InstanceConfig:
    env: str
    n_arms: int
    truth: list
    grid: dict
    subset_size: int | None = None
    n_machines: int = 2
    durations: tuple = (1, 2)
    homogeneous: bool = True
    gamma: float = DEFAULT_GAMMA

    @classmethod
    def from_dict(cls, d: dict) -> "InstanceConfig":
        d = dict(d)
        if "n_jobs" in d:
            d.setdefault("n_arms", d.pop("n_jobs"))
        if "values" in d and "grid" not in d:
            d["grid"] = {"kind": "values", "values": d.pop("values")}
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"instance: {exc}") from None
        cfg.durations = tuple(cfg.durations)
        return cfg


@dataclass
class BoundsConfig:
    enabled: bool = True
    epsilon: float = DEFAULT_EPSILON
    T: float | None = None
    enable_bruteforce: bool = False


@dataclass
class PosteriorConfig:
    engine: str = "exact"
    n_particles: int = 1000


@dataclass
class ExperimentConfig:
    instance: InstanceConfig
    agents: list
    horizon: int
    replications: int = 1
    seed: int = 0
    name: str = "experiment"
    output_dir: str | None = None
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    posterior: PosteriorConfig = field(default_factory=PosteriorConfig)
    env_mode: str = "fresh"
    snapshot_every: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            d["instance"] = InstanceConfig.from_dict(d["instance"])
            d["bounds"] = BoundsConfig(**d.get("bounds", {}))
            d["posterior"] = PosteriorConfig(**d.get("posterior", {}))
            cfg = cls(**d)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad config: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def agent_specs(self) -> list[AgentSpec]:
        specs = []
        for a in self.agents:
            a = {"kind": a} if isinstance(a, str) else dict(a)
            a.setdefault("engine", self.posterior.engine)
            a.setdefault("n_particles", self.posterior.n_particles)
            try:
                specs.append(AgentSpec(**a))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"agent {a}: {exc}") from None
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"agent names must be unique, got {names}; set 'label' to disambiguate")
        return specs

    def validate(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.agents:
            raise ConfigError("at least one agent is required")
        if self.env_mode not in ENV_MODES:
            raise ConfigError(f"env_mode must be one of {ENV_MODES}")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be >= 0")
        self.agent_specs()

    def to_dict(self) -> dict:
        return asdict(self)


# -- instance -----------------------------------------------------------------------


@dataclass
class BuiltInstance:
    env: Environment
    instance: InstanceDescriptor
    truth: np.ndarray
    snap_distance: float
    beta: float | None = None


def _grid_from_config(g: dict, n_arms: int) -> tuple[ParameterGrid, float | None]:
    kind = g.get("kind", "values")
    if kind == "values":
        return build_uniform_grid(g["values"], n_arms), None
    if kind == "spaced":
        return build_uniform_grid(spaced_values(g["step"]), n_arms), None
    if kind == "geometric":
        return build_uniform_grid(geometric_values(g["beta"], g["depth"]), n_arms), float(g["beta"])
    if kind == "points":
        pts = np.asarray(g["points"], dtype=float)
        prior = np.asarray(g.get("prior", np.full(len(pts), 1.0 / len(pts))), dtype=float)
        return ParameterGrid(pts, prior), None
    raise ConfigError(f"unknown grid kind {kind!r}")


def build_from_config(cfg: InstanceConfig) -> BuiltInstance:
    try:
        env = make_env(cfg.env, cfg.n_arms, subset_size=cfg.subset_size, n_machines=cfg.n_machines,
                       durations=cfg.durations, homogeneous=cfg.homogeneous)
        grid, beta = _grid_from_config(cfg.grid, env.n_arms)
    except (ModelError, KeyError) as exc:
        raise ConfigError(f"instance: {exc}") from None
    truth = np.asarray(cfg.truth, dtype=float)
    if truth.shape != (env.n_arms,):
        raise ConfigError(f"truth needs {env.n_arms} entries, got {truth.shape}")
    idx, dist = grid.nearest(truth)
    if dist > 0:
        log.warning("truth is off the grid; using grid point %d at L-inf distance %.3g as the model truth", idx, dist)
    inst = env.build_instance(grid, idx, cfg.gamma)
    report = validate_instance(inst)
    if not report.ok:
        raise ConfigError("instance fails validation: " + "; ".join(report.violations))
    return BuiltInstance(env, inst, truth, float(dist), beta)


# -- aggregation ----------------------------------------------------------------------


def log_checkpoints(horizon: int, per_decade: int = 10) -> np.ndarray:
    """Integer steps spaced evenly in log10 t, ``per_decade`` per decade, plus the horizon."""
    n = int(math.floor(per_decade * math.log10(horizon) + 1e-9))
    ts = np.round(10.0 ** (np.arange(n + 1) / per_decade)).astype(np.int64)
    return np.unique(np.append(ts[ts <= horizon], horizon))


def _as_matrix(traces, attr="suboptimal") -> np.ndarray:
    if isinstance(traces, np.ndarray):
        return np.atleast_2d(traces).astype(float)
    return np.stack([np.asarray(getattr(tr, attr), dtype=float) for tr in traces])


def estimate_log_slope(traces, window: float = 0.1, per_decade: int = 10) -> float:
    """Least-squares slope of mean cumulative suboptimal plays against ln t.

    ``traces`` is a list of :class:`RegretTrace` or an array of shape
    (replications, T) holding cumulative counts. Only log-spaced checkpoints
    with t >= window * T enter the fit.
    """
    m = _as_matrix(traces).mean(axis=0)
    horizon = len(m)
    ts = log_checkpoints(horizon, per_decade)
    ts = ts[ts >= window * horizon]
    if len(ts) < 2:
        raise ValueError(f"window {window} of a horizon of {horizon} holds fewer than 2 checkpoints")
    x = np.log(ts.astype(float))
    y = m[ts - 1]
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def doubling_increments(traces, attr="cumulative_regret") -> list[dict]:
    """Mean increase over the windows (T/2^(j+1), T/2^j], oldest first, with
    the per-step rate inside each window."""
    m = _as_matrix(traces, attr).mean(axis=0)
    horizon = len(m)
    out = []
    end = horizon
    while end // 2 >= 1:
        start = end // 2
        inc = float(m[end - 1] - m[start - 1])
        out.append({"start": int(start), "end": int(end), "increment": inc, "rate": inc / (end - start)})
        end = start
    return out[::-1]


def mean_ci(values, level: float = 0.95) -> dict:
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if len(v) < 2:
        half = 0.0
    else:
        half = float(stats.t.ppf(0.5 + level / 2, len(v) - 1) * v.std(ddof=1) / math.sqrt(len(v)))
    return {"mean": mean, "ci95_half_width": half, "ci_low": mean - half, "ci_high": mean + half}


@dataclass
class AgentSummary:
    name: str
    regret: dict
    suboptimal_plays: dict
    slope: float | None
    doubling: list
    curve: dict


@dataclass
class SummaryReport:
    name: str
    agents: dict
    bounds: dict | None
    instance: dict
    config: dict

    def as_dict(self) -> dict:
        return {"name": self.name, "instance": self.instance, "bounds": self.bounds,
                "agents": {k: asdict(v) for k, v in self.agents.items()}, "config": self.config}


def summarize_traces(name: str, traces: list[RegretTrace], horizon: int) -> AgentSummary:
    cum = _as_matrix(traces, "cumulative_regret")
    sub = _as_matrix(traces, "suboptimal")
    marks = sorted({max(1, horizon // 10), max(1, horizon // 2), horizon})
    regret = {str(t): mean_ci(cum[:, t - 1]) for t in marks}
    subopt = {str(t): mean_ci(sub[:, t - 1]) for t in marks}
    try:
        slope = estimate_log_slope(sub)
    except ValueError:
        slope = None
    ts = log_checkpoints(horizon)
    curve = {"t": ts.tolist(), "regret": cum.mean(axis=0)[ts - 1].tolist(),
             "suboptimal_plays": sub.mean(axis=0)[ts - 1].tolist()}
    return AgentSummary(name, regret, subopt, slope, doubling_increments(cum), curve)


# -- output -----------------------------------------------------------------------------


def _round12(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}") if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round12(obj.item())
    if isinstance(obj, np.ndarray):
        return _round12(obj.tolist())
    return obj


def dump_json(obj, path=None) -> str:
    text = json.dumps(_round12(obj), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def write_trace(trace: RegretTrace, path):
    steps = np.arange(1, len(trace) + 1)
    cols = np.column_stack([steps, trace.action, trace.observation, trace.regret, trace.reward, trace.suboptimal])
    header = (f"{TRACE_HEADER} agent={trace.agent} replication={trace.replication} seed={trace.seed}\n"
              + ",".join(TRACE_COLUMNS))
    np.savetxt(path, cols, fmt=["%d", "%d", "%d", "%.12g", "%.12g", "%d"], delimiter=",", header=header,
               comments="")


def read_trace(path) -> dict:
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    return {c: data[:, i] for i, c in enumerate(TRACE_COLUMNS)}


# -- entry points ------------------------------------------------------------------------


def compute_bounds(cfg: ExperimentConfig, built: BuiltInstance | None = None) -> BoundReport:
    built = built or build_from_config(cfg.instance)
    T = cfg.bounds.T if cfg.bounds.T is not None else max(cfg.horizon, 2)
    return bound_report(built.instance, cfg.bounds.epsilon, T, cfg.bounds.enable_bruteforce, env=built.env,
                        truth=built.truth, grid_beta=built.beta)


def describe_instance(built: BuiltInstance) -> dict:
    return {**built.env.describe(), "n_theta": len(built.instance.grid), "truth": built.truth.tolist(),
            "truth_index": built.instance.truth_index, "truth_snap_distance": built.snap_distance,
            "clamped_rows": built.instance.table.clamped_rows, "best_action": built.instance.best_action}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> SummaryReport:
    """Run every agent on ``cfg.replications`` episodes and write results.

    Files go to ``out_dir`` (or ``cfg.output_dir``; nothing is written when
    both are None): one ``trace_<agent>_<rep>.csv`` per episode,
    ``summary.json`` and, when bounds are enabled, ``bounds.json``.
    """
    cfg.validate()
    specs = cfg.agent_specs()
    built = build_from_config(cfg.instance)
    out = Path(out_dir or cfg.output_dir) if (out_dir or cfg.output_dir) else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    bounds = None
    if cfg.bounds.enabled:
        bounds = compute_bounds(cfg, built).as_dict()
        if out is not None:
            dump_json(bounds, out / "bounds.json")

    summaries = {}
    for i, spec in enumerate(specs):
        snaps = []
        traces = agentmod.run_batch(
            built.instance, built.env, spec, cfg.horizon, cfg.seed, range(cfg.replications), truth=built.truth,
            agent_index=i, env_mode=cfg.env_mode, snapshot_every=cfg.snapshot_every,
            on_snapshot=lambda t, r, w: snaps.append((t, r, w)))
        if out is not None:
            for tr in traces:
                write_trace(tr, out / f"trace_{spec.name}_{tr.replication}.csv")
            _write_snapshots(out, spec.name, snaps)
        summaries[spec.name] = summarize_traces(spec.name, traces, cfg.horizon)

    report = SummaryReport(cfg.name, summaries, bounds, describe_instance(built), cfg.to_dict())
    if out is not None:
        dump_json(report.as_dict(), out / "summary.json")
    return report


def _write_snapshots(out: Path, name: str, snaps):
    by_rep: dict = {}
    for t, r, w in snaps:
        keep = np.flatnonzero(w > 1e-12)
        by_rep.setdefault(r, []).append(np.column_stack([np.full(len(keep), t), keep, w[keep]]))
    for r, blocks in by_rep.items():
        np.savetxt(out / f"posterior_{name}_{r}.csv", np.vstack(blocks), fmt=["%d", "%d", "%.12g"],
                   delimiter=",", header="# tscomplex-posterior v1\nstep,grid_index,weight", comments="")
