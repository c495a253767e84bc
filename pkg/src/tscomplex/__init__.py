"""Thompson sampling for bandits with complex actions on finite parameter grids."""

from .agents import AgentSpec, RegretTrace, run_batch, run_episode
from .bounds import BoundReport, bound_report
from .envs import make_env
from .geometry import decision_regions, divergence_matrix, gap_summary
from .harness import ExperimentConfig, SummaryReport, estimate_log_slope, run_experiment
from .model import InstanceDescriptor, LikelihoodTable, ParameterGrid, build_uniform_grid

__all__ = [
    "AgentSpec", "BoundReport", "ExperimentConfig", "InstanceDescriptor", "LikelihoodTable", "ParameterGrid",
    "RegretTrace", "SummaryReport", "bound_report", "build_uniform_grid", "decision_regions",
    "divergence_matrix", "estimate_log_slope", "gap_summary", "make_env", "run_batch", "run_episode",
    "run_experiment",
]
