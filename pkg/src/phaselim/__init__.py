"""Simulation library for phase-based elimination in multi-agent linear bandits.

The package has four layers: linear-algebra kernel (action sets, G-optimal
designs), environment (population sampling, rewards, hard instances), the
phase-based policies, and the experiment harness with its CSV interfaces.
"""

from .design import (
    ActionSet,
    Design,
    g_value,
    information_matrix,
    least_squares,
    pseudo_inverse,
    solve_g_optimal,
    uniform_circle,
)
from .environment import (
    HardInstance,
    Instance,
    PopulationModel,
    h_threshold,
    hard_instance_hypercube,
    reward,
    sample_instance,
)
from .errors import (
    AccountingError,
    ConfigurationError,
    ConvergenceError,
    ExperimentError,
    PhaselimError,
    ResourceError,
    SamplingError,
    ValidationError,
)
from .harness import (
    ALGORITHMS,
    ExperimentConfig,
    ExperimentResult,
    RegretTrace,
    SummaryStats,
    aggregate,
    final_linear_fit,
    final_slope,
    joint_pseudo_regret_increment,
    read_summary_csv,
    read_traces_csv,
    run_experiment,
    write_events_csv,
    write_summary_csv,
    write_traces_csv,
)
from .policies import (
    PhaseEvent,
    PhaseState,
    PolicyConfig,
    PolicyRun,
    PullPlan,
    collaborative_pull_counts,
    eliminate,
    epsilon_net,
    local_pull_counts,
    run_cppe,
    run_fedpe,
    run_indpe,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSet",
    "Design",
    "g_value",
    "information_matrix",
    "least_squares",
    "pseudo_inverse",
    "solve_g_optimal",
    "uniform_circle",
    "HardInstance",
    "Instance",
    "PopulationModel",
    "h_threshold",
    "hard_instance_hypercube",
    "reward",
    "sample_instance",
    "AccountingError",
    "ConfigurationError",
    "ConvergenceError",
    "ExperimentError",
    "PhaselimError",
    "ResourceError",
    "SamplingError",
    "ValidationError",
    "ALGORITHMS",
    "ExperimentConfig",
    "ExperimentResult",
    "RegretTrace",
    "SummaryStats",
    "aggregate",
    "final_linear_fit",
    "final_slope",
    "joint_pseudo_regret_increment",
    "read_summary_csv",
    "read_traces_csv",
    "run_experiment",
    "write_events_csv",
    "write_summary_csv",
    "write_traces_csv",
    "PhaseEvent",
    "PhaseState",
    "PolicyConfig",
    "PolicyRun",
    "PullPlan",
    "collaborative_pull_counts",
    "eliminate",
    "epsilon_net",
    "local_pull_counts",
    "run_cppe",
    "run_fedpe",
    "run_indpe",
    "__version__",
]
