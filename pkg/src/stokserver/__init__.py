"""Stochastic k-server toolkit: non-adaptive LP planning, exact rounding on
line/circle metrics, random tree embeddings for general metrics, exact
exponential-time oracles, correlated-scenario LPs, the Uber reduction, and
an experiment harness."""

from .errors import (
    ExtractionError,
    ImbalanceError,
    InfeasibleServeError,
    ResourceBudgetError,
    SizeMismatchError,
    StokServerError,
    ValidationError,
)
from .metric import (
    Configuration,
    FractionalConfiguration,
    Metric,
    build_circle_metric,
    build_general_metric,
    build_line_metric,
    config_distance,
    fractional_distance,
    fractional_serve_distance,
    serve_distance,
)
from .lp import LinearProgram, LpSolution, dump_lp_text, lp_dual_bound, solve
from .planner import (
    DistributionSequence,
    FractionalPlan,
    IntegralPlan,
    build_nonadaptive_lp,
    expected_plan_cost,
    extract_fractional_plan,
    plan_cost_fractional,
    plan_cost_integral,
    shift_plan,
    simulate_plan,
    solve_nonadaptive,
    trace_cost,
)
from .rounding import (
    RoundingOffset,
    average_over_offsets,
    derandomize_offset,
    mass_function,
    offset_breakpoints,
    round_line,
    round_plan_line,
)
from .hst import Hst, frt_embed, hst_round_step, round_plan_general, subtree_counts_consistent
from .oracles import (
    PolicyTable,
    best_nonadaptive_bruteforce,
    offline_opt,
    optimal_online_dp,
    policy_expected_cost,
    simulate_policy,
)
from .correlated import (
    ScenarioSet,
    ScenarioTrie,
    best_online_bruteforce_correlated,
    build_correlated_lp,
    build_trie,
    execute_correlated,
)
from .uber import (
    DemandDistributionSequence,
    UberDemand,
    expected_uber_cost,
    uber_execute,
    uber_opt_bruteforce,
    uber_reduce,
)
from .harness import ExperimentSpec, run_experiment, synth_instance

__version__ = "0.1.0"
