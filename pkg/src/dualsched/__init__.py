"""Dual ascent with multiplier errors, and the scheduling layer on top.

The package follows one pipeline: a convex resource-allocation problem
over a scaled action hull (`problem`), its inner Lagrangian solve
(`inner`), the perturbed dual iteration with its diagnostic ledger and
closed-form bound certificates (`dual`), discrete action schedulers
that track the fractional iterates (`scheduling`), the integer queue
network driven by those actions (`queuesim`), a grid-refinement oracle
for the fluid optimum (`oracle`), and scenario files plus the artifact
runner behind the command line (`config`, `experiment`, `cli`).
"""

from .problem import (ActionSet, ConfigError, ContractViolation,
                      DecompositionError, DiagonalQuadratic, ProblemSpec,
                      ScheduleInfeasibleError, eval_constraints,
                      eval_lagrangian, operator_norm, slater_margin,
                      subgradient_norm_bound)
from .inner import (InnerSolution, epsilon_from_gap, hvalue, solve_inner)
from .dual import (BoundCertificate, ClaimCheck, DiagnosticLedger,
                   DualAscentResult, DualState, LedgerCheckReport,
                   LedgerCheckRow, PerturbationStream, Trajectory,
                   default_checkpoints, dual_step, lemma1_ledger_check,
                   lemma1_ledger_reports, run_dual_ascent, theorem2_bounds)
from .scheduling import (AdmissibilityRule, BlockBuffer, BlockChainStats,
                         RunStats, SchedulerState, amortized_select,
                         block_select, decompose_to_simplex,
                         divergence_bound, gamma_monitor, multiset_preserved,
                         myopic_select, reorder_block,
                         run_amortized_random, run_block_chain_random,
                         run_myopic, run_myopic_random)
from .queuesim import (AmortizedPolicy, ArrivalProcess, BlockPolicy,
                       ConstantPolicy, ContinuityReport, MyopicPolicy,
                       NetworkSimResult, QueueState, StabilityReport,
                       queue_continuity_check, queue_step, run_network_sim,
                       stability_metric)
from .oracle import OracleResult, fluid_oracle, oracle_norm_bound
from .config import ScenarioConfig, load_scenario, parse_scenario
from .experiment import (AP_EXAMPLE_INI, CheckItem, CheckReport,
                         ap_example_scenario, check_artifacts, emit_summary,
                         run_scenario)

__all__ = [
    "ActionSet", "ConfigError", "ContractViolation", "DecompositionError",
    "DiagonalQuadratic", "ProblemSpec", "ScheduleInfeasibleError",
    "eval_constraints", "eval_lagrangian", "operator_norm", "slater_margin",
    "subgradient_norm_bound",
    "InnerSolution", "decompose_to_simplex", "epsilon_from_gap", "hvalue",
    "solve_inner",
    "BoundCertificate", "ClaimCheck", "DiagnosticLedger", "DualAscentResult",
    "DualState", "LedgerCheckReport", "LedgerCheckRow", "PerturbationStream",
    "Trajectory", "default_checkpoints", "dual_step", "lemma1_ledger_check",
    "lemma1_ledger_reports", "run_dual_ascent", "theorem2_bounds",
    "AdmissibilityRule", "BlockBuffer", "BlockChainStats", "RunStats",
    "SchedulerState", "amortized_select", "block_select", "divergence_bound",
    "gamma_monitor", "multiset_preserved", "myopic_select", "reorder_block",
    "run_amortized_random", "run_block_chain_random", "run_myopic",
    "run_myopic_random",
    "AmortizedPolicy", "ArrivalProcess", "BlockPolicy", "ConstantPolicy",
    "ContinuityReport", "MyopicPolicy", "NetworkSimResult", "QueueState",
    "StabilityReport", "queue_continuity_check", "queue_step",
    "run_network_sim", "stability_metric",
    "OracleResult", "fluid_oracle", "oracle_norm_bound",
    "ScenarioConfig", "load_scenario", "parse_scenario",
    "AP_EXAMPLE_INI", "CheckItem", "CheckReport", "ap_example_scenario",
    "check_artifacts", "emit_summary", "run_scenario",
]

__version__ = "0.1.0"
