"""Decentralized gradient-sliding toolkit.

Solvers for consensus-constrained convex optimization over simulated
multi-agent communication graphs, a stochastic mini-batch variant, a
bilinearly coupled saddle-point extension, and a benchmark harness that
tabulates communication rounds against gradient/sample counts.
"""

from .graph import (CommGraph, ConsensusOperator, GraphError, ZeroOperator,
                    erdos_renyi, incidence_operator, laplacian_operator,
                    named_graph, operator_norm, read_edge_list, write_edge_list)
from .harness import ExperimentPlan, PlanError, run_plan, synthesize_dataset
from .pds import (BaselineSteps, MessageLog, RunMetrics, SolverError,
                  SolverState, StackedProblem, baseline_pd_run, pds_run)
from .problem import (DataShard, FeasibleSet, LocalObjective, LogisticObjective,
                      QuadraticObjective, StochasticOracle, centralized_solve,
                      load_libsvm, logistic_objective, quadratic_objective,
                      save_libsvm, split_shards)
from .saddle import (GapProbe, LinearDualTerm, MatrixOperator, QuadraticDualTerm,
                     SaddleProblem, SingleProblem, constrained_solve,
                     gap_estimate, kkt_solve, saddle_run)
from .schedule import (ParamSchedule, ScheduleInputs, ValidationReport,
                       build_deterministic, build_stochastic, verify_conditions)
from .spds import ReplicationReport, StochasticRunConfig, replicate, spds_run

__version__ = "0.1.0"
