"""Stochastic sliding solver: mini-batch gradients with growing batch sizes.

Identical control flow to the deterministic solver except that the outer
gradient is replaced by the batch-c_k average of stochastic draws.  With
the Euclidean prox generator the primal update is unchanged, so the sigma=0
case degenerates bit-for-bit to the deterministic path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pds import MessageLog, RunMetrics, SolverError, StackedProblem, run_network_loop
from .problem import StochasticOracle
from .schedule import ParamSchedule, verify_conditions


@dataclass(frozen=True)
class StochasticRunConfig:
    replications: int
    base_seed: int

    def __post_init__(self):
        if self.replications < 1:
            raise SolverError(f"need at least one replication, got {self.replications}")


def spds_run(oracles: list[StochasticOracle], op, sched: ParamSchedule,
             n_outer: int, x0: np.ndarray, seed: int, *, stop=None,
             trace=None, validate: bool = True, record_history: bool = True):
    """Run the mini-batch sliding solver.

    Per-draw randomness is keyed by (seed, agent, outer k), so trajectories
    are reproducible and independent of agent stepping order.  Sample
    counters advance by c_k per agent per outer iteration.
    """
    problem = StackedProblem([o.objective for o in oracles])
    if (problem.m, problem.d) != op.domain_shape:
        raise SolverError(f"operator domain {op.domain_shape} does not match "
                          f"problem shape {(problem.m, problem.d)}")
    if validate and isinstance(sched, ParamSchedule):
        report = verify_conditions(sched, mode="stochastic", n_outer=n_outer)
        if not report.passed:
            failed = [c.name for c in report.conditions if not c.passed]
            raise SolverError(f"schedule fails convergence conditions: {failed}")
    metrics = RunMetrics()

    def minibatch(k: int, x_under: np.ndarray) -> np.ndarray:
        batch = sched.c_k(k)
        v = np.empty_like(x_under)
        for i, oracle in enumerate(oracles):
            rng = np.random.default_rng([seed, i, k])
            v[i] = oracle.sample(x_under[i], batch, rng=rng)
        metrics.sample_count += batch * len(oracles)
        return v

    x_bar, state, metrics = run_network_loop(
        problem, op, sched, n_outer, x0, grad_source=minibatch,
        metrics=metrics, stop=stop, trace=trace, record_history=record_history)
    return x_bar, state, metrics, MessageLog()


@dataclass
class ReplicationReport:
    replications: int
    base_seed: int
    final_losses: list[float]
    final_feasibilities: list[float]
    total_samples: int
    total_rounds: int

    def summary(self) -> dict:
        losses = np.asarray(self.final_losses)
        feas = np.asarray(self.final_feasibilities)
        return {
            "replications": self.replications,
            "base_seed": self.base_seed,
            "loss_mean": float(losses.mean()),
            "loss_std": float(losses.std(ddof=0)),
            "loss_min": float(losses.min()),
            "loss_max": float(losses.max()),
            "feasibility_mean": float(feas.mean()),
            "feasibility_std": float(feas.std(ddof=0)),
            "feasibility_min": float(feas.min()),
            "feasibility_max": float(feas.max()),
            "total_samples": self.total_samples,
            "total_rounds": self.total_rounds,
        }


def replicate(oracles: list[StochasticOracle], op, sched: ParamSchedule,
              n_outer: int, x0: np.ndarray, config: StochasticRunConfig,
              loss_fn=None) -> ReplicationReport:
    """Run seeded replications r = 0..R-1 with seeds base_seed + r.

    ``loss_fn(x_bar)`` defaults to the stacked objective value at the agent
    blocks; the report aggregates final loss and feasibility residue.
    """
    problem = StackedProblem([o.objective for o in oracles])
    if loss_fn is None:
        loss_fn = problem.value
    losses, feas = [], []
    total_samples = 0
    total_rounds = 0
    for r in range(config.replications):
        x_bar, _, metrics, _ = spds_run(
            oracles, op, sched, n_outer, x0, seed=config.base_seed + r,
            record_history=False)
        losses.append(float(loss_fn(x_bar)))
        feas.append(float(np.linalg.norm(op.apply(x_bar))))
        total_samples += metrics.sample_count
        total_rounds += metrics.comm_rounds
    return ReplicationReport(config.replications, config.base_seed,
                             losses, feas, total_samples, total_rounds)
