"""Deterministic sliding solver: network view, agent view, and a non-sliding
primal-dual baseline.

The outer loop extrapolates, evaluates one gradient, and sets up a proximal
subproblem; the inner loop runs T_k communication rounds on that subproblem
without touching the gradient oracle again.  The agent view executes the
same recursion via explicit neighbor message passing and must reproduce the
network view trajectory exactly (up to summation order).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .problem import LocalObjective
from .schedule import ParamSchedule, verify_conditions


class SolverError(RuntimeError):
    pass


@dataclass
class RunMetrics:
    gradient_evals: int = 0
    init_gradient_evals: int = 0
    sample_count: int = 0
    comm_rounds: int = 0
    history: list[dict] = field(default_factory=list)

    def record(self, k: int, loss: float, feasibility: float, elapsed_ms: float):
        self.history.append({
            "k": k,
            "gradients": self.gradient_evals,
            "rounds": self.comm_rounds,
            "samples": self.sample_count,
            "loss": loss,
            "feasibility": feasibility,
            "elapsed_ms": elapsed_ms,
        })

    def to_csv(self) -> str:
        lines = ["k,gradients,rounds,samples,loss,feasibility,elapsed_ms"]
        for row in self.history:
            lines.append(f"{row['k']},{row['gradients']},{row['rounds']},"
                         f"{row['samples']},{row['loss']:.17g},"
                         f"{row['feasibility']:.17g},{row['elapsed_ms']:.3f}")
        return "\n".join(lines) + "\n"


@dataclass
class MessageLog:
    """Record of every neighbor exchange; non-edge pairs fail the audit."""

    records: list[tuple[int, int, str]] = field(default_factory=list)

    def log(self, sender: int, receiver: int, tag: str):
        self.records.append((sender, receiver, tag))

    def audit(self, graph) -> list[tuple[int, int, str]]:
        """Return all records whose (sender, receiver) is not an edge or self-loop."""
        allowed = {(i, j) for i, j in graph.edges} | {(j, i) for i, j in graph.edges}
        allowed |= {(i, i) for i in range(graph.m)}
        return [r for r in self.records if (r[0], r[1]) not in allowed]


@dataclass
class SolverState:
    x: np.ndarray            # x_N
    x_under: np.ndarray      # last gradient query point
    y: np.ndarray            # last exact/estimated gradient block
    z: np.ndarray            # dual iterate
    x_bar: np.ndarray        # beta-weighted output average
    y_bar: np.ndarray
    z_bar: np.ndarray
    beta_sum: float
    k: int


class StackedProblem:
    """Per-agent objectives stacked into (m, d) block arrays."""

    def __init__(self, objectives: list[LocalObjective]):
        if not objectives:
            raise SolverError("need at least one objective")
        d = objectives[0].d
        for o in objectives:
            if o.d != d:
                raise SolverError("objectives disagree on dimension")
        self.objectives = objectives
        self.m = len(objectives)
        self.d = d
        self.mu = max(o.mu for o in objectives)
        self.lipschitz = max(o.lipschitz for o in objectives)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.stack([o.grad(x[i]) for i, o in enumerate(self.objectives)])

    def value(self, x: np.ndarray) -> float:
        return sum(o.value(x[i]) for i, o in enumerate(self.objectives))

    def value_at_consensus(self, x: np.ndarray) -> float:
        """Global objective evaluated at the average of the agent blocks."""
        mean = x.mean(axis=0)
        return sum(o.value(mean) for o in self.objectives)

    def prox(self, g, anchor_t, anchor_k, eta, p) -> np.ndarray:
        out = np.empty_like(anchor_t)
        for i, o in enumerate(self.objectives):
            free = (eta * anchor_t[i] + p * anchor_k[i] - g[i]) / (o.mu + eta + p)
            out[i] = o.feasible_set.project(free)
        return out

    def project(self, x) -> np.ndarray:
        return np.stack([o.feasible_set.project(x[i]) for i, o in enumerate(self.objectives)])


class FixedSchedule:
    """Constant-parameter schedule used by the non-sliding baseline.

    tau=0 and lambda=0 disable the outer extrapolation; T_k=1 makes every
    communication round pay one gradient.
    """

    def __init__(self, eta: float, q: float, p: float):
        self.eta, self.q, self.p = eta, q, p
        self.mu = 0.0

    def tau_k(self, k):
        return 0.0

    def lam_k(self, k):
        return 0.0

    def beta_k(self, k):
        return 1.0

    def p_k(self, k):
        return self.p

    def T_k(self, k):
        return 1

    def q_kt(self, k, t):
        return self.q

    def eta_kt(self, k, t):
        return self.eta

    def alpha_kt(self, k, t):
        return 1.0


def _default_z_update(z_prev, applied, q):
    return z_prev + applied / q


def run_network_loop(problem, op, sched, n_outer, x0, *,
                     grad_source=None, z_update=_default_z_update,
                     x_under0=None, z0=None, metrics=None,
                     stop=None, trace=None, record_history=True):
    """Shared outer/inner recursion, whole-system view.

    ``problem`` needs grad/value/prox; ``op`` needs apply/adjoint.
    ``grad_source(k, x_under) -> y_k`` overrides the exact gradient (used by
    the mini-batch solver).  ``z_update(z_prev, A u, q) -> z`` generalizes
    the dual prox (used by the saddle extension).  ``stop(k, x_bar,
    metrics)`` may end the run early.
    """
    metrics = metrics if metrics is not None else RunMetrics()
    x0 = np.asarray(x0, dtype=float)
    x_prev = problem.project(x0)          # x_{k-1}
    x_prev2 = x_prev.copy()               # x_{k-2}
    x_hat_prev = x_prev.copy()            # \hat{x}_{k-1}
    x_under = x_under0.copy() if x_under0 is not None else x_prev.copy()
    y = problem.grad(x_under)             # y_0
    metrics.init_gradient_evals += 1
    z = (np.asarray(z0, dtype=float).copy() if z0 is not None
         else np.zeros(op.range_shape))
    x_inner_tail = x_prev.copy()          # x_{k-1}^{T_{k-1}-1}; x_1^{-1} = x_0

    xbar_acc = np.zeros_like(x_prev)
    ybar_acc = np.zeros_like(y)
    zbar_acc = np.zeros_like(z)
    beta_sum = 0.0
    t_start = time.perf_counter()
    k_done = 0

    for k in range(1, n_outer + 1):
        lam = sched.lam_k(k)
        tau = sched.tau_k(k)
        beta = sched.beta_k(k)
        p = sched.p_k(k)
        T = sched.T_k(k)

        x_tilde = x_prev + lam * (x_hat_prev - x_prev2)
        x_under = (x_tilde + tau * x_under) / (1.0 + tau)
        if grad_source is None:
            y = problem.grad(x_under)
        else:
            y = grad_source(k, x_under)
        metrics.gradient_evals += 1

        x_t = x_prev.copy()               # x_k^{t-1}
        x_t2 = x_inner_tail               # x_k^{t-2} seed: x_{k-1}^{T_{k-1}-1}
        z_t = z
        xhat_acc = np.zeros_like(x_prev)
        zhat_acc = np.zeros_like(z)
        for t in range(1, T + 1):
            alpha = sched.alpha_kt(k, t)
            q = sched.q_kt(k, t)
            eta = sched.eta_kt(k, t)
            u = x_t + alpha * (x_t - x_t2)
            z_t = z_update(z_t, op.apply(u), q)
            metrics.comm_rounds += 1
            g = y + op.adjoint(z_t)
            metrics.comm_rounds += 1
            x_new = problem.prox(g, x_t, x_prev, eta, p)
            if not np.all(np.isfinite(x_new)):
                raise SolverError(f"non-finite iterate at outer k={k}, inner t={t}")
            x_t2, x_t = x_t, x_new
            xhat_acc += x_new
            zhat_acc += z_t
            if trace is not None:
                trace.append((k, t, x_new.copy(), np.array(z_t, copy=True)))

        x_inner_tail = x_t2               # x_k^{T_k - 1}
        x_prev2, x_prev = x_prev, x_t
        x_hat_prev = xhat_acc / T
        z = z_t
        beta_sum += beta
        xbar_acc += beta * x_hat_prev
        ybar_acc += beta * y
        zbar_acc += beta * (zhat_acc / T)
        k_done = k

        x_bar = xbar_acc / beta_sum
        if record_history:
            elapsed = 1000.0 * (time.perf_counter() - t_start)
            metrics.record(k, problem.value(x_bar),
                           float(np.linalg.norm(op.apply(x_bar))), elapsed)
        if stop is not None and stop(k, x_bar, metrics):
            break

    x_bar = xbar_acc / beta_sum
    state = SolverState(x=x_prev, x_under=x_under, y=y, z=z,
                        x_bar=x_bar, y_bar=ybar_acc / beta_sum,
                        z_bar=zbar_acc / beta_sum, beta_sum=beta_sum, k=k_done)
    return x_bar, state, metrics


def agent_step_z(i: int, neighbor_u: dict[int, np.ndarray], z_prev: np.ndarray,
                 q: float, lap_row: dict[int, float],
                 log: MessageLog | None = None) -> np.ndarray:
    """One agent's dual update from its neighbors' extrapolated payloads."""
    missing = set(lap_row) - set(neighbor_u)
    if missing:
        raise SolverError(f"agent {i} missing payloads from neighbors {sorted(missing)}")
    acc = np.zeros_like(z_prev)
    for j, w in lap_row.items():
        acc += w * neighbor_u[j]
        if log is not None:
            log.log(j, i, "u-block")
    return z_prev + acc / q


def _run_agent_view(problem, op, sched, n_outer, x0, metrics, msg_log,
                    grad_source=None, stop=None, trace=None, record_history=True):
    """Agent-perspective execution with explicit message passing.

    Only the Laplacian form carries the neighbor-sum semantics; agents are
    stepped in barrier-synchronized rounds reading the previous round's
    published payloads.
    """
    if op.form != "laplacian":
        raise SolverError("agent view requires the Laplacian operator form")
    graph = op.graph
    m, d = op.domain_shape
    lap_rows = [op.laplacian_row(i) for i in range(m)]

    x0 = np.asarray(x0, dtype=float)
    x_prev = problem.project(x0)
    x_prev2 = x_prev.copy()
    x_hat_prev = x_prev.copy()
    x_under = x_prev.copy()
    y = problem.grad(x_under)
    metrics.init_gradient_evals += 1
    z = np.zeros((m, d))
    x_inner_tail = x_prev.copy()

    xbar_acc = np.zeros_like(x_prev)
    beta_sum = 0.0
    t_start = time.perf_counter()
    k_done = 0

    for k in range(1, n_outer + 1):
        lam, tau = sched.lam_k(k), sched.tau_k(k)
        beta, p, T = sched.beta_k(k), sched.p_k(k), sched.T_k(k)

        x_tilde = x_prev + lam * (x_hat_prev - x_prev2)
        x_under = (x_tilde + tau * x_under) / (1.0 + tau)
        if grad_source is None:
            y = problem.grad(x_under)
        else:
            y = grad_source(k, x_under)
        metrics.gradient_evals += 1

        x_t, x_t2, z_t = x_prev.copy(), x_inner_tail, z
        xhat_acc = np.zeros_like(x_prev)
        for t in range(1, T + 1):
            alpha = sched.alpha_kt(k, t)
            q = sched.q_kt(k, t)
            eta = sched.eta_kt(k, t)
            # round 1: publish extrapolated u-blocks, update duals
            u = x_t + alpha * (x_t - x_t2)
            published_u = {i: u[i] for i in range(m)}
            z_new = np.empty_like(z_t)
            for i in range(m):
                payload = {j: published_u[j] for j in lap_rows[i]}
                z_new[i] = agent_step_z(i, payload, z_t[i], q, lap_rows[i], log=msg_log)
            metrics.comm_rounds += 1
            z_t = z_new
            # round 2: publish z-blocks, take local prox steps
            published_z = {i: z_t[i] for i in range(m)}
            x_new = np.empty_like(x_t)
            for i, obj in enumerate(problem.objectives):
                coupled = np.zeros(d)
                for j, w in lap_rows[i].items():
                    coupled += w * published_z[j]
                    if msg_log is not None:
                        msg_log.log(j, i, "z-block")
                g_i = y[i] + coupled
                free = (eta * x_t[i] + p * x_prev[i] - g_i) / (obj.mu + eta + p)
                x_new[i] = obj.feasible_set.project(free)
            metrics.comm_rounds += 1
            if not np.all(np.isfinite(x_new)):
                raise SolverError(f"non-finite iterate at outer k={k}, inner t={t}")
            x_t2, x_t = x_t, x_new
            xhat_acc += x_new
            if trace is not None:
                trace.append((k, t, x_new.copy(), z_t.copy()))

        x_inner_tail = x_t2
        x_prev2, x_prev = x_prev, x_t
        x_hat_prev = xhat_acc / T
        z = z_t
        beta_sum += beta
        xbar_acc += beta * x_hat_prev
        k_done = k

        x_bar = xbar_acc / beta_sum
        if record_history:
            elapsed = 1000.0 * (time.perf_counter() - t_start)
            metrics.record(k, problem.value(x_bar),
                           float(np.linalg.norm(op.apply(x_bar))), elapsed)
        if stop is not None and stop(k, x_bar, metrics):
            break

    x_bar = xbar_acc / beta_sum
    state = SolverState(x=x_prev, x_under=x_under, y=y, z=z, x_bar=x_bar,
                        y_bar=y, z_bar=z, beta_sum=beta_sum, k=k_done)
    return x_bar, state, metrics


def pds_run(objs: list[LocalObjective], op, sched: ParamSchedule, n_outer: int,
            x0: np.ndarray, view: str = "network", *, stop=None, trace=None,
            validate: bool = True, record_history: bool = True,
            message_log: MessageLog | None = None):
    """Run the deterministic sliding solver for n_outer outer iterations.

    Returns (x_bar, SolverState, RunMetrics, MessageLog).  The network view
    is vectorized over agents; the agent view performs the equivalent
    neighbor message passing and fills the MessageLog.
    """
    problem = objs if isinstance(objs, StackedProblem) else StackedProblem(objs)
    if (problem.m, problem.d) != op.domain_shape:
        raise SolverError(f"operator domain {op.domain_shape} does not match "
                          f"problem shape {(problem.m, problem.d)}")
    if validate and isinstance(sched, ParamSchedule):
        report = verify_conditions(sched, n_outer=n_outer)
        if not report.passed:
            failed = [c.name for c in report.conditions if not c.passed]
            raise SolverError(f"schedule fails convergence conditions: {failed}")
    metrics = RunMetrics()
    if view == "network":
        log = message_log if message_log is not None else MessageLog()
        x_bar, state, metrics = run_network_loop(
            problem, op, sched, n_outer, x0, metrics=metrics, stop=stop,
            trace=trace, record_history=record_history)
        return x_bar, state, metrics, log
    if view == "agent":
        log = message_log if message_log is not None else MessageLog()
        x_bar, state, metrics = _run_agent_view(
            problem, op, sched, n_outer, x0, metrics, log, stop=stop,
            trace=trace, record_history=record_history)
        return x_bar, state, metrics, log
    raise SolverError(f"unknown view {view!r}")


@dataclass(frozen=True)
class BaselineSteps:
    eta: float
    q: float
    p: float = 0.0


def baseline_pd_run(objs: list[LocalObjective], op, n_total_inner: int,
                    steps: BaselineSteps, x0: np.ndarray, *, stop=None,
                    record_history: bool = True):
    """Non-sliding primal-dual reference: one gradient per communication pair.

    Equivalent to the sliding recursion with T_k = 1, no outer
    extrapolation, and constant step sizes; exists to expose the gradient
    count gap, not to be competitive.
    """
    problem = objs if isinstance(objs, StackedProblem) else StackedProblem(objs)
    if steps.eta * steps.q < op.norm ** 2:
        raise SolverError(
            f"step condition eta*q >= ||A||^2 violated: "
            f"{steps.eta * steps.q} < {op.norm ** 2}")
    sched = FixedSchedule(steps.eta, steps.q, steps.p)
    metrics = RunMetrics()
    x_bar, state, metrics = run_network_loop(
        problem, op, sched, n_total_inner, x0, metrics=metrics, stop=stop,
        record_history=record_history)
    return x_bar, metrics
