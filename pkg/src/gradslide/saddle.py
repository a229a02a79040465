"""Bilinearly coupled saddle-point extension and the linearly constrained
specialization min f(x) s.t. Ax = b.

The same outer/inner recursion as the decentralized solver, with the dual
update generalized to a prox on a simple dual function h.  The conjugate
of the smooth part is never formed by the solver; it appears only in the
gap evaluation for closed-form test instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .pds import RunMetrics, SolverError, run_network_loop
from .problem import LocalObjective
from .schedule import ParamSchedule, verify_conditions


class MatrixOperator:
    """Dense coupling operator for flat primal/dual vectors."""

    def __init__(self, a: np.ndarray):
        self.a = np.asarray(a, dtype=float)
        if self.a.ndim != 2:
            raise SolverError("coupling matrix must be 2-dimensional")
        self._norm = float(np.linalg.norm(self.a, 2))

    @property
    def domain_shape(self):
        return (self.a.shape[1],)

    @property
    def range_shape(self):
        return (self.a.shape[0],)

    @property
    def norm(self) -> float:
        return self._norm

    def apply(self, x):
        return self.a @ x

    def adjoint(self, z):
        return self.a.T @ z


class SingleProblem:
    """Engine adapter for one objective over a flat primal vector."""

    def __init__(self, objective: LocalObjective):
        self.objective = objective
        self.mu = objective.mu

    def grad(self, x):
        return self.objective.grad(x)

    def value(self, x):
        return self.objective.value(x)

    def prox(self, g, anchor_t, anchor_k, eta, p):
        o = self.objective
        free = (eta * anchor_t + p * anchor_k - g) / (o.mu + eta + p)
        return o.feasible_set.project(free)

    def project(self, x):
        return self.objective.feasible_set.project(np.asarray(x, dtype=float))


class LinearDualTerm:
    """h(z) = <b, z> over the whole dual space."""

    def __init__(self, b):
        self.b = np.asarray(b, dtype=float)

    def value(self, z):
        return float(np.sum(self.b * z))

    def prox(self, z_prev, applied, q):
        # argmin_z h(z) - <applied, z> + (q/2)||z - z_prev||^2
        return z_prev + (applied - self.b) / q

    def zero(self, shape):
        return np.zeros(shape)


class QuadraticDualTerm:
    """h(z) = (1/2)||z||^2."""

    def value(self, z):
        return 0.5 * float(np.sum(z * z))

    def prox(self, z_prev, applied, q):
        return (q * z_prev + applied) / (1.0 + q)

    def zero(self, shape):
        return np.zeros(shape)


@dataclass
class SaddleProblem:
    """min_x max_z f(x) + <Ax, z> - h(z) with Euclidean prox generators."""

    problem: object                       # engine protocol: grad/value/prox/project, .mu
    op: object                            # apply/adjoint/norm
    dual: object                          # h term with value/prox
    conjugate: Callable | None = None     # smooth-part conjugate, closed-form instances only


@dataclass
class GapProbe:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


@dataclass
class GapValue:
    value: float
    exact: bool


@dataclass
class SaddleState:
    x_bar: np.ndarray
    y_bar: np.ndarray
    z_bar: np.ndarray
    beta_sum: float


def saddle_run(sp: SaddleProblem, sched: ParamSchedule, n_outer: int,
               x0: np.ndarray, z0: np.ndarray | None = None, *,
               x_under0: np.ndarray | None = None, stop=None, trace=None,
               validate: bool = True, record_history: bool = True):
    """Run the saddle extension; returns ((x_bar, y_bar, z_bar), metrics).

    The initial dual value y_0 is specified through its primal preimage
    x_under0 (y_0 = grad of smooth part there), which avoids requiring the
    conjugate; x_under0 defaults to x0.
    """
    if validate and isinstance(sched, ParamSchedule):
        report = verify_conditions(sched, n_outer=n_outer)
        if not report.passed:
            failed = [c.name for c in report.conditions if not c.passed]
            raise SolverError(f"schedule fails convergence conditions: {failed}")
    metrics = RunMetrics()
    x0 = np.asarray(x0, dtype=float)
    under0 = np.asarray(x_under0, dtype=float) if x_under0 is not None else x0

    def z_update(z_prev, applied, q):
        return sp.dual.prox(z_prev, applied, q)

    x_bar, state, metrics = run_network_loop(
        sp.problem, sp.op, sched, n_outer, x0, z_update=z_update,
        x_under0=under0, z0=z0, metrics=metrics, stop=stop, trace=trace,
        record_history=record_history)
    out = SaddleState(state.x_bar, state.y_bar, state.z_bar, state.beta_sum)
    return (state.x_bar, state.y_bar, state.z_bar), out, metrics


def gap_estimate(candidate: GapProbe, probe: GapProbe, sp: SaddleProblem,
                 f_star: float | None = None) -> GapValue:
    """Primal-dual gap of the candidate triple against a probe point.

    Exact when the smooth-part conjugate is available in closed form.
    Otherwise, for the linearly constrained specialization, falls back to
    the objective-gap lower bound f(x_bar) - f(x*), labeled inexact.
    """
    if sp.conjugate is not None:
        mu = sp.problem.mu

        def nu(x):
            return 0.5 * float(np.sum(x * x))

        lead = (mu * nu(candidate.x)
                + float(np.sum(candidate.x * (probe.y + sp.op.adjoint(probe.z))))
                - sp.conjugate(probe.y) - sp.dual.value(probe.z))
        trail = (mu * nu(probe.x)
                 + float(np.sum(probe.x * (candidate.y + sp.op.adjoint(candidate.z))))
                 - sp.conjugate(candidate.y) - sp.dual.value(candidate.z))
        return GapValue(lead - trail, exact=True)
    if f_star is None:
        raise SolverError("gap needs either a closed-form conjugate or f_star")
    return GapValue(sp.problem.value(candidate.x) - f_star, exact=False)


@dataclass
class ConstrainedResult:
    x_bar: np.ndarray
    objective: float
    residual: float
    f_gap: float | None


def constrained_solve(problem, op, b: np.ndarray, sched: ParamSchedule,
                      n_outer: int, x0: np.ndarray, *, x_star=None,
                      f_star: float | None = None, stop=None,
                      validate: bool = True) -> ConstrainedResult:
    """Solve min f(x) s.t. Ax = b via the saddle extension with h = <b, .>.

    z starts at 0 per the specialization.  If a reference optimum is
    supplied (x_star or f_star), the objective gap is reported as well.
    """
    sp = SaddleProblem(problem=problem, op=op, dual=LinearDualTerm(b))
    (x_bar, _, _), _, metrics = saddle_run(
        sp, sched, n_outer, x0, z0=np.zeros(op.range_shape), stop=stop,
        validate=validate, record_history=False)
    val = problem.value(x_bar)
    residual = float(np.linalg.norm(op.apply(x_bar) - b))
    gap = None
    if f_star is None and x_star is not None:
        f_star = problem.value(np.asarray(x_star, dtype=float))
    if f_star is not None:
        gap = val - f_star
    return ConstrainedResult(x_bar, val, residual, gap)


def kkt_solve(q_diag: np.ndarray, lin: np.ndarray, mu: float, a: np.ndarray,
              b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense KKT reference for min (1/2)x^T diag(q) x + lin^T x + (mu/2)||x||^2
    s.t. a x = b; returns (x*, minimum-norm multiplier z*).

    Test-oracle use: the multiplier block is resolved by least squares, so
    rank-deficient constraint operators (graph Laplacians) get the
    minimum-norm dual solution.
    """
    q_diag = np.asarray(q_diag, dtype=float)
    a = np.asarray(a, dtype=float)
    n = q_diag.size
    h = np.diag(q_diag + mu)
    kkt = np.block([[h, a.T], [a, np.zeros((a.shape[0], a.shape[0]))]])
    rhs = np.concatenate([-np.asarray(lin, dtype=float), np.asarray(b, dtype=float)])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:n], sol[n:]
