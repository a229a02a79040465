"""Parameter schedules for the sliding solvers and their condition validators.

Schedules follow the closed forms of the deterministic and stochastic
convergence guarantees; the validator re-evaluates every convergence
condition mechanically.  All validator arithmetic runs in log space so that
the geometric weights of the strongly convex regime (which overflow float64
long before k = 10^4) remain checkable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    pass


_CEIL_EXACT_LIMIT = 1e15  # beyond this the ceiling is a negligible relative correction


@dataclass(frozen=True)
class ScheduleInputs:
    lipschitz: float                 # Lipschitz constant of the smooth gradients
    mu: float                        # strong convexity weight (0 for merely convex)
    operator_norm: float             # spectral norm of the consensus operator
    radius: float                    # dual-radius constant R scaling inner iteration counts
    sigma: float = 0.0
    batch_constant: float | None = None   # c, stochastic mode only
    n_outer: int | None = None            # planned N, required in stochastic mode
    mode: str = "deterministic"

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ScheduleError(f"lipschitz must be positive, got {self.lipschitz}")
        if self.mu < 0:
            raise ScheduleError(f"mu must be nonnegative, got {self.mu}")
        if self.operator_norm < 0:
            raise ScheduleError(f"operator_norm must be nonnegative, got {self.operator_norm}")
        if self.radius <= 0:
            raise ScheduleError(f"radius must be positive, got {self.radius}")
        if self.mode not in ("deterministic", "stochastic"):
            raise ScheduleError(f"unknown mode {self.mode!r}")
        if self.mode == "stochastic":
            if self.batch_constant is None or self.batch_constant <= 0:
                raise ScheduleError("stochastic mode requires a positive batch_constant")
            if self.n_outer is None or self.n_outer < 1:
                raise ScheduleError("stochastic mode requires the planned outer count n_outer")


def _ceil_clamped(x: float) -> tuple[float, float]:
    """(value, log value) of max(1, ceil(x)); exact while representable."""
    if x < 1.0:
        return 1.0, 0.0
    if x < _CEIL_EXACT_LIMIT:
        v = float(math.ceil(x))
        return v, math.log(v)
    return x, math.log(x)


def _log_ceil_clamped(log_x: float) -> tuple[float, float]:
    if log_x <= 0.0:
        return 1.0, 0.0
    if log_x < math.log(_CEIL_EXACT_LIMIT):
        v = float(math.ceil(math.exp(log_x)))
        return v, math.log(v)
    return math.exp(log_x) if log_x < 709 else math.inf, log_x


class ParamSchedule:
    """Per-iteration scalar sequences, lazily extended to any outer horizon.

    Arrays are 1-indexed through accessors (index 0 holds k=1).  Float
    arrays may contain inf deep into the geometric regime; the paired log
    arrays stay finite and are what the validator consumes.
    """

    def __init__(self, inputs: ScheduleInputs):
        self.inputs = inputs
        self.mode = inputs.mode
        self.lipschitz = inputs.lipschitz
        self.mu = inputs.mu
        self.operator_norm = inputs.operator_norm
        self.radius = inputs.radius
        self.sigma = inputs.sigma
        self.batch_constant = inputs.batch_constant
        self.n_outer = inputs.n_outer
        if inputs.mu > 0:
            if self.mode == "deterministic":
                self.tau = math.sqrt(2.0 * inputs.lipschitz / inputs.mu)
            else:
                self.tau = 2.0 * math.sqrt(inputs.lipschitz / inputs.mu)
            self.lam = self.tau / (1.0 + self.tau)
            self.delta = math.ceil(2.0 * self.tau + 1.0)
        else:
            self.tau = math.inf
            self.lam = 1.0
            self.delta = None  # +infinity: every k takes the polynomial branch
        self._n_built = 0
        self._build(16)

    # -- construction -------------------------------------------------------

    def _build(self, n: int) -> None:
        if n <= self._n_built:
            return
        Lt, mu, R, nrm = self.lipschitz, self.mu, self.radius, self.operator_norm
        stoch = self.mode == "stochastic"
        p_scale = 4.0 if stoch else 2.0
        q_den = 4.0 if stoch else 2.0
        k = np.arange(1, n + 1, dtype=float)
        delta = self.delta if self.delta is not None else n + 1

        tau_k = np.where(k <= delta, (k - 1.0) / 2.0, self.tau)
        lam_k = np.where(k <= delta, (k - 1.0) / k, self.lam)

        with np.errstate(over="ignore"):
            beta = np.where(k <= delta, k, 0.0)
            log_beta = np.where(k <= delta, np.log(k), 0.0)
            p = np.where(k <= delta, p_scale * Lt / k, 0.0)
            T_raw = np.where(k <= delta, k * R * nrm / Lt, 0.0)
            log_T_raw = np.where(k <= delta, np.log(T_raw, where=T_raw > 0,
                                                    out=np.full(n, -np.inf)), 0.0)
            if self.delta is not None:
                tail = k > delta
                shift = k - delta
                log_inv_lam = -math.log(self.lam)
                log_beta = np.where(tail, math.log(delta) + shift * log_inv_lam, log_beta)
                beta = np.where(tail, delta * np.exp(shift * log_inv_lam), beta)
                p = np.where(tail, (p_scale / 2.0) * Lt / (1.0 + self.tau), p)
                if nrm > 0:
                    T_fac = 2.0 * (1.0 + self.tau) * R * nrm / Lt
                    log_T_raw = np.where(tail, math.log(T_fac) + 0.5 * shift * log_inv_lam,
                                         log_T_raw)
                    T_raw = np.where(tail, T_fac * np.exp(0.5 * shift * log_inv_lam), T_raw)
                else:
                    log_T_raw = np.where(tail, -np.inf, log_T_raw)
                    T_raw = np.where(tail, 0.0, T_raw)

        T = np.empty(n)
        log_T = np.empty(n)
        for i in range(n):
            if np.isfinite(T_raw[i]):
                T[i], log_T[i] = _ceil_clamped(T_raw[i])
            else:
                T[i], log_T[i] = _log_ceil_clamped(log_T_raw[i])

        # q is constant in t: q_k = Lt * T_k / (q_den * beta_k * R^2)
        log_q = math.log(Lt) + log_T - math.log(q_den) - log_beta - 2.0 * math.log(R)
        with np.errstate(over="ignore", under="ignore"):
            q = np.where(np.isfinite(T) & np.isfinite(beta),
                         np.divide(Lt * T, q_den * beta * R * R,
                                   where=np.isfinite(T) & np.isfinite(beta),
                                   out=np.zeros(n)),
                         np.exp(log_q))

        c_k = np.ones(n)
        log_c = np.zeros(n)
        if stoch:
            c = self.batch_constant
            N = self.n_outer
            head_n = min(N, delta) if self.delta is not None else N
            with np.errstate(over="ignore"):
                c_raw = np.where(k <= delta, head_n * beta * c / (p * Lt), 0.0)
                log_c_raw = np.where(k <= delta,
                                     math.log(head_n * c) + log_beta
                                     - np.log(np.maximum(p, 1e-300)) - math.log(Lt),
                                     0.0)
                if self.delta is not None:
                    tail = k > delta
                    c_fac = (1.0 + self.tau) ** 2 * delta * c / Lt ** 2
                    expo = 0.5 * (k + N - 2.0 * delta) * (-math.log(self.lam))
                    log_c_raw = np.where(tail, math.log(c_fac) + expo, log_c_raw)
                    c_raw = np.where(tail, c_fac * np.exp(expo), c_raw)
            for i in range(n):
                if np.isfinite(c_raw[i]):
                    c_k[i], log_c[i] = _ceil_clamped(c_raw[i])
                else:
                    c_k[i], log_c[i] = _log_ceil_clamped(log_c_raw[i])

        self.tau_arr = tau_k
        self.lam_arr = lam_k
        self.beta_arr = beta
        self.log_beta_arr = log_beta
        self.p_arr = p
        self.T_arr = T
        self.log_T_arr = log_T
        self.q_arr = q
        self.log_q_arr = log_q
        self.c_arr = c_k
        self.log_c_arr = log_c
        self._n_built = n

    def ensure(self, n: int) -> None:
        if n > self._n_built:
            self._build(max(n, 2 * self._n_built))

    # -- accessors (1-indexed in k) -----------------------------------------

    def tau_k(self, k: int) -> float:
        self.ensure(k)
        return float(self.tau_arr[k - 1])

    def lam_k(self, k: int) -> float:
        self.ensure(k)
        return float(self.lam_arr[k - 1])

    def beta_k(self, k: int) -> float:
        self.ensure(k)
        return float(self.beta_arr[k - 1])

    def p_k(self, k: int) -> float:
        self.ensure(k)
        return float(self.p_arr[k - 1])

    def T_k(self, k: int) -> int:
        self.ensure(k)
        v = self.T_arr[k - 1]
        if not np.isfinite(v):
            raise ScheduleError(f"inner iteration count overflows at k={k}")
        return int(v)

    def c_k(self, k: int) -> int:
        self.ensure(k)
        v = self.c_arr[k - 1]
        if not np.isfinite(v):
            raise ScheduleError(f"batch size overflows at k={k}")
        return int(v)

    def q_kt(self, k: int, t: int) -> float:
        self.ensure(k)
        return float(self.q_arr[k - 1])

    def eta_kt(self, k: int, t: int) -> float:
        self.ensure(k)
        p = self.p_arr[k - 1]
        return (p + self.mu) * (t - 1) + p * self.T_arr[k - 1]

    def alpha_kt(self, k: int, t: int) -> float:
        if k < 2 or t != 1:
            return 1.0
        self.ensure(k)
        log_a = (self.log_beta_arr[k - 2] + self.log_T_arr[k - 1]
                 - self.log_beta_arr[k - 1] - self.log_T_arr[k - 2])
        return float(np.exp(log_a))

    def beta_sum(self, n: int) -> float:
        self.ensure(n)
        return float(np.sum(self.beta_arr[:n]))

    def table(self, n: int) -> list[dict]:
        """Per-k dump for debugging and the schedule JSON interface."""
        self.ensure(n)
        rows = []
        for k in range(1, n + 1):
            rows.append({
                "k": k,
                "tau_k": self.tau_k(k),
                "lambda_k": self.lam_k(k),
                "beta_k": self.beta_k(k),
                "p_k": self.p_k(k),
                "T_k": int(self.T_arr[k - 1]) if np.isfinite(self.T_arr[k - 1]) else None,
                "q_k": self.q_kt(k, 1),
                "c_k": int(self.c_arr[k - 1]) if np.isfinite(self.c_arr[k - 1]) else None,
            })
        return rows


def build_deterministic(inputs: ScheduleInputs) -> ParamSchedule:
    if inputs.mode != "deterministic":
        raise ScheduleError("inputs.mode must be 'deterministic'")
    return ParamSchedule(inputs)


def build_stochastic(inputs: ScheduleInputs) -> ParamSchedule:
    if inputs.mode != "stochastic":
        raise ScheduleError("inputs.mode must be 'stochastic'")
    return ParamSchedule(inputs)


# ---------------------------------------------------------------------------
# condition validation

@dataclass
class ConditionResult:
    name: str
    passed: bool
    worst_slack: float
    worst_k: int | None


@dataclass
class ValidationReport:
    passed: bool
    mode: str
    n_outer: int
    conditions: list[ConditionResult] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "passed": self.passed,
            "mode": self.mode,
            "n_outer": self.n_outer,
            "conditions": [
                {"name": c.name, "passed": c.passed,
                 "worst_slack": None if c.worst_slack is None else float(c.worst_slack),
                 "worst_k": c.worst_k}
                for c in self.conditions
            ],
        }, indent=2)


_EQ_TOL = 1e-12
_INEQ_TOL = 1e-9


def _logs_from(values: np.ndarray, fallback_logs: np.ndarray) -> np.ndarray:
    """Log of stored float values where finite, analytic logs where overflowed."""
    out = np.array(fallback_logs, dtype=float, copy=True)
    finite = np.isfinite(values) & (values > 0)
    out[finite] = np.log(values[finite])
    return out


def verify_conditions(sched: ParamSchedule, mode: str | None = None,
                      n_outer: int | None = None) -> ValidationReport:
    """Evaluate every convergence condition of the schedule through k = N.

    Inequalities are checked in log space with slack = log(RHS) - log(LHS);
    monotone per-t conditions are checked at their worst t (t=2) and at
    t=T_k.  Failures become report entries, never exceptions.
    """
    mode = mode or sched.mode
    n = n_outer if n_outer is not None else (sched.n_outer or sched._n_built)
    if n < 1:
        raise ScheduleError("need n_outer >= 1 to validate")
    sched.ensure(n)
    fac = 2.0 if mode == "stochastic" else 1.0
    mu, Lt = sched.mu, sched.lipschitz
    nrm = sched.operator_norm
    log_A2 = 2.0 * math.log(nrm) if nrm > 0 else -math.inf

    tau_k = sched.tau_arr[:n]
    lam_k = sched.lam_arr[:n]
    p = sched.p_arr[:n]
    log_beta = _logs_from(sched.beta_arr[:n], sched.log_beta_arr[:n])
    log_T = _logs_from(sched.T_arr[:n], sched.log_T_arr[:n])
    log_q = np.array(sched.log_q_arr[:n], dtype=float)
    with np.errstate(divide="ignore"):
        log_p = np.log(p)
        log_tau = np.where(tau_k > 0, np.log(np.maximum(tau_k, 1e-300)), -np.inf)
        log_lam = np.where(lam_k > 0, np.log(np.maximum(lam_k, 1e-300)), -np.inf)
    # eta at t=1 and t=T_k; log(T-1) falls back to log T once T overflows
    T_vals = sched.T_arr[:n]
    with np.errstate(divide="ignore"):
        log_Tm1 = np.where(np.isfinite(T_vals),
                           np.log(np.maximum(T_vals - 1.0, 1e-300)), log_T)
    log_Tm1 = np.where(T_vals == 1.0, -np.inf, log_Tm1)
    log_eta1 = log_p + log_T
    # eta_last = (p+mu)(T-1) + pT, assembled as logaddexp of the two terms
    log_eta_last = np.logaddexp(np.log(p + mu) + log_Tm1, log_eta1)

    results: list[ConditionResult] = []

    def scale(a, b):
        return np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))

    def add_ineq(name, log_lhs, log_rhs, ks):
        slack = log_rhs - log_lhs
        tol = -_INEQ_TOL * scale(log_lhs, log_rhs)
        ok = (slack >= tol) | np.isposinf(slack)
        slack_f = np.where(np.isnan(slack), np.inf, slack)  # -inf <= -inf cases
        if slack_f.size == 0:
            results.append(ConditionResult(name, True, math.inf, None))
            return
        worst = int(np.argmin(slack_f))
        results.append(ConditionResult(
            name, bool(np.all(ok)), float(slack_f[worst]), int(ks[worst])))

    def add_eq(name, log_lhs, log_rhs, ks):
        diff = log_rhs - log_lhs
        tol = _EQ_TOL * scale(log_lhs, log_rhs)
        both_inf = np.isneginf(log_lhs) & np.isneginf(log_rhs)
        ok = (np.abs(diff) <= tol) | both_inf
        diff_f = np.where(both_inf, 0.0, diff)
        if diff_f.size == 0:
            results.append(ConditionResult(name, True, 0.0, None))
            return
        worst = int(np.argmax(np.abs(diff_f)))
        results.append(ConditionResult(
            name, bool(np.all(ok)), float(diff_f[worst]), int(ks[worst])))

    if n >= 2:
        ks = np.arange(2, n + 1)
        i = ks - 1      # current k
        j = ks - 2      # k-1
        # beta_k tau_k <= beta_{k-1} (tau_{k-1} + 1)
        add_ineq("beta_tau_monotone",
                 log_beta[i] + log_tau[i],
                 log_beta[j] + np.log(tau_k[j] + 1.0), ks)
        # beta_{k-1} = beta_k lambda_k
        add_eq("beta_lambda_equality", log_beta[j], log_beta[i] + log_lam[i], ks)
        # fac * Lt * lambda_k <= p_{k-1} tau_k
        add_ineq("lipschitz_extrapolation",
                 math.log(fac * Lt) + log_lam[i],
                 log_p[j] + log_tau[i], ks)
        log_alpha1 = log_beta[j] + log_T[i] - log_beta[i] - log_T[j]
        # beta_k T_{k-1} alpha_k^1 = beta_{k-1} T_k
        add_eq("inner_weight_transfer",
               log_beta[i] + log_T[j] + log_alpha1,
               log_beta[j] + log_T[i], ks)
        # alpha_k^1 ||A||^2 <= eta_{k-1}^{T_{k-1}} q_k^1
        add_ineq("extrapolation_operator_bound",
                 log_alpha1 + log_A2,
                 log_eta_last[j] + log_q[i], ks)
        # beta_k T_{k-1} q_k^1 <= beta_{k-1} T_k q_{k-1}^{T_{k-1}}
        add_ineq("dual_step_transfer",
                 log_beta[i] + log_T[j] + log_q[i],
                 log_beta[j] + log_T[i] + log_q[j], ks)
        # beta_k T_{k-1}(eta_k^1 + p_k T_k) <= beta_{k-1} T_k(mu + eta_{k-1}^{T_{k-1}} + p_{k-1})
        lhs = log_beta[i] + log_T[j] + np.logaddexp(log_eta1[i], log_p[i] + log_T[i])
        rhs_inner = np.logaddexp(log_eta_last[j], log_p[j])
        if mu > 0:
            rhs_inner = np.logaddexp(rhs_inner, math.log(mu))
        add_ineq("primal_step_transfer", lhs, log_beta[j] + log_T[i] + rhs_inner, ks)

    # per-t conditions, worst case t=2 (eta increasing in t, q constant in t)
    ks_all = np.arange(1, n + 1)
    multi = T_vals >= 2.0
    add_ineq("operator_vs_steps_inner",
             np.where(multi, log_A2, -np.inf),
             np.where(multi, log_eta1 + log_q, np.inf), ks_all)
    # q_k^t <= q_k^{t-1}: q is constant in t, so the slack is identically zero
    add_ineq("dual_step_nonincreasing", log_q, log_q, ks_all)
    # eta_k^t <= mu + eta_k^{t-1} + p_k: the eta increment is exactly p+mu,
    # so LHS and RHS agree for every t; checked at t=2 form
    grow = np.logaddexp(np.log(p + mu), log_eta1)
    add_ineq("primal_step_growth", grow, grow, ks_all)

    # endpoint conditions
    tau1_ok = sched.tau_arr[0] == 0.0
    results.append(ConditionResult("first_iteration_tau_zero", bool(tau1_ok),
                                   float(-abs(sched.tau_arr[0])), 1))
    lhs_end = math.log(fac * Lt)
    rhs_end = math.log(p[n - 1]) + math.log(tau_k[n - 1] + 1.0)
    add_ineq("final_primal_strength", np.array([lhs_end]), np.array([rhs_end]),
             np.array([n]))
    add_ineq("final_operator_bound", np.array([log_A2]),
             np.array([log_eta_last[n - 1] + log_q[n - 1]]), np.array([n]))

    return ValidationReport(
        passed=all(r.passed for r in results),
        mode=mode, n_outer=n, conditions=results,
    )
