"""Command-line entry point.

Subcommands: run (one solver run), plan (experiment table), validate-schedule,
graph-info, solve-constrained.  All configs are strict JSON: unknown keys are
rejected.  Exit codes: 0 success, 1 configuration error, 2 solver error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .graph import (GraphError, NormEstimationError, laplacian_operator,
                    read_edge_list)
from .harness import (ExperimentPlan, GraphSpec, PlanError, ProblemSpec,
                      _strict, run_plan)
from .pds import BaselineSteps, SolverError, StackedProblem, baseline_pd_run, pds_run
from .problem import (DatasetError, FeasibleSet, ProblemError, StochasticOracle,
                      logistic_objective, quadratic_objective, split_shards)
from .saddle import MatrixOperator, SingleProblem, constrained_solve
from .schedule import (ParamSchedule, ScheduleError, ScheduleInputs,
                       build_deterministic, build_stochastic, verify_conditions)
from .spds import spds_run

_CONFIG_ERRORS = (PlanError, DatasetError, GraphError, ProblemError,
                  ScheduleError, FileNotFoundError, KeyError, TypeError)
_SOLVER_ERRORS = (SolverError, NormEstimationError)


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: invalid JSON at line {exc.lineno} "
                        f"column {exc.colno}: {exc.msg}") from exc


def _schedule_from(cfg: dict, where: str = "schedule") -> ParamSchedule:
    _strict(cfg, {"lipschitz", "mu", "operator_norm", "radius", "mode",
                  "sigma", "batch_constant", "n_outer"}, where)
    mode = cfg.get("mode", "deterministic")
    inputs = ScheduleInputs(
        lipschitz=float(cfg["lipschitz"]), mu=float(cfg.get("mu", 0.0)),
        operator_norm=float(cfg["operator_norm"]), radius=float(cfg["radius"]),
        sigma=float(cfg.get("sigma", 0.0)),
        batch_constant=cfg.get("batch_constant"),
        n_outer=cfg.get("n_outer"), mode=mode)
    if mode == "stochastic":
        return build_stochastic(inputs)
    return build_deterministic(inputs)


def _cmd_validate_schedule(cfg: dict, out: Path | None, args) -> int:
    n_outer = cfg.get("n_outer")
    if n_outer is None:
        raise PlanError("validate-schedule config needs 'n_outer'")
    sched = _schedule_from(cfg)
    report = verify_conditions(sched, n_outer=int(n_outer))
    text = report.to_json()
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "schedule_report.json").write_text(text + "\n")
    return 0 if report.passed else 2


def _cmd_graph_info(cfg: dict, out: Path | None, args) -> int:
    _strict(cfg, {"edge_list", "kind", "m", "edge_prob", "seed", "d"}, "graph-info")
    if "edge_list" in cfg:
        graph = read_edge_list(cfg["edge_list"])
    else:
        spec = GraphSpec.from_dict({k: v for k, v in cfg.items() if k != "d"})
        graph = spec.build()
    op = laplacian_operator(graph, int(cfg.get("d", 1)))
    info = {"m": graph.m, "edges": len(graph.edges), "d_max": graph.max_degree,
            "operator_norm": op.norm}
    print(json.dumps(info, sort_keys=True))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "graph_info.json").write_text(json.dumps(info, sort_keys=True) + "\n")
    return 0


def _cmd_run(cfg: dict, out: Path | None, args) -> int:
    _strict(cfg, {"algorithm", "graph", "problem", "n_outer", "radius",
                  "batch_constant", "sigma", "seed", "view"}, "run config")
    for key in ("algorithm", "graph", "problem", "n_outer"):
        if key not in cfg:
            raise PlanError(f"run config is missing {key!r}")
    algorithm = cfg["algorithm"]
    if algorithm not in ("pds", "spds", "baseline"):
        raise PlanError(f"unknown algorithm {algorithm!r}")
    gspec = GraphSpec.from_dict(cfg["graph"])
    pspec = ProblemSpec.from_dict(cfg["problem"])
    graph = gspec.build()
    shards = split_shards(pspec.load(), graph.m, pspec.seed)
    objs = [logistic_objective(s, mu=pspec.mu) for s in shards]
    op = laplacian_operator(graph, shards[0].n_features)
    lip = max(o.lipschitz for o in objs) * pspec.lipschitz_multiplier
    n_outer = int(cfg["n_outer"])
    radius = float(cfg.get("radius", 1.0))
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    x0 = np.zeros(op.domain_shape)

    if algorithm == "pds":
        sched = build_deterministic(ScheduleInputs(
            lipschitz=lip, mu=pspec.mu, operator_norm=op.norm, radius=radius))
        x_bar, _, metrics, _ = pds_run(objs, op, sched, n_outer, x0,
                                       view=cfg.get("view", "network"))
    elif algorithm == "spds":
        sched = build_stochastic(ScheduleInputs(
            lipschitz=lip, mu=pspec.mu, operator_norm=op.norm, radius=radius,
            sigma=float(cfg.get("sigma", 0.0)),
            batch_constant=float(cfg.get("batch_constant", 1.0)),
            n_outer=n_outer, mode="stochastic"))
        oracles = [StochasticOracle(o, sigma=float(cfg.get("sigma", 0.0)))
                   for o in objs]
        x_bar, _, metrics, _ = spds_run(oracles, op, sched, n_outer, x0, seed=seed)
    else:
        lip_safe = max(o.lipschitz for o in objs)
        steps = BaselineSteps(eta=lip_safe + 2.0 * op.norm, q=max(op.norm, 1e-12))
        x_bar, metrics = baseline_pd_run(objs, op, n_outer, steps, x0)

    problem = StackedProblem(objs)
    summary = {
        "algorithm": algorithm, "graph": gspec.name, "m": graph.m,
        "d_max": graph.max_degree, "n_outer": n_outer, "seed": seed,
        "final_loss": problem.value_at_consensus(x_bar),
        "final_feasibility": float(np.linalg.norm(op.apply(x_bar))),
        "gradient_evals": metrics.gradient_evals,
        "comm_rounds": metrics.comm_rounds,
        "samples": metrics.sample_count,
    }
    print(json.dumps(summary, sort_keys=True))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2,
                                                     sort_keys=True) + "\n")
        (out / "trajectory.csv").write_text(metrics.to_csv())
    return 0


def _cmd_plan(cfg: dict, out: Path | None, args) -> int:
    plan = ExperimentPlan.from_dict(cfg)
    if args.scale == "paper":
        # full-size protocol: 100 agents, 20000 samples, full round budget
        plan = ExperimentPlan.from_dict({**_plan_dict(plan),
                                         "budget_rounds": max(plan.budget_rounds, 100_000),
                                         "max_outer": max(plan.max_outer, 2000)})
    rows = run_plan(plan, output_dir=out)
    n_ok = sum(r["status"] == "ok" for r in rows)
    n_na = sum(r["status"] == "NA" for r in rows)
    n_err = sum(r["status"] == "error" for r in rows)
    print(f"plan complete: {len(rows)} rows ({n_ok} ok, {n_na} NA, {n_err} error)")
    return 0 if n_err == 0 else 2


def _plan_dict(plan: ExperimentPlan) -> dict:
    from .harness import _plan_echo
    d = _plan_echo(plan)
    d["figures"] = plan.figures
    d["output_dir"] = plan.output_dir
    return d


def _cmd_solve_constrained(cfg: dict, out: Path | None, args) -> int:
    _strict(cfg, {"q_diag", "lin", "mu", "a", "b", "n_outer", "radius", "box"},
            "solve-constrained config")
    for key in ("q_diag", "lin", "a", "b", "n_outer"):
        if key not in cfg:
            raise PlanError(f"solve-constrained config is missing {key!r}")
    fset = None
    if "box" in cfg:
        lo, hi = cfg["box"]
        fset = FeasibleSet.box(np.full(len(cfg["q_diag"]), float(lo)),
                               np.full(len(cfg["q_diag"]), float(hi)))
    obj = quadratic_objective(cfg["q_diag"], cfg["lin"],
                              mu=float(cfg.get("mu", 0.0)), feasible_set=fset)
    op = MatrixOperator(np.asarray(cfg["a"], dtype=float))
    b = np.asarray(cfg["b"], dtype=float)
    sched = build_deterministic(ScheduleInputs(
        lipschitz=max(obj.lipschitz, 1e-12), mu=obj.mu,
        operator_norm=op.norm, radius=float(cfg.get("radius", 1.0))))
    res = constrained_solve(SingleProblem(obj), op, b, sched,
                            int(cfg["n_outer"]), np.zeros(op.domain_shape))
    payload = {"x": res.x_bar.tolist(), "objective": res.objective,
               "residual": res.residual}
    print(json.dumps(payload, sort_keys=True))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "solution.json").write_text(json.dumps(payload, indent=2,
                                                      sort_keys=True) + "\n")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "plan": _cmd_plan,
    "validate-schedule": _cmd_validate_schedule,
    "graph-info": _cmd_graph_info,
    "solve-constrained": _cmd_solve_constrained,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradslide",
        description="Decentralized gradient-sliding solvers and benchmarks.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="strict JSON config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--threads", type=int, default=None,
                        help="bound numeric thread pools")
    parser.add_argument("--scale", choices=("desk", "paper"), default="desk")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    threads = args.threads
    if threads is None and os.environ.get("GRADSLIDE_THREADS"):
        threads = int(os.environ["GRADSLIDE_THREADS"])
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    out = args.out if args.out is not None else os.environ.get("GRADSLIDE_OUT")
    out_path = Path(out) if out is not None else None
    try:
        cfg = _load_config(args.config)
        if not isinstance(cfg, dict):
            raise PlanError(f"{args.config}: top-level JSON value must be an object")
        return _COMMANDS[args.command](cfg, out_path, args)
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
