"""Benchmark harness: graph sweep experiments tabulating communication
rounds against gradient/sample counts.

A plan is a strict JSON document (unknown keys rejected).  Each
(algorithm, graph) pair is run once to the round budget while the
trajectory is recorded; target-loss rows are then read off the recorded
counters, so re-running a plan reproduces the table bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import CommGraph, erdos_renyi, laplacian_operator, named_graph
from .pds import BaselineSteps, SolverError, StackedProblem, baseline_pd_run, pds_run
from .problem import (DataShard, DatasetError, StochasticOracle,
                      centralized_solve, load_libsvm, logistic_objective,
                      split_shards)
from .schedule import ScheduleInputs, build_deterministic, build_stochastic
from .spds import spds_run


class PlanError(ValueError):
    pass


_ALGORITHMS = ("pds", "spds", "baseline")


def _strict(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise PlanError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class GraphSpec:
    name: str
    kind: str            # path | star | complete | cycle | erdos_renyi
    m: int
    edge_prob: float = 0.0
    seed: int = 0
    expected_d_max: int | None = None

    def build(self) -> CommGraph:
        if self.kind == "erdos_renyi":
            g = erdos_renyi(self.m, self.edge_prob, self.seed)
        else:
            g = named_graph(self.kind, self.m)
        if self.expected_d_max is not None and g.max_degree != self.expected_d_max:
            raise PlanError(f"graph {self.name}: expected d_max={self.expected_d_max}, "
                            f"built {g.max_degree}")
        return g

    @staticmethod
    def from_dict(d: dict) -> "GraphSpec":
        _strict(d, {"name", "kind", "m", "edge_prob", "seed", "expected_d_max"}, "graph spec")
        if "kind" not in d or "m" not in d:
            raise PlanError("graph spec needs 'kind' and 'm'")
        return GraphSpec(name=d.get("name", d["kind"]), kind=d["kind"], m=int(d["m"]),
                         edge_prob=float(d.get("edge_prob", 0.0)),
                         seed=int(d.get("seed", 0)),
                         expected_d_max=d.get("expected_d_max"))


@dataclass(frozen=True)
class ProblemSpec:
    kind: str            # synthetic-logistic | dataset-logistic
    n_samples: int = 2000
    n_features: int = 10
    separability: str = "overlapping"
    seed: int = 0
    mu: float = 0.0
    dataset: str | None = None
    lipschitz_multiplier: float = 1.0

    @staticmethod
    def from_dict(d: dict) -> "ProblemSpec":
        _strict(d, {"kind", "n_samples", "n_features", "separability", "seed",
                    "mu", "dataset", "lipschitz_multiplier"}, "problem spec")
        kind = d.get("kind", "synthetic-logistic")
        if kind not in ("synthetic-logistic", "dataset-logistic"):
            raise PlanError(f"unknown problem kind {kind!r}")
        if kind == "dataset-logistic" and not d.get("dataset"):
            raise PlanError("dataset-logistic requires a 'dataset' path")
        return ProblemSpec(kind=kind, n_samples=int(d.get("n_samples", 2000)),
                           n_features=int(d.get("n_features", 10)),
                           separability=d.get("separability", "overlapping"),
                           seed=int(d.get("seed", 0)), mu=float(d.get("mu", 0.0)),
                           dataset=d.get("dataset"),
                           lipschitz_multiplier=float(d.get("lipschitz_multiplier", 1.0)))

    def load(self) -> DataShard:
        if self.kind == "dataset-logistic":
            if not Path(self.dataset).exists():
                raise DatasetError(f"dataset not found: {self.dataset}")
            return load_libsvm(self.dataset)
        return synthesize_dataset(self.n_samples, self.n_features,
                                  self.separability, self.seed)


@dataclass(frozen=True)
class ExperimentPlan:
    graphs: tuple[GraphSpec, ...]
    problem: ProblemSpec
    algorithms: tuple[str, ...]
    target_losses: tuple[float, ...]
    target_mode: str = "absolute"     # absolute | gap (relative to centralized optimum)
    radius: float = 1.0
    batch_constant: float = 1.0
    sigma: float = 0.0
    budget_rounds: int = 4000
    max_outer: int = 200
    replications: int = 1
    base_seed: int = 0
    figures: bool = True
    output_dir: str | None = None

    @staticmethod
    def from_dict(d: dict) -> "ExperimentPlan":
        _strict(d, {"graphs", "problem", "algorithms", "target_losses", "target_mode",
                    "radius", "batch_constant", "sigma", "budget_rounds", "max_outer",
                    "replications", "base_seed", "figures", "output_dir"}, "plan")
        for key in ("graphs", "problem", "algorithms", "target_losses"):
            if key not in d:
                raise PlanError(f"plan is missing required key {key!r}")
        algorithms = tuple(d["algorithms"])
        for a in algorithms:
            if a not in _ALGORITHMS:
                raise PlanError(f"unknown algorithm {a!r}; choose from {_ALGORITHMS}")
        mode = d.get("target_mode", "absolute")
        if mode not in ("absolute", "gap"):
            raise PlanError(f"target_mode must be 'absolute' or 'gap', got {mode!r}")
        plan = ExperimentPlan(
            graphs=tuple(GraphSpec.from_dict(g) for g in d["graphs"]),
            problem=ProblemSpec.from_dict(d["problem"]),
            algorithms=algorithms,
            target_losses=tuple(float(t) for t in d["target_losses"]),
            target_mode=mode,
            radius=float(d.get("radius", 1.0)),
            batch_constant=float(d.get("batch_constant", 1.0)),
            sigma=float(d.get("sigma", 0.0)),
            budget_rounds=int(d.get("budget_rounds", 4000)),
            max_outer=int(d.get("max_outer", 200)),
            replications=int(d.get("replications", 1)),
            base_seed=int(d.get("base_seed", 0)),
            figures=bool(d.get("figures", True)),
            output_dir=d.get("output_dir"))
        if not plan.graphs:
            raise PlanError("plan needs at least one graph")
        if plan.budget_rounds < 2 or plan.max_outer < 1 or plan.replications < 1:
            raise PlanError("budget_rounds >= 2, max_outer >= 1, replications >= 1 required")
        names = [g.name for g in plan.graphs]
        if len(set(names)) != len(names):
            raise PlanError(f"duplicate graph names: {names}")
        return plan

    @staticmethod
    def from_json(path) -> "ExperimentPlan":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise PlanError(f"{path}: invalid JSON at line {exc.lineno} "
                                f"column {exc.colno}: {exc.msg}") from exc
        return ExperimentPlan.from_dict(d)


def synthesize_dataset(n: int, d: int, separability: str, seed: int) -> DataShard:
    """Two Gaussian class clouds with controlled overlap, deterministic in seed.

    Separable mode places every point at a margin >= 1 from a hidden
    hyperplane, so a zero-error linear classifier exists by construction;
    overlapping mode uses cloud centers closer than the noise scale.
    """
    if n < 1 or d < 1:
        raise PlanError(f"need n, d >= 1, got n={n}, d={d}")
    if separability not in ("separable", "overlapping"):
        raise PlanError(f"separability must be 'separable' or 'overlapping', "
                        f"got {separability!r}")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    labels = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    z = rng.standard_normal((n, d))
    if separability == "separable":
        # project noise out of the w direction, then place each point at
        # signed margin 1 + Exp(1) along w
        z = z - np.outer(z @ w, w)
        margins = 1.0 + rng.exponential(1.0, size=n)
        x = z + (labels * margins)[:, None] * w
    else:
        x = 0.5 * (labels[:, None] * w) + z
    return DataShard(sp.csr_matrix(x), labels, d)


@dataclass
class CellResult:
    """One (algorithm, graph) run: full trajectory plus metadata."""

    algorithm: str
    graph: str
    d_max: int
    trajectory: list[dict] = field(default_factory=list)   # k, gradients, rounds, samples, loss, feasibility
    error: str | None = None


def _baseline_steps(lipschitz: float, op_norm: float) -> BaselineSteps:
    eta = lipschitz + 2.0 * op_norm
    return BaselineSteps(eta=eta, q=max(op_norm, 1e-12), p=0.0)


def _run_cell(plan: ExperimentPlan, algorithm: str, gspec: GraphSpec,
              shards: list[DataShard]) -> CellResult:
    graph = gspec.build()
    result = CellResult(algorithm=algorithm, graph=gspec.name, d_max=graph.max_degree)
    d_feat = shards[0].n_features
    op = laplacian_operator(graph, d_feat)
    objs = [logistic_objective(s, mu=plan.problem.mu) for s in shards]
    problem = StackedProblem(objs)
    lip_safe = max(o.lipschitz for o in objs)
    # the multiplier mimics hand-tuning the Lipschitz estimate for the sliding
    # schedules; the baseline always gets the safe bound for its step sizes
    lip = lip_safe * plan.problem.lipschitz_multiplier
    x0 = np.zeros((graph.m, d_feat))
    traj = result.trajectory

    def make_stop():
        def stop(k, x_bar, metrics):
            loss = problem.value_at_consensus(x_bar)
            feas = float(np.linalg.norm(op.apply(x_bar)))
            traj.append({"k": k, "gradients": metrics.gradient_evals,
                         "rounds": metrics.comm_rounds,
                         "samples": metrics.sample_count,
                         "loss": loss, "feasibility": feas})
            return metrics.comm_rounds >= plan.budget_rounds
        return stop

    try:
        if algorithm == "pds":
            si = ScheduleInputs(lipschitz=lip, mu=plan.problem.mu,
                                operator_norm=op.norm, radius=plan.radius)
            sched = build_deterministic(si)
            pds_run(objs, op, sched, plan.max_outer, x0, stop=make_stop(),
                    record_history=False)
        elif algorithm == "spds":
            si = ScheduleInputs(lipschitz=lip, mu=plan.problem.mu,
                                operator_norm=op.norm, radius=plan.radius,
                                sigma=plan.sigma, batch_constant=plan.batch_constant,
                                n_outer=plan.max_outer, mode="stochastic")
            sched = build_stochastic(si)
            oracles = [StochasticOracle(o, sigma=plan.sigma) for o in objs]
            rep_trajs = []
            for r in range(plan.replications):
                traj.clear()
                spds_run(oracles, op, sched, plan.max_outer, x0,
                         seed=plan.base_seed + r, stop=make_stop(),
                         record_history=False)
                rep_trajs.append([dict(row) for row in traj])
            traj.clear()
            # counters agree across replications by construction; average the
            # loss/feasibility columns over replications, row by row
            n_rows = min(len(t) for t in rep_trajs)
            for idx in range(n_rows):
                row = dict(rep_trajs[0][idx])
                row["loss"] = float(np.mean([t[idx]["loss"] for t in rep_trajs]))
                row["feasibility"] = float(np.mean([t[idx]["feasibility"] for t in rep_trajs]))
                traj.append(row)
        elif algorithm == "baseline":
            steps = _baseline_steps(lip_safe, op.norm)
            baseline_pd_run(objs, op, plan.budget_rounds // 2, steps, x0,
                            stop=make_stop(), record_history=False)
        else:
            raise PlanError(f"unknown algorithm {algorithm!r}")
    except (SolverError, PlanError, DatasetError, ValueError) as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _rows_for_cell(cell: CellResult, targets: list[float],
                   target_labels: list[float], budget: int) -> list[dict]:
    rows = []
    for target, label in zip(targets, target_labels):
        row = {"algorithm": cell.algorithm, "graph": cell.graph,
               "d_max": cell.d_max, "target_loss": label,
               "status": "error", "achieved_loss": None,
               "achieved_feasibility": None, "rounds": None,
               "gradients": None, "samples": None, "outer_iterations": None,
               "error": cell.error}
        if cell.error is None:
            hit = next((r for r in cell.trajectory if r["loss"] <= target), None)
            if hit is not None:
                row.update(status="ok", achieved_loss=hit["loss"],
                           achieved_feasibility=hit["feasibility"],
                           rounds=hit["rounds"], gradients=hit["gradients"],
                           samples=hit["samples"], outer_iterations=hit["k"],
                           error=None)
            else:
                last = cell.trajectory[-1] if cell.trajectory else None
                row.update(status="NA", error=None)
                if last is not None:
                    row.update(achieved_loss=last["loss"],
                               achieved_feasibility=last["feasibility"],
                               rounds=last["rounds"], gradients=last["gradients"],
                               samples=last["samples"], outer_iterations=last["k"])
        rows.append(row)
    return rows


_CSV_COLUMNS = ["algorithm", "graph", "d_max", "target_loss", "status",
                "achieved_loss", "achieved_feasibility", "rounds", "gradients",
                "samples", "outer_iterations", "error"]


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(_CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]).replace(",", ";") for c in _CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def run_plan(plan: ExperimentPlan, output_dir=None) -> list[dict]:
    """Execute the plan; returns the result rows and writes all artifacts.

    Outputs under the output directory: results.csv, results.json, one
    trajectory CSV per (algorithm, graph) cell, plot_data/ series, and
    rendered figures when enabled.
    """
    out = Path(output_dir if output_dir is not None else plan.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "plot_data").mkdir(exist_ok=True)

    base = plan.problem.load()
    targets = list(plan.target_losses)
    if plan.target_mode == "gap":
        m_ref = plan.graphs[0].m
        shards_ref = split_shards(base, m_ref, plan.problem.seed)
        objs_ref = [logistic_objective(s, mu=plan.problem.mu) for s in shards_ref]
        _, f_star = centralized_solve(objs_ref, tol=1e-8)
        abs_targets = [f_star + t for t in targets]
    else:
        abs_targets = targets

    rows: list[dict] = []
    cells: list[CellResult] = []
    for algorithm in plan.algorithms:
        for gspec in plan.graphs:
            shards = split_shards(base, gspec.m, plan.problem.seed)
            cell = _run_cell(plan, algorithm, gspec, shards)
            cells.append(cell)
            rows.extend(_rows_for_cell(cell, abs_targets, targets, plan.budget_rounds))
            stem = f"{algorithm}_{gspec.name}"
            _write_trajectory(out / f"trajectory_{stem}.csv", cell)
            _write_series(out / "plot_data" / f"{stem}_loss_vs_rounds.csv",
                          cell, "rounds")
            _write_series(out / "plot_data" / f"{stem}_loss_vs_gradients.csv",
                          cell, "gradients")

    (out / "results.csv").write_text(rows_to_csv(rows))
    (out / "results.json").write_text(json.dumps(
        {"plan": _plan_echo(plan), "rows": rows}, indent=2, sort_keys=True) + "\n")
    if plan.figures:
        render_figures(cells, out / "figures")
    return rows


def _plan_echo(plan: ExperimentPlan) -> dict:
    return {
        "graphs": [{"name": g.name, "kind": g.kind, "m": g.m,
                    "edge_prob": g.edge_prob, "seed": g.seed} for g in plan.graphs],
        "problem": {"kind": plan.problem.kind, "n_samples": plan.problem.n_samples,
                    "n_features": plan.problem.n_features,
                    "separability": plan.problem.separability,
                    "seed": plan.problem.seed, "mu": plan.problem.mu,
                    "dataset": plan.problem.dataset,
                    "lipschitz_multiplier": plan.problem.lipschitz_multiplier},
        "algorithms": list(plan.algorithms),
        "target_losses": list(plan.target_losses),
        "target_mode": plan.target_mode,
        "radius": plan.radius, "batch_constant": plan.batch_constant,
        "sigma": plan.sigma, "budget_rounds": plan.budget_rounds,
        "max_outer": plan.max_outer, "replications": plan.replications,
        "base_seed": plan.base_seed,
    }


def _write_trajectory(path: Path, cell: CellResult) -> None:
    lines = ["k,gradients,rounds,samples,loss,feasibility"]
    for r in cell.trajectory:
        lines.append(f"{r['k']},{r['gradients']},{r['rounds']},{r['samples']},"
                     f"{r['loss']:.17g},{r['feasibility']:.17g}")
    path.write_text("\n".join(lines) + "\n")


def _write_series(path: Path, cell: CellResult, x_key: str) -> None:
    lines = ["x,y"]
    for r in cell.trajectory:
        lines.append(f"{r[x_key]},{r['loss']:.17g}")
    path.write_text("\n".join(lines) + "\n")


def render_figures(cells: list[CellResult], figdir) -> list[str]:
    """Render per-graph comparison figures (loss vs rounds / gradients) to PNG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    figdir = Path(figdir)
    figdir.mkdir(parents=True, exist_ok=True)
    written = []
    graphs = sorted({c.graph for c in cells})
    for gname in graphs:
        for x_key in ("rounds", "gradients"):
            fig, ax = plt.subplots(figsize=(5.5, 4))
            drew = False
            for cell in cells:
                if cell.graph != gname or cell.error is not None or not cell.trajectory:
                    continue
                xs = [r[x_key] for r in cell.trajectory]
                ys = [r["loss"] for r in cell.trajectory]
                ax.plot(xs, ys, label=cell.algorithm, marker=".", markersize=3)
                drew = True
            if not drew:
                plt.close(fig)
                continue
            ax.set_xlabel(f"{x_key} ({'communication' if x_key == 'rounds' else 'oracle'})")
            ax.set_ylabel("loss at consensus average")
            ax.set_yscale("log")
            ax.set_title(f"{gname}: loss vs {x_key}")
            ax.legend()
            fig.tight_layout()
            fname = figdir / f"{gname}_loss_vs_{x_key}.png"
            fig.savefig(fname, dpi=120)
            plt.close(fig)
            written.append(str(fname))
    return written
