"""Per-agent objectives, stochastic gradient oracles, and dataset handling.

Each agent holds f_i = smooth part + mu * (1/2)||x||^2.  The smooth part
exposes exact values/gradients; the strongly convex part is handled in
closed form by the composite prox step, so solvers never differentiate it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class ProblemError(ValueError):
    pass


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# feasible sets

@dataclass(frozen=True)
class FeasibleSet:
    """Closed convex feasible set: all of space, a box, or a Euclidean ball."""

    kind: str  # "all" | "box" | "ball"
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0

    @staticmethod
    def all_space() -> "FeasibleSet":
        return FeasibleSet("all")

    @staticmethod
    def box(lo, hi) -> "FeasibleSet":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(lo > hi):
            raise ProblemError("box lower bound exceeds upper bound")
        return FeasibleSet("box", lo=lo, hi=hi)

    @staticmethod
    def ball(center, radius: float) -> "FeasibleSet":
        if radius <= 0:
            raise ProblemError(f"ball radius must be positive, got {radius}")
        return FeasibleSet("ball", center=np.asarray(center, dtype=float), radius=float(radius))

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "all":
            return x
        if self.kind == "box":
            return np.clip(x, self.lo, self.hi)
        if self.kind == "ball":
            diff = x - self.center
            nrm = np.linalg.norm(diff)
            if nrm <= self.radius:
                return x
            return self.center + diff * (self.radius / nrm)
        raise ProblemError(f"unknown set kind {self.kind!r}")

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return np.linalg.norm(np.asarray(x, dtype=float) - self.project(x)) <= tol


# ---------------------------------------------------------------------------
# objectives

class LocalObjective:
    """One agent's objective f_i = smooth + mu * (1/2)||x||_2^2 over a feasible set.

    Subclasses implement smooth_value / smooth_grad.  ``lipschitz`` bounds
    the gradient Lipschitz constant of the smooth part.  ``grad`` counts
    evaluations (one per call) in ``grad_count``.
    """

    def __init__(self, d: int, lipschitz: float, mu: float = 0.0,
                 feasible_set: FeasibleSet | None = None):
        if mu < 0:
            raise ProblemError(f"mu must be nonnegative, got {mu}")
        self.d = d
        self.lipschitz = float(lipschitz)
        self.mu = float(mu)
        self.feasible_set = feasible_set or FeasibleSet.all_space()
        self.grad_count = 0

    def smooth_value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def smooth_grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return self.smooth_value(x) + 0.5 * self.mu * float(x @ x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Exact gradient of the smooth part; increments the eval counter."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ProblemError("gradient requested at a non-finite point")
        self.grad_count += 1
        return self.smooth_grad(x)


class QuadraticObjective(LocalObjective):
    """Smooth part (1/2) x^T diag(q) x + b^T x with exact gradient."""

    def __init__(self, q_diag, b, mu: float = 0.0, feasible_set: FeasibleSet | None = None):
        q_diag = np.asarray(q_diag, dtype=float)
        b = np.asarray(b, dtype=float)
        if q_diag.shape != b.shape:
            raise ProblemError(f"shape mismatch: q_diag {q_diag.shape} vs b {b.shape}")
        if np.any(q_diag < 0):
            raise ProblemError("negative curvature entries not allowed")
        super().__init__(d=q_diag.size, lipschitz=float(q_diag.max(initial=0.0)),
                         mu=mu, feasible_set=feasible_set)
        self.q_diag = q_diag
        self.b = b

    def smooth_value(self, x):
        return 0.5 * float(x @ (self.q_diag * x)) + float(self.b @ x)

    def smooth_grad(self, x):
        return self.q_diag * x + self.b

    def conjugate_value(self, y: np.ndarray) -> float:
        """Convex conjugate of the smooth part; requires strictly positive curvature."""
        if np.any(self.q_diag <= 0):
            raise ProblemError("conjugate only available for strictly positive curvature")
        diff = np.asarray(y, dtype=float) - self.b
        return 0.5 * float(diff @ (diff / self.q_diag))


class LogisticObjective(LocalObjective):
    """Sum-form logistic loss over a local data shard.

    f(w) = sum_j log(1 + exp(-y_j <w, a_j>)).  The default Lipschitz bound
    is the cheap trace bound sum_j ||a_j||^2 / 4; the exact spectral bound
    is available with exact_lipschitz=True.
    """

    def __init__(self, shard: "DataShard", mu: float = 0.0,
                 feasible_set: FeasibleSet | None = None, exact_lipschitz: bool = False):
        if shard.n_rows == 0:
            raise ProblemError("empty data shard")
        features = shard.features
        if exact_lipschitz:
            gram = (features.T @ features).toarray()
            lip = 0.25 * float(np.linalg.eigvalsh(gram).max())
        else:
            lip = 0.25 * float(features.multiply(features).sum())
        super().__init__(d=shard.n_features, lipschitz=lip, mu=mu, feasible_set=feasible_set)
        self.shard = shard

    def _margins(self, w):
        return self.shard.labels * (self.shard.features @ w)

    def smooth_value(self, w):
        z = self._margins(w)
        # log(1 + exp(-z)) computed stably for large |z|
        return float(np.sum(np.logaddexp(0.0, -z)))

    def smooth_grad(self, w):
        z = self._margins(w)
        coef = -self.shard.labels / (1.0 + np.exp(z))
        return self.shard.features.T @ coef


def quadratic_objective(q_diag, b, mu: float = 0.0,
                        feasible_set: FeasibleSet | None = None) -> QuadraticObjective:
    return QuadraticObjective(q_diag, b, mu=mu, feasible_set=feasible_set)


def logistic_objective(shard: "DataShard", mu: float = 0.0,
                       feasible_set: FeasibleSet | None = None,
                       exact_lipschitz: bool = False) -> LogisticObjective:
    return LogisticObjective(shard, mu=mu, feasible_set=feasible_set,
                             exact_lipschitz=exact_lipschitz)


def grad(obj: LocalObjective, x: np.ndarray) -> np.ndarray:
    return obj.grad(x)


def prox_step(obj: LocalObjective, g: np.ndarray, anchor_t: np.ndarray,
              anchor_k: np.ndarray, eta: float, p: float) -> np.ndarray:
    """Exact minimizer of the composite prox subproblem (Euclidean prox case).

    argmin_{x in X}  mu/2 ||x||^2 + <g, x> + eta/2 ||x - anchor_t||^2
                     + p/2 ||x - anchor_k||^2
    """
    if eta <= 0:
        raise ProblemError(f"eta must be positive, got {eta}")
    if p < 0:
        raise ProblemError(f"p must be nonnegative, got {p}")
    g = np.asarray(g, dtype=float)
    free = (eta * np.asarray(anchor_t, dtype=float)
            + p * np.asarray(anchor_k, dtype=float) - g) / (obj.mu + eta + p)
    return obj.feasible_set.project(free)


# ---------------------------------------------------------------------------
# stochastic oracle

class StochasticOracle:
    """Unbiased gradient estimator for the smooth part of a local objective.

    Two noise models: "additive-gaussian" adds N(0, sigma^2/d I) per
    component so that E||G - grad||^2 = sigma^2; "data-subsampling"
    estimates a sum-form data objective from uniformly drawn rows scaled
    by the row count.
    """

    def __init__(self, objective: LocalObjective, noise: str = "additive-gaussian",
                 sigma: float = 0.0, seed: int = 0):
        if noise not in ("additive-gaussian", "data-subsampling"):
            raise ProblemError(f"unknown noise model {noise!r}")
        if noise == "data-subsampling" and not isinstance(objective, LogisticObjective):
            raise ProblemError("data-subsampling requires a data-backed objective")
        if sigma < 0:
            raise ProblemError(f"sigma must be nonnegative, got {sigma}")
        self.objective = objective
        self.noise = noise
        self.sigma = float(sigma)
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.sample_count = 0

    def sample(self, x: np.ndarray, batch: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Average of ``batch`` independent unbiased draws at x."""
        if batch < 1:
            raise ProblemError(f"batch must be >= 1, got {batch}")
        rng = rng if rng is not None else self._rng
        self.sample_count += batch
        x = np.asarray(x, dtype=float)
        if self.noise == "additive-gaussian":
            exact = self.objective.smooth_grad(x)
            if self.sigma == 0.0:
                return exact
            d = self.objective.d
            noise = rng.standard_normal((batch, d)).mean(axis=0)
            return exact + (self.sigma / np.sqrt(d)) * noise
        # data-subsampling: n * per-row gradient, averaged over the batch
        shard = self.objective.shard
        idx = rng.integers(0, shard.n_rows, size=batch)
        rows = shard.features[idx]
        z = shard.labels[idx] * (rows @ x)
        coef = -shard.labels[idx] / (1.0 + np.exp(z))
        return (rows.T @ coef) * (shard.n_rows / batch)


def stoch_grad(oracle: StochasticOracle, x: np.ndarray, batch: int,
               rng: np.random.Generator | None = None) -> np.ndarray:
    return oracle.sample(x, batch, rng=rng)


# ---------------------------------------------------------------------------
# datasets

@dataclass(frozen=True)
class DataShard:
    """Sparse feature rows with labels in {-1, +1}."""

    features: sp.csr_matrix
    labels: np.ndarray
    n_features: int

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def subset(self, idx: np.ndarray) -> "DataShard":
        return DataShard(self.features[idx], self.labels[idx], self.n_features)


def load_libsvm(path, n_features: int | None = None) -> DataShard:
    """Parse LIBSVM text format: `label idx:val idx:val ...` per line.

    Labels in {0, 1} are remapped to {-1, +1} (0 -> -1).  Feature indices
    are 1-indexed in the file and stored 0-indexed.
    """
    labels = []
    rows_i, cols, vals = [], [], []
    max_col = 0
    with open(path) as fh:
        n_lines = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: bad label {parts[0]!r}") from exc
            if label == 0.0:
                label = -1.0
            if label not in (-1.0, 1.0):
                raise DatasetError(f"{path}:{lineno}: label must be in {{-1,0,+1}}, got {label}")
            prev_idx = 0
            for item in parts[1:]:
                try:
                    idx_s, val_s = item.split(":")
                    idx, val = int(idx_s), float(val_s)
                except ValueError as exc:
                    raise DatasetError(f"{path}:{lineno}: malformed pair {item!r}") from exc
                if idx <= prev_idx:
                    raise DatasetError(f"{path}:{lineno}: indices must be strictly increasing")
                prev_idx = idx
                rows_i.append(n_lines)
                cols.append(idx - 1)
                vals.append(val)
                max_col = max(max_col, idx)
            labels.append(label)
            n_lines += 1
    if n_lines == 0:
        raise DatasetError(f"{path}: empty dataset")
    d = n_features if n_features is not None else max_col
    features = sp.csr_matrix((vals, (rows_i, cols)), shape=(n_lines, d))
    return DataShard(features, np.asarray(labels), d)


def save_libsvm(shard: DataShard, path) -> None:
    """Write LIBSVM text format (round-trip partner of load_libsvm)."""
    with open(path, "w") as fh:
        for r in range(shard.n_rows):
            row = shard.features.getrow(r)
            items = " ".join(f"{j + 1}:{v:.17g}" for j, v in zip(row.indices, row.data))
            label = "+1" if shard.labels[r] > 0 else "-1"
            fh.write(f"{label} {items}\n".rstrip() + "\n")


def split_shards(shard: DataShard, m: int, seed: int) -> list[DataShard]:
    """Shuffle by seed and split into m near-equal shards (sizes differ by <= 1)."""
    if m > shard.n_rows:
        raise DatasetError(f"cannot split {shard.n_rows} rows into {m} shards")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(shard.n_rows)
    return [shard.subset(part) for part in np.array_split(perm, m)]


def shard_manifest(shards: list[DataShard], seed: int) -> str:
    return json.dumps({"seed": seed, "row_counts": [s.n_rows for s in shards]})


# ---------------------------------------------------------------------------
# centralized reference solver

def centralized_solve(objs: list[LocalObjective], tol: float = 1e-10,
                      max_iter: int = 200_000) -> tuple[np.ndarray, float]:
    """Accelerated projected gradient on sum_i f_i over the shared feasible set.

    Stops when the gradient-mapping norm drops below tol.  Serves as the
    consensus-point reference oracle (x*, f*).
    """
    d = objs[0].d
    fset = objs[0].feasible_set
    for o in objs:
        if o.d != d:
            raise ProblemError("objectives disagree on dimension")
    mu_total = sum(o.mu for o in objs)
    lip_total = sum(o.lipschitz for o in objs) + mu_total
    if lip_total <= 0:
        raise ProblemError("total curvature must be positive")

    def full_grad(x):
        g = np.zeros(d)
        for o in objs:
            g += o.smooth_grad(x) + o.mu * x
        return g

    def full_value(x):
        return sum(o.value(x) for o in objs)

    x = fset.project(np.zeros(d))
    v = x.copy()
    t_mom = 1.0
    step = 1.0 / lip_total
    kappa = mu_total / lip_total
    for _ in range(max_iter):
        g = full_grad(v)
        x_new = fset.project(v - step * g)
        gmap = (v - fset.project(v - step * full_grad(v))) / step
        if np.linalg.norm(gmap) < tol:
            return x_new, full_value(x_new)
        if mu_total > 0:
            beta = (1 - np.sqrt(kappa)) / (1 + np.sqrt(kappa))
        else:
            t_new = 0.5 * (1 + np.sqrt(1 + 4 * t_mom ** 2))
            beta = (t_mom - 1) / t_new
            t_mom = t_new
        v = x_new + beta * (x_new - x)
        x = x_new
    raise ProblemError(f"centralized solver did not reach tol={tol} in {max_iter} iterations")
