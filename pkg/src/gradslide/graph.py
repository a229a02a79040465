"""Communication graphs and the consensus constraint operators they induce."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class GraphError(ValueError):
    """Raised for malformed or disconnected communication graphs."""


class NormEstimationError(RuntimeError):
    """Operator norm estimation did not converge; carries the last estimate."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


@dataclass(frozen=True)
class CommGraph:
    """Connected undirected graph over agents 0..m-1.

    Edges are stored once as (i, j) with i < j.  Neighbor sets include the
    agent itself (self-loop convention), so the Laplacian degree of agent i
    is ``len(neighbors[i]) - 1``.
    """

    m: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[frozenset[int], ...] = field(repr=False)

    @staticmethod
    def from_edges(m: int, edges: Iterable[tuple[int, int]]) -> "CommGraph":
        if m < 1:
            raise GraphError(f"need at least one node, got m={m}")
        canon = set()
        for i, j in edges:
            if i == j:
                raise GraphError(f"explicit self-loop ({i},{j}) not allowed")
            if not (0 <= i < m and 0 <= j < m):
                raise GraphError(f"edge ({i},{j}) out of range for m={m}")
            canon.add((min(i, j), max(i, j)))
        edge_tuple = tuple(sorted(canon))
        nbrs = [{i} for i in range(m)]
        for i, j in edge_tuple:
            nbrs[i].add(j)
            nbrs[j].add(i)
        g = CommGraph(m, edge_tuple, tuple(frozenset(s) for s in nbrs))
        if not g.is_connected():
            raise GraphError(f"graph on {m} nodes with {len(edge_tuple)} edges is not connected")
        return g

    def is_connected(self) -> bool:
        # BFS from node 0
        seen = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for i in frontier:
                for j in self.neighbors[i]:
                    if j not in seen:
                        seen.add(j)
                        nxt.append(j)
            frontier = nxt
        return len(seen) == self.m

    def degree(self, i: int) -> int:
        return len(self.neighbors[i]) - 1

    @property
    def max_degree(self) -> int:
        return max(self.degree(i) for i in range(self.m))


def erdos_renyi(m: int, edge_prob: float, seed: int, max_attempts: int = 1000) -> CommGraph:
    """Sample a connected Erdos-Renyi graph, retrying on disconnection.

    Deterministic given (m, edge_prob, seed): attempt r uses the stream
    keyed by (seed, r).
    """
    if m < 2:
        raise GraphError(f"need m >= 2, got m={m}")
    if not (0.0 < edge_prob <= 1.0):
        raise GraphError(f"edge_prob must be in (0, 1], got {edge_prob}")
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        iu, ju = np.triu_indices(m, k=1)
        mask = rng.random(iu.size) < edge_prob
        edges = list(zip(iu[mask].tolist(), ju[mask].tolist()))
        try:
            return CommGraph.from_edges(m, edges)
        except GraphError:
            continue
    raise GraphError(
        f"no connected graph after {max_attempts} attempts "
        f"(m={m}, edge_prob={edge_prob}, seed={seed})"
    )


def named_graph(kind: str, m: int) -> CommGraph:
    """Deterministic standard topologies: path, star, complete, cycle."""
    if m < 2:
        raise GraphError(f"need m >= 2, got m={m}")
    if kind == "path":
        edges = [(i, i + 1) for i in range(m - 1)]
    elif kind == "star":
        edges = [(0, i) for i in range(1, m)]
    elif kind == "complete":
        edges = [(i, j) for i in range(m) for j in range(i + 1, m)]
    elif kind == "cycle":
        edges = [(i, (i + 1) % m) for i in range(m)]
    else:
        raise GraphError(f"unknown graph kind {kind!r}")
    return CommGraph.from_edges(m, edges)


class ConsensusOperator:
    """Linear operator whose kernel is exactly the consensus subspace.

    Two forms are supported: the graph Laplacian (symmetric, square per
    agent block) and the oriented incidence form (one block row per edge).
    Application is block-wise on arrays of shape (m, d); the per-agent
    dimension d enters only through the block shape.
    """

    def __init__(self, graph: CommGraph, d: int, form: str, matrix: sp.spmatrix):
        if d < 1:
            raise GraphError(f"need d >= 1, got d={d}")
        self.graph = graph
        self.d = d
        self.form = form
        self._mat = matrix.tocsr()
        self._matT = self._mat.T.tocsr()
        self._norm: float | None = None

    @property
    def domain_shape(self) -> tuple[int, int]:
        return (self.graph.m, self.d)

    @property
    def range_shape(self) -> tuple[int, int]:
        return (self._mat.shape[0], self.d)

    @property
    def row_dim(self) -> int:
        return self._mat.shape[0] * self.d

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.domain_shape:
            raise ValueError(f"expected shape {self.domain_shape}, got {x.shape}")
        return self._mat @ x

    def adjoint(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != self.range_shape:
            raise ValueError(f"expected shape {self.range_shape}, got {z.shape}")
        return self._matT @ z

    @property
    def norm(self) -> float:
        if self._norm is None:
            self._norm = operator_norm(self, tol=1e-12)
        return self._norm

    def dense(self) -> np.ndarray:
        """Dense (rows*d, m*d) matrix; test-oracle use only."""
        return np.kron(self._mat.toarray(), np.eye(self.d))

    def laplacian_row(self, i: int) -> dict[int, float]:
        """Nonzero Laplacian entries of row i as {j: L[i,j]} (Laplacian form only)."""
        if self.form != "laplacian":
            raise ValueError("laplacian_row is only defined for the Laplacian form")
        row = self._mat.getrow(i)
        return {int(j): float(v) for j, v in zip(row.indices, row.data)}


def laplacian_operator(graph: CommGraph, d: int) -> ConsensusOperator:
    """Consensus operator in graph-Laplacian form (degree excludes the self-loop)."""
    m = graph.m
    rows, cols, vals = [], [], []
    for i in range(m):
        rows.append(i)
        cols.append(i)
        vals.append(float(graph.degree(i)))
        for j in graph.neighbors[i]:
            if j != i:
                rows.append(i)
                cols.append(j)
                vals.append(-1.0)
    lap = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    return ConsensusOperator(graph, d, "laplacian", lap)


def incidence_operator(graph: CommGraph, d: int, orientation_seed: int = 0) -> ConsensusOperator:
    """Consensus operator in oriented-incidence form.

    With orientation_seed=0 the lower-index endpoint of each edge is the
    positive one; other seeds flip a random subset of edges.  The Gram
    product adjoint(apply(x)) equals the Laplacian form regardless of
    orientation.
    """
    m = graph.m
    n_edges = len(graph.edges)
    if orientation_seed == 0:
        signs = np.ones(n_edges)
    else:
        rng = np.random.default_rng(orientation_seed)
        signs = np.where(rng.random(n_edges) < 0.5, 1.0, -1.0)
    rows, cols, vals = [], [], []
    for e, (i, j) in enumerate(graph.edges):
        rows.extend([e, e])
        cols.extend([i, j])
        vals.extend([signs[e], -signs[e]])
    inc = sp.csr_matrix((vals, (rows, cols)), shape=(n_edges, m))
    return ConsensusOperator(graph, d, "incidence", inc)


class ZeroOperator:
    """Trivial constraint operator for a single isolated agent (m=1)."""

    def __init__(self, d: int, m: int = 1):
        self.d = d
        self.graph = None
        self.form = "zero"
        self._m = m

    @property
    def domain_shape(self):
        return (self._m, self.d)

    @property
    def range_shape(self):
        return (self._m, self.d)

    @property
    def row_dim(self):
        return self._m * self.d

    def apply(self, x):
        return np.zeros(self.range_shape)

    def adjoint(self, z):
        return np.zeros(self.domain_shape)

    @property
    def norm(self) -> float:
        return 0.0

    def dense(self):
        return np.zeros((self.row_dim, self.row_dim))


def operator_norm(op, tol: float = 1e-10) -> float:
    """Spectral norm of a consensus-style operator via matrix-free Lanczos.

    Runs implicitly restarted Lanczos on the Gram operator A^T A and returns
    the square root of its largest eigenvalue.  Raises NormEstimationError
    with the last estimate if the eigensolver does not converge.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if isinstance(op, ZeroOperator):
        return 0.0
    m, d = op.domain_shape
    n = m * d

    def gram_mv(v):
        x = v.reshape(m, d)
        return op.adjoint(op.apply(x)).ravel()

    gram = spla.LinearOperator((n, n), matvec=gram_mv, dtype=float)
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(n)
    try:
        vals = spla.eigsh(
            gram, k=1, which="LA", tol=tol, v0=v0,
            maxiter=max(10 * n, 1000), return_eigenvectors=False,
        )
    except spla.ArpackNoConvergence as exc:
        last = float(np.sqrt(max(exc.eigenvalues))) if len(exc.eigenvalues) else float("nan")
        raise NormEstimationError(
            f"norm estimation did not converge within iteration cap (last={last})", last
        ) from exc
    return float(np.sqrt(max(vals[0], 0.0)))


def write_edge_list(graph: CommGraph, path) -> None:
    """Serialize as a 1-indexed edge list with an `m <count>` header."""
    with open(path, "w") as fh:
        fh.write(f"m {graph.m}\n")
        for i, j in graph.edges:
            fh.write(f"{i + 1} {j + 1}\n")


def read_edge_list(path) -> CommGraph:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("m "):
        raise GraphError(f"{path}: missing `m <count>` header line")
    try:
        m = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise GraphError(f"{path}: malformed header {lines[0]!r}") from exc
    edges = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected `i j`, got {ln!r}")
        i, j = int(parts[0]) - 1, int(parts[1]) - 1
        edges.append((i, j))
    return CommGraph.from_edges(m, edges)
