"""Graph structure measures: path length, clustering and the efficiency/spectral extras."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .graph import Graph, GraphError, sparsity

# dense symmetric eigensolver up to this size, Lanczos above
DENSE_EIGEN_MAX_N = 256


class MeasureError(GraphError):
    pass


@dataclass(frozen=True)
class GraphMeasures:
    avg_path_length: float | None  # None marks a disconnected graph
    clustering: float
    avg_degree: float
    local_efficiency: float
    global_efficiency: float
    algebraic_connectivity: float

    @property
    def connected(self) -> bool:
        return self.avg_path_length is not None

    def to_dict(self) -> dict:
        return asdict(self)


def distance_matrix(adj: np.ndarray) -> np.ndarray:
    """All-pairs unweighted hop distances; -1 where unreachable.

    Level-synchronous BFS run from every source at once.
    """
    n = adj.shape[0]
    a = adj.astype(bool)
    dist = np.full((n, n), -1, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    reach = np.eye(n, dtype=bool)
    frontier = reach.copy()
    d = 0
    while True:
        d += 1
        nxt = (frontier.astype(np.int64) @ a.astype(np.int64)) > 0
        nxt &= ~reach
        if not nxt.any():
            break
        dist[nxt] = d
        reach |= nxt
        frontier = nxt
    return dist


def _pair_mean(values: np.ndarray) -> float:
    n = values.shape[0]
    iu = np.triu_indices(n, k=1)
    return float(values[iu].mean())


def avg_path_length(g: Graph) -> float:
    if g.n < 2:
        raise MeasureError("average path length undefined for n < 2")
    dist = distance_matrix(g.adjacency())
    if (dist < 0).any():
        raise MeasureError("graph is disconnected; average path length is infinite")
    return _pair_mean(dist.astype(np.float64))


def _local_clustering(adj: np.ndarray) -> np.ndarray:
    a = adj.astype(np.int64)
    deg = a.sum(axis=1)
    tri2 = np.einsum("ij,jk,ki->i", a, a, a)  # 2 * triangles through each node
    denom = deg * (deg - 1)
    out = np.zeros(a.shape[0])
    ok = deg >= 2
    out[ok] = tri2[ok] / denom[ok]
    return out


def clustering_coefficient(g: Graph) -> float:
    return float(_local_clustering(g.adjacency()).mean())


def average_degree(g: Graph) -> float:
    return 2.0 * g.num_edges / g.n


def _efficiency(adj: np.ndarray) -> float:
    n = adj.shape[0]
    if n < 2:
        return 0.0
    dist = distance_matrix(adj).astype(np.float64)
    inv = np.zeros_like(dist)
    mask = dist > 0
    inv[mask] = 1.0 / dist[mask]
    return _pair_mean(inv)


def global_efficiency(g: Graph) -> float:
    if g.n < 2:
        raise MeasureError("global efficiency undefined for n < 2")
    return _efficiency(g.adjacency())


def local_efficiency(g: Graph) -> float:
    adj = g.adjacency()
    total = 0.0
    for v in range(g.n):
        nbrs = np.flatnonzero(adj[v])
        if len(nbrs) >= 2:
            total += _efficiency(adj[np.ix_(nbrs, nbrs)])
    return total / g.n


def laplacian(g: Graph) -> np.ndarray:
    a = g.adjacency().astype(np.float64)
    return np.diag(a.sum(axis=1)) - a


def algebraic_connectivity(g: Graph, tol: float = 1e-8) -> float:
    """Second-smallest eigenvalue of D - A."""
    if g.n < 2:
        raise MeasureError("algebraic connectivity undefined for n < 2")
    lap = laplacian(g)
    if g.n <= DENSE_EIGEN_MAX_N:
        vals = np.linalg.eigvalsh(lap)
    else:
        from scipy.sparse import csr_matrix
        from scipy.sparse.linalg import ArpackNoConvergence, eigsh

        maxiter = 10 * g.n
        try:
            vals = eigsh(csr_matrix(lap), k=2, sigma=-1e-3, which="LM", tol=tol, maxiter=maxiter, return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            raise MeasureError(
                f"Lanczos did not converge in {maxiter} iterations "
                f"({len(exc.eigenvalues)} of 2 eigenvalues found)"
            ) from None
        vals = np.sort(vals)
    lam2 = float(vals[1])
    # eigensolver noise around an exact zero
    if abs(lam2) < 1e-9 * max(1.0, float(vals[-1])):
        lam2 = 0.0
    return lam2


def path_length_and_clustering(g: Graph) -> tuple[float | None, float]:
    """(L, C) with L=None when disconnected; the cheap pair used by sweeps."""
    adj = g.adjacency()
    dist = distance_matrix(adj)
    L = None if (dist < 0).any() else _pair_mean(dist.astype(np.float64))
    return L, float(_local_clustering(adj).mean())


def measure_all(g: Graph) -> GraphMeasures:
    if g.n < 2:
        raise MeasureError("measures need n >= 2")
    adj = g.adjacency()
    dist = distance_matrix(adj)
    L = None if (dist < 0).any() else _pair_mean(dist.astype(np.float64))
    return GraphMeasures(
        avg_path_length=L,
        clustering=float(_local_clustering(adj).mean()),
        avg_degree=average_degree(g),
        local_efficiency=local_efficiency(g),
        global_efficiency=_efficiency(adj),
        algebraic_connectivity=algebraic_connectivity(g),
    )


CSV_COLUMNS = ["graph_id", "n", "edges", "sparsity", "L", "C", "avg_degree", "local_eff", "global_eff", "lambda2"]


def csv_row(graph_id: str, g: Graph, m: GraphMeasures) -> dict:
    return {
        "graph_id": graph_id,
        "n": g.n,
        "edges": g.num_edges,
        "sparsity": repr(sparsity(g)),
        "L": "disconnected" if m.avg_path_length is None else repr(m.avg_path_length),
        "C": repr(m.clustering),
        "avg_degree": repr(m.avg_degree),
        "local_eff": repr(m.local_efficiency),
        "global_eff": repr(m.global_efficiency),
        "lambda2": repr(m.algebraic_connectivity),
    }


def parse_csv_value(text: str) -> float | None:
    return None if text == "disconnected" else float(text)


def is_finite_measures(m: GraphMeasures) -> bool:
    vals = [m.clustering, m.avg_degree, m.local_efficiency, m.global_efficiency, m.algebraic_connectivity]
    if m.avg_path_length is not None:
        vals.append(m.avg_path_length)
    return all(math.isfinite(v) for v in vals)
