"""Undirected simple graphs used as relational graphs.

Self-edges are implicit: every node exchanges messages with itself, so they
are never stored in ``edges``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    """Invalid graph construction or query."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix (no diagonal)."""
        a = np.zeros((self.n, self.n), dtype=np.int64)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1
            a[e[:, 1], e[:, 0]] = 1
        return a

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def edge_set(self) -> set[tuple[int, int]]:
        return set(self.edges)

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges], "meta": dict(self.meta)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return hash((self.n, self.edges))


def new_graph(n: int, edge_list: Iterable[tuple[int, int]], meta: dict | None = None) -> Graph:
    """Build a canonical graph, rejecting self-loops, duplicates and bad endpoints."""
    n = int(n)
    if n < 1:
        raise GraphError(f"node count must be >= 1, got {n}")
    seen: set[tuple[int, int]] = set()
    for pair in edge_list:
        i, j = (int(x) for x in pair)
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) has endpoint out of range [0, {n})")
        if i == j:
            raise GraphError(f"self-loop ({i}, {j}) not allowed")
        key = (i, j) if i < j else (j, i)
        if key in seen:
            raise GraphError(f"duplicate edge ({i}, {j})")
        seen.add(key)
    return Graph(n, tuple(sorted(seen)), dict(meta or {}))


def from_adjacency(a: np.ndarray, meta: dict | None = None) -> Graph:
    a = np.asarray(a)
    iu, ju = np.nonzero(np.triu(a, k=1))
    return Graph(a.shape[0], tuple(zip(iu.tolist(), ju.tolist())), dict(meta or {}))


def sparsity(g: Graph) -> float:
    """Fraction of the n(n-1)/2 possible edges that are present."""
    if g.n < 2:
        raise GraphError("sparsity undefined for n < 2")
    return g.num_edges / (g.n * (g.n - 1) / 2)


def neighbors(g: Graph, v: int) -> set[int]:
    if not 0 <= v < g.n:
        raise GraphError(f"node {v} out of range [0, {g.n})")
    out = set()
    for i, j in g.edges:
        if i == v:
            out.add(j)
        elif j == v:
            out.add(i)
    return out


def is_connected(g: Graph) -> bool:
    adj: list[list[int]] = [[] for _ in range(g.n)]
    for i, j in g.edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == g.n


def parse_graph(data: dict | str) -> Graph:
    if isinstance(data, str):
        data = json.loads(data)
    try:
        return new_graph(data["n"], data["edges"], data.get("meta"))
    except KeyError as exc:
        raise GraphError(f"graph JSON missing field {exc}") from None


def save_graph(g: Graph, path: str | Path) -> None:
    Path(path).write_text(g.to_json() + "\n")


def load_graph(path: str | Path) -> Graph:
    return parse_graph(Path(path).read_text())
