"""Relational graph generators and deterministic parameter sweeps.

All randomness comes from numpy's PCG64 seeded through ``SeedSequence``;
sweeps derive a per-task 64-bit seed from the base seed and the parameter
indices, so a sweep item can be regenerated on its own from its params.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from .graph import Graph, GraphError, new_graph

FAMILIES = ("ws_flex", "ws", "er", "ba", "harary", "ring", "complete")

# rejection-sampling attempts before a rewiring keeps its original endpoint
MAX_REWIRE_TRIES = 100


class GeneratorError(GraphError):
    pass


@dataclass(frozen=True)
class GeneratorParams:
    family: str
    n: int
    k: float | None = None
    p: float | None = None
    m: int | None = None
    seed: int = 0

    def to_dict(self) -> dict:
        return {key: val for key, val in asdict(self).items() if val is not None}


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def derive_seed(seed: int, *stream: int) -> int:
    """64-bit seed for an independent sub-stream of ``seed``."""
    ss = np.random.SeedSequence([int(seed), *map(int, stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_p(p):
    if not 0.0 <= p <= 1.0:
        raise GeneratorError(f"rewiring probability p must be in [0, 1], got {p}")


def _flex_lattice(n: int, e: int) -> list[tuple[int, int]]:
    """Ring lattice with floor(e/n) clockwise neighbours per node plus e mod n extras.

    Returned edges are oriented (source, far endpoint) in canonical order:
    lattice edges by source then offset, then extras in insertion order.
    Extras start from evenly spaced source nodes and go to the nearest ring
    position that is not yet adjacent (clockwise wins ties).
    """
    per_node, extra = divmod(e, n)
    adj = [set() for _ in range(n)]
    oriented = []
    for i in range(n):
        for off in range(1, per_node + 1):
            j = (i + off) % n
            oriented.append((i, j))
            adj[i].add(j)
            adj[j].add(i)
    if extra:
        spread = [(t * n) // extra for t in range(extra)]
        order = spread + [i for i in range(n) if i not in set(spread)]
        added = 0
        while added < extra:
            progress = False
            for i in order:
                if added == extra:
                    break
                target = None
                for dist in range(per_node + 1, n // 2 + 1):
                    for j in ((i + dist) % n, (i - dist) % n):
                        if j != i and j not in adj[i]:
                            target = j
                            break
                    if target is not None:
                        break
                if target is None:
                    continue
                oriented.append((i, target))
                adj[i].add(target)
                adj[target].add(i)
                added += 1
                progress = True
            if not progress:
                raise GeneratorError(f"cannot place {extra} extra edges on {n} nodes")
    return oriented


def _rewire(n: int, oriented: list[tuple[int, int]], p: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    if p == 0.0 or not oriented:
        return oriented
    adj = [set() for _ in range(n)]
    for u, v in oriented:
        adj[u].add(v)
        adj[v].add(u)
    coins = rng.random(len(oriented))
    out = list(oriented)
    for idx, (u, v) in enumerate(oriented):
        if coins[idx] >= p or len(adj[u]) >= n - 1:
            continue
        for _ in range(MAX_REWIRE_TRIES):
            w = int(rng.integers(n))
            if w != u and w not in adj[u]:
                adj[u].discard(v)
                adj[v].discard(u)
                adj[u].add(w)
                adj[w].add(u)
                out[idx] = (u, w)
                break
    return out


def ws_flex(n: int, k: float, p: float, seed: int = 0) -> Graph:
    """WS-flex graph with exactly floor(n*k/2) edges."""
    if n < 2:
        raise GeneratorError("ws_flex needs n >= 2")
    if k <= 0 or k >= n:
        raise GeneratorError(f"ws_flex needs 0 < k < n, got k={k}, n={n}")
    _check_p(p)
    e = math.floor(n * k / 2)
    if e > n * (n - 1) // 2:
        raise GeneratorError(f"{e} edges infeasible on {n} nodes")
    rng = make_rng(seed)
    edges = _rewire(n, _flex_lattice(n, e), p, rng)
    return new_graph(n, edges, {"family": "ws_flex", "n": n, "k": k, "p": p, "seed": seed})


def ws(n: int, k: int, p: float, seed: int = 0) -> Graph:
    """Classic Watts-Strogatz graph; k must be even (use ws_flex for odd or real k)."""
    if n < 2:
        raise GeneratorError("ws needs n >= 2")
    if k != int(k) or int(k) % 2:
        raise GeneratorError(f"ws needs an even integer degree k, got {k}; use ws_flex for odd or real k")
    k = int(k)
    if k < 2 or k >= n:
        raise GeneratorError(f"ws needs 2 <= k < n, got k={k}, n={n}")
    _check_p(p)
    rng = make_rng(seed)
    edges = _rewire(n, _flex_lattice(n, n * k // 2), p, rng)
    return new_graph(n, edges, {"family": "ws", "n": n, "k": k, "p": p, "seed": seed})


def er(n: int, m: int, seed: int = 0) -> Graph:
    """G(n, m): m distinct edges drawn uniformly without replacement."""
    total = n * (n - 1) // 2
    if not 0 <= m <= total:
        raise GeneratorError(f"er needs 0 <= m <= {total}, got {m}")
    rng = make_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    pick = np.sort(rng.choice(total, size=m, replace=False))
    edges = zip(iu[pick].tolist(), ju[pick].tolist())
    return new_graph(n, edges, {"family": "er", "n": n, "m": m, "seed": seed})


def ba(n: int, m: int, seed: int = 0) -> Graph:
    """Preferential attachment grown from a star on m+1 nodes; m*(n-m) edges."""
    if not 1 <= m < n:
        raise GeneratorError(f"ba needs 1 <= m < n, got m={m}, n={n}")
    rng = make_rng(seed)
    edges = [(0, j) for j in range(1, m + 1)]
    deg = np.zeros(n, dtype=np.float64)
    deg[0] = m
    deg[1 : m + 1] = 1
    for v in range(m + 1, n):
        targets = rng.choice(v, size=m, replace=False, p=deg[:v] / deg[:v].sum())
        for t in targets.tolist():
            edges.append((t, v))
            deg[t] += 1
        deg[v] = m
    return new_graph(n, edges, {"family": "ba", "n": n, "m": m, "seed": seed})


def harary(n: int, m: int) -> Graph:
    """Harary graph on n nodes and m edges with node connectivity floor(2m/n)."""
    if n < 1 or m < n - 1 or m > n * (n - 1) // 2:
        raise GeneratorError(f"harary needs n-1 <= m <= n(n-1)/2, got n={n}, m={m}")
    edges: set[tuple[int, int]] = set()

    def add(i, j):
        edges.add((min(i, j), max(i, j)))

    d = 2 * m // n
    if n % 2 == 0 or d % 2 == 0:
        offset = d // 2
        for i in range(n):
            for j in range(1, offset + 1):
                add(i, (i + j) % n)
        if d % 2:
            half = n // 2
            for i in range(half):
                add(i, i + half)
        r = 2 * m % n
        for i in range(r // 2):
            add(i, i + offset + 1)
    else:
        offset = (d - 1) // 2
        for i in range(n):
            for j in range(1, offset + 1):
                add(i, (i + j) % n)
        half = n // 2
        for i in range(m - n * offset):
            add(i, (i + half) % n)
    if len(edges) != m:
        raise GeneratorError(f"harary construction produced {len(edges)} edges, expected {m}")
    return new_graph(n, edges, {"family": "harary", "n": n, "m": m})


def ring(n: int, k: float) -> Graph:
    g = ws_flex(n, k, 0.0, 0)
    return new_graph(n, g.edges, {"family": "ring", "n": n, "k": k})


def complete(n: int) -> Graph:
    if n < 1:
        raise GeneratorError("complete needs n >= 1")
    return new_graph(n, itertools.combinations(range(n), 2), {"family": "complete", "n": n})


def generate(params: GeneratorParams) -> Graph:
    f = params.family
    if f == "ws_flex":
        return ws_flex(params.n, params.k, params.p, params.seed)
    if f == "ws":
        return ws(params.n, params.k, params.p, params.seed)
    if f == "er":
        return er(params.n, params.m, params.seed)
    if f == "ba":
        return ba(params.n, params.m, params.seed)
    if f == "harary":
        return harary(params.n, params.m)
    if f == "ring":
        return ring(params.n, params.k)
    if f == "complete":
        return complete(params.n)
    raise GeneratorError(f"unknown family {f!r}; expected one of {FAMILIES}")


# --- sweeps -----------------------------------------------------------------

_GRID_PARAMS = {
    "ws_flex": ("k", "p"),
    "ws": ("k", "p"),
    "er": ("m",),
    "ba": ("m",),
    "harary": ("m",),
    "ring": ("k",),
    "complete": (),
}
_SEEDED = {"ws_flex", "ws", "er", "ba"}
_INT_PARAMS = {"m"}


def grid_values(spec) -> list[float]:
    """Expand one parameter grid description.

    Accepts a scalar, a list, or a mapping with ``values``, or
    ``start``/``stop``/``count`` (inclusive linspace), or
    ``start``/``stop``/``step`` (half-open arange); ``transform = "square"``
    squares every value.
    """
    if isinstance(spec, (int, float)):
        vals = [spec]
    elif isinstance(spec, (list, tuple)):
        vals = list(spec)
    elif "values" in spec:
        vals = list(spec["values"])
    elif "count" in spec:
        vals = np.linspace(spec["start"], spec["stop"], int(spec["count"])).tolist()
    elif "step" in spec or "stop" in spec:
        vals = np.arange(spec["start"], spec["stop"], spec.get("step", 1)).tolist()
    else:
        raise GeneratorError(f"cannot interpret parameter grid {spec!r}")
    transform = spec.get("transform", "none") if isinstance(spec, dict) else "none"
    if transform == "square":
        vals = [v * v for v in vals]
    elif transform != "none":
        raise GeneratorError(f"unknown transform {transform!r}")
    return vals


@dataclass
class SweepItem:
    index: tuple[int, ...]
    params: GeneratorParams
    graph: Graph | None = None
    skip: str | None = None

    def record(self) -> dict:
        rec = {"index": list(self.index), "params": self.params.to_dict()}
        if self.skip:
            rec["skip"] = self.skip
        return rec


@dataclass
class SweepConfig:
    family: str
    n: int = 64
    grids: dict = field(default_factory=dict)
    seeds: int = 1
    seed: int = 0
    sparsity_window: tuple[float, float] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        family = d["family"]
        if family not in FAMILIES:
            raise GeneratorError(f"unknown family {family!r}")
        grids = {name: grid_values(d[name]) for name in _GRID_PARAMS[family] if name in d}
        missing = [name for name in _GRID_PARAMS[family] if name not in grids]
        if missing:
            raise GeneratorError(f"sweep for {family} missing grid(s) {missing}")
        window = d.get("sparsity_window")
        return cls(
            family=family,
            n=int(d.get("n", 64)),
            grids=grids,
            seeds=int(d.get("seeds", 1)) if family in _SEEDED else 1,
            seed=int(d.get("seed", 0)),
            sparsity_window=tuple(window) if window else None,
        )

    def size(self) -> int:
        return math.prod(len(v) for v in self.grids.values()) * self.seeds


def sweep_params(config: SweepConfig) -> Iterator[tuple[tuple[int, ...], GeneratorParams]]:
    """Every parameter combination in deterministic index order."""
    names = _GRID_PARAMS[config.family]
    axes = [list(enumerate(config.grids[name])) for name in names]
    for combo in itertools.product(*axes, range(config.seeds)):
        *picked, seed_idx = combo
        index = tuple(i for i, _ in picked) + (seed_idx,)
        kw = {}
        for name, (_, val) in zip(names, picked):
            kw[name] = int(round(val)) if name in _INT_PARAMS else float(val)
        seed = derive_seed(config.seed, *index) if config.family in _SEEDED else 0
        yield index, GeneratorParams(family=config.family, n=config.n, seed=seed, **kw)


def _run_item(config: SweepConfig, index, params) -> SweepItem:
    try:
        g = generate(params)
    except GraphError as exc:
        return SweepItem(index, params, skip=str(exc))
    if config.sparsity_window is not None:
        lo, hi = config.sparsity_window
        s = g.num_edges / (g.n * (g.n - 1) / 2)
        if not lo <= s <= hi:
            return SweepItem(index, params, skip=f"sparsity {s:.4f} outside [{lo}, {hi}]")
    return SweepItem(index, params, graph=g)


def _run_chunk(args):
    config, chunk = args
    return [_run_item(config, idx, params) for idx, params in chunk]


def sweep(config: SweepConfig | dict, jobs: int = 1, chunk_size: int = 256) -> Iterator[SweepItem]:
    """Generate every sweep item; output order is parameter-index order regardless of ``jobs``."""
    if isinstance(config, dict):
        config = SweepConfig.from_dict(config)
    if jobs <= 1:
        for index, params in sweep_params(config):
            yield _run_item(config, index, params)
        return
    from concurrent.futures import ProcessPoolExecutor

    def chunks():
        it = iter(sweep_params(config))
        while batch := list(itertools.islice(it, chunk_size)):
            yield config, batch

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for items in pool.map(_run_chunk, chunks()):
            yield from items
