"""Translate a relational graph into a masked network specification.

Each masked layer splits its input and output dimensions into ``n`` contiguous
node slices (larger slices first). Block (i, j) of the weight matrix is
trainable iff i == j or (i, j) is an edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError


class TranslateError(GraphError):
    pass


def partition_dims(m: int, n: int) -> list[int]:
    """Split ``m`` dimensions over ``n`` nodes; the first ``m mod n`` nodes get one extra."""
    if n < 1:
        raise TranslateError(f"need at least one node, got n={n}")
    if m < n:
        raise TranslateError(f"width {m} too small for {n} nodes (each node needs >= 1 dimension)")
    base, extra = divmod(m, n)
    return [base + 1] * extra + [base] * (n - extra)


def block_mask(g: Graph) -> np.ndarray:
    """n x n boolean node-pair structure: edges plus the implicit self-edges."""
    return g.adjacency().astype(bool) | np.eye(g.n, dtype=bool)


def layer_mask(g: Graph, in_partition, out_partition) -> np.ndarray:
    """Boolean (sum(out), sum(in)) weight mask for one message-exchange round."""
    if len(in_partition) != g.n or len(out_partition) != g.n:
        raise TranslateError(
            f"partition lengths ({len(in_partition)}, {len(out_partition)}) do not match n={g.n}"
        )
    blocks = block_mask(g)
    return np.repeat(np.repeat(blocks, out_partition, axis=0), in_partition, axis=1)


def node_slices(partition) -> list[slice]:
    bounds = np.concatenate([[0], np.cumsum(partition)])
    return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class LayerWidths:
    widths: tuple[int, ...]
    masked_layers: tuple[int, ...]

    @property
    def num_layers(self) -> int:
        return len(self.widths) - 1


@dataclass(frozen=True)
class NetworkSpec:
    graph: Graph
    layers: LayerWidths
    partitions: tuple[tuple[int, ...] | None, ...]  # per width boundary
    blocks: np.ndarray
    kind: str = "mlp"
    kernel_areas: tuple[int, ...] | None = None  # per layer (cnn only)
    spatial: tuple[int, ...] | None = None  # per layer output side length (cnn only)

    @property
    def rounds(self) -> int:
        return len(self.layers.masked_layers)

    @property
    def widths(self) -> tuple[int, ...]:
        return self.layers.widths

    def is_masked(self, layer: int) -> bool:
        return layer in self.layers.masked_layers

    @property
    def masks(self) -> dict[int, np.ndarray]:
        """Block structure per masked layer."""
        return {layer: self.blocks for layer in self.layers.masked_layers}

    def mask(self, layer: int) -> np.ndarray | None:
        """Full boolean weight mask of shape (out, in) for a masked layer, else None."""
        if not self.is_masked(layer):
            return None
        return layer_mask(self.graph, self.partitions[layer], self.partitions[layer + 1])

    def masked_entries(self, layer: int) -> int:
        """Number of trainable weights in a layer (all of them when dense)."""
        w = self.layers.widths
        if not self.is_masked(layer):
            return w[layer] * w[layer + 1]
        p_in = np.asarray(self.partitions[layer], dtype=np.int64)
        p_out = np.asarray(self.partitions[layer + 1], dtype=np.int64)
        return int(p_out @ self.blocks.astype(np.int64) @ p_in)

    def to_dict(self) -> dict:
        iu, ju = np.nonzero(self.blocks)
        out = {
            "kind": self.kind,
            "n": self.graph.n,
            "graph": self.graph.to_dict(),
            "widths": list(self.layers.widths),
            "masked_layers": list(self.layers.masked_layers),
            "rounds": self.rounds,
            "partitions": [list(p) if p is not None else None for p in self.partitions],
            "mask_blocks": [[int(i), int(j)] for i, j in zip(iu, ju)],
        }
        if self.kind == "cnn":
            out["kernel_areas"] = list(self.kernel_areas)
            out["spatial"] = list(self.spatial)
        return out


def spec_from_dict(d: dict) -> NetworkSpec:
    from .graph import parse_graph

    g = parse_graph(d["graph"])
    layers = LayerWidths(tuple(d["widths"]), tuple(d["masked_layers"]))
    return _build(g, layers, d.get("kind", "mlp"), d.get("kernel_areas"), d.get("spatial"))


def _build(g: Graph, layers: LayerWidths, kind="mlp", kernel_areas=None, spatial=None) -> NetworkSpec:
    touched = set()
    for layer in layers.masked_layers:
        touched.update((layer, layer + 1))
    partitions = tuple(
        tuple(partition_dims(w, g.n)) if b in touched else None for b, w in enumerate(layers.widths)
    )
    return NetworkSpec(
        graph=g,
        layers=layers,
        partitions=partitions,
        blocks=block_mask(g),
        kind=kind,
        kernel_areas=tuple(kernel_areas) if kernel_areas is not None else None,
        spatial=tuple(spatial) if spatial is not None else None,
    )


def relational_mlp_spec(g: Graph, input_dim: int, hidden_dim: int, hidden_layers: int, output_dim: int) -> NetworkSpec:
    """Dense input layer, ``hidden_layers`` masked rounds, dense output layer.

    With zero hidden layers the network is a single dense input->output map.
    """
    if hidden_layers < 0:
        raise TranslateError("hidden_layers must be >= 0")
    if hidden_layers == 0:
        return _build(g, LayerWidths((input_dim, output_dim), ()))
    if hidden_dim < g.n:
        raise TranslateError(f"hidden width {hidden_dim} smaller than node count {g.n}")
    widths = (input_dim,) + (hidden_dim,) * (hidden_layers + 1) + (output_dim,)
    masked = tuple(range(1, hidden_layers + 1))
    return _build(g, LayerWidths(widths, masked))


def relational_cnn_flops_spec(
    g: Graph,
    stage_widths,
    stage_depths,
    kernel_area: int,
    spatial_sizes,
    *,
    in_channels: int = 3,
    stem_kernel_area: int | None = 49,
    stem_spatial: int | None = 112,
    num_classes: int | None = 1000,
) -> NetworkSpec:
    """Convolutional spec used for FLOPS accounting only.

    Layout: optional dense stem conv (in_channels -> stage_widths[0]), then
    ``stage_depths[s]`` masked convs per stage at side length
    ``spatial_sizes[s]``, then an optional dense classifier head. Without a
    stem the first stage conv reads ``stage_widths[0]`` channels.
    """
    stage_widths = [int(w) for w in stage_widths]
    if len(stage_widths) != len(stage_depths) or len(stage_widths) != len(spatial_sizes):
        raise TranslateError("stage_widths, stage_depths and spatial_sizes must have equal length")
    if min(stage_widths) < g.n:
        raise TranslateError(f"narrowest stage width {min(stage_widths)} smaller than node count {g.n}")
    widths = [in_channels] if stem_kernel_area else []
    kernels, spatial, masked = [], [], []
    widths.append(stage_widths[0])
    if stem_kernel_area:
        kernels.append(stem_kernel_area)
        spatial.append(stem_spatial)
    for w, depth, side in zip(stage_widths, stage_depths, spatial_sizes):
        for _ in range(depth):
            masked.append(len(kernels))
            widths.append(w)
            kernels.append(kernel_area)
            spatial.append(side)
    if num_classes:
        widths.append(num_classes)
        kernels.append(1)
        spatial.append(1)
    return _build(g, LayerWidths(tuple(widths), tuple(masked)), "cnn", kernels, spatial)
