"""Recover a relational graph from trained (or freshly initialised) MLP weights.

Hidden weight matrices are split into node blocks, symmetrised as W + W^T,
and each node pair scored by the Frobenius norm of its block. Scores are
summed over hidden layers and thresholded into a graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError, from_adjacency
from .measures import GraphMeasures, measure_all
from .translate import partition_dims


class ExtractError(GraphError):
    pass


@dataclass(frozen=True)
class EdgeStrengths:
    matrix: np.ndarray  # symmetric, zero diagonal
    self_strength: np.ndarray  # diagonal (self) blocks
    per_layer: tuple[np.ndarray, ...] = ()

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _block_norms(w: np.ndarray, n: int, normalized: bool) -> np.ndarray:
    if w.shape[0] != w.shape[1]:
        raise ExtractError(f"hidden layer must be square to symmetrise, got {w.shape}")
    if w.shape[0] < n:
        raise ExtractError(f"layer width {w.shape[0]} smaller than node count {n}")
    part = np.asarray(partition_dims(w.shape[0], n))
    starts = np.concatenate([[0], np.cumsum(part)[:-1]])
    sym = w + w.T
    sq = np.add.reduceat(np.add.reduceat(sym * sym, starts, axis=0), starts, axis=1)
    norms = np.sqrt(sq)
    if normalized:
        norms = norms / np.outer(part, part)
    return norms


def hidden_weights(model) -> list[np.ndarray]:
    """Weights of the message-exchange layers (the square hidden-to-hidden maps)."""
    return [model.weights[layer] for layer in model.spec.layers.masked_layers]


def edge_strengths(model, n: int, per_layer: bool = False, normalized: bool = False) -> EdgeStrengths:
    """Node-pair strengths summed over hidden layers.

    ``model`` is a MaskedMlp or a plain sequence of square weight matrices.
    ``normalized`` divides each block norm by the block's entry count.
    """
    weights = hidden_weights(model) if hasattr(model, "spec") else [np.asarray(w) for w in model]
    if not weights:
        raise ExtractError("model has no hidden layers")
    layers = [_block_norms(np.asarray(w, dtype=np.float64), n, normalized) for w in weights]
    total = np.sum(layers, axis=0)
    diag = np.diag(total).copy()
    off = total.copy()
    np.fill_diagonal(off, 0.0)
    return EdgeStrengths(off, diag, tuple(layers) if per_layer else ())


def _matrix(strengths) -> np.ndarray:
    return strengths.matrix if isinstance(strengths, EdgeStrengths) else np.asarray(strengths, dtype=np.float64)


def binarize(strengths, threshold: float) -> Graph:
    """Edge (i, j) iff strength > threshold; the diagonal is ignored."""
    s = _matrix(strengths)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ExtractError("strengths must be a square matrix")
    if np.any(s < 0):
        raise ExtractError("strengths must be nonnegative")
    if not np.allclose(s, s.T):
        raise ExtractError("strengths must be symmetric")
    adj = s > threshold
    np.fill_diagonal(adj, False)
    return from_adjacency(adj, {"family": "extracted", "threshold": float(threshold)})


def threshold_for_sparsity(strengths, sparsity: float) -> float:
    """Threshold that keeps the round(sparsity * n(n-1)/2) strongest pairs."""
    s = _matrix(strengths)
    vals = np.sort(s[np.triu_indices(s.shape[0], k=1)])[::-1]
    keep = int(round(sparsity * len(vals)))
    if keep <= 0:
        return float(vals[0])
    if keep >= len(vals):
        return float(min(vals[-1], 0.0) - 1.0) if vals[-1] <= 0 else 0.0
    return float((vals[keep - 1] + vals[keep]) / 2.0)


def threshold_sweep(strengths, thresholds) -> list[tuple[float, Graph, GraphMeasures]]:
    """Extracted graph and its measures per threshold (L is None when disconnected)."""
    thresholds = list(thresholds)
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ExtractError("thresholds must be ascending")
    out = []
    for t in thresholds:
        g = binarize(strengths, t)
        out.append((float(t), g, measure_all(g)))
    return out
