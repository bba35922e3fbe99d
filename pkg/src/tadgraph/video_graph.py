"""Video graph construction: fixed temporal edges and dynamic semantic k-NN edges.

Conventions (column aggregation): nodes are snippet indices 0..L-1, and
``A[i, j] = 1`` means node j aggregates the feature of node i, so
``X @ A`` gathers neighbor features per column. Under this convention the
forward temporal adjacency satisfies ``(X @ A_fwd)[:, j] = x_{j+1}`` and
``A_fwd == A_bwd.T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DataError


def temporal_adjacency(length: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward/backward adjacency of the snippet chain, no self-loops."""
    if length < 1:
        raise ContractError("temporal_adjacency: graph needs at least one node")
    a_fwd = np.zeros((length, length))
    a_bwd = np.zeros((length, length))
    for j in range(length - 1):
        a_fwd[j + 1, j] = 1.0      # column j points at node j+1
        a_bwd[j, j + 1] = 1.0      # column j+1 points at node j
    return a_fwd, a_bwd


def knn_semantic_edges(features: np.ndarray, k: int) -> np.ndarray:
    """Directed (neighbor, node) edges to each node's k nearest columns.

    Distances are Euclidean in feature space, the node itself is excluded,
    and ties resolve to the smaller node index. Returns an (k*L, 2) int
    array ordered node-major, nearest neighbor first. ``k == 0`` yields an
    empty edge list (semantic context disabled).
    """
    features = np.asarray(features, dtype=np.float64)
    length = features.shape[1]
    if k < 0 or k >= length:
        raise ConfigError(f"knn_semantic_edges: k={k} invalid for {length} nodes")
    if not np.all(np.isfinite(features)):
        raise DataError("knn_semantic_edges: features contain non-finite values")
    if k == 0:
        return np.zeros((0, 2), dtype=np.int64)

    diff = features[:, :, None] - features[:, None, :]
    d2 = np.einsum("cij,cij->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)

    edges = np.empty((k * length, 2), dtype=np.int64)
    for node in range(length):
        neighbors = np.argsort(d2[:, node], kind="stable")[:k]
        edges[node * k:(node + 1) * k, 0] = neighbors
        edges[node * k:(node + 1) * k, 1] = node
    return edges


def semantic_adjacency(edges: np.ndarray, length: int) -> np.ndarray:
    """Binary adjacency from an edge list; column j sums to j's in-degree."""
    adj = np.zeros((length, length))
    for src, dst in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
        if not (0 <= src < length and 0 <= dst < length):
            raise DataError(f"semantic_adjacency: edge ({src}, {dst}) outside [0, {length})")
        adj[src, dst] = 1.0
    return adj


@dataclass
class VideoGraph:
    """Temporal adjacencies plus the semantic edge list of each layer."""

    length: int
    k: int
    a_fwd: np.ndarray
    a_bwd: np.ndarray
    semantic_layers: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def build(cls, length: int, k: int) -> "VideoGraph":
        a_fwd, a_bwd = temporal_adjacency(length)
        return cls(length=length, k=k, a_fwd=a_fwd, a_bwd=a_bwd)

    def add_semantic_layer(self, features: np.ndarray) -> np.ndarray:
        edges = knn_semantic_edges(features, self.k)
        self.semantic_layers.append(edges)
        return edges

    def to_json_dict(self) -> dict:
        return {
            "L": self.length,
            "K": self.k,
            "layers": [[[int(s), int(d)] for s, d in layer] for layer in self.semantic_layers],
        }

    def to_dot(self) -> str:
        """DOT rendering of the semantic layers for quick inspection."""
        lines = ["digraph video_graph {", "  rankdir=LR;"]
        for node in range(self.length):
            lines.append(f"  n{node} [label=\"{node}\"];")
        for node in range(self.length - 1):
            lines.append(f"  n{node} -> n{node + 1} [color=gray];")
        palette = ["red", "blue", "green", "orange", "purple", "brown"]
        for li, layer in enumerate(self.semantic_layers):
            color = palette[li % len(palette)]
            for src, dst in layer:
                lines.append(f"  n{int(src)} -> n{int(dst)} [color={color}, style=dashed];")
        lines.append("}")
        return "\n".join(lines)
