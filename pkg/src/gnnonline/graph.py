"""Symmetrized citation graphs, the training-subgraph rule, and propagation operators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import EdgeIndex, SparseOperator

__all__ = [
    "Graph",
    "build_graph",
    "induced_training_graph",
    "insert_nodes_edges",
    "gcn_operator",
    "sage_mean_operator",
    "edge_index_with_self_loops",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph stored as a symmetric CSR adjacency without self-loops."""

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return int(self.indices.shape[0] // 2)

    @property
    def mean_degree(self) -> float:
        return float(self.indices.shape[0] / self.num_nodes) if self.num_nodes else 0.0

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v, sorted."""
        rows = np.repeat(np.arange(self.num_nodes), self.degree)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def adjacency(self) -> SparseOperator:
        n = self.num_nodes
        return SparseOperator(n, n, self.indptr, self.indices, np.ones(self.indices.shape[0]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices))

    def __repr__(self) -> str:
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


def build_graph(num_nodes: int, edges) -> Graph:
    """Symmetrize, deduplicate and drop self-loops."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
        raise ValueError(f"edge {tuple(int(v) for v in bad)} has a node id outside [0, {num_nodes})")
    u, v = edges[:, 0], edges[:, 1]
    off = u != v
    u, v = u[off], v[off]
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    key = np.unique(src * num_nodes + dst)
    rows, cols = np.divmod(key, num_nodes) if num_nodes else (key, key)
    counts = np.bincount(rows, minlength=num_nodes)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return Graph(num_nodes, indptr, cols.astype(np.int64))


def induced_training_graph(g: Graph, train_nodes) -> tuple[Graph, np.ndarray]:
    """Keep an edge iff both endpoints are training nodes.

    Training nodes are relabelled densely in increasing id order.  The
    returned remap has length ``g.num_nodes``; entry ``i`` is the new id of
    node ``i`` or -1 if ``i`` is not a training node.
    """
    train = np.unique(np.asarray(train_nodes, dtype=np.int64))
    if train.size == 0:
        raise ValueError("training node set is empty")
    if train[0] < 0 or train[-1] >= g.num_nodes:
        raise ValueError("training node id outside the graph")
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[train] = np.arange(train.size)
    e = g.edges()
    ru, rv = remap[e[:, 0]], remap[e[:, 1]]
    keep = (ru >= 0) & (rv >= 0)
    return build_graph(int(train.size), np.stack([ru[keep], rv[keep]], axis=1)), remap


def insert_nodes_edges(g_train: Graph, full: Graph, remap) -> Graph:
    """Add the unseen nodes and edges of ``full`` back onto a training graph.

    The result is rebuilt from the training edges (mapped back to original
    ids) plus every edge of ``full`` with at least one unseen endpoint.
    """
    remap = np.asarray(remap, dtype=np.int64)
    if remap.shape != (full.num_nodes,):
        raise ValueError(f"remap has length {remap.shape[0]}, full graph has {full.num_nodes} nodes")
    train = np.flatnonzero(remap >= 0)
    if train.size != g_train.num_nodes or not np.array_equal(remap[train], np.arange(train.size)):
        raise ValueError("remap is not a dense relabelling of the training graph's nodes")
    e = full.edges()
    both = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
    train_edges = train[g_train.edges()]
    if train_edges.shape[0] != int(both.sum()):
        raise ValueError(
            f"training graph has {train_edges.shape[0]} edges, full graph induces {int(both.sum())}")
    merged = build_graph(full.num_nodes, np.concatenate([train_edges, e[~both]]))
    if merged.num_edges != full.num_edges:
        raise ValueError("training graph contains edges that are absent from the full graph")
    return merged


def _with_self_loops(g: Graph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR arrays of A + I with sorted columns, plus the row index of each entry."""
    n = g.num_nodes
    rows = np.concatenate([np.repeat(np.arange(n), g.degree), np.arange(n)])
    cols = np.concatenate([g.indices, np.arange(n)])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.concatenate([[0], np.cumsum(g.degree + 1)]).astype(np.int64)
    return indptr, cols, rows


def gcn_operator(g: Graph) -> SparseOperator:
    """Symmetric normalization ``D^-1/2 (A + I) D^-1/2`` with self-loop degrees."""
    indptr, cols, rows = _with_self_loops(g)
    inv_sqrt = 1.0 / np.sqrt(g.degree + 1.0)
    return SparseOperator(g.num_nodes, g.num_nodes, indptr, cols, inv_sqrt[rows] * inv_sqrt[cols])


def sage_mean_operator(g: Graph) -> SparseOperator:
    """Row-stochastic mean over the closed neighbourhood, ``D^-1 (A + I)``."""
    indptr, cols, rows = _with_self_loops(g)
    return SparseOperator(g.num_nodes, g.num_nodes, indptr, cols, 1.0 / (g.degree[rows] + 1.0))


def edge_index_with_self_loops(g: Graph) -> EdgeIndex:
    """Both directions of every edge plus one self-loop per node, grouped by destination."""
    _, src, dst = _with_self_loops(g)
    # rows of the symmetric A + I are destinations, columns are sources
    return EdgeIndex(src=src, dst=dst, num_nodes=g.num_nodes)
