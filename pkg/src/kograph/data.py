"""Graph containers, TU-format IO, batching and dataset splitting.

Graphs are immutable: undirected adjacency in CSR form (both directions
stored, no explicit self-loops), dense node features and an integer class
label. Datasets loaded from the plain-text TU layout:

    <NAME>_A.txt                comma-separated 1-based edge pairs
    <NAME>_graph_indicator.txt  1-based graph id per node line
    <NAME>_graph_labels.txt     integer label per graph line
    <NAME>_node_labels.txt      optional, integer per node line
    <NAME>_node_attributes.txt  optional, comma-separated reals per node line

Node indices are 1-based on disk and 0-based in memory.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class LoadError(Exception):
    """A required TU file is missing or unreadable."""


class ValidationError(Exception):
    """Graph data violates a structural invariant."""


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with node features and a class label."""

    adj: sp.csr_matrix          # n x n, symmetric 0/1, zero diagonal
    X: np.ndarray               # n x d, float64
    y: int

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        """Undirected edge count (each pair counted once)."""
        return self.adj.nnz // 2

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adj.sum(axis=1)).ravel()

    def edge_pairs(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with i < j, sorted."""
        coo = self.adj.tocoo()
        mask = coo.row < coo.col
        pairs = np.stack([coo.row[mask], coo.col[mask]], axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]


def graph_from_edges(n: int, edges, X: np.ndarray, y: int = 0) -> Graph:
    """Build a validated Graph from a list of undirected (i, j) pairs.

    Each pair may be given in either or both directions; self-loops are
    rejected.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != n:
        raise ValidationError(f"feature matrix must have {n} rows, got shape {X.shape}")
    rows, cols = [], []
    for i, j in edges:
        if i == j:
            raise ValidationError(f"self-loop ({i},{i}) not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"edge ({i},{j}) references node outside 0..{n - 1}")
        rows += [i, j]
        cols += [j, i]
    adj = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n), dtype=np.float64
    )
    adj.data[:] = 1.0  # collapse duplicate entries
    adj.sum_duplicates()
    adj.data[:] = 1.0
    X.setflags(write=False)
    return Graph(adj=adj, X=X, y=int(y))


@dataclass(frozen=True)
class Dataset:
    """A graph-classification corpus with shared feature channels."""

    graphs: list[Graph]
    d: int
    num_classes: int
    name: str = ""

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def num_nodes(self) -> int:
        return sum(g.n for g in self.graphs)

    @property
    def num_edges(self) -> int:
        return sum(g.num_edges for g in self.graphs)

    def labels(self) -> np.ndarray:
        return np.array([g.y for g in self.graphs], dtype=np.int64)


@dataclass(frozen=True)
class Batch:
    """Block-diagonal disjoint union of member graphs.

    offsets has one entry per member plus a trailing total, so member g
    occupies union rows offsets[g]:offsets[g + 1].
    """

    union: Graph
    graph_id: np.ndarray   # union.n, member index per node
    offsets: np.ndarray    # num_members + 1

    @property
    def num_members(self) -> int:
        return len(self.offsets) - 1

    def member_slice(self, g: int) -> slice:
        return slice(int(self.offsets[g]), int(self.offsets[g + 1]))


def _read_lines(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise LoadError(f"missing TU file: {path}")
    with open(path) as fh:
        return [ln.strip() for ln in fh if ln.strip()]


def load_tu_dataset(root_path: str, name: str) -> Dataset:
    """Load a TU-format dataset from root_path/name/.

    Feature assembly: one-hot of discrete node labels, then continuous
    attributes, concatenated in that order when both files exist. With
    neither file, a single constant channel of ones is used.
    """
    base = os.path.join(root_path, name)
    indicator = np.array(
        [int(v) for v in _read_lines(os.path.join(base, f"{name}_graph_indicator.txt"))]
    )
    num_nodes = len(indicator)
    graph_ids = indicator - 1
    num_graphs = int(graph_ids.max()) + 1 if num_nodes else 0

    raw_labels = [int(v) for v in _read_lines(os.path.join(base, f"{name}_graph_labels.txt"))]
    if len(raw_labels) != num_graphs:
        raise ValidationError(
            f"{name}: {len(raw_labels)} graph labels for {num_graphs} graphs"
        )
    label_map = {lab: i for i, lab in enumerate(sorted(set(raw_labels)))}
    y = np.array([label_map[v] for v in raw_labels])

    # Edges: 1-based, expected in both directions; exact duplicates warned.
    edge_lines = _read_lines(os.path.join(base, f"{name}_A.txt"))
    seen: dict[tuple[int, int], int] = {}
    dup = 0
    for lineno, ln in enumerate(edge_lines, start=1):
        parts = ln.split(",")
        i, j = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise ValidationError(
                f"{name}_A.txt line {lineno}: node index out of range"
            )
        if graph_ids[i] != graph_ids[j]:
            raise ValidationError(
                f"{name}_A.txt line {lineno}: edge crosses graph boundary"
            )
        if (i, j) in seen:
            dup += 1
            continue
        seen[(i, j)] = lineno
    if dup:
        warnings.warn(f"{name}: deduplicated {dup} duplicate edge lines")
    for (i, j), lineno in seen.items():
        if (j, i) not in seen:
            raise ValidationError(
                f"{name}_A.txt line {lineno}: edge ({i + 1},{j + 1}) has no reverse entry"
            )

    # Node features.
    blocks = []
    label_path = os.path.join(base, f"{name}_node_labels.txt")
    attr_path = os.path.join(base, f"{name}_node_attributes.txt")
    if os.path.isfile(label_path):
        node_labels = np.array([int(v) for v in _read_lines(label_path)])
        if len(node_labels) != num_nodes:
            raise ValidationError(f"{name}: node label count mismatch")
        uniq = sorted(set(node_labels.tolist()))
        lut = {lab: i for i, lab in enumerate(uniq)}
        onehot = np.zeros((num_nodes, len(uniq)))
        onehot[np.arange(num_nodes), [lut[v] for v in node_labels]] = 1.0
        blocks.append(onehot)
    if os.path.isfile(attr_path):
        attrs = np.array(
            [[float(v) for v in ln.split(",")] for ln in _read_lines(attr_path)]
        )
        if attrs.shape[0] != num_nodes:
            raise ValidationError(f"{name}: node attribute count mismatch")
        blocks.append(attrs)
    if not blocks:
        blocks.append(np.ones((num_nodes, 1)))
    X_all = np.hstack(blocks)

    # Slice per graph.
    order = np.argsort(graph_ids, kind="stable")
    node_of = [np.sort(order[graph_ids[order] == g]) for g in range(num_graphs)]
    local = np.empty(num_nodes, dtype=np.int64)
    for nodes in node_of:
        local[nodes] = np.arange(len(nodes))

    per_graph_edges: list[list[tuple[int, int]]] = [[] for _ in range(num_graphs)]
    for (i, j) in seen:
        if i < j:
            per_graph_edges[graph_ids[i]].append((int(local[i]), int(local[j])))

    graphs = []
    for g in range(num_graphs):
        nodes = node_of[g]
        graphs.append(
            graph_from_edges(len(nodes), per_graph_edges[g], X_all[nodes], y[g])
        )
    return Dataset(graphs=graphs, d=X_all.shape[1], num_classes=len(label_map), name=name)


def save_tu_dataset(ds: Dataset, root_path: str, name: str | None = None) -> str:
    """Write a Dataset back to TU files (features stored as attributes).

    Reloading the written files yields structurally identical graphs.
    """
    name = name or ds.name or "DATASET"
    base = os.path.join(root_path, name)
    os.makedirs(base, exist_ok=True)
    a_lines, ind_lines, attr_lines = [], [], []
    offset = 0
    for gi, g in enumerate(ds.graphs, start=1):
        for i, j in g.edge_pairs():
            a_lines.append(f"{offset + i + 1}, {offset + j + 1}")
            a_lines.append(f"{offset + j + 1}, {offset + i + 1}")
        for row in g.X:
            attr_lines.append(", ".join(repr(float(v)) for v in row))
        ind_lines += [str(gi)] * g.n
        offset += g.n
    with open(os.path.join(base, f"{name}_A.txt"), "w") as fh:
        fh.write("\n".join(a_lines) + "\n")
    with open(os.path.join(base, f"{name}_graph_indicator.txt"), "w") as fh:
        fh.write("\n".join(ind_lines) + "\n")
    with open(os.path.join(base, f"{name}_graph_labels.txt"), "w") as fh:
        fh.write("\n".join(str(g.y) for g in ds.graphs) + "\n")
    with open(os.path.join(base, f"{name}_node_attributes.txt"), "w") as fh:
        fh.write("\n".join(attr_lines) + "\n")
    return base


def bfs_distances(g: Graph, i: int, k_max: int | None = None) -> np.ndarray:
    """BFS hop distance from node i, -1 where unreached (or beyond k_max)."""
    if not (0 <= i < g.n):
        raise IndexError(f"node {i} out of range for graph with {g.n} nodes")
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[i] = 0
    frontier = [i]
    depth = 0
    indptr, indices = g.adj.indptr, g.adj.indices
    while frontier and (k_max is None or depth < k_max):
        depth += 1
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]]:
                if dist[v] < 0:
                    dist[v] = depth
                    nxt.append(v)
        frontier = nxt
    return dist


def khop_nodes(g: Graph, i: int, k: int) -> np.ndarray:
    """All nodes within BFS distance k of node i (inclusive), sorted."""
    if k < 0:
        raise ValueError("k must be >= 0")
    dist = bfs_distances(g, i, k_max=k)
    return np.flatnonzero((dist >= 0) & (dist <= k))


def build_batch(graphs: list[Graph]) -> Batch:
    """Block-diagonal disjoint union, member order preserved."""
    if not graphs:
        raise ValueError("cannot batch an empty graph list")
    d = graphs[0].d
    if any(g.d != d for g in graphs):
        raise ValidationError("all graphs in a batch must share feature channels")
    offsets = np.concatenate([[0], np.cumsum([g.n for g in graphs])])
    union_adj = sp.block_diag([g.adj for g in graphs], format="csr")
    union_X = np.vstack([g.X for g in graphs])
    graph_id = np.repeat(np.arange(len(graphs)), [g.n for g in graphs])
    union = Graph(adj=union_adj, X=union_X, y=-1)
    return Batch(union=union, graph_id=graph_id, offsets=offsets)


def split_dataset(ds: Dataset, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic 80/10/10 split (floor/floor/remainder) by seed."""
    n = len(ds)
    if n < 10:
        raise ValueError("dataset must contain at least 10 graphs to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(0.8 * n))
    n_val = int(np.floor(0.1 * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
