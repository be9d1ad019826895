"""Shared oracle helpers for verification and the test suite."""

from __future__ import annotations

import numpy as np

from kograph import autodiff as ad
from kograph.data import Dataset, Graph, graph_from_edges


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4,
                 d: int = 3, ensure_edge: bool = False) -> Graph:
    """Erdos-Renyi graph with standard-normal features."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < p]
    if ensure_edge and not edges and n >= 2:
        edges = [(0, 1)]
    X = rng.standard_normal((n, d))
    return graph_from_edges(n, edges, X, y=int(rng.integers(0, 2)))


def dense_chebyshev_stack(op: np.ndarray, k: int) -> list[np.ndarray]:
    """Dense Chebyshev polynomials T_0..T_k of a dense operator."""
    n = op.shape[0]
    mats = [np.eye(n)]
    if k >= 1:
        mats.append(op.copy())
    for _ in range(2, k + 1):
        mats.append(2.0 * op @ mats[-1] - mats[-2])
    return mats


def numeric_gradient(loss_fn, param: ad.Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. one parameter."""
    grad = np.zeros_like(param.data)
    flat = param.data.ravel()
    gflat = grad.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        hi = loss_fn()
        flat[idx] = orig - eps
        lo = loss_fn()
        flat[idx] = orig
        gflat[idx] = (hi - lo) / (2.0 * eps)
    return grad


def complete_graph(n: int, d: int = 2, y: int = 0,
                   rng: np.random.Generator | None = None) -> Graph:
    rng = rng or np.random.default_rng(0)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return graph_from_edges(n, edges, rng.standard_normal((n, d)), y=y)


def synthetic_two_class_dataset(num_graphs: int = 40, seed: int = 0,
                                d: int = 4) -> Dataset:
    """Separable toy corpus: label-dependent feature means and densities."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(num_graphs):
        y = i % 2
        n = int(rng.integers(6, 12))
        p = 0.25 if y == 0 else 0.6
        g = random_graph(rng, n, p=p, d=d, ensure_edge=True)
        X = np.array(g.X) + (2.0 if y == 1 else -2.0)
        graphs.append(Graph(adj=g.adj, X=X, y=y))
    return Dataset(graphs=graphs, d=d, num_classes=2, name="synthetic")
