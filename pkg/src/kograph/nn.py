"""Differentiable layers: light k-order convolution, k-order pooling,
readout, MLP classifier, plus Adam and parameter accounting.

The light convolution shares one d x d' projection across hops and merges
hops with per-channel scale vectors, so a layer holds (d + k + 1) * d'
trainable weights (bias aside) instead of the coupled (k + 1) * d * d'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from kograph import autodiff as ad
from kograph.data import Batch, Graph
from kograph.kernels import CHEBYSHEV, PropagationPlan


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Bag of named parameters with recursive collection."""

    def parameters(self) -> list[tuple[str, ad.Tensor]]:
        out = []
        for name, value in vars(self).items():
            if isinstance(value, ad.Tensor) and value.requires_grad:
                out.append((name, value))
            elif isinstance(value, Module):
                out += [(f"{name}.{n}", t) for n, t in value.parameters()]
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out += [(f"{name}.{i}.{n}", t) for n, t in item.parameters()]
        return out


class LiConv(Module):
    """Light k-order convolution: shared projection + per-hop channel scales.

    Forward returns the anchor stack (list of k+1 hop tensors, each T_m(XW))
    and the pre-activation merged output sum_m Z_m * w_m + b.
    """

    def __init__(self, d_in: int, d_out: int, k: int, rng: np.random.Generator):
        self.k = k
        self.d_in = d_in
        self.d_out = d_out
        self.W = ad.parameter(glorot_uniform(rng, (d_in, d_out)))
        self.w_hops = ad.parameter(np.ones((k + 1, d_out)))
        self.b = ad.parameter(np.zeros(d_out))

    def forward(self, plan: PropagationPlan, X: ad.Tensor) -> tuple[list[ad.Tensor], ad.Tensor]:
        proj = ad.matmul(X, self.W)
        Z = [proj]
        if self.k >= 1:
            Z.append(ad.spmm(plan.op, proj))
        for m in range(2, self.k + 1):
            if plan.kind == CHEBYSHEV:
                Z.append(ad.sub(ad.smul(ad.spmm(plan.op, Z[m - 1]), 2.0), Z[m - 2]))
            else:
                Z.append(ad.spmm(plan.op, Z[m - 1]))
        merged = None
        for m, z in enumerate(Z):
            term = ad.mul(z, ad.gather_rows(self.w_hops, np.array([m])))
            merged = term if merged is None else ad.add(merged, term)
        merged = ad.add(merged, self.b)
        return Z, merged


@dataclass
class PoolResult:
    batch: Batch
    X_out: ad.Tensor
    kept_nodes: np.ndarray       # global union indices, ascending
    kept_edges: np.ndarray       # (m, 2) remapped undirected pairs
    kept_per_graph: np.ndarray
    target_per_graph: np.ndarray


class KPool(Module):
    """Self-attention node scoring with top-rho node and edge retention.

    Scores come from the concatenated anchor vectors; with feature
    normalization the output row is the unit-normalized conv output scaled
    by the node score. Selection indices and edge scores are constants of
    the backward pass.
    """

    def __init__(self, k: int, d_out: int, rng: np.random.Generator,
                 rho_v: float = 0.6, rho_e: float = 0.8,
                 nf: bool = True, pn: bool = True, pe: bool = True):
        if not (0.0 < rho_v <= 1.0 and 0.0 < rho_e <= 1.0):
            raise ValueError("keep ratios must lie in (0, 1]")
        self.theta = ad.parameter(glorot_uniform(rng, ((k + 1) * d_out, 1)))
        self.rho_v = rho_v
        self.rho_e = rho_e
        self.nf = nf
        self.pn = pn
        self.pe = pe

    def node_scores(self, Z: list[ad.Tensor]) -> ad.Tensor:
        anchors = ad.concat(Z, axis=1)
        return ad.relu(ad.matmul(anchors, self.theta))   # (n, 1)

    def forward(self, batch: Batch, Z: list[ad.Tensor], X_conv: ad.Tensor,
                X_in: np.ndarray) -> PoolResult:
        scores_t = self.node_scores(Z)
        feats = ad.row_normalize(X_conv) if self.nf else X_conv
        X_scored = ad.mul(feats, scores_t)

        scores = scores_t.data.ravel()
        n = batch.union.n
        num_members = batch.num_members

        # Node selection: per member graph keep ceil(rho_v * n_g) top
        # scorers, ties toward the lower original index.
        if self.pn:
            kept_list = []
            targets = np.zeros(num_members, dtype=np.int64)
            for g in range(num_members):
                sl = batch.member_slice(g)
                local = np.arange(sl.start, sl.stop)
                keep = int(math.ceil(self.rho_v * len(local)))
                targets[g] = keep
                order = np.lexsort((local, -scores[sl]))
                kept_list.append(np.sort(local[order[:keep]]))
            kept = np.concatenate(kept_list)
        else:
            kept = np.arange(n)
            targets = np.diff(batch.offsets)

        new_id = np.full(n, -1, dtype=np.int64)
        new_id[kept] = np.arange(len(kept))
        kept_graph_id = batch.graph_id[kept]
        kept_per_graph = np.bincount(kept_graph_id, minlength=num_members)

        # Edge selection among surviving endpoints.
        coo = batch.union.adj.tocoo()
        emask = (coo.row < coo.col) & (new_id[coo.row] >= 0) & (new_id[coo.col] >= 0)
        er, ec = coo.row[emask], coo.col[emask]
        if self.pe and len(er):
            diffs = X_in[er] - X_in[ec]
            w_edge = np.exp(np.linalg.norm(diffs, axis=1))
            egid = batch.graph_id[er]
            keep_mask = np.zeros(len(er), dtype=bool)
            for g in range(num_members):
                idx = np.flatnonzero(egid == g)
                if len(idx) == 0:
                    continue
                m_keep = int(math.ceil(self.rho_e * len(idx)))
                order = np.argsort(-w_edge[idx], kind="stable")
                keep_mask[idx[order[:m_keep]]] = True
            er, ec = er[keep_mask], ec[keep_mask]

        kept_edges = np.stack([new_id[er], new_id[ec]], axis=1) if len(er) else \
            np.zeros((0, 2), dtype=np.int64)

        rows = np.concatenate([kept_edges[:, 0], kept_edges[:, 1]])
        cols = np.concatenate([kept_edges[:, 1], kept_edges[:, 0]])
        new_adj = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(len(kept), len(kept))
        )
        X_out = ad.gather_rows(X_scored, kept)
        new_union = Graph(adj=new_adj, X=X_out.data, y=-1)
        new_offsets = np.concatenate([[0], np.cumsum(kept_per_graph)])
        new_batch = Batch(union=new_union, graph_id=kept_graph_id,
                          offsets=new_offsets)
        return PoolResult(batch=new_batch, X_out=X_out, kept_nodes=kept,
                          kept_edges=kept_edges, kept_per_graph=kept_per_graph,
                          target_per_graph=targets)


def readout(batch: Batch, X: ad.Tensor) -> ad.Tensor:
    """Per-graph concat(mean, max) over member nodes -> (G, 2*d')."""
    num = batch.num_members
    return ad.concat([ad.segment_mean(X, batch.graph_id, num),
                      ad.segment_max(X, batch.graph_id, num)], axis=1)


class Classifier(Module):
    """Two-layer MLP head: 2*d' -> d' -> C with ReLU and dropout 0.5."""

    def __init__(self, d_hidden: int, num_classes: int, rng: np.random.Generator,
                 dropout_rate: float = 0.5):
        self.W1 = ad.parameter(glorot_uniform(rng, (2 * d_hidden, d_hidden)))
        self.b1 = ad.parameter(np.zeros(d_hidden))
        self.W2 = ad.parameter(glorot_uniform(rng, (d_hidden, num_classes)))
        self.b2 = ad.parameter(np.zeros(num_classes))
        self.dropout_rate = dropout_rate

    def forward(self, h: ad.Tensor, training: bool,
                rng: np.random.Generator) -> ad.Tensor:
        hidden = ad.relu(ad.add(ad.matmul(h, self.W1), self.b1))
        hidden = ad.dropout(hidden, self.dropout_rate, rng, training)
        return ad.add(ad.matmul(hidden, self.W2), self.b2)


class Adam:
    """Adam with bias correction; deterministic given inputs."""

    def __init__(self, params: list[tuple[str, ad.Tensor]], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params}
        self.v = {name: np.zeros_like(t.data) for name, t in params}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.zero_grad()


def adam_step(params: list[tuple[str, ad.Tensor]], state: Adam | None,
              lr: float = 1e-3) -> Adam:
    """One Adam update; creates the state on first use and returns it."""
    if state is None:
        state = Adam(params, lr=lr)
    state.lr = lr
    state.step()
    return state


def param_count(module: Module) -> tuple[int, dict[str, int]]:
    """Total trainable element count plus per-tensor breakdown."""
    breakdown = {name: t.data.size for name, t in module.parameters()}
    return sum(breakdown.values()), breakdown


def save_checkpoint(module: Module, path: str) -> None:
    """Flat container mapping tensor names to row-major float64 arrays."""
    np.savez(path, **{name: t.data for name, t in module.parameters()})


def load_checkpoint(module: Module, path: str) -> None:
    with np.load(path) as archive:
        for name, t in module.parameters():
            t.data = np.array(archive[name])
