"""Minimal reverse-mode automatic differentiation over numpy arrays.

The op set is exactly what the network needs: dense matmul, sparse
operator application (operator held constant), elementwise add/mul with
broadcasting, scalar scaling, ReLU, row L2 normalization, concatenation,
row gather, segment mean/max, dropout and softmax cross-entropy. Every
forward result is checked for NaN/Inf and aborts naming the op.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class NanError(FloatingPointError):
    """A forward op produced a non-finite value."""

    def __init__(self, op: str):
        super().__init__(f"non-finite values produced by op '{op}'")
        self.op = op


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NanError(op)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node in the computation tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, parents=(),
                 backward=None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Reverse sweep from this node; accumulates into .grad fields."""
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed requires a scalar")
            seed = np.ones_like(self.data)
        self._accumulate(np.asarray(seed, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _make(data, parents, backward, op) -> Tensor:
    out = Tensor(_check_finite(np.asarray(data, dtype=np.float64), op),
                 parents=parents, op=op)
    if out.requires_grad:
        out._backward = backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))
    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(-_unbroadcast(g, b.shape))
    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with numpy broadcasting (channel scales etc.)."""
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), bw, "mul")


def smul(a: Tensor, s: float) -> Tensor:
    def bw(g):
        if a.requires_grad:
            a._accumulate(g * s)
    return _make(a.data * s, (a,), bw, "smul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Dense matmul for 2-D operands (column vectors as (d, 1))."""
    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)
    return _make(a.data @ b.data, (a, b), bw, "matmul")


def spmm(op_matrix: sp.csr_matrix, x: Tensor) -> Tensor:
    """Sparse operator times dense features; the operator is a constant."""
    op_t = op_matrix.T.tocsr()

    def bw(g):
        if x.requires_grad:
            x._accumulate(op_t @ g)
    return _make(op_matrix @ x.data, (x,), bw, "spmm")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * mask)
    return _make(np.where(mask, a.data, 0.0), (a,), bw, "relu")


def row_normalize(a: Tensor, floor: float = 1e-12) -> Tensor:
    """Rows scaled to unit L2 norm, with the norm floored at `floor`."""
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    denom = np.maximum(norms, floor)
    y = a.data / denom
    active = norms > floor

    def bw(g):
        if a.requires_grad:
            inner = np.sum(g * a.data, axis=1, keepdims=True)
            grad = g / denom - np.where(active, a.data * inner / denom ** 3, 0.0)
            a._accumulate(grad)
    return _make(y, (a,), bw, "row_normalize")


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)
    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), bw, "concat")


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        if a.requires_grad:
            grad = np.zeros_like(a.data)
            np.add.at(grad, idx, g)
            a._accumulate(grad)
    return _make(a.data[idx], (a,), bw, "gather_rows")


def _segment_bounds(seg: np.ndarray, num: int) -> np.ndarray:
    # seg must be sorted ascending; bounds[s]:bounds[s+1] is segment s.
    return np.searchsorted(seg, np.arange(num + 1))


def segment_mean(a: Tensor, seg: np.ndarray, num: int) -> Tensor:
    seg = np.asarray(seg, dtype=np.int64)
    counts = np.bincount(seg, minlength=num).astype(np.float64)
    safe = np.maximum(counts, 1.0)
    out = np.zeros((num, a.data.shape[1]))
    np.add.at(out, seg, a.data)
    out /= safe[:, None]

    def bw(g):
        if a.requires_grad:
            a._accumulate(g[seg] / safe[seg, None])
    return _make(out, (a,), bw, "segment_mean")


def segment_max(a: Tensor, seg: np.ndarray, num: int) -> Tensor:
    """Per-segment columnwise max; rows must be grouped by ascending seg.

    Subgradient: the first row attaining the max in each segment receives
    the full gradient.
    """
    seg = np.asarray(seg, dtype=np.int64)
    bounds = _segment_bounds(seg, num)
    out = np.full((num, a.data.shape[1]), -np.inf)
    winners = np.zeros((num, a.data.shape[1]), dtype=np.int64)
    for s in range(num):
        lo, hi = bounds[s], bounds[s + 1]
        if lo == hi:
            out[s] = 0.0
            continue
        block = a.data[lo:hi]
        arg = block.argmax(axis=0)
        winners[s] = lo + arg
        out[s] = block[arg, np.arange(block.shape[1])]

    def bw(g):
        if a.requires_grad:
            grad = np.zeros_like(a.data)
            cols = np.arange(a.data.shape[1])
            for s in range(num):
                if bounds[s] != bounds[s + 1]:
                    np.add.at(grad, (winners[s], cols), g[s])
            a._accumulate(grad)
    return _make(out, (a,), bw, "segment_max")


def dropout(a: Tensor, rate: float, rng: np.random.Generator,
            training: bool) -> Tensor:
    if not training or rate <= 0.0:
        return a
    keep = 1.0 - rate
    mask = (rng.random(a.data.shape) < keep) / keep

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * mask)
    return _make(a.data * mask, (a,), bw, "dropout")


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over rows; labels are int class ids."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=1, keepdims=True)
    n = len(labels)
    nll = -np.log(np.maximum(probs[np.arange(n), labels], 1e-300))
    loss = nll.mean()

    def bw(g):
        if logits.requires_grad:
            grad = probs.copy()
            grad[np.arange(n), labels] -= 1.0
            logits._accumulate(grad * (float(g) / n))
    return _make(loss, (logits,), bw, "softmax_cross_entropy")


def ssum(a: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    def bw(g):
        if a.requires_grad:
            a._accumulate(np.full(a.data.shape, float(g)))
    return _make(a.data.sum(), (a,), bw, "ssum")


def tsum(tensors: list[Tensor]) -> Tensor:
    """Sum a nonempty list of same-shape tensors."""
    out = tensors[0]
    for t in tensors[1:]:
        out = add(out, t)
    return out
