"""Sparse k-order propagation operators.

Two operator families, both applied as operator-times-matrix so the dense
n x n polynomial is never materialized:

* chebyshev: scaled Laplacian recurrence T_0 = I, T_1 = L~,
  T_m = 2 L~ T_{m-1} - T_{m-2}, with L~ = 2(I - D^{-1/2} A D^{-1/2})/lambda_max - I.
* mixhop: powers of the renormalized adjacency
  A^ = D~^{-1/2} (A + I) D~^{-1/2}, D~ = D + I.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from kograph.data import Graph

CHEBYSHEV = "chebyshev"
MIXHOP = "mixhop"


@dataclass(frozen=True)
class PropagationPlan:
    """Immutable propagation operator bound to one graph."""

    kind: str
    k: int
    op: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.op.shape[0]


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """Self-loop renormalized adjacency A^ = D~^{-1/2}(A + I)D~^{-1/2}.

    Isolated nodes get a diagonal entry of exactly 1.
    """
    n = g.n
    deg_tilde = g.degrees() + 1.0
    s = 1.0 / np.sqrt(deg_tilde)
    a_hat = g.adj + sp.identity(n, format="csr")
    return sp.csr_matrix(sp.diags(s) @ a_hat @ sp.diags(s))


def _sym_norm_adj(g: Graph) -> sp.csr_matrix:
    """D^{-1/2} A D^{-1/2} with zero rows for zero-degree nodes."""
    deg = g.degrees()
    s = np.where(deg > 0, deg, 1.0) ** -0.5
    s[deg == 0] = 0.0
    return sp.csr_matrix(sp.diags(s) @ g.adj @ sp.diags(s))


def _laplacian(g: Graph) -> sp.csr_matrix:
    return sp.csr_matrix(sp.identity(g.n, format="csr") - _sym_norm_adj(g))


def _power_iteration_lambda_max(mat: sp.csr_matrix, tol: float = 1e-6,
                                max_iter: int = 1000) -> float:
    """Dominant eigenvalue of a symmetric PSD matrix by power iteration."""
    n = mat.shape[0]
    if n == 0:
        return 0.0
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ (mat @ v))
        if abs(lam_new - lam) <= tol:
            return lam_new
        lam = lam_new
    return lam


def scaled_laplacian(g: Graph, lambda_max: float | str = 2.0) -> sp.csr_matrix:
    """Chebyshev-scaled Laplacian L~ = 2 L / lambda_max - I.

    lambda_max="exact" estimates the largest Laplacian eigenvalue by power
    iteration (tolerance 1e-6, at most 1000 iterations). The default 2.0
    reduces L~ to -D^{-1/2} A D^{-1/2}.
    """
    lap = _laplacian(g)
    if lambda_max == "exact":
        lam = _power_iteration_lambda_max(lap)
        if lam <= 0:
            lam = 2.0
    else:
        lam = float(lambda_max)
    return sp.csr_matrix((2.0 / lam) * lap - sp.identity(g.n, format="csr"))


def build_plan(g: Graph, kind: str, k: int,
               lambda_max: float | str = 2.0) -> PropagationPlan:
    if k < 0:
        raise ValueError("order k must be >= 0")
    if kind == CHEBYSHEV:
        op = scaled_laplacian(g, lambda_max)
    elif kind == MIXHOP:
        op = normalized_adjacency(g)
    else:
        raise ValueError(f"unknown kernel kind: {kind!r}")
    return PropagationPlan(kind=kind, k=k, op=op)


def cheb_propagate(plan: PropagationPlan, X: np.ndarray) -> list[np.ndarray]:
    """[T_0 X, ..., T_k X] via the Chebyshev recurrence."""
    if plan.kind != CHEBYSHEV:
        raise ValueError("plan is not a chebyshev plan")
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != plan.n:
        raise ValueError(f"X has {X.shape[0]} rows, operator expects {plan.n}")
    out = [X]
    if plan.k >= 1:
        out.append(plan.op @ X)
    for _ in range(2, plan.k + 1):
        out.append(2.0 * (plan.op @ out[-1]) - out[-2])
    return out


def mixhop_propagate(plan: PropagationPlan, X: np.ndarray) -> list[np.ndarray]:
    """[A^0 X, ..., A^k X] by repeated sparse products."""
    if plan.kind != MIXHOP:
        raise ValueError("plan is not a mixhop plan")
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != plan.n:
        raise ValueError(f"X has {X.shape[0]} rows, operator expects {plan.n}")
    out = [X]
    for _ in range(plan.k):
        out.append(plan.op @ out[-1])
    return out


def propagate(plan: PropagationPlan, X: np.ndarray) -> list[np.ndarray]:
    if plan.kind == CHEBYSHEV:
        return cheb_propagate(plan, X)
    return mixhop_propagate(plan, X)
