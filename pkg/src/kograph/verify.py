"""Self-contained oracle checks runnable from the CLI.

Each check is independent of the code path it validates: dense matrix
polynomials for the sparse kernels, central finite differences for the
gradients, hand arithmetic for pooling counts and entropies.
"""

from __future__ import annotations

import math

import numpy as np

from kograph import autodiff as ad
from kograph.data import build_batch
from kograph.kernels import CHEBYSHEV, MIXHOP, build_plan, propagate
from kograph.nn import KPool, LiConv
from kograph.testing import dense_chebyshev_stack, numeric_gradient, random_graph


def check_kernels_vs_dense(trials: int = 25, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        n = int(rng.integers(2, 13))
        g = random_graph(rng, n, p=0.4)
        X = rng.standard_normal((n, 3))
        k = int(rng.integers(1, 6))
        cheb = build_plan(g, CHEBYSHEV, k)
        dense = dense_chebyshev_stack(cheb.op.toarray(), k)
        for m, out in enumerate(propagate(cheb, X)):
            ref = dense[m] @ X
            err = np.abs(out - ref).max() / max(1.0, np.abs(ref).max())
            assert err <= 1e-10, f"chebyshev hop {m} rel err {err}"
        mix = build_plan(g, MIXHOP, k)
        dense_a = mix.op.toarray()
        acc = np.eye(n)
        for m, out in enumerate(propagate(mix, X)):
            ref = acc @ X
            err = np.abs(out - ref).max() / max(1.0, np.abs(ref).max())
            assert err <= 1e-10, f"mixhop hop {m} rel err {err}"
            acc = dense_a @ acc


def check_gradients(seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 6, p=0.5, ensure_edge=True)
    batch = build_batch([g, g])
    cfg_k, d_out = 2, 3
    conv = LiConv(g.d, d_out, cfg_k, rng)
    pool = KPool(cfg_k, d_out, rng, rho_v=0.7, rho_e=0.8)
    labels = np.array([0, 1])

    def loss_fn() -> ad.Tensor:
        plan = build_plan(batch.union, CHEBYSHEV, cfg_k)
        X = ad.constant(batch.union.X)
        Z, out = conv.forward(plan, X)
        res = pool.forward(batch, Z, out, X.data)
        mean = ad.segment_mean(res.X_out, res.batch.graph_id, 2)
        mx = ad.segment_max(res.X_out, res.batch.graph_id, 2)
        h = ad.concat([mean, mx], axis=1)
        return ad.softmax_cross_entropy(h, labels)

    params = conv.parameters() + pool.parameters()
    loss = loss_fn()
    for _, p in params:
        p.zero_grad()
    loss.backward()
    for name, p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(lambda: float(loss_fn().data), p)
        scale = max(1.0, np.abs(numeric).max())
        err = np.abs(analytic - numeric).max() / scale
        assert err <= 1e-4, f"gradient mismatch for {name}: rel err {err}"


def check_pool_keep_counts(seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(10):
        sizes = rng.integers(1, 9, size=3)
        graphs = [random_graph(rng, int(n), p=0.5) for n in sizes]
        batch = build_batch(graphs)
        conv = LiConv(graphs[0].d, 4, 2, rng)
        rho_v = float(rng.uniform(0.2, 1.0))
        pool = KPool(2, 4, rng, rho_v=rho_v, rho_e=0.5)
        plan = build_plan(batch.union, CHEBYSHEV, 2)
        X = ad.constant(batch.union.X)
        Z, out = conv.forward(plan, X)
        res = pool.forward(batch, Z, out, X.data)
        expected = np.array([math.ceil(rho_v * n) for n in sizes])
        assert np.array_equal(res.kept_per_graph, expected), \
            f"keep counts {res.kept_per_graph} != {expected}"
        assert np.all(res.kept_per_graph >= 1)


def check_entropy_trivia() -> None:
    # Uniform density over 4 neighborhood values -> entropy ln 4.
    dens = np.full(4, 0.3)
    L = dens / dens.sum()
    H = -(L * np.log(L)).sum()
    assert abs(H - math.log(4)) < 1e-12
    # Singleton neighborhood -> zero entropy.
    L1 = np.array([1.0])
    assert abs(-(L1 * np.log(L1)).sum()) < 1e-12
    # Identical edge endpoints -> edge score exp(0) = 1.
    assert math.exp(np.linalg.norm(np.zeros(3))) == 1.0


CHECKS = {
    "kernels_vs_dense": check_kernels_vs_dense,
    "gradients": check_gradients,
    "pool_keep_counts": check_pool_keep_counts,
    "entropy_trivia": check_entropy_trivia,
}


def run_all_checks(verbose: bool = False) -> list[str]:
    """Run every check; returns the names of the failures."""
    failures = []
    for name, fn in CHECKS.items():
        try:
            fn()
            if verbose:
                print(f"PASS {name}")
        except AssertionError as exc:
            failures.append(name)
            if verbose:
                print(f"FAIL {name}: {exc}")
    return failures
