"""Neighborhood-information analysis and data-driven selection of k.

Pipeline: per-channel global Gaussian KDE over all node values; per node
and hop count, entropy of the globally-estimated density restricted to the
k-hop neighborhood values; the gain IG(k) is the channel-averaged KL
divergence between the hop-k and hop-(k-1) entropy distributions; the IG
sequence is fitted as a*exp(-b*k) and the order is the smallest k with
exp(-b*k) <= epsilon.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from kograph.data import Dataset, bfs_distances

DENSITY_FLOOR = 1e-12
KL_GRID_POINTS = 512
DEFAULT_NODE_CAP = 20000

_trapz = getattr(np, "trapezoid", np.trapz)


class FitError(Exception):
    """Curve fitting could not proceed (too few usable points)."""


@dataclass(frozen=True)
class KdeModel:
    """1-D Gaussian kernel density estimate with a hard density floor.

    Samples are compressed to unique values with counts; evaluation is an
    exact kernel sum, chunked to bound memory.
    """

    values: np.ndarray
    counts: np.ndarray
    m: int
    bandwidth: float
    floor: float = DENSITY_FLOOR

    @property
    def degenerate(self) -> bool:
        return len(self.values) == 1

    def pdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.empty_like(x)
        h = self.bandwidth
        norm = 1.0 / (self.m * h * math.sqrt(2.0 * math.pi))
        chunk = max(1, 2_000_000 // max(1, len(self.values)))
        for start in range(0, len(x), chunk):
            xs = x[start:start + chunk, None]
            z = (xs - self.values[None, :]) / h
            out[start:start + chunk] = norm * (np.exp(-0.5 * z * z) @ self.counts)
        return np.maximum(out, self.floor)


def fit_kde(samples) -> KdeModel:
    """Gaussian KDE with Scott's-rule bandwidth sigma * m^(-1/5).

    The bandwidth is floored at 1e-3 * max(1, |mean|); all-identical
    samples fall back to the floor (the caller decides whether such a
    channel is degenerate).
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if len(samples) < 2:
        raise ValueError("KDE needs at least 2 samples")
    sigma = float(np.std(samples, ddof=1))
    floor_bw = 1e-3 * max(1.0, abs(float(np.mean(samples))))
    h = max(sigma * len(samples) ** (-0.2), floor_bw)
    values, counts = np.unique(samples, return_counts=True)
    return KdeModel(values=values, counts=counts.astype(np.float64),
                    m=len(samples), bandwidth=h)


@dataclass(frozen=True)
class EntropyTable:
    """Per-(node, channel, hop) neighborhood entropies in nats.

    H has shape (num_sampled_nodes, d, k_max + 1). Degenerate channels
    (zero variance across the dataset) carry zeros and are flagged.
    """

    H: np.ndarray
    degenerate: np.ndarray
    k_max: int
    node_index: np.ndarray   # (num_sampled_nodes, 2): graph idx, node idx


def local_entropy(ds: Dataset, k_max: int, node_cap: int | None = DEFAULT_NODE_CAP,
                  seed: int = 0) -> EntropyTable:
    """Neighborhood entropy for every sampled node, channel and hop <= k_max.

    For channel c the global density G_c is fitted on the values pooled
    over the whole dataset; the entropy at hop k is that of G_c restricted
    to the value multiset of the k-hop neighborhood and renormalized.
    A seeded subsample of at most node_cap nodes bounds the runtime.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    d = ds.d
    pooled = np.vstack([g.X for g in ds.graphs])
    degenerate = pooled.std(axis=0) == 0.0
    channels = np.flatnonzero(~degenerate)
    kdes = {c: fit_kde(pooled[:, c]) for c in channels}

    all_nodes = np.array(
        [(gi, i) for gi, g in enumerate(ds.graphs) for i in range(g.n)],
        dtype=np.int64,
    )
    if node_cap is not None and len(all_nodes) > node_cap:
        pick = np.random.default_rng(seed).choice(
            len(all_nodes), size=node_cap, replace=False
        )
        all_nodes = all_nodes[np.sort(pick)]

    # Per-graph global densities evaluated at each node's channel values.
    needed = np.unique(all_nodes[:, 0])
    gv: dict[int, np.ndarray] = {}
    for gi in needed:
        g = ds.graphs[gi]
        dens = np.zeros((g.n, len(channels)))
        for ci, c in enumerate(channels):
            dens[:, ci] = kdes[c].pdf(g.X[:, c])
        gv[gi] = dens

    H = np.zeros((len(all_nodes), d, k_max + 1))
    for row, (gi, i) in enumerate(all_nodes):
        g = ds.graphs[gi]
        dist = bfs_distances(g, int(i), k_max=k_max)
        reach = dist >= 0
        order = np.argsort(dist[reach], kind="stable")
        nodes = np.flatnonzero(reach)[order]
        dsort = dist[nodes]
        # Prefix index of the neighborhood at each hop.
        cut = np.searchsorted(dsort, np.arange(k_max + 1), side="right")
        dens = gv[gi][nodes]                       # (|reach|, channels)
        s = np.cumsum(dens, axis=0)
        t = np.cumsum(dens * np.log(dens), axis=0)
        sk = s[cut - 1]                            # (k_max+1, channels)
        tk = t[cut - 1]
        H[row, channels, :] = (np.log(sk) - tk / sk).T
    H = np.maximum(H, 0.0)  # clamp tiny negative round-off on singletons
    return EntropyTable(H=H, degenerate=degenerate, k_max=k_max, node_index=all_nodes)


def kl_divergence_kde(p_samples: np.ndarray, q_samples: np.ndarray,
                      grid_points: int = KL_GRID_POINTS) -> float:
    """KL(P || Q) between Gaussian KDEs on a shared trapezoid grid.

    The grid spans the union support extended by 3 bandwidths; both
    densities are floored at 1e-12 and renormalized on the grid.
    """
    p = fit_kde(p_samples)
    q = fit_kde(q_samples)
    pad = 3.0 * max(p.bandwidth, q.bandwidth)
    lo = min(p.values[0], q.values[0]) - pad
    hi = max(p.values[-1], q.values[-1]) + pad
    grid = np.linspace(lo, hi, grid_points)
    pg = p.pdf(grid)
    qg = q.pdf(grid)
    pg = pg / _trapz(pg, grid)
    qg = qg / _trapz(qg, grid)
    pg = np.maximum(pg, DENSITY_FLOOR)
    qg = np.maximum(qg, DENSITY_FLOOR)
    kl = float(_trapz(pg * (np.log(pg) - np.log(qg)), grid))
    return max(kl, 0.0)


@dataclass(frozen=True)
class IgCurve:
    """Information gain IG(k) for k = 0..k_max, IG(0) = 0 by definition."""

    ig: np.ndarray

    @property
    def k_max(self) -> int:
        return len(self.ig) - 1


def ig_curve(table: EntropyTable, k_max: int | None = None) -> IgCurve:
    """Channel-averaged KL divergence between consecutive hop entropies."""
    if k_max is None:
        k_max = table.k_max
    if k_max > table.k_max:
        raise ValueError("entropy table does not cover the requested k_max")
    channels = np.flatnonzero(~table.degenerate)
    if len(channels) == 0:
        raise ValueError("dataset has constant features")
    ig = np.zeros(k_max + 1)
    for k in range(1, k_max + 1):
        terms = [
            kl_divergence_kde(table.H[:, c, k], table.H[:, c, k - 1])
            for c in channels
        ]
        ig[k] = float(np.mean(terms))
    return IgCurve(ig=ig)


@dataclass(frozen=True)
class ExpFit:
    """Least-squares fit of IG(k) = a * exp(-b * k) in log space.

    r2 and mse are computed on the original (non-log) scale against the
    points used in the fit.
    """

    a: float
    b: float
    r2: float
    mse: float
    k_used: np.ndarray


def fit_exponential(curve: IgCurve, k_range: tuple[int, int] = (2, 10)) -> ExpFit:
    """Fit ln IG(k) = ln a - b k over k in k_range (inclusive)."""
    lo, hi = k_range
    hi = min(hi, curve.k_max)
    ks, ys = [], []
    for k in range(lo, hi + 1):
        v = curve.ig[k]
        if v > 0:
            ks.append(k)
            ys.append(v)
        else:
            warnings.warn(f"IG({k}) <= 0 excluded from exponential fit")
    if len(ks) < 3:
        raise FitError("fewer than 3 positive IG points in the fit range")
    ks = np.array(ks, dtype=np.float64)
    ys = np.array(ys, dtype=np.float64)
    slope, intercept = np.polyfit(ks, np.log(ys), 1)
    a = float(np.exp(intercept))
    b = float(-slope)
    pred = a * np.exp(-b * ks)
    resid = ys - pred
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    mse = float(np.mean(resid ** 2))
    return ExpFit(a=a, b=b, r2=r2, mse=mse, k_used=ks.astype(np.int64))


@dataclass(frozen=True)
class SelectedK:
    k_hat: int
    loss: float


def select_k(fit: ExpFit, epsilon: float) -> SelectedK:
    """Smallest k with exp(-b*k) <= epsilon, i.e. ceil(ln(1/eps)/b).

    The achieved loss exp(-b * k_hat) is returned alongside.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must lie in (0, 1)")
    if fit.b <= 0:
        raise ValueError("decay rate b must be positive")
    raw = math.log(1.0 / epsilon) / fit.b
    k_hat = max(1, math.ceil(raw - 1e-9))
    return SelectedK(k_hat=k_hat, loss=math.exp(-fit.b * k_hat))


def write_ig_csv(curve: IgCurve, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "ig"])
        for k, v in enumerate(curve.ig):
            writer.writerow([k, repr(float(v))])


def write_fit_json(path: str, dataset: str, fit: ExpFit, sel: SelectedK,
                   epsilon: float) -> None:
    payload = {
        "dataset": dataset,
        "a": fit.a,
        "b": fit.b,
        "r2": fit.r2,
        "mse": fit.mse,
        "k_hat": sel.k_hat,
        "epsilon": epsilon,
        "loss_achieved": sel.loss,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_fit_csv(path: str, dataset: str, fit: ExpFit, sel: SelectedK,
                  epsilon: float) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "a", "b", "r2", "mse", "k_hat", "epsilon",
                         "loss_achieved"])
        writer.writerow([dataset, fit.a, fit.b, fit.r2, fit.mse, sel.k_hat,
                         epsilon, sel.loss])
