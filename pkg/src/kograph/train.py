"""Network assembly and the multi-seed experiment protocol.

A model is `layers` blocks of [LiConv -> ReLU -> KPool], readout after
every block summed into one graph embedding, and an MLP head. Experiments
run an 80/10/10 reshuffle per seed with early stopping on validation
accuracy and report mean/std test accuracy over seeds.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from kograph import autodiff as ad
from kograph.data import Batch, Dataset, build_batch, split_dataset
from kograph.kernels import CHEBYSHEV, MIXHOP, build_plan
from kograph.nn import Adam, Classifier, KPool, LiConv, Module, param_count, readout

# Per-dataset keep ratios (node, edge) for the six benchmark corpora.
DATASET_RHO = {
    "PROTEINS": (0.6, 0.8),
    "DD": (0.8, 0.7),
    "NCI1": (0.9, 0.9),
    "NCI109": (0.9, 0.4),
    "Mutagenicity": (0.9, 0.7),
    "FRANKENSTEIN": (0.9, 0.6),
}


@dataclass
class TrainConfig:
    dataset: str = ""
    conv: str = "licheb"           # licheb | limixhop
    k: int = 2
    layers: int = 5
    hidden: int = 128
    batch_size: int = 256
    lr: float = 0.001
    rho_v: float | None = None     # None -> per-dataset default, else 0.8
    rho_e: float | None = None
    nf: bool = True
    pn: bool = True
    pe: bool = True
    max_epochs: int = 500
    patience: int = 30
    seeds: list[int] = field(default_factory=lambda: list(range(10)))

    def __post_init__(self):
        if self.conv not in ("licheb", "limixhop"):
            raise ValueError(f"unknown conv kind: {self.conv!r}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.rho_v is None:
            self.rho_v = DATASET_RHO.get(self.dataset, (0.8, 0.8))[0]
        if self.rho_e is None:
            self.rho_e = DATASET_RHO.get(self.dataset, (0.8, 0.8))[1]

    @property
    def kernel(self) -> str:
        return CHEBYSHEV if self.conv == "licheb" else MIXHOP

    @property
    def pooling_enabled(self) -> bool:
        return self.pn or self.pe


class GraphClassifier(Module):
    """Stacked LiConv(+KPool) blocks with summed readouts and an MLP head."""

    def __init__(self, cfg: TrainConfig, d: int, num_classes: int, seed: int):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.convs: list[LiConv] = []
        self.pools: list[KPool] = []
        for layer in range(cfg.layers):
            d_in = d if layer == 0 else cfg.hidden
            self.convs.append(LiConv(d_in, cfg.hidden, cfg.k, rng))
            if cfg.pooling_enabled:
                self.pools.append(KPool(cfg.k, cfg.hidden, rng,
                                        rho_v=cfg.rho_v, rho_e=cfg.rho_e,
                                        nf=cfg.nf, pn=cfg.pn, pe=cfg.pe))
        self.head = Classifier(cfg.hidden, num_classes, rng)
        self._dropout_rng = np.random.default_rng(seed + 1)
        self.pool_stats: list[tuple[np.ndarray, np.ndarray]] = []

    def forward(self, batch: Batch, training: bool = False) -> ad.Tensor:
        cfg = self.cfg
        X = ad.constant(batch.union.X)
        cur = batch
        summed = None
        self.pool_stats = []
        for layer in range(cfg.layers):
            plan = build_plan(cur.union, cfg.kernel, cfg.k)
            Z, conv_out = self.convs[layer].forward(plan, X)
            if cfg.pooling_enabled:
                res = self.pools[layer].forward(cur, Z, conv_out, X.data)
                self.pool_stats.append((res.kept_per_graph, res.target_per_graph))
                cur = res.batch
                feats = res.X_out
            else:
                feats = conv_out
            r = readout(cur, feats)
            summed = r if summed is None else ad.add(summed, r)
            X = ad.relu(feats)
        return self.head.forward(summed, training, self._dropout_rng)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.parameters()}

    def restore(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.parameters():
            t.data = state[name].copy()


def build_model(cfg: TrainConfig, d: int, num_classes: int,
                seed: int = 0) -> GraphClassifier:
    return GraphClassifier(cfg, d, num_classes, seed)


class EarlyStopper:
    """Stops after `patience` epochs without validation-accuracy improvement.

    Ties on accuracy are broken by lower validation loss.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best_acc = -np.inf
        self.best_loss = np.inf
        self.best_epoch = -1
        self.stale = 0

    def update(self, epoch: int, acc: float, loss: float = np.inf) -> bool:
        improved = acc > self.best_acc or (acc == self.best_acc and loss < self.best_loss)
        if improved:
            self.best_acc = acc
            self.best_loss = loss
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return improved

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def _batches(ds: Dataset, idx: np.ndarray, batch_size: int):
    for start in range(0, len(idx), batch_size):
        chunk = idx[start:start + batch_size]
        yield chunk, build_batch([ds.graphs[i] for i in chunk])


def evaluate(model: GraphClassifier, idx, ds: Dataset,
             batch_size: int = 256) -> float:
    """Argmax accuracy on the indexed subset, dropout off."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("cannot evaluate on an empty index list")
    correct = 0
    for chunk, batch in _batches(ds, idx, batch_size):
        logits = model.forward(batch, training=False)
        pred = logits.data.argmax(axis=1)
        labels = np.array([ds.graphs[i].y for i in chunk])
        correct += int((pred == labels).sum())
    return correct / len(idx)


def _eval_loss(model: GraphClassifier, idx, ds: Dataset,
               batch_size: int = 256) -> float:
    total, count = 0.0, 0
    for chunk, batch in _batches(ds, idx, batch_size):
        logits = model.forward(batch, training=False)
        labels = np.array([ds.graphs[i].y for i in chunk])
        loss = ad.softmax_cross_entropy(logits, labels)
        total += float(loss.data) * len(chunk)
        count += len(chunk)
    return total / count


@dataclass
class SeedResult:
    seed: int
    test_accuracy: float
    epochs: int
    best_epoch: int
    failed: bool = False


@dataclass
class RunReport:
    dataset: str
    config: dict
    per_seed: list[dict]
    mean: float
    std: float
    params: int
    seconds_per_epoch: float
    total_seconds: float
    load_seconds: float = 0.0
    failed_seeds: list[int] = field(default_factory=list)

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dataset", "conv", "k", "mean_acc", "std_acc",
                             "params", "seconds_per_epoch", "total_seconds"])
            writer.writerow([self.dataset, self.config.get("conv"),
                             self.config.get("k"), self.mean, self.std,
                             self.params, self.seconds_per_epoch,
                             self.total_seconds])


def train_one_seed(cfg: TrainConfig, ds: Dataset, seed: int,
                   check_pool_invariants: bool = False) -> SeedResult:
    """Train with early stopping, restore the best-validation checkpoint."""
    train_idx, val_idx, test_idx = split_dataset(ds, seed)
    model = build_model(cfg, ds.d, ds.num_classes, seed=seed)
    opt = Adam(model.parameters(), lr=cfg.lr)
    shuffle_rng = np.random.default_rng(seed + 10_000)
    stopper = EarlyStopper(cfg.patience)
    best_state = model.snapshot()
    epochs_run = 0
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            epochs_run = epoch
            order = shuffle_rng.permutation(train_idx)
            for chunk, batch in _batches(ds, order, cfg.batch_size):
                logits = model.forward(batch, training=True)
                labels = np.array([ds.graphs[i].y for i in chunk])
                loss = ad.softmax_cross_entropy(logits, labels)
                opt.zero_grad()
                loss.backward()
                opt.step()
                if check_pool_invariants:
                    for kept, target in model.pool_stats:
                        if cfg.pn and not np.array_equal(kept, target):
                            raise AssertionError("pool keep-count invariant violated")
                        if np.any(kept < 1):
                            raise AssertionError("pooling emptied a member graph")
            val_acc = evaluate(model, val_idx, ds, cfg.batch_size)
            val_loss = _eval_loss(model, val_idx, ds, cfg.batch_size)
            if stopper.update(epoch, val_acc, val_loss):
                best_state = model.snapshot()
            if stopper.should_stop:
                break
    except ad.NanError:
        return SeedResult(seed=seed, test_accuracy=float("nan"),
                          epochs=epochs_run, best_epoch=stopper.best_epoch,
                          failed=True)
    model.restore(best_state)
    test_acc = evaluate(model, test_idx, ds, cfg.batch_size)
    return SeedResult(seed=seed, test_accuracy=test_acc, epochs=epochs_run,
                      best_epoch=stopper.best_epoch)


def run_experiment(cfg: TrainConfig, ds: Dataset,
                   check_pool_invariants: bool = False) -> RunReport:
    """One reshuffled split and training run per seed; aggregate stats."""
    t0 = time.perf_counter()
    results = [
        train_one_seed(cfg, ds, seed, check_pool_invariants=check_pool_invariants)
        for seed in cfg.seeds
    ]
    total = time.perf_counter() - t0
    ok = [r for r in results if not r.failed]
    accs = np.array([r.test_accuracy for r in ok])
    model = build_model(cfg, ds.d, ds.num_classes, seed=cfg.seeds[0])
    total_params, _ = param_count(model)
    epochs = sum(r.epochs for r in results)
    return RunReport(
        dataset=ds.name or cfg.dataset,
        config={k: v for k, v in asdict(cfg).items()},
        per_seed=[asdict(r) for r in results],
        mean=float(accs.mean()) if len(accs) else float("nan"),
        std=float(accs.std()) if len(accs) else float("nan"),
        params=total_params,
        seconds_per_epoch=total / max(1, epochs),
        total_seconds=total,
        failed_seeds=[r.seed for r in results if r.failed],
    )


def majority_class_accuracy(ds: Dataset, idx=None) -> float:
    """Accuracy of always predicting the most frequent label."""
    labels = ds.labels() if idx is None else ds.labels()[np.asarray(idx)]
    counts = np.bincount(labels, minlength=ds.num_classes)
    return counts.max() / counts.sum()
