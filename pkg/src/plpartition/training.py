"""Minibatch training loop with validation-based early stopping.

Examples carry sparse features plus ranking supervision; the loss kind picks
how the supervision is consumed (see ``LOSS_KINDS``).  Training is
deterministic for a fixed seed: shuffles, pair sampling, and initialization
all derive from ``TrainConfig.seed``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import losses, models
from .core import PartitionedPreference
from .optim import make_optimizer
from .quadrature import IntegrationConfig, NonFiniteError

LOSS_KINDS = ("pl-partition", "pl-lb", "attrank", "ranknet", "ranksvm", "pl-topk")

_EMPTY_IDX = np.empty(0, dtype=np.int64)
_EMPTY_VAL = np.empty(0, dtype=np.float64)


@dataclass(frozen=True)
class TrainExample:
    """One training row: sparse features plus ranking supervision.

    Either ``blocks``/``n_items`` describe a partitioned preference directly,
    or ``labels`` holds a relevant-label set whose complement is built lazily
    (the two-block case used for multi-label data).  ``top_order`` carries
    the fully ordered top prefix when it is known.
    """

    n_items: int
    feat_idx: np.ndarray = field(default_factory=lambda: _EMPTY_IDX)
    feat_val: np.ndarray = field(default_factory=lambda: _EMPTY_VAL)
    blocks: tuple[np.ndarray, ...] | None = None
    labels: np.ndarray | None = None
    top_order: np.ndarray | None = None

    @cached_property
    def _pref(self) -> PartitionedPreference:
        if self.blocks is not None:
            return PartitionedPreference(self.blocks, self.n_items)
        if self.labels is None:
            raise ValueError("example carries no ranking supervision")
        return PartitionedPreference.from_top_blocks([self.labels], self.n_items)

    def preference(self) -> PartitionedPreference:
        return self._pref

    def relevant(self) -> np.ndarray:
        if self.labels is not None:
            return self.labels
        return self.blocks[0]


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "pl-partition"
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 20
    patience: int = 3
    valid_fraction: float = 0.25
    optimizer: str = "adam"
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}; pick one of {LOSS_KINDS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 <= self.valid_fraction < 1.0:
            raise ValueError("valid_fraction must lie in [0, 1)")


def example_loss(example: TrainExample, logits: np.ndarray, cfg: TrainConfig,
                 rng_key: tuple = ()) -> losses.LossValueAndGrad:
    """Dispatch one sample's loss on its logits.

    ``rng_key`` seeds the pair sampler for the pairwise surrogates; the other
    losses never touch randomness.
    """
    kind = cfg.loss
    if kind == "pl-partition":
        return losses.pl_partition_loss(example.preference(), logits, cfg.integration)
    if kind == "pl-lb":
        return losses.pl_lb_loss(example.preference(), logits)
    if kind == "attrank":
        return losses.attrank_loss_partitioned(example.preference(), logits)
    if kind in ("ranknet", "ranksvm"):
        pair_rng = np.random.default_rng([cfg.seed, *rng_key])
        pairs = losses.cross_partition_pairs(example.preference(), rng=pair_rng)
        if kind == "ranknet":
            return losses.ranknet_loss(pairs, logits)
        return losses.ranksvm_loss(pairs, logits)
    if example.top_order is None:
        raise ValueError("pl-topk needs examples with an ordered top prefix")
    return losses.pl_topk_loss(example.top_order, logits)


def _mean_loss(examples, index, model, cfg: TrainConfig, rng_tag: int) -> float:
    total = 0.0
    for j in index:
        ex = examples[j]
        logits = model.forward(ex.feat_idx, ex.feat_val)
        total += example_loss(ex, logits, cfg, rng_key=(rng_tag, int(j))).value
    return total / len(index)


def train(examples, model, cfg: TrainConfig):
    """Minibatch-train ``model``; returns (best-validation snapshot, epoch log).

    Stops once the validation loss has not improved for ``cfg.patience``
    epochs and returns the parameters from the best epoch seen.  With
    ``valid_fraction = 0`` the training loss doubles as the stopping signal.
    A non-finite loss or gradient aborts with the offending epoch in the
    error message.
    """
    if not examples:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(examples))
    n_valid = int(len(examples) * cfg.valid_fraction)
    valid_idx, train_idx = order[:n_valid], order[n_valid:]
    if train_idx.size == 0:
        raise ValueError("validation split leaves no training samples")

    best = model.clone()
    best_val = np.inf
    stale = 0
    log: list[dict] = []
    params = model.params()
    optimizer = make_optimizer(cfg.optimizer, params, cfg.lr)
    grads = [np.zeros_like(p) for p in params]

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(train_idx)
        train_loss = 0.0
        for start in range(0, perm.size, cfg.batch_size):
            batch = perm[start:start + cfg.batch_size]
            for g in grads:
                g[...] = 0.0
            for j in batch:
                ex = examples[int(j)]
                logits = model.forward(ex.feat_idx, ex.feat_val)
                if not np.all(np.isfinite(logits)):
                    raise NonFiniteError(f"non-finite logits in epoch {epoch}")
                lv = example_loss(ex, logits, cfg, rng_key=(epoch + 1, int(j)))
                if not np.isfinite(lv.value) or not np.all(np.isfinite(lv.grad)):
                    raise NonFiniteError(f"non-finite loss in epoch {epoch}")
                train_loss += lv.value
                models.accumulate_backward(model, ex.feat_idx, ex.feat_val,
                                           lv.grad / batch.size, grads)
            optimizer.step(params, grads)
        train_loss /= perm.size
        valid_loss = (_mean_loss(examples, valid_idx, model, cfg, rng_tag=0)
                      if valid_idx.size else train_loss)
        log.append({"epoch": epoch, "train_loss": train_loss, "valid_loss": valid_loss})
        if valid_loss < best_val:
            best_val = valid_loss
            best = model.clone()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best, log


def time_loss_steps(n_items: int, loss: str = "pl-partition", n_steps: int = 1000,
                    batch_size: int = 20, top_sizes: tuple[int, ...] = (8, 8, 8),
                    intervals: int = 2000, lr: float = 0.1, seed: int = 0) -> float:
    """Wall-clock seconds for ``n_steps`` optimizer steps on synthetic data.

    Mirrors the scaling benchmark: stateless free-parameter model, fixed
    top-block sizes (so the top-block work stays constant while n_items
    grows), AdaGrad updates.
    """
    import time

    from .datagen import SimConfig, generate_dataset

    cfg = SimConfig(n_items=n_items, n_samples=max(256, batch_size),
                    n_partitions=len(top_sizes) + 1,
                    top_cap=sum(top_sizes), seed=seed)
    _, pool = generate_dataset(cfg, fixed_top_sizes=top_sizes)
    model = models.FreeParamModel(n_items)
    tcfg = TrainConfig(loss=loss, lr=lr, batch_size=batch_size, optimizer="adagrad",
                       integration=IntegrationConfig(intervals=intervals), seed=seed)
    params = model.params()
    optimizer = make_optimizer("adagrad", params, lr)
    grads = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    for step in range(n_steps):
        take = rng.integers(0, len(pool), size=batch_size)
        for g in grads:
            g[...] = 0.0
        for j in take:
            ex = pool[int(j)]
            logits = model.forward(ex.feat_idx, ex.feat_val)
            lv = example_loss(ex, logits, tcfg, rng_key=(step, int(j)))
            models.accumulate_backward(model, ex.feat_idx, ex.feat_val,
                                       lv.grad / batch_size, grads)
        optimizer.step(params, grads)
    return time.perf_counter() - start
