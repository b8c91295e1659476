"""Synthetic partitioned-preference data drawn from a known PL model.

The generator draws a ground-truth probability simplex, samples full
rankings from the PL model it defines, then slices each ranking into M
ordered blocks at random cut points among the top positions (capped so the
top M-1 blocks stay small regardless of the item count) and discards the
order inside each block.  The fully ordered prefix is kept alongside, for
objectives that are allowed to see it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import sample_pl
from .data import Dataset, SparseSample
from .training import TrainExample


@dataclass(frozen=True)
class SimConfig:
    n_items: int
    n_samples: int
    n_partitions: int = 4
    top_cap: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n_partitions < 2 or self.n_items < self.n_partitions:
            raise ValueError("need n_items >= n_partitions >= 2")
        if self.top_cap < self.n_partitions - 1:
            raise ValueError("top_cap must allow one item per top block")


def ground_truth_simplex(n_items: int, rng: np.random.Generator) -> np.ndarray:
    """softmax(q) with q_i ~ uniform(0, log n_items); entries sum to one."""
    if n_items < 2:
        raise ValueError("need at least two items")
    q = rng.uniform(0.0, np.log(n_items), size=n_items)
    q -= q.max()
    p = np.exp(q)
    return p / p.sum()


def _cut_points(cfg: SimConfig, rng: np.random.Generator,
                fixed_top_sizes=None) -> np.ndarray:
    if fixed_top_sizes is not None:
        return np.cumsum(np.asarray(fixed_top_sizes, dtype=np.int64))
    hi = min(cfg.n_items - 1, cfg.top_cap)
    cuts = rng.choice(np.arange(1, hi + 1), size=cfg.n_partitions - 1, replace=False)
    return np.sort(cuts)


def generate_partitioned_sample(p: np.ndarray, cfg: SimConfig,
                                rng: np.random.Generator,
                                fixed_top_sizes=None) -> TrainExample:
    """One stateless sample: blocks of a PL ranking plus its ordered prefix."""
    ranking = sample_pl(np.log(p), rng)
    cuts = _cut_points(cfg, rng, fixed_top_sizes)
    bounds = np.concatenate([[0], cuts, [cfg.n_items]])
    blocks = tuple(ranking[bounds[k]:bounds[k + 1]] for k in range(len(bounds) - 1))
    return TrainExample(n_items=cfg.n_items, blocks=blocks,
                        top_order=ranking[:cuts[-1]].copy())


def generate_dataset(cfg: SimConfig, fixed_top_sizes=None):
    """Ground-truth simplex plus cfg.n_samples partitioned samples."""
    rng = np.random.default_rng(cfg.seed)
    p = ground_truth_simplex(cfg.n_items, rng)
    samples = [generate_partitioned_sample(p, cfg, rng, fixed_top_sizes)
               for _ in range(cfg.n_samples)]
    return p, samples


def mse_vs_truth(theta, p) -> float:
    """Mean squared error between softmax(theta) and the true simplex."""
    theta = np.asarray(theta, dtype=np.float64)
    z = theta - theta.max()
    est = np.exp(z)
    est /= est.sum()
    return float(np.mean((est - np.asarray(p, dtype=np.float64)) ** 2))


def to_xmlc_dataset(samples: list[TrainExample], n_items: int) -> Dataset:
    """Two-level projection of simulated samples in the sparse text schema.

    Labels are the union of the top blocks (everything ranked above the tail)
    and, the samples being stateless, features collapse to one constant
    column.  This keeps simulated files consumable by the train/evaluate
    pipeline; the block structure itself lives only in memory.
    """
    rows = []
    counts = np.zeros(n_items, dtype=np.int64)
    for ex in samples:
        labels = np.sort(np.concatenate(ex.blocks[:-1]))
        counts[labels] += 1
        rows.append(SparseSample(feat_idx=np.array([0], dtype=np.int64),
                                 feat_val=np.array([1.0]), labels=labels))
    return Dataset(samples=rows, n_features=1, n_labels=n_items, label_counts=counts)


def make_bundled_dataset(n_samples: int = 100, n_topics: int = 10,
                         labels_per_topic: int = 5, n_features: int = 32,
                         seed: int = 7) -> Dataset:
    """Small learnable multi-label dataset in the sparse text schema.

    Labels are grouped into topics; each sample activates the feature
    signature of one topic (plus a noise feature) and tags a random subset of
    that topic's labels.  A trained scorer should therefore concentrate its
    top ranks on the right topic, while an untrained one scores near the
    label-density baseline.
    """
    rng = np.random.default_rng(seed)
    n_labels = n_topics * labels_per_topic
    rows = []
    counts = np.zeros(n_labels, dtype=np.int64)
    for _ in range(n_samples):
        topic = int(rng.integers(n_topics))
        sig = np.arange(3 * topic, 3 * topic + 3) % (n_features - 1)
        noise_feat = n_features - 1
        idx = np.unique(np.concatenate([sig, [noise_feat]]))
        val = np.where(idx == noise_feat, rng.uniform(0.0, 0.3),
                       rng.uniform(0.8, 1.2, size=idx.size))
        k = int(rng.integers(2, labels_per_topic + 1))
        labels = np.sort(rng.choice(np.arange(topic * labels_per_topic,
                                              (topic + 1) * labels_per_topic),
                                    size=k, replace=False))
        counts[labels] += 1
        rows.append(SparseSample(feat_idx=idx.astype(np.int64),
                                 feat_val=val.astype(np.float64),
                                 labels=labels.astype(np.int64)))
    return Dataset(samples=rows, n_features=n_features, n_labels=n_labels,
                   label_counts=counts)
