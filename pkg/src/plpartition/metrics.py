"""Ranking metrics: P@k, nDCG@k, and their propensity-scored variants.

Top-k selection breaks score ties by ascending item id, so every metric is
deterministic.  Plain metrics are averaged per sample; the propensity-scored
ones return (raw, ideal) pairs and are aggregated corpus-level as
``sum(raw) / sum(ideal)``, the convention the public multi-label leaderboards
use.  Propensities follow the standard frequency model

    p_l = 1 / (1 + C (n_l + B)^{-A}),  C = (log n - 1) (B + 1)^A,

with n the number of training samples and n_l the label frequency.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset


@dataclass(frozen=True)
class PropensityWeights:
    values: np.ndarray  # per-label propensity in (0, 1]
    a: float
    b: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if np.any(v <= 0.0) or np.any(v > 1.0):
            raise ValueError("propensities must lie in (0, 1]")
        object.__setattr__(self, "values", v)


def estimate_propensities(train: Dataset, a: float = 0.55, b: float = 1.5) -> PropensityWeights:
    """Frequency-based propensity estimates from a training split."""
    n = max(len(train.samples), 2)
    c = (np.log(n) - 1.0) * (b + 1.0) ** a
    p = 1.0 / (1.0 + c * (train.label_counts + b) ** (-a))
    return PropensityWeights(values=p, a=a, b=b)


def rank_items(scores: np.ndarray) -> np.ndarray:
    """Item ids best-first, ties broken by ascending id."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def _relevance_mask(relevant, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(relevant, dtype=np.int64)] = True
    return mask


def precision_at_k(scores, relevant, k: int) -> float:
    """|top-k intersect relevant| / k."""
    top = rank_items(scores)[:k]
    mask = _relevance_mask(relevant, len(scores))
    return float(mask[top].sum()) / k


_LOG2 = np.log(2.0)


def _discounts(k: int) -> np.ndarray:
    return _LOG2 / np.log(np.arange(2, k + 2, dtype=np.float64))  # 1/log2(1+rank)


def ndcg_at_k(scores, relevant, k: int) -> float:
    """Binary-gain DCG@k over the ideal DCG of min(k, |relevant|) hits."""
    rel = np.asarray(relevant, dtype=np.int64)
    if rel.size == 0:
        return 0.0
    top = rank_items(scores)[:k]
    mask = _relevance_mask(relevant, len(scores))
    disc = _discounts(len(top))
    dcg = float(disc[mask[top]].sum())
    ideal = float(_discounts(min(k, rel.size)).sum())
    return dcg / ideal


def ps_precision_at_k(scores, relevant, k: int, prop: PropensityWeights):
    """(raw, ideal) inverse-propensity precision sums for corpus aggregation.

    raw   = sum over relevant hits in the top k of 1/p_l, divided by k;
    ideal = the same with the relevant labels of largest 1/p_l placed first.
    """
    rel = np.asarray(relevant, dtype=np.int64)
    top = rank_items(scores)[:k]
    mask = _relevance_mask(relevant, len(scores))
    inv = 1.0 / prop.values
    raw = float(inv[top[mask[top]]].sum()) / k
    best = np.sort(inv[rel])[::-1][:k]
    ideal = float(best.sum()) / k
    return raw, ideal


def ps_ndcg_at_k(scores, relevant, k: int, prop: PropensityWeights):
    """(raw, ideal) inverse-propensity DCG sums for corpus aggregation."""
    rel = np.asarray(relevant, dtype=np.int64)
    top = rank_items(scores)[:k]
    mask = _relevance_mask(relevant, len(scores))
    inv = 1.0 / prop.values
    disc = _discounts(len(top))
    hits = mask[top]
    raw = float((inv[top[hits]] * disc[hits]).sum())
    best = np.sort(inv[rel])[::-1][:min(k, rel.size)]
    ideal = float((best * _discounts(best.size)).sum())
    return raw, ideal


def corpus_metrics(score_rows, relevant_rows, ks=(1, 3, 5, 10),
                   prop: PropensityWeights | None = None) -> dict:
    """Aggregate metrics over a corpus of (scores, relevant-set) rows.

    Returns ``{"P@1": ..., "nDCG@1": ..., "PSP@1": ..., "PSnDCG@1": ...}``;
    propensity-scored entries appear only when ``prop`` is given.  Samples
    with no relevant labels are skipped.
    """
    sums = {f"{name}@{k}": 0.0 for k in ks for name in ("P", "nDCG")}
    ps_raw = {f"{name}@{k}": 0.0 for k in ks for name in ("PSP", "PSnDCG")}
    ps_ideal = dict(ps_raw)
    count = 0
    for scores, relevant in zip(score_rows, relevant_rows):
        relevant = np.asarray(relevant, dtype=np.int64)
        if relevant.size == 0:
            continue
        count += 1
        for k in ks:
            sums[f"P@{k}"] += precision_at_k(scores, relevant, k)
            sums[f"nDCG@{k}"] += ndcg_at_k(scores, relevant, k)
            if prop is not None:
                raw, ideal = ps_precision_at_k(scores, relevant, k, prop)
                ps_raw[f"PSP@{k}"] += raw
                ps_ideal[f"PSP@{k}"] += ideal
                raw, ideal = ps_ndcg_at_k(scores, relevant, k, prop)
                ps_raw[f"PSnDCG@{k}"] += raw
                ps_ideal[f"PSnDCG@{k}"] += ideal
    if count == 0:
        raise ValueError("no sample carries relevant labels")
    out = {key: value / count for key, value in sums.items()}
    if prop is not None:
        for key in ps_raw:
            out[key] = ps_raw[key] / ps_ideal[key] if ps_ideal[key] > 0 else 0.0
    return out


def write_metrics_csv(metrics: dict, path) -> None:
    """Rows of ``metric,k,value``."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "k", "value"])
        for key in sorted(metrics):
            name, _, k = key.partition("@")
            writer.writerow([name, k, repr(metrics[key])])


def write_metrics_json(metrics: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(metrics, handle, indent=2, sort_keys=True)
        handle.write("\n")
