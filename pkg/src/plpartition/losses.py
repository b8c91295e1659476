"""Training objectives over per-sample logits, each with an analytic gradient.

All losses return a :class:`LossValueAndGrad` holding a scalar to minimize
and its gradient w.r.t. the logits.  The listwise objectives depend on the
logits only through differences, so every gradient sums to zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np
from scipy.special import logsumexp

from .core import PartitionedPreference, validate_scores
from .quadrature import IntegrationConfig, log_likelihood_and_grad


class EmptyRelevantSetError(ValueError):
    pass


class EmptyPairSetError(ValueError):
    pass


@dataclass(frozen=True)
class LossValueAndGrad:
    value: float
    grad: np.ndarray


def pl_partition_loss(pref: PartitionedPreference, w,
                      cfg: IntegrationConfig = IntegrationConfig()) -> LossValueAndGrad:
    """Negative quadrature log-likelihood of the partitioned preference.

    Logits are clipped to ±cfg.logit_clip inside the integrator; the clip is
    applied straight-through: the gradient passes unchanged inside the band
    and is zeroed outside it.
    """
    w = validate_scores(w, pref.n_items)
    ll, grad = log_likelihood_and_grad(pref, w, cfg)
    grad = -grad
    grad[np.abs(w) > cfg.logit_clip] = 0.0
    return LossValueAndGrad(value=-ll, grad=grad)


def pl_lb_loss(pref: PartitionedPreference, w) -> LossValueAndGrad:
    """Negative log of the tractable per-block softmax lower bound.

    Each block factor P(S_m > R_{m+1}) is replaced by
    ``n_m! * prod_{i in S_m} softmax_i(w over S_m u R_{m+1})``; because the
    replacement lower-bounds the probability, this loss upper-bounds the
    partitioned-preference loss on every instance.
    """
    w = validate_scores(w, pref.n_items)
    value = 0.0
    grad = np.zeros_like(w)
    lse = float(logsumexp(w[pref.blocks[-1]]))
    lses = [lse]
    for m in range(pref.num_blocks - 2, -1, -1):
        lse = float(np.logaddexp(lse, logsumexp(w[pref.blocks[m]])))
        lses.append(lse)
    lses.reverse()  # lses[m] = logsumexp over R_m = S_m u R_{m+1}
    for m in range(pref.num_blocks - 1):
        block = pref.blocks[m]
        n_m = block.size
        value -= lgamma(n_m + 1) + float(w[block].sum()) - n_m * lses[m]
        grad[block] -= 1.0
        pool = np.concatenate([block, pref.residual_pool(m)])
        grad[pool] += n_m * np.exp(w[pool] - lses[m])
    return LossValueAndGrad(value=float(value), grad=grad)


def _softmax_cross_entropy(target: np.ndarray, w: np.ndarray) -> LossValueAndGrad:
    lse = float(logsumexp(w))
    value = -float(np.dot(target, w - lse))
    grad = np.exp(w - lse) - target
    return LossValueAndGrad(value=value, grad=grad)


def attrank_loss(relevant, w) -> LossValueAndGrad:
    """Cross-entropy between softmax(w) and the uniform relevance distribution."""
    rel = np.asarray(relevant, dtype=np.int64).ravel()
    if rel.size == 0:
        raise EmptyRelevantSetError("relevant set is empty")
    w = validate_scores(w)
    target = np.zeros_like(w)
    target[rel] = 1.0 / rel.size
    return _softmax_cross_entropy(target, w)


def attrank_loss_partitioned(pref: PartitionedPreference, w) -> LossValueAndGrad:
    """AttRank target for more than two blocks: weights proportional to (M - m).

    The two-block case reduces to :func:`attrank_loss` on the top block.  The
    multi-block weighting is a convention of this package, not a published
    recipe; the last block always gets weight zero.
    """
    w = validate_scores(w, pref.n_items)
    m_total = pref.num_blocks
    target = np.zeros_like(w)
    for m, block in enumerate(pref.blocks[:-1]):
        target[block] = float(m_total - (m + 1))
    total = target.sum()
    if total == 0.0:
        raise EmptyRelevantSetError("no block carries relevance weight")
    target /= total
    return _softmax_cross_entropy(target, w)


def _as_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        raise EmptyPairSetError("pair set is empty")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be an array of (winner, loser) rows")
    return arr


def ranknet_loss(pairs, w) -> LossValueAndGrad:
    """Mean logistic pairwise surrogate: softplus(-(w_winner - w_loser))."""
    p = _as_pairs(pairs)
    w = validate_scores(w)
    margin = w[p[:, 0]] - w[p[:, 1]]
    value = float(np.mean(np.logaddexp(0.0, -margin)))
    coef = -1.0 / (1.0 + np.exp(margin)) / p.shape[0]  # -sigmoid(-margin)/P
    grad = np.zeros_like(w)
    np.add.at(grad, p[:, 0], coef)
    np.add.at(grad, p[:, 1], -coef)
    return LossValueAndGrad(value=value, grad=grad)


def ranksvm_loss(pairs, w, margin: float = 1.0) -> LossValueAndGrad:
    """Mean hinge pairwise surrogate: max(0, margin - (w_winner - w_loser)).

    The subgradient at the hinge point is taken as zero.
    """
    p = _as_pairs(pairs)
    w = validate_scores(w)
    gap = w[p[:, 0]] - w[p[:, 1]]
    active = gap < margin
    value = float(np.mean(np.maximum(0.0, margin - gap)))
    grad = np.zeros_like(w)
    coef = np.where(active, -1.0, 0.0) / p.shape[0]
    np.add.at(grad, p[:, 0], coef)
    np.add.at(grad, p[:, 1], -coef)
    return LossValueAndGrad(value=value, grad=grad)


def pl_topk_loss(top_order, w) -> LossValueAndGrad:
    """Negative PL log-likelihood of a fully ordered top prefix.

    ``top_order`` lists the best items in observed order; all remaining items
    form the unordered tail pool.  This is the oracle objective for data
    where the order inside the top blocks is known.
    """
    top = np.asarray(top_order, dtype=np.int64).ravel()
    if top.size == 0:
        raise EmptyRelevantSetError("ordered prefix is empty")
    w = validate_scores(w)
    if np.unique(top).size != top.size:
        raise ValueError("ordered prefix repeats an item")
    tail = np.ones(w.size, dtype=bool)
    tail[top] = False
    # pools[j] = logsumexp over top[j:] plus the tail, built bottom-up
    lse = float(logsumexp(w[tail])) if tail.any() else -np.inf
    pools = np.empty(top.size)
    for j in range(top.size - 1, -1, -1):
        lse = float(np.logaddexp(lse, w[top[j]]))
        pools[j] = lse
    value = float(pools.sum() - w[top].sum())
    # gradient: item i collects softmax mass from every pool it belongs to;
    # top[t] sits in pools 0..t, tail items in all of them
    inv_z = np.cumsum(np.exp(pools[0] - pools))
    coef = np.full(w.size, inv_z[-1])
    coef[top] = inv_z
    grad = np.exp(w - pools[0]) * coef
    grad[top] -= 1.0
    return LossValueAndGrad(value=value, grad=grad)


def cross_partition_pairs(pref: PartitionedPreference,
                          rng: np.random.Generator | None = None,
                          enumerate_limit: int = 100_000,
                          sample_budget: int = 10_000) -> np.ndarray:
    """(winner, loser) pairs across blocks, for the pairwise surrogates.

    Enumerates every cross-block pair when their total count is at most
    ``enumerate_limit``; otherwise draws ``sample_budget`` pairs uniformly
    from the cross-block pair space (block pair chosen proportional to its
    size product).  Sampling requires ``rng``.
    """
    sizes = np.array(pref.sizes, dtype=np.int64)
    below = np.concatenate([np.cumsum(sizes[::-1])[::-1][1:], [0]])
    total = int(np.dot(sizes[:-1], below[:-1]))
    if total == 0:
        raise EmptyPairSetError("single-block preference has no comparable pairs")
    if total <= enumerate_limit:
        out = np.empty((total, 2), dtype=np.int64)
        pos = 0
        for m in range(pref.num_blocks - 1):
            winners = pref.blocks[m]
            losers = pref.residual_pool(m)
            n = winners.size * losers.size
            out[pos:pos + n, 0] = np.repeat(winners, losers.size)
            out[pos:pos + n, 1] = np.tile(losers, winners.size)
            pos += n
        return out
    if rng is None:
        raise ValueError("pair sampling needs a random generator")
    weights = sizes[:-1] * below[:-1]
    block_idx = rng.choice(pref.num_blocks - 1, size=sample_budget,
                           p=weights / weights.sum())
    out = np.empty((sample_budget, 2), dtype=np.int64)
    for k, m in enumerate(block_idx):
        winners = pref.blocks[m]
        losers = pref.residual_pool(m)
        out[k, 0] = winners[rng.integers(winners.size)]
        out[k, 1] = losers[rng.integers(losers.size)]
    return out
