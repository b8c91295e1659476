"""Plackett-Luce model core: domain types, exact likelihood, Gumbel sampling.

The Plackett-Luce (PL) model over N items with utility scores
``w = [w_1, ..., w_N]`` assigns a full ranking ``(i_1, ..., i_N)`` the
probability

    p(i_1, ..., i_N; w) = prod_j exp(w_{i_j}) / sum_{l>=j} exp(w_{i_l}).

A *partitioned preference* S_1 > S_2 > ... > S_M slices the items into M
ordered disjoint blocks whose internal order is unobserved.  Its likelihood
factorizes over blocks,

    P(S_1 > ... > S_M; w) = prod_{m<M} P(S_m > R_{m+1}; w),

where R_m is the pool of items below the top m-1 blocks.  Each block factor
is a sum over the |S_m|! internal orderings, so the exact evaluation here is
an oracle for small blocks only; large blocks go through the quadrature
module instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.special import logsumexp

ENUMERATION_CAP = 8


class PartitionTooLargeError(ValueError):
    """A block exceeds the factorial-enumeration cap; use the quadrature path."""


def _as_index_array(items) -> np.ndarray:
    arr = np.asarray(items, dtype=np.int64).ravel()
    return np.sort(arr)


@dataclass(frozen=True)
class PartitionedPreference:
    """Ordered disjoint blocks S_1 > ... > S_M covering all n_items items.

    Every block is stored explicitly, including the last one, so the covering
    invariant is checked locally.  Use :meth:`from_top_blocks` to build the
    final block as the complement.
    """

    blocks: tuple[np.ndarray, ...]
    n_items: int

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise ValueError("need at least one block")
        blocks = tuple(_as_index_array(b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        seen = np.concatenate(blocks) if blocks else np.empty(0, np.int64)
        for b in blocks:
            if b.size == 0:
                raise ValueError("empty blocks are not allowed")
        if seen.size != self.n_items or np.unique(seen).size != seen.size:
            raise ValueError("blocks must be pairwise disjoint")
        if seen.min() < 0 or seen.max() >= self.n_items or np.unique(seen).size != self.n_items:
            raise ValueError(f"blocks must cover exactly 0..{self.n_items - 1}")

    @classmethod
    def from_top_blocks(cls, top_blocks, n_items: int) -> "PartitionedPreference":
        """Build a preference from the top blocks; the complement becomes S_M."""
        tops = [_as_index_array(b) for b in top_blocks]
        mask = np.ones(n_items, dtype=bool)
        for b in tops:
            mask[b] = False
        rest = np.flatnonzero(mask)
        if rest.size == 0:
            raise ValueError("top blocks cover all items; no residual block left")
        return cls(blocks=tuple(tops) + (rest,), n_items=n_items)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(int(b.size) for b in self.blocks)

    def residual_pool(self, m: int) -> np.ndarray:
        """Items ranked below block m (0-based), i.e. R_{m+1} = S_{m+1} u ... u S_M."""
        if m + 1 >= self.num_blocks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(self.blocks[m + 1:])


def validate_scores(w, n_items: int | None = None) -> np.ndarray:
    """Return w as a finite 1-d float64 array, optionally checking its length."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if not np.all(np.isfinite(w)):
        raise ValueError("utility scores must be finite")
    if n_items is not None and w.size != n_items:
        raise ValueError(f"expected {n_items} scores, got {w.size}")
    return w


def log_prob_full_ranking(order, w) -> float:
    """Log-probability of a full ranking under the PL model.

    ``order`` is a permutation of 0..N-1, best first.  Computed right to left
    so each denominator is a single running log-add-exp.
    """
    order = np.asarray(order, dtype=np.int64).ravel()
    w = validate_scores(w)
    if np.unique(order).size != order.size or order.size != w.size:
        raise ValueError("order must be a permutation of all items")
    total = 0.0
    lse = -np.inf
    for i in order[::-1]:
        lse = np.logaddexp(lse, w[i])
        total += w[i] - lse
    return float(total)


def marginal_pref_prob_exact(block_a, block_b, w, cap: int = ENUMERATION_CAP) -> float:
    """P(A > B) by enumerating the |A|! orderings of A with pool A u B.

    Exact counterpart of the quadrature block integral; factorial in |A|,
    hence the cap.
    """
    a = np.asarray(block_a, dtype=np.int64).ravel()
    b = np.asarray(block_b, dtype=np.int64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both blocks must be non-empty")
    if np.intersect1d(a, b).size:
        raise ValueError("blocks must be disjoint")
    if a.size > cap:
        raise PartitionTooLargeError(
            f"block of size {a.size} exceeds enumeration cap {cap}"
        )
    w = validate_scores(w)
    return float(np.exp(_log_block_prob_enum(a, b, w)))


def _log_block_prob_enum(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> float:
    # log sum over orderings of a, each a telescoping product with the
    # remaining pool mass in the denominator; stabilized by the pool max.
    pool = np.concatenate([a, b])
    shift = w[pool].max()
    ew = np.exp(w - shift)
    total = ew[pool].sum()
    terms = []
    for perm in permutations(a.tolist()):
        rem = total
        lp = 0.0
        for i in perm:
            lp += np.log(ew[i]) - np.log(rem)
            rem -= ew[i]
        terms.append(lp)
    return float(logsumexp(terms))


def log_likelihood_exact(pref: PartitionedPreference, w, cap: int = ENUMERATION_CAP) -> float:
    """Exact log-likelihood of a partitioned preference by block enumeration.

    Sums log P(S_m > R_{m+1}) over the top M-1 blocks; returns 0.0 for M=1
    (the empty product).  Raises :class:`PartitionTooLargeError` when any top
    block exceeds ``cap``.
    """
    w = validate_scores(w, pref.n_items)
    for m in range(pref.num_blocks - 1):
        if pref.blocks[m].size > cap:
            raise PartitionTooLargeError(
                f"block {m} of size {pref.blocks[m].size} exceeds enumeration cap {cap}"
            )
    total = 0.0
    for m in range(pref.num_blocks - 1):
        total += _log_block_prob_enum(pref.blocks[m], pref.residual_pool(m), w)
    return float(total)


def sample_pl(w, rng: np.random.Generator) -> np.ndarray:
    """Draw one full ranking from the PL model via the Gumbel trick.

    Perturbs each score with an independent standard Gumbel variable
    (inverse CDF, uniforms kept strictly inside (0, 1)) and sorts
    descending.  Deterministic given the generator state.
    """
    w = validate_scores(w)
    u = rng.random(w.size)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    keys = w - np.log(-np.log(u))
    return np.argsort(-keys, kind="stable").astype(np.int64)
