"""Plackett-Luce learning-to-rank on partitioned preferences.

Exact (factorial) and quadrature-based evaluation of the partitioned-
preference likelihood and its gradient, the surrounding training objectives
and baselines, trainable scorers with hand-derived backprop, synthetic data
generation, sparse multi-label dataset IO, and ranking metrics.
"""

__version__ = "0.1.0"

from .core import (
    ENUMERATION_CAP,
    PartitionedPreference,
    PartitionTooLargeError,
    log_likelihood_exact,
    log_prob_full_ranking,
    marginal_pref_prob_exact,
    sample_pl,
)
from .losses import (
    LossValueAndGrad,
    attrank_loss,
    attrank_loss_partitioned,
    cross_partition_pairs,
    pl_lb_loss,
    pl_partition_loss,
    pl_topk_loss,
    ranknet_loss,
    ranksvm_loss,
)
from .quadrature import (
    DegenerateInputError,
    ErrorBudget,
    IntegrationConfig,
    NonFiniteError,
    block_marginal_integral,
    convergence_probe,
    convergence_slope,
    grad_log_likelihood_numeric,
    log_likelihood_and_grad,
    log_likelihood_numeric,
    recommended_intervals_gradient,
    recommended_intervals_likelihood,
)
from .training import LOSS_KINDS, TrainConfig, TrainExample, train

__all__ = [name for name in dir() if not name.startswith("_")]
