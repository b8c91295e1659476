import numpy as np
import pytest

from plpartition.core import PartitionedPreference, log_likelihood_exact
from plpartition.quadrature import (
    DegenerateInputError,
    ErrorBudget,
    IntegrationConfig,
    block_marginal_integral,
    convergence_probe,
    convergence_slope,
    grad_log_likelihood_numeric,
    log_likelihood_and_grad,
    log_likelihood_numeric,
    recommended_intervals_gradient,
    recommended_intervals_likelihood,
)

CFG = IntegrationConfig()


def random_instance(rng, n_lo=3, n_hi=8, top_cap=4):
    n = int(rng.integers(n_lo, n_hi + 1))
    w = rng.uniform(-3.0, 3.0, n)
    ids = list(rng.permutation(n))
    blocks = []
    while ids:
        k = int(rng.integers(1, min(top_cap, len(ids)) + 1))
        blocks.append(np.array(ids[:k]))
        ids = ids[k:]
    if len(blocks) == 1:
        blocks = [blocks[0][:1], blocks[0][1:]]
    return PartitionedPreference(tuple(blocks), n), w


def fd_gradient(pref, w, cfg, h=1e-4):
    grad = np.zeros_like(w)
    for k in range(w.size):
        wp, wm = w.copy(), w.copy()
        wp[k] += h
        wm[k] -= h
        grad[k] = (log_likelihood_numeric(pref, wp, cfg)
                   - log_likelihood_numeric(pref, wm, cfg)) / (2 * h)
    return grad


class TestBlockMarginalIntegral:
    def test_symmetry(self):
        got = block_marginal_integral([0], [1], np.zeros(2), CFG)
        assert got == pytest.approx(np.log(0.5), abs=1e-6)

    def test_two_item_logistic(self):
        got = block_marginal_integral([0], [1], np.array([1.0, 0.0]), CFG)
        assert got == pytest.approx(np.log(0.7310586), abs=1e-6)

    def test_pair_vs_single_matches_enumeration(self):
        got = block_marginal_integral([0, 1], [2], np.zeros(3), CFG)
        assert got == pytest.approx(np.log(1 / 3), abs=1e-6)

    def test_empty_block_rejected(self):
        with pytest.raises(DegenerateInputError):
            block_marginal_integral([], [0], np.zeros(2), CFG)

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            block_marginal_integral([0], [0, 1], np.zeros(2), CFG)


class TestLogLikelihoodNumeric:
    def test_single_block_zero(self):
        pref = PartitionedPreference((np.arange(5),), 5)
        assert log_likelihood_numeric(pref, np.linspace(-1, 1, 5), CFG) == 0.0

    def test_uniform_two_block(self):
        pref = PartitionedPreference.from_top_blocks([[0, 1]], 3)
        got = log_likelihood_numeric(pref, np.zeros(3), CFG)
        assert got == pytest.approx(-1.0986123, abs=1e-5)

    def test_three_even_blocks_vs_oracle(self):
        rng = np.random.default_rng(21)
        w = rng.uniform(-2, 2, 6)
        ids = rng.permutation(6)
        pref = PartitionedPreference((ids[:2], ids[2:4], ids[4:]), 6)
        assert log_likelihood_numeric(pref, w, CFG) == pytest.approx(
            log_likelihood_exact(pref, w), abs=1e-4)

    def test_oracle_equivalence_sweep(self):
        rng = np.random.default_rng(100)
        for _ in range(30):
            pref, w = random_instance(rng)
            assert log_likelihood_numeric(pref, w, CFG) == pytest.approx(
                log_likelihood_exact(pref, w), abs=1e-4)

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        pref, w = random_instance(rng)
        assert abs(log_likelihood_numeric(pref, w, CFG)
                   - log_likelihood_numeric(pref, w + 2.3, CFG)) < 1e-8

    def test_monotone_refinement_on_average(self):
        rng = np.random.default_rng(31)
        counts = (64, 128, 256, 512)
        errors = np.zeros(len(counts))
        bad = 0
        trials = 20
        for _ in range(trials):
            pref, w = random_instance(rng)
            exact = log_likelihood_exact(pref, w)
            errs = [abs(log_likelihood_numeric(pref, w, IntegrationConfig(intervals=t)) - exact)
                    for t in counts]
            errors += errs
            bad += any(np.diff(errs) > 0)
        assert np.all(np.diff(errors) < 0)
        assert bad <= 0.1 * trials + 1


class TestGradient:
    def test_single_block_zero_vector(self):
        pref = PartitionedPreference((np.arange(4),), 4)
        grad = grad_log_likelihood_numeric(pref, np.ones(4), CFG)
        assert np.array_equal(grad, np.zeros(4))

    def test_two_item_closed_form(self):
        pref = PartitionedPreference.from_top_blocks([[0]], 2)
        grad = grad_log_likelihood_numeric(pref, np.zeros(2), CFG)
        assert grad[0] == pytest.approx(0.5, abs=1e-5)
        assert grad[1] == pytest.approx(-0.5, abs=1e-5)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        pref, w = random_instance(rng, n_lo=6, n_hi=6)
        grad = grad_log_likelihood_numeric(pref, w, CFG)
        assert np.abs(grad - fd_gradient(pref, w, CFG)).max() <= 1e-4

    def test_gradient_sums_to_zero(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            pref, w = random_instance(rng)
            grad = grad_log_likelihood_numeric(pref, w, CFG)
            assert abs(grad.sum()) < 1e-6

    def test_out_buffer_accumulates(self):
        pref = PartitionedPreference.from_top_blocks([[0]], 3)
        w = np.array([0.4, -0.1, 0.2])
        once = grad_log_likelihood_numeric(pref, w, CFG)
        buf = grad_log_likelihood_numeric(pref, w, CFG, out=once.copy())
        assert np.allclose(buf, 2 * once)

    def test_out_buffer_shape_checked(self):
        pref = PartitionedPreference.from_top_blocks([[0]], 3)
        with pytest.raises(ValueError):
            grad_log_likelihood_numeric(pref, np.zeros(3), CFG, out=np.zeros(4))

    def test_fused_matches_separate_calls(self):
        rng = np.random.default_rng(29)
        pref, w = random_instance(rng)
        ll, grad = log_likelihood_and_grad(pref, w, CFG)
        assert ll == log_likelihood_numeric(pref, w, CFG)
        assert np.allclose(grad, grad_log_likelihood_numeric(pref, w, CFG))


class TestIntervalBudgets:
    def test_likelihood_reference_value(self):
        budget = ErrorBudget(epsilon=0.01, c_bound=3.0)
        assert recommended_intervals_likelihood(9, budget) == 2599

    def test_gradient_reference_value(self):
        # sqrt(6) * 3^5.5 * 16 / (0.25 * 0.1) = 659815.4796..., frozen at 40 digits
        budget = ErrorBudget(epsilon=0.1, c_bound=3.0, c0=0.5)
        assert recommended_intervals_gradient(4, budget) == 659816

    def test_huge_epsilon_floors_at_one(self):
        budget = ErrorBudget(epsilon=1e6, c_bound=2.5, c0=0.5)
        assert recommended_intervals_likelihood(3, budget) == 1
        assert recommended_intervals_gradient(1, budget) == 1

    def test_epsilon_halving_doubles(self):
        small = ErrorBudget(epsilon=0.001, c_bound=4.0)
        large = ErrorBudget(epsilon=0.002, c_bound=4.0)
        f1 = recommended_intervals_likelihood(9, small)
        f2 = recommended_intervals_likelihood(9, large)
        assert 2 - 1e-3 <= f1 / f2 <= 2

    def test_block_size_quadratic_in_gradient(self):
        budget = ErrorBudget(epsilon=1e-3, c_bound=3.0, c0=0.5)
        one = recommended_intervals_gradient(1, budget)
        two = recommended_intervals_gradient(2, budget)
        assert abs(two / one - 4) < 1e-6

    def test_monotonicity(self):
        base = ErrorBudget(epsilon=0.01, c_bound=3.0, c0=0.5)
        more_items = recommended_intervals_likelihood(10, base)
        assert more_items >= recommended_intervals_likelihood(9, base)
        bigger_c = ErrorBudget(epsilon=0.01, c_bound=4.0, c0=0.5)
        assert (recommended_intervals_likelihood(9, bigger_c)
                >= recommended_intervals_likelihood(9, base))
        looser = ErrorBudget(epsilon=0.1, c_bound=3.0, c0=0.5)
        assert (recommended_intervals_likelihood(9, looser)
                <= recommended_intervals_likelihood(9, base))
        assert (recommended_intervals_gradient(9, looser)
                <= recommended_intervals_gradient(9, base))

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            ErrorBudget(epsilon=-1.0, c_bound=3.0)
        with pytest.raises(ValueError):
            ErrorBudget(epsilon=0.1, c_bound=2.0)
        with pytest.raises(ValueError):
            ErrorBudget(epsilon=0.1, c_bound=3.0, c0=1.5)
        with pytest.raises(ValueError):
            recommended_intervals_gradient(4, ErrorBudget(epsilon=0.1, c_bound=3.0))


class TestConvergenceProbe:
    def test_errors_strictly_decrease_on_uniform_instance(self):
        pref = PartitionedPreference.from_top_blocks([[0, 1]], 3)
        probe = convergence_probe(pref, np.zeros(3), (10, 100, 1000))
        errs = [e for _, e in probe]
        assert errs[0] > errs[1] > errs[2]

    def test_single_block_zero_error_everywhere(self):
        pref = PartitionedPreference((np.arange(4),), 4)
        probe = convergence_probe(pref, np.ones(4), (10, 100, 1000))
        assert all(e == 0.0 for _, e in probe)

    def test_slope_near_minus_two_on_seeded_instance(self):
        # a singleton top block keeps the leading 1/T^2 coefficient non-zero;
        # all-multi-item blocks superconverge (boundary terms cancel)
        rng = np.random.default_rng(21)
        w = rng.uniform(-2, 2, 6)
        ids = rng.permutation(6)
        pref = PartitionedPreference((ids[:1], ids[1:3], ids[3:]), 6)
        slope = convergence_slope(convergence_probe(pref, w, (200, 400, 800, 1600)))
        assert -2.5 <= slope <= -1.5
