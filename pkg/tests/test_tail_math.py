import math
from bisect import bisect_right

import pytest
from scipy.stats import binom

from hnp_umbrella.utilities.config import HNP_DEFAULTS
from hnp_umbrella.utilities.errors import InvalidArgumentError, NoFeasibleRankError
from hnp_umbrella.utilities.tail_math import (
    TailParams,
    adjusted_levels,
    binomial_tail,
    default_c,
    delta_search,
    min_sample_size,
    scaled_c,
)

TOLERANCE_PARTS = round(1 / HNP_DEFAULTS["boundary_rtol"])


def exact_ranks(n, alpha_pct, delta_pct):
    """
    Brute-force scan in integer arithmetic.

    v(k) * 100^n = sum_{j<k} C(n, j) a^j (100 - a)^(n - j) with a = 100 * alpha; the scan
    accepts v(k) <= delta with the same relative slack as the library.
    """
    limit = delta_pct * 100 ** (n - 1) * (TOLERANCE_PARTS + 1)
    total, feasible = 0, 0
    for k in range(1, n + 1):
        total += math.comb(n, k - 1) * alpha_pct ** (k - 1) * (100 - alpha_pct) ** (n - k + 1)
        if total * TOLERANCE_PARTS <= limit:
            feasible = k
        else:
            break
    return feasible


def check_against_oracle(n, alpha_pct, delta_pct):
    expected = exact_ranks(n, alpha_pct, delta_pct)
    if expected == 0:
        with pytest.raises(NoFeasibleRankError):
            delta_search(n, alpha_pct / 100, delta_pct / 100)
    else:
        assert delta_search(n, alpha_pct / 100, delta_pct / 100) == expected, (n, alpha_pct, delta_pct)


class TestBinomialTail:
    def test_empty_sum(self):
        assert binomial_tail(0, 59, 0.05) == 0.0

    def test_single_term(self):
        assert binomial_tail(1, 59, 0.05) == pytest.approx(0.95 ** 59, rel=1e-14)
        assert binomial_tail(1, 59, 0.05) == pytest.approx(0.04849, abs=1e-5)

    def test_full_sum_is_one(self):
        assert binomial_tail(60, 59, 0.05) == 1.0

    @pytest.mark.parametrize("n,alpha", [(10, 0.3), (100, 0.05), (200, 0.5), (5000, 0.5)])
    def test_matches_binomial_cdf(self, n, alpha):
        for k in (1, n // 4, n // 2, n):
            assert binomial_tail(k, n, alpha) == pytest.approx(binom.cdf(k - 1, n, alpha), rel=1e-9, abs=1e-300)

    def test_monotone_in_k(self):
        values = [binomial_tail(k, 80, 0.1) for k in range(82)]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert values[-1] == 1.0
        assert values[-2] == pytest.approx(1.0 - 0.1 ** 80, abs=1e-12)

    @pytest.mark.parametrize("k,n,alpha", [(-1, 10, 0.1), (12, 10, 0.1), (1, 10, 0.0), (1, 10, 1.0), (1, 0, 0.1)])
    def test_invalid_arguments(self, k, n, alpha):
        with pytest.raises(InvalidArgumentError):
            binomial_tail(k, n, alpha)


class TestDeltaSearch:
    def test_minimum_size_rank(self):
        assert delta_search(59, 0.05, 0.05) == 1

    def test_below_minimum_size(self):
        with pytest.raises(NoFeasibleRankError) as info:
            delta_search(58, 0.05, 0.05)
        assert info.value.code == "NO_FEASIBLE_RANK"

    def test_second_order_statistic_at_100(self):
        assert binomial_tail(2, 100, 0.05) == pytest.approx(0.0371, abs=1e-4)
        assert delta_search(100, 0.05, 0.05) == 2

    def test_tolerance_close_to_one_returns_n(self):
        # v(n) = 1 - alpha^n <= delta when 1 - delta < alpha^n
        assert delta_search(5, 0.5, 1 - 0.01) == 5

    def test_rank_is_largest_feasible(self):
        n, alpha, delta = 150, 0.1, 0.05
        k = delta_search(n, alpha, delta)
        assert binomial_tail(k, n, alpha) <= delta
        assert binomial_tail(k + 1, n, alpha) > delta

    @pytest.mark.parametrize("n", [1, 2, 5, 17, 59, 100, 200])
    def test_agrees_with_exact_scan_on_coarse_grid(self, n):
        for alpha_pct in range(5, 100, 5):
            for delta_pct in range(5, 100, 5):
                check_against_oracle(n, alpha_pct, delta_pct)

    @pytest.mark.slow
    def test_agrees_with_exact_scan_on_full_grid(self):
        for n in range(1, 201):
            for alpha_pct in range(1, 100):
                # cumulative numerators once per (n, alpha), then every delta by bisection
                totals, total = [], 0
                for k in range(1, n + 1):
                    total += math.comb(n, k - 1) * alpha_pct ** (k - 1) * (100 - alpha_pct) ** (n - k + 1)
                    totals.append(total * TOLERANCE_PARTS)
                for delta_pct in range(1, 100):
                    limit = delta_pct * 100 ** (n - 1) * (TOLERANCE_PARTS + 1)
                    expected = bisect_right(totals, limit)
                    if expected == 0:
                        with pytest.raises(NoFeasibleRankError):
                            delta_search(n, alpha_pct / 100, delta_pct / 100)
                    else:
                        assert delta_search(n, alpha_pct / 100, delta_pct / 100) == expected

    def test_invalid_parameters(self):
        with pytest.raises(InvalidArgumentError):
            TailParams(0, 0.1, 0.1)
        with pytest.raises(InvalidArgumentError):
            delta_search(10, 0.1, 1.0)


class TestMinSampleSize:
    @pytest.mark.parametrize("alpha,delta,expected", [(0.05, 0.05, 59), (0.2, 0.2, 8), (0.5, 0.5, 1)])
    def test_known_sizes(self, alpha, delta, expected):
        assert min_sample_size(alpha, delta) == expected

    @pytest.mark.parametrize("alpha,delta", [(0.01, 0.01), (0.1, 0.3), (0.3, 0.05), (0.9, 0.9)])
    def test_is_smallest_feasible_size(self, alpha, delta):
        n = min_sample_size(alpha, delta)
        assert (1 - alpha) ** n <= delta * (1 + 1e-12)
        if n > 1:
            assert (1 - alpha) ** (n - 1) > delta
        assert delta_search(n, alpha, delta) >= 1

    def test_boundary_slack_comes_from_config(self, monkeypatch):
        assert min_sample_size(0.5, 0.3) == 2
        monkeypatch.setitem(HNP_DEFAULTS, "boundary_rtol", 1.0)
        assert min_sample_size(0.5, 0.3) == 1
        assert delta_search(1, 0.5, 0.3) == 1


class TestAdjustment:
    def test_default_c(self):
        assert default_c(4) == 1.0
        assert scaled_c(2.0)(16) == 0.5

    def test_scale_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            scaled_c(0.0)

    def test_adjusted_levels_hand_example(self):
        p_hat, p, alpha_adj, delta_adj = adjusted_levels(0.5, 0.5, 4, 4, default_c)
        assert (p_hat, p, alpha_adj) == (1.0, 2.0, 0.25)
        assert delta_adj == pytest.approx(0.5 - math.exp(-8.0), abs=1e-15)

    def test_conditional_size_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            adjusted_levels(0.1, 0.1, 10, 11)
