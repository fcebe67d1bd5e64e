"""
Binomial tail bound and order-statistic rank search.

v(k, n, alpha) = sum_{j<k} C(n, j) alpha^j (1 - alpha)^(n - j) bounds the probability
that the k-th smallest of n held-out scores leaves more than alpha of the class below it.
Every threshold in the package is an order statistic whose rank comes from here.
"""

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy.special import gammaln

from .config import HNP_DEFAULTS
from .errors import InvalidArgumentError, NoFeasibleRankError

# (1 - alpha)^n below this is evaluated in log space
_UNDERFLOW_GUARD = 1e-280


@dataclass(frozen=True)
class TailParams:
    """Sample size, control level and violation tolerance of one threshold-selection set."""
    n: int
    alpha: float
    delta: float

    def __post_init__(self):
        _check_n(self.n)
        _check_unit(self.alpha, "alpha")
        _check_unit(self.delta, "delta")


def _check_n(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n!r}")


def _check_unit(value, name):
    if not (0.0 < value < 1.0):
        raise InvalidArgumentError(f"{name} must lie in (0, 1), got {value!r}")


def _within(value: float, bound: float) -> bool:
    return value <= bound * (1.0 + HNP_DEFAULTS["boundary_rtol"])


def _first_term(n: int, alpha: float) -> float:
    """(1 - alpha)^n, shared by the rank search and the minimum sample size."""
    return math.exp(n * math.log1p(-alpha))


def binomial_terms(n: int, alpha: float, count: int) -> np.ndarray:
    """
    First `count` terms C(n, j) alpha^j (1 - alpha)^(n - j), j = 0..count-1.

    Uses the multiplicative recurrence while (1 - alpha)^n is a normal float and
    log-gamma evaluation otherwise.
    """
    count = min(int(count), n + 1)
    if count <= 0:
        return np.zeros(0)

    first = _first_term(n, alpha)
    if first > _UNDERFLOW_GUARD:
        j = np.arange(count - 1, dtype=float)
        ratios = (n - j) / (j + 1.0) * (alpha / (1.0 - alpha))
        return first * np.concatenate(([1.0], np.cumprod(ratios)))

    j = np.arange(count, dtype=float)
    log_terms = (gammaln(n + 1.0) - gammaln(j + 1.0) - gammaln(n - j + 1.0)
                 + j * math.log(alpha) + (n - j) * math.log1p(-alpha))
    return np.exp(log_terms)


def binomial_tail(k: int, n: int, alpha: float) -> float:
    """
    Evaluate v(k, n, alpha).

    Args:
        k: Number of leading terms, 0 <= k <= n + 1
        n: Size of the threshold-selection set
        alpha: Control level in (0, 1)

    Returns:
        The partial binomial sum; 0.0 for k = 0 and exactly 1.0 for k = n + 1
    """
    _check_n(n)
    _check_unit(alpha, "alpha")
    if isinstance(k, bool) or int(k) != k or not (0 <= k <= n + 1):
        raise InvalidArgumentError(f"k must be an integer in [0, {n + 1}], got {k!r}")
    if k == 0:
        return 0.0
    if k == n + 1:
        return 1.0
    return min(1.0, math.fsum(binomial_terms(n, alpha, k)))


def delta_search(n: int, alpha: float, delta: float) -> int:
    """
    Largest rank k in [n] with v(k, n, alpha) <= delta.

    Raises:
        NoFeasibleRankError: when (1 - alpha)^n > delta, i.e. n is below the minimum sample size
    """
    params = TailParams(n, alpha, delta)
    terms = binomial_terms(params.n, params.alpha, params.n)

    if not _within(terms[0], params.delta):
        raise NoFeasibleRankError(
            f"No rank satisfies v(k, {n}, {alpha}) <= {delta}; "
            f"need n >= {min_sample_size(alpha, delta)}",
            n=n, alpha=alpha, delta=delta,
        )

    # v is non-decreasing in k, so bisect on the correctly rounded partial sums
    low, high = 1, params.n
    while low < high:
        mid = (low + high + 1) // 2
        if _within(math.fsum(terms[:mid]), params.delta):
            low = mid
        else:
            high = mid - 1
    return low


def min_sample_size(alpha: float, delta: float) -> int:
    """
    Smallest n with (1 - alpha)^n <= delta.

    Args:
        alpha: Control level in (0, 1)
        delta: Violation tolerance in (0, 1)

    Returns:
        Minimum size of a threshold-selection set for this (alpha, delta)
    """
    _check_unit(alpha, "alpha")
    _check_unit(delta, "delta")

    n = max(1, math.ceil(math.log(delta) / math.log1p(-alpha)))
    while n > 1 and _within(_first_term(n - 1, alpha), delta):
        n -= 1
    while not _within(_first_term(n, alpha), delta):
        n += 1
    return n


def default_c(n: int) -> float:
    """c(n) = 2 / sqrt(n)."""
    return 2.0 / math.sqrt(n)


def scaled_c(scale: float) -> Callable[[int], float]:
    """Factory for c(n) = scale / sqrt(n)."""
    if scale <= 0:
        raise InvalidArgumentError(f"c scale must be positive, got {scale!r}")

    def c_fn(n: int) -> float:
        return scale / math.sqrt(n)

    return c_fn


def adjusted_levels(alpha: float, delta: float, n: int, n_conditional: int,
                    c_fn: Callable[[int], float] = default_c) -> Tuple[float, float, float, float]:
    """
    Conditional-sample adjustment of (alpha, delta).

    Returns:
        (p_hat, p, alpha_adj, delta_adj) with p_hat = n'/n, p = p_hat + c(n),
        alpha_adj = alpha / p and delta_adj = delta - exp(-2 n c(n)^2)
    """
    _check_n(n)
    if not (0 <= n_conditional <= n):
        raise InvalidArgumentError(f"conditional size must lie in [0, {n}], got {n_conditional!r}")
    c = c_fn(n)
    p_hat = n_conditional / n
    p = p_hat + c
    alpha_adj = alpha / p
    delta_adj = delta - math.exp(-2.0 * n * c * c)
    return p_hat, p, alpha_adj, delta_adj
