"""
Wilcoxon signed-rank test
Exact null distribution for small samples, tie-corrected normal approximation above
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from utils.errors import StatisticsError

logger = logging.getLogger(__name__)

EXACT_MAX_N = 25
MIN_RECOMMENDED_N = 5
ALTERNATIVES = ("two-sided", "greater", "less")
METHODS = ("auto", "exact", "approx")


@dataclass(frozen=True)
class WilcoxonResult:
    """W is the sum of ranks of the positive differences a - b"""
    statistic: float
    p_value: float
    n_effective: int
    method: str
    alternative: str
    z: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def exact_null_counts(doubled_ranks: Sequence[int]) -> np.ndarray:
    """
    Number of sign assignments reaching each value of 2*W

    Index s of the result counts assignments whose positive doubled ranks sum to s.
    """
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for rank in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[rank:] = counts[: total + 1 - rank]
        counts = counts + shifted
    return counts


def _exact_p(doubled_ranks: np.ndarray, doubled_w: int, alternative: str) -> float:
    counts = exact_null_counts(doubled_ranks.tolist())
    total = float(counts.sum())
    lower = counts[: doubled_w + 1].sum() / total
    upper = counts[doubled_w:].sum() / total
    if alternative == "greater":
        return float(upper)
    if alternative == "less":
        return float(lower)
    return float(min(1.0, 2.0 * min(lower, upper)))


def _approx_p(ranks: np.ndarray, w: float, alternative: str):
    mean = ranks.sum() / 2.0
    sd = np.sqrt((ranks ** 2).sum() / 4.0)
    if alternative == "greater":
        z = (w - mean - 0.5) / sd
        return float(norm.sf(z)), float(z)
    if alternative == "less":
        z = (w - mean + 0.5) / sd
        return float(norm.cdf(z)), float(z)
    diff = w - mean
    diff -= 0.5 * np.sign(diff)
    z = diff / sd
    return float(min(1.0, 2.0 * norm.sf(abs(z)))), float(z)


def wilcoxon_signed_rank(
    paired_a: Sequence[float],
    paired_b: Sequence[float],
    alternative: str = "two-sided",
    method: str = "auto",
) -> WilcoxonResult:
    """
    Paired Wilcoxon signed-rank test of a against b

    Zero differences are dropped; tied absolute differences share mid-ranks.
    method='auto' uses the exact distribution up to 25 non-zero pairs.

    Args:
        paired_a: Scores of the first model, one per episode
        paired_b: Scores of the second model on the same episodes
        alternative: 'two-sided', 'greater' (a tends to exceed b) or 'less'

    Raises:
        StatisticsError: Length mismatch, all differences zero, or method='exact'
            with fewer than 5 non-zero differences
    """
    if alternative not in ALTERNATIVES:
        raise StatisticsError(f"alternative must be one of {ALTERNATIVES}, got '{alternative}'")
    if method not in METHODS:
        raise StatisticsError(f"method must be one of {METHODS}, got '{method}'")

    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StatisticsError(f"paired samples must have equal lengths, got {a.size} and {b.size}")

    diffs = a - b
    diffs = diffs[diffs != 0.0]
    n = int(diffs.size)
    if n == 0:
        raise StatisticsError("all differences are zero")
    if n < MIN_RECOMMENDED_N and method == "exact":
        raise StatisticsError(f"an exact test needs at least {MIN_RECOMMENDED_N} non-zero differences, got {n}")
    if n < MIN_RECOMMENDED_N:
        logger.warning(f"Wilcoxon test on only {n} non-zero differences has very little power")

    ranks = rankdata(np.abs(diffs))
    w = float(ranks[diffs > 0].sum())

    use_exact = method == "exact" or (method == "auto" and n <= EXACT_MAX_N)
    if use_exact:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p_value = _exact_p(doubled, int(round(2.0 * w)), alternative)
        return WilcoxonResult(statistic=w, p_value=p_value, n_effective=n, method="exact", alternative=alternative)

    p_value, z = _approx_p(ranks, w, alternative)
    return WilcoxonResult(statistic=w, p_value=p_value, n_effective=n, method="approx", alternative=alternative, z=z)
