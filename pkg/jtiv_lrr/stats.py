import math

import numpy as np
from scipy import stats as sps
from sklearn.metrics import mutual_info_score


def summarize(values):
    """Mean and population standard deviation; (nan, nan) for no values.

    Non-finite entries are skipped so a single diverged trial does not blank
    out a summary row.
    """
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return math.nan, math.nan
    return float(arr.mean()), float(arr.std())


def spearman(x, y) -> float:
    if len(x) != len(y):
        raise ValueError("x and y must be same length")
    if len(x) < 2:
        return math.nan
    rho = sps.spearmanr(x, y).statistic
    return float(rho)


def joint_histogram(a, b, bins: int) -> np.ndarray:
    """bins x bins counts over the value ranges of a and b.

    A constant input collapses to a single occupied bin instead of numpy's
    default unit-width range.
    """
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError("a and b must have the same number of entries")
    ranges = []
    for v in (a, b):
        lo, hi = float(v.min()), float(v.max())
        if math.isclose(lo, hi):
            hi = lo + 1.0
        ranges.append((lo, hi))
    counts, _, _ = np.histogram2d(a, b, bins=bins, range=ranges)
    return counts


def contingency_mutual_information(counts) -> float:
    """MI in nats of the empirical joint distribution given by a count table."""
    counts = np.asarray(counts, dtype=float)
    if counts.sum() <= 0:
        return 0.0
    return max(0.0, float(mutual_info_score(None, None, contingency=counts)))


def entropy_of_counts(counts) -> float:
    p = np.asarray(counts, dtype=float).ravel()
    p = p[p > 0] / p.sum()
    return float(-(p * np.log(p)).sum())
