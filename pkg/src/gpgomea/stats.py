"""Friedman test with Nemenyi post-hoc critical distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

__all__ = ["NEMENYI_Q05", "FriedmanResult", "friedman_nemenyi", "average_ranks", "cliques"]

# Critical values q_0.05 of the two-tailed Nemenyi test (studentized range
# statistic divided by sqrt(2), infinite degrees of freedom), k = 2..20.
NEMENYI_Q05 = {
    2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102,
    10: 3.164, 11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354, 15: 3.391, 16: 3.426,
    17: 3.458, 18: 3.489, 19: 3.517, 20: 3.544,
}


@dataclass
class FriedmanResult:
    statistic: float
    p_value: float
    mean_ranks: np.ndarray
    critical_distance: float
    q_alpha: float
    n_problems: int
    n_configs: int

    def significant(self, a: int, b: int) -> bool:
        return abs(self.mean_ranks[a] - self.mean_ranks[b]) > self.critical_distance

    def to_dict(self, labels=None) -> dict:
        labels = list(labels) if labels is not None else list(range(self.n_configs))
        return {
            "friedman_statistic": self.statistic,
            "p_value": self.p_value,
            "critical_distance": self.critical_distance,
            "q_alpha": self.q_alpha,
            "n_problems": self.n_problems,
            "n_configs": self.n_configs,
            "mean_ranks": {str(l): float(r) for l, r in zip(labels, self.mean_ranks)},
        }


def average_ranks(table, higher_is_better: bool = True) -> np.ndarray:
    """Per-row ranks, 1 = best, ties share the average rank."""
    table = np.asarray(table, dtype=np.float64)
    key = -table if higher_is_better else table
    return np.vstack([sps.rankdata(row, method="average") for row in key])


def friedman_nemenyi(table, higher_is_better: bool = True) -> FriedmanResult:
    """Rank configurations (columns) over problems (rows).

    ``table[i, j]`` is the metric of configuration ``j`` on problem ``i``.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2:
        raise ValueError("metric table must be problems x configs")
    n, k = table.shape
    if k < 2 or n < 2:
        raise ValueError(f"need at least 2 configs and 2 problems, got {k} and {n}")
    if k not in NEMENYI_Q05:
        raise ValueError(f"Nemenyi critical values tabulated for k <= 20, got {k}")
    if not np.all(np.isfinite(table)):
        raise ValueError("metric table contains non-finite values")
    ranks = average_ranks(table, higher_is_better)
    mean_ranks = ranks.mean(axis=0)
    sum_sq = float(np.sum(mean_ranks ** 2))
    chi2 = 12.0 * n / (k * (k + 1)) * (sum_sq - k * (k + 1) ** 2 / 4.0)
    chi2 = max(chi2, 0.0)
    p = float(sps.chi2.sf(chi2, k - 1))
    q = NEMENYI_Q05[k]
    cd = q * math.sqrt(k * (k + 1) / (6.0 * n))
    return FriedmanResult(chi2, p, mean_ranks, cd, q, n, k)


def cliques(mean_ranks, cd: float) -> list[tuple[int, ...]]:
    """Maximal groups of configurations whose mean ranks all lie within ``cd``.

    Groups are runs of consecutive configurations in rank order, so a pair
    shares a group exactly when its rank difference is at most ``cd``.
    """
    order = list(np.argsort(mean_ranks, kind="stable"))
    r = np.asarray(mean_ranks)[order]
    groups = []
    for i in range(len(order)):
        j = i
        while j + 1 < len(order) and r[j + 1] - r[i] <= cd:
            j += 1
        if j > i:
            groups.append(tuple(int(x) for x in order[i:j + 1]))
    # drop groups contained in an earlier (longer-reaching) one
    out = []
    for g in groups:
        if not any(set(g) <= set(h) for h in out):
            out.append(g)
    return out
