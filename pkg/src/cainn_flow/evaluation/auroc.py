"""Area under the ROC curve with half credit for ties (Mann-Whitney convention)."""

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from ..utils.errors import ContractError

BRUTEFORCE_PAIR_LIMIT = 10_000_000


def _as_scores(values: Sequence[float], name: str) -> np.ndarray:
    scores = np.asarray(values, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ContractError(f"AUROC needs at least one {name} score")
    if not np.all(np.isfinite(scores)):
        raise ContractError(f"AUROC {name} scores must be finite")
    return scores


def auroc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """
    Probability that a positive outscores a negative, ties counted as one half.

    Uses the rank-sum identity with average ranks for tie groups, O(n log n).

    Raises:
        ContractError: If either list is empty
    """
    pos = _as_scores(pos_scores, "positive")
    neg = _as_scores(neg_scores, "negative")
    m, n = pos.size, neg.size
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    u_statistic = ranks[:m].sum() - m * (m + 1) / 2.0
    return float(u_statistic / (m * n))


def auroc_bruteforce(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """
    Pair-counting AUROC, the reference :func:`auroc` is checked against.

    Raises:
        ContractError: If either list is empty or M*N exceeds 1e7 pairs
    """
    pos = _as_scores(pos_scores, "positive")
    neg = _as_scores(neg_scores, "negative")
    if pos.size * neg.size > BRUTEFORCE_PAIR_LIMIT:
        raise ContractError(
            f"Brute-force AUROC limited to {BRUTEFORCE_PAIR_LIMIT} pairs, "
            f"got {pos.size * neg.size}"
        )
    credit = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                credit += 1.0
            elif p == q:
                credit += 0.5
    return credit / (pos.size * neg.size)
