"""Two-sample permutation test on the absolute difference of means."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations
from math import comb

import numpy as np

EXHAUSTIVE_LIMIT = 10_000
DEFAULT_PERMUTATIONS = 10_000
_BATCH = 2_000


@dataclass(frozen=True)
class PermutationTestResult:
    statistic: float
    p_value: float
    n_permutations: int
    exhaustive: bool
    alpha: float
    degenerate: bool = False

    @property
    def decision(self) -> str:
        return "reject" if self.p_value < self.alpha else "accept"

    def to_dict(self) -> dict:
        return {**asdict(self), "decision": self.decision}


def _at_least(stats: np.ndarray, observed: float) -> int:
    # tolerate float noise so exact ties with the observed split count
    return int(np.count_nonzero(stats >= observed - 1e-12 * max(1.0, abs(observed))))


def permutation_test(a, b, n_perms: int = DEFAULT_PERMUTATIONS, alpha: float = 0.05,
                     seed: int = 0, exhaustive_limit: int = EXHAUSTIVE_LIMIT) -> PermutationTestResult:
    """Test whether ``a`` and ``b`` come from one distribution.

    All relabelings are enumerated when there are at most ``exhaustive_limit``
    of them (the p-value is then the exact fraction at least as extreme as the
    observed split, which is itself counted). Otherwise ``n_perms`` seeded
    random relabelings are drawn and p = (1 + hits) / (1 + n_perms).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    pooled = np.concatenate([a, b])
    na, n = len(a), len(pooled)
    observed = abs(a.mean() - b.mean())
    if np.ptp(pooled) == 0:
        return PermutationTestResult(0.0, 1.0, 0, True, alpha, degenerate=True)

    total = pooled.sum()
    n_splits = comb(n, na)
    if n_splits <= exhaustive_limit:
        idx = np.array(list(combinations(range(n), na)), dtype=np.int64)
        sums = pooled[idx].sum(axis=1)
        stats = np.abs(sums / na - (total - sums) / (n - na))
        return PermutationTestResult(float(observed), _at_least(stats, observed) / n_splits,
                                     n_splits, True, alpha)

    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n_perms:
        m = min(_BATCH, n_perms - done)
        perm = rng.permuted(np.tile(pooled, (m, 1)), axis=1)
        sums = perm[:, :na].sum(axis=1)
        stats = np.abs(sums / na - (total - sums) / (n - na))
        hits += _at_least(stats, observed)
        done += m
    return PermutationTestResult(float(observed), (1 + hits) / (1 + n_perms), n_perms, False, alpha)
