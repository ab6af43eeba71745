"""Bradley-Terry comparison model.

Item ``i`` beats item ``j`` with probability ``logistic(scores[i] - scores[j])``.
The first item's score is pinned at 0 so the remaining scores are identified.
All indices are 0-based here; human-facing layers convert to 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Comparison outcome: 1 means the lower-indexed item of the pair won.
Outcome = int

KL_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Latent score vector of length K with scores[0] identically 0."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.shape[0] < 2:
            raise ValueError("scores must be a vector of length >= 2")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if scores[0] != 0.0:
            raise ValueError("scores[0] must be exactly 0 (identifiability pin)")
        scores = scores.copy()
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def n_items(self) -> int:
        return self.scores.shape[0]

    @property
    def free(self) -> np.ndarray:
        """The K-1 unpinned coordinates (scores of items 2..K)."""
        return self.scores[1:]

    @classmethod
    def from_free(cls, free: np.ndarray) -> "ModelParams":
        free = np.asarray(free, dtype=np.float64)
        return cls(np.concatenate(([0.0], free)))


@dataclass(frozen=True)
class Pair:
    """Unordered item pair, stored with i < j."""

    i: int
    j: int

    def __post_init__(self):
        if not (0 <= self.i < self.j):
            raise ValueError(f"pair must satisfy 0 <= i < j, got ({self.i}, {self.j})")

    def index(self, n_items: int) -> int:
        """Canonical flat index: lexicographic position among all i<j pairs."""
        i, j = self.i, self.j
        if j >= n_items:
            raise ValueError(f"pair ({i}, {j}) out of range for {n_items} items")
        return i * n_items - i * (i + 1) // 2 + (j - i - 1)

    def one_based(self) -> tuple[int, int]:
        return (self.i + 1, self.j + 1)


@lru_cache(maxsize=32)
def all_pairs(n_items: int) -> tuple[Pair, ...]:
    """All canonical pairs in flat-index order."""
    return tuple(Pair(i, j) for i in range(n_items) for j in range(i + 1, n_items))


@lru_cache(maxsize=32)
def pair_index_arrays(n_items: int) -> tuple[np.ndarray, np.ndarray]:
    """Parallel (pi, pj) int64 arrays over the canonical pairs."""
    pairs = all_pairs(n_items)
    pi = np.array([p.i for p in pairs], dtype=np.int64)
    pj = np.array([p.j for p in pairs], dtype=np.int64)
    pi.flags.writeable = False
    pj.flags.writeable = False
    return pi, pj


def n_pairs(n_items: int) -> int:
    return n_items * (n_items - 1) // 2


def _logistic(d: float) -> float:
    if d >= 0.0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def _log_logistic(d: float) -> float:
    if d >= 0.0:
        return -math.log1p(math.exp(-d))
    return d - math.log1p(math.exp(d))


def win_probability(params: ModelParams, pair: Pair) -> float:
    """Probability that pair.i beats pair.j, strictly inside (0, 1)."""
    p = _logistic(params.scores[pair.i] - params.scores[pair.j])
    # keep the open interval even where the logistic saturates in float64
    return min(max(p, 5e-324), math.nextafter(1.0, 0.0))


def log_pmf(params: ModelParams, pair: Pair, outcome: Outcome) -> float:
    """Log probability of the observed outcome for this pair."""
    d = params.scores[pair.i] - params.scores[pair.j]
    return _log_logistic(d) if outcome == 1 else _log_logistic(-d)


def pair_kl(params: ModelParams, alt: ModelParams, pair: Pair) -> float:
    """Bernoulli KL divergence between the two models' outcome laws on a pair."""
    if params.n_items != alt.n_items:
        raise ValueError("parameter vectors must have the same length")
    p = win_probability(params, pair)
    q = win_probability(alt, pair)
    # defensive: BTL on a bounded support never reaches 0/1, but guard the logs
    q = min(max(q, KL_PROB_FLOOR), 1.0 - KL_PROB_FLOOR)
    return p * math.log(p / q) + (1.0 - p) * math.log((1.0 - p) / (1.0 - q))


def sample_outcome(params: ModelParams, pair: Pair, rng: np.random.Generator) -> Outcome:
    """Draw one comparison outcome; 1 means pair.i won."""
    return int(rng.random() < win_probability(params, pair))
