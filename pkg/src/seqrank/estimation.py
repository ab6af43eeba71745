"""Likelihood machinery on comparison counts.

The win-count matrix is sufficient for the BTL log-likelihood, so every
operation here works from counts: constrained MLE over the support (best of
the per-region concave maxima), suprema over half-space slices, the per-pair
GLR statistics, and the Wald statistics used by the fixed-length baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import UnderdeterminedError
from .model import ModelParams, Pair, all_pairs, pair_index_arrays
from .support import RankPermutation, SupportSpec, rank_of, region_system

MLE_TOL = 1e-8
MLE_MAX_ITER = 500
PRUNE_SLACK = 1e-6
SINGULAR_RTOL = 1e-10


class ComparisonHistory:
    """Win counts of all observed comparisons; wins[i, j] = i beat j."""

    def __init__(self, n_items: int):
        if n_items < 2:
            raise ValueError("need at least 2 items")
        self.wins = np.zeros((n_items, n_items), dtype=np.float64)

    @classmethod
    def from_wins(cls, wins) -> "ComparisonHistory":
        arr = np.asarray(wins, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("wins must be a square matrix")
        if np.any(arr < 0) or np.any(arr != np.floor(arr)):
            raise ValueError("wins must hold nonnegative integer counts")
        if np.any(np.diag(arr) != 0):
            raise ValueError("wins diagonal must be zero")
        hist = cls(arr.shape[0])
        hist.wins = arr.copy()
        return hist

    @property
    def n_items(self) -> int:
        return self.wins.shape[0]

    @property
    def n(self) -> int:
        """Total number of recorded comparisons."""
        return int(round(self.wins.sum()))

    def record(self, pair: Pair, outcome: int) -> None:
        if outcome == 1:
            self.wins[pair.i, pair.j] += 1.0
        else:
            self.wins[pair.j, pair.i] += 1.0

    def copy(self) -> "ComparisonHistory":
        return ComparisonHistory.from_wins(self.wins)


@dataclass(frozen=True)
class GlrTable:
    """Per-pair half-space suprema of the log-likelihood and their gaps."""

    pairs: tuple[Pair, ...]
    sup_first: np.ndarray    # sup over the slice ranking pair.i above pair.j
    sup_second: np.ndarray   # sup over the opposite slice
    statistics: np.ndarray   # absolute differences, one per pair
    global_max: float

    def min_statistic(self) -> float:
        return float(self.statistics.min())


def log_likelihood(history: ComparisonHistory, params: ModelParams) -> float:
    """Sum over pairs of win-count times log win-probability."""
    if params.n_items != history.n_items:
        raise ValueError("dimension mismatch")
    s = params.scores
    d = s[:, None] - s[None, :]
    return float(np.sum(history.wins * -np.logaddexp(0.0, -d)))


def _solve_all_regions(history: ComparisonHistory, spec: SupportSpec):
    """Constrained maxima of l_n over every rank region (cold starts)."""
    sys_ = region_system(spec)
    pi, pj = pair_index_arrays(spec.n_items)
    warm = sys_.centers()
    steps = np.full(sys_.n_regions, -1.0)
    values = np.empty(sys_.n_regions)
    ws = _kernels.make_scratch(spec.n_items)
    _kernels.solve_regions_mle(history.wins, float(history.n), pi, pj,
                               sys_.orders, sys_.pos1, spec.kappa,
                               spec.effective_delta, warm, values,
                               MLE_TOL, MLE_MAX_ITER, ws, steps)
    return values, warm, sys_


def _adjacent_candidates(perm: RankPermutation, depth: int = 2) -> set[tuple[int, ...]]:
    """Permutations within `depth` adjacent transpositions of perm."""
    frontier = {perm.order}
    seen = set(frontier)
    for _ in range(depth):
        nxt = set()
        for order in frontier:
            for k in range(len(order) - 1):
                swapped = list(order)
                swapped[k], swapped[k + 1] = swapped[k + 1], swapped[k]
                nxt.add(tuple(swapped))
        nxt -= seen
        seen |= nxt
        frontier = nxt
    return seen


def mle(history: ComparisonHistory, spec: SupportSpec) -> ModelParams:
    """Maximizer of the log-likelihood over the support.

    Solves the box-relaxed concave problem first and only visits rank
    regions near the relaxed optimum's ranking; falls back to full region
    enumeration unless the pruned best certifiably attains the relaxed
    bound.  An empty history returns the first region's evenly spaced
    interior point (every point is optimal then).
    """
    sys_ = region_system(spec)
    if history.n == 0:
        return ModelParams.from_free(sys_.centers()[0])
    pi, pj = pair_index_arrays(spec.n_items)
    ws = _kernels.make_scratch(spec.n_items)
    n_free = spec.n_items - 1
    x_rel = np.empty(n_free)
    relaxed = _kernels.pgd_mle_box(np.zeros(n_free), history.wins,
                                   float(history.n), pi, pj, spec.kappa,
                                   MLE_TOL, MLE_MAX_ITER, x_rel, ws)
    candidates = _adjacent_candidates(rank_of(ModelParams.from_free(x_rel)))
    centers = sys_.centers()
    best_val, best_x = -np.inf, None
    xout = np.empty(n_free)
    for order in sorted(candidates):  # lexicographic keeps ties deterministic
        r = sys_.index_of_order(order)
        val, _ = _kernels.pgd_mle_region(centers[r], history.wins,
                                         float(history.n), pi, pj,
                                         sys_.orders[r], sys_.pos1[r],
                                         spec.kappa, spec.effective_delta,
                                         MLE_TOL, MLE_MAX_ITER, xout, ws, -1.0)
        if val > best_val:
            best_val, best_x = val, xout.copy()
    if best_val <= relaxed - PRUNE_SLACK:
        values, warm, _ = _solve_all_regions(history, spec)
        best_r = int(np.argmax(values))  # ties resolve to the first region
        best_x = warm[best_r]
    return ModelParams.from_free(best_x)


def sup_over_halfspace(history: ComparisonHistory, spec: SupportSpec,
                       pair: Pair, winner: int) -> tuple[float, ModelParams]:
    """Supremum of l_n over the regions ranking `winner` above its partner."""
    if winner == pair.i:
        loser = pair.j
    elif winner == pair.j:
        loser = pair.i
    else:
        raise ValueError(f"winner {winner} is not in pair ({pair.i}, {pair.j})")
    values, warm, sys_ = _solve_all_regions(history, spec)
    mask = sys_.ranks[:, winner] < sys_.ranks[:, loser]
    idx = np.flatnonzero(mask)
    best = idx[int(np.argmax(values[idx]))]
    return float(values[best]), ModelParams.from_free(warm[best])


def glr_table(history: ComparisonHistory, spec: SupportSpec) -> GlrTable:
    """Both half-space suprema and their absolute gap, for every pair."""
    values, _, sys_ = _solve_all_regions(history, spec)
    pi, pj = pair_index_arrays(spec.n_items)
    above = sys_.above_matrix(pi, pj)
    sup_first = np.array([values[above[:, a]].max() for a in range(len(pi))])
    sup_second = np.array([values[~above[:, a]].max() for a in range(len(pi))])
    return GlrTable(
        pairs=all_pairs(spec.n_items),
        sup_first=sup_first,
        sup_second=sup_second,
        statistics=np.abs(sup_first - sup_second),
        global_max=float(values.max()),
    )


def glr_from_region_values(n_items: int, values: np.ndarray,
                           above: np.ndarray) -> GlrTable:
    """Assemble a GlrTable from precomputed per-region maxima (hot path)."""
    n_pairs_ = above.shape[1]
    sup_first = np.empty(n_pairs_)
    sup_second = np.empty(n_pairs_)
    for a in range(n_pairs_):
        sup_first[a] = values[above[:, a]].max()
        sup_second[a] = values[~above[:, a]].max()
    return GlrTable(
        pairs=all_pairs(n_items),
        sup_first=sup_first,
        sup_second=sup_second,
        statistics=np.abs(sup_first - sup_second),
        global_max=float(values.max()),
    )


def observed_information(history: ComparisonHistory, params: ModelParams) -> np.ndarray:
    """Observed Fisher information of l_n at params, free coordinates only."""
    k = history.n_items
    s = params.scores
    info = np.zeros((k - 1, k - 1))
    for pair in all_pairs(k):
        i, j = pair.i, pair.j
        n_ij = history.wins[i, j] + history.wins[j, i]
        if n_ij == 0:
            continue
        d = s[i] - s[j]
        p = 1.0 / (1.0 + np.exp(-d)) if d >= 0 else np.exp(d) / (1.0 + np.exp(d))
        w = n_ij * p * (1.0 - p)
        v = np.zeros(k - 1)
        if i != 0:
            v[i - 1] = 1.0
        if j != 0:
            v[j - 1] = -1.0
        info += w * np.outer(v, v)
    return info


def wald_statistics(history: ComparisonHistory, mle_params: ModelParams) -> np.ndarray:
    """Standardized score differences Z_ij = (theta_i - theta_j) / se_ij.

    The standard error comes from the delta method on the inverse observed
    information; raises UnderdeterminedError when the comparison graph
    leaves the information singular.
    """
    if history.n == 0:
        raise UnderdeterminedError("no comparisons recorded")
    info = observed_information(history, mle_params)
    eigs = np.linalg.eigvalsh(info)
    if eigs[0] <= SINGULAR_RTOL * max(1.0, eigs[-1]):
        raise UnderdeterminedError("observed information is singular")
    cov = np.linalg.inv(info)
    s = mle_params.scores
    out = np.empty(len(all_pairs(history.n_items)))
    for a, pair in enumerate(all_pairs(history.n_items)):
        i, j = pair.i, pair.j
        if i == 0:
            var = cov[j - 1, j - 1]
        else:
            var = cov[i - 1, i - 1] + cov[j - 1, j - 1] - 2.0 * cov[i - 1, j - 1]
        out[a] = (s[i] - s[j]) / np.sqrt(var)
    return out
