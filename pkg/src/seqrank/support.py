"""Geometry of the prior support.

The support is a sup-norm box of radius kappa on the free scores intersected
with pairwise separation |theta_i - theta_j| >= delta (item 1 included at
score 0).  It decomposes into K! convex rank regions, one per permutation,
each carrying the chain constraints theta_{order[k]} - theta_{order[k+1]}
>= delta.  A mis-specified support drops the separation (box-only form).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import CapacityError, SamplingError, ValidationError
from .model import ModelParams, Pair

MAX_ITEMS = 8
REJECTION_LIMIT = 10 ** 6


@dataclass(frozen=True)
class SupportSpec:
    """Box bound, pairwise separation, and the mis-specification flag."""

    n_items: int
    kappa: float
    delta: float = 0.0
    misspecified: bool = False

    def __post_init__(self):
        if self.n_items < 2:
            raise ValidationError("n_items: must be at least 2")
        if not (self.kappa > 0.0 and np.isfinite(self.kappa)):
            raise ValidationError("kappa: must be a positive finite real")
        if not (self.delta >= 0.0 and np.isfinite(self.delta)):
            raise ValidationError("delta: must be a nonnegative finite real")
        # Every rank region needs nonempty interior. The binding case puts
        # item 1 at an end of the chain, stacking K-1 gaps inside the box.
        if not self.misspecified and self.delta > 0.0:
            if self.delta * (self.n_items - 1) >= self.kappa:
                raise ValidationError(
                    "delta: separation too large, a rank region would be empty "
                    f"(needs delta < kappa/(K-1) = {self.kappa / (self.n_items - 1):g})"
                )

    @property
    def effective_delta(self) -> float:
        """Separation actually enforced: 0 when the support is mis-specified."""
        return 0.0 if self.misspecified else self.delta


@dataclass(frozen=True)
class RankPermutation:
    """Items listed by descending score: order[k] holds rank k+1 (0-based ids)."""

    order: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ValueError(f"not a permutation of 0..{len(self.order) - 1}: {self.order}")

    @property
    def n_items(self) -> int:
        return len(self.order)

    def one_based(self) -> tuple[int, ...]:
        """Human-facing form: items numbered from 1."""
        return tuple(i + 1 for i in self.order)

    def rank_positions(self) -> tuple[int, ...]:
        """positions[item] = rank index (0 = top)."""
        pos = [0] * len(self.order)
        for k, item in enumerate(self.order):
            pos[item] = k
        return tuple(pos)

    def places_above(self, i: int, j: int) -> bool:
        """Pairwise decision: True iff item i precedes item j."""
        pos = self.rank_positions()
        return pos[i] < pos[j]


@dataclass(frozen=True)
class RankRegion:
    """One convex rank region: a permutation plus its chain/box constraints."""

    perm: RankPermutation
    kappa: float
    delta: float

    @property
    def n_items(self) -> int:
        return self.perm.n_items

    @property
    def pos_item1(self) -> int:
        return self.perm.order.index(0)

    def order_array(self) -> np.ndarray:
        return np.array(self.perm.order, dtype=np.int64)

    def center(self) -> np.ndarray:
        """Interior point with evenly spaced scores (free coords)."""
        out = np.empty(self.n_items - 1)
        _kernels.region_center(self.order_array(), self.pos_item1,
                               self.kappa, self.delta, out)
        return out

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Constraint system A x <= b on the free coordinates."""
        K = self.n_items
        n = K - 1
        rows, rhs = [], []
        full = np.zeros((len(self.perm.order), K))
        for k, item in enumerate(self.perm.order):
            if item != 0:
                full[k, item] = 1.0
        for k in range(K - 1):
            # theta_{order[k+1]} - theta_{order[k]} <= -delta
            row = full[k + 1] - full[k]
            rows.append(row[1:])
            rhs.append(-self.delta)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e.copy())
            rhs.append(self.kappa)
            rows.append(-e)
            rhs.append(self.kappa)
        return np.array(rows), np.array(rhs)

    def contains_point(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        a, b = self.halfspaces()
        return bool(np.all(a @ np.asarray(x, dtype=float) <= b + tol))


class RegionSystem:
    """Array form of all rank regions of a support, shared by the solvers."""

    def __init__(self, spec: SupportSpec):
        K = spec.n_items
        if K > MAX_ITEMS:
            raise CapacityError(
                f"n_items: region enumeration capped at {MAX_ITEMS} items "
                f"({MAX_ITEMS}! = 40320 regions), got {K}"
            )
        perms = list(itertools.permutations(range(K)))
        self.spec = spec
        self.perms = tuple(RankPermutation(p) for p in perms)
        self.orders = np.array(perms, dtype=np.int64)
        self.pos1 = np.array([p.index(0) for p in perms], dtype=np.int64)
        ranks = np.empty((len(perms), K), dtype=np.int64)
        for r, p in enumerate(perms):
            for pos, item in enumerate(p):
                ranks[r, item] = pos
        self.ranks = ranks
        self._index = {p: r for r, p in enumerate(perms)}

    @property
    def n_regions(self) -> int:
        return self.orders.shape[0]

    def region_of(self, perm: RankPermutation) -> int:
        return self._index[perm.order]

    def index_of_order(self, order: tuple[int, ...]) -> int:
        return self._index[order]

    def regions(self) -> list[RankRegion]:
        d = self.spec.effective_delta
        return [RankRegion(p, self.spec.kappa, d) for p in self.perms]

    def centers(self) -> np.ndarray:
        out = np.empty((self.n_regions, self.spec.n_items - 1))
        d = self.spec.effective_delta
        for r in range(self.n_regions):
            _kernels.region_center(self.orders[r], self.pos1[r],
                                   self.spec.kappa, d, out[r])
        return out

    def above_matrix(self, pi: np.ndarray, pj: np.ndarray) -> np.ndarray:
        """above[r, a] is True iff region r ranks pair a's first item higher."""
        return self.ranks[:, pi] < self.ranks[:, pj]


@lru_cache(maxsize=16)
def region_system(spec: SupportSpec) -> RegionSystem:
    return RegionSystem(spec)


def rank_of(params: ModelParams) -> RankPermutation:
    """Permutation sorting scores descending; ties go to the smaller index."""
    order = np.argsort(-params.scores, kind="stable")
    return RankPermutation(tuple(int(i) for i in order))


def contains(spec: SupportSpec, params: ModelParams) -> bool:
    """Membership in the support (box plus separation unless mis-specified).

    Comparisons carry a 1e-12 floating tolerance so that projected boundary
    points (gap exactly delta up to rounding) count as members.
    """
    if params.n_items != spec.n_items:
        raise ValueError("dimension mismatch between spec and params")
    tol = 1e-12
    s = params.scores
    if np.any(np.abs(s[1:]) > spec.kappa + tol):
        return False
    d = spec.effective_delta
    if d > 0.0:
        gaps = np.abs(s[:, None] - s[None, :])
        iu = np.triu_indices(spec.n_items, k=1)
        if np.any(gaps[iu] < d - tol):
            return False
    return True


def enumerate_regions(spec: SupportSpec) -> list[RankRegion]:
    """All K! rank regions of the support, lexicographic permutation order."""
    return region_system(spec).regions()


def half_space_regions(spec: SupportSpec, pair: Pair, winner: int) -> list[RankRegion]:
    """Rank regions placing `winner` (one of the pair's items) above the other.

    The union of the returned regions is the half-space slice of the support
    where the winner's score is the larger one.
    """
    if winner == pair.i:
        loser = pair.j
    elif winner == pair.j:
        loser = pair.i
    else:
        raise ValueError(f"winner {winner} is not in pair ({pair.i}, {pair.j})")
    return [reg for reg in enumerate_regions(spec) if reg.perm.places_above(winner, loser)]


def sample_uniform(spec: SupportSpec, rng: np.random.Generator) -> ModelParams:
    """Uniform draw from the support by rejection from its bounding box."""
    n = spec.n_items - 1
    for _ in range(REJECTION_LIMIT):
        free = rng.uniform(-spec.kappa, spec.kappa, size=n)
        params = ModelParams.from_free(free)
        if contains(spec, params):
            return params
    raise SamplingError(
        f"rejection sampling exceeded {REJECTION_LIMIT} draws; support too thin"
    )


def project_to_region(region: RankRegion, point: np.ndarray) -> np.ndarray:
    """Euclidean projection of free coordinates onto the region polytope."""
    x = np.asarray(point, dtype=np.float64)
    if x.shape != (region.n_items - 1,):
        raise ValueError(f"point must have shape ({region.n_items - 1},)")
    out = np.empty_like(x)
    ws = _kernels.make_scratch(region.n_items)
    _kernels.project_region_ws(x, region.order_array(), region.pos_item1,
                               region.kappa, region.delta, out, ws)
    return out
