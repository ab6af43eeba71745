"""Sequential ranking policy.

One trial runs the adaptive loop: refresh the constrained MLE, solve the
max-min design at the estimate, draw the next pair epsilon-greedily (or
uniformly / by smallest Wald statistic for the baselines), observe the
comparison, and stop once the per-pair GLR evidence crosses the threshold
h(c) = |log c| (1 + |log c|^-alpha), either in sum form (T1) or min form
(T2).  The final decision is the ranking induced by the MLE at stopping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .design import SelectionDistribution
from .errors import UnderdeterminedError, ValidationError
from .estimation import (
    ComparisonHistory,
    GlrTable,
    glr_from_region_values,
    wald_statistics,
)
from .model import ModelParams, Pair, all_pairs, pair_index_arrays, win_probability
from .support import RankPermutation, SupportSpec, rank_of, region_system

SELECTIONS = ("optimal", "uniform", "wald")
STOPPINGS = ("T1", "T2", "fixed")

EXPLORE_CAP = 0.25
MLE_TOL = 1e-8
MLE_MAX_ITER = 500
LOOP_INNER_TOL = 1e-5
LOOP_INNER_ITER = 100
LOOP_FINAL_TOL = 1e-7
LOOP_FINAL_ITER = 500


@dataclass(frozen=True)
class PolicyConfig:
    """Knobs of one sequential run; defaults follow the shipped studies."""

    c: float
    alpha: float = 0.5
    explore_p: float | str = "auto"
    selection: str = "optimal"
    stopping: str = "T2"
    fixed_length: int | None = None
    design_iterations: int = 400
    design_c0: float = 2.0
    max_steps: int = 10 ** 6
    lazy_design: bool = False
    record_trajectory: bool = False
    seed: int | None = None

    def __post_init__(self):
        if self.selection not in SELECTIONS:
            raise ValidationError(f"selection: must be one of {SELECTIONS}")
        if self.stopping not in STOPPINGS:
            raise ValidationError(f"stopping: must be one of {STOPPINGS}")
        if self.stopping == "fixed":
            if self.fixed_length is None or self.fixed_length < 1:
                raise ValidationError("fixed_length: required (>= 1) for fixed stopping")
            if self.c < 0.0:
                raise ValidationError("c: must be nonnegative")
        else:
            if not (0.0 < self.c < 1.0):
                raise ValidationError("c: must lie in (0, 1) for T1/T2 stopping")
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError("alpha: must lie in (0, 1)")
        if self.explore_p != "auto" and not (0.0 < float(self.explore_p) <= 1.0):
            raise ValidationError("explore_p: must be 'auto' or lie in (0, 1]")
        if self.max_steps < 1:
            raise ValidationError("max_steps: must be at least 1")
        if self.design_iterations < 1:
            raise ValidationError("design_iterations: must be at least 1")
        if not (self.design_c0 > 0.0):
            raise ValidationError("design_c0: must be positive")
        if self.selection == "wald" and self.stopping != "fixed":
            raise ValidationError("selection: the Wald baseline uses fixed-length stopping")

    def resolved_explore_p(self) -> float:
        """Exploration probability; 'auto' scales like |log c|^(-1/4), capped."""
        if self.explore_p != "auto":
            return float(self.explore_p)
        if not (0.0 < self.c < 1.0):
            return EXPLORE_CAP
        return min(EXPLORE_CAP, abs(math.log(self.c)) ** -0.25)


@dataclass
class PolicyState:
    """What the selection and stopping rules see at step n."""

    history: ComparisonHistory
    step: int
    cached_mle: ModelParams
    cached_lambda: SelectionDistribution


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    pair: tuple[int, int]        # 1-based item ids
    outcome: int
    min_glr: float
    t1_logsum: float
    mle_scores: tuple[float, ...]


@dataclass(frozen=True)
class TrialResult:
    stopping_time: int
    decision: RankPermutation
    kendall_loss: int
    realized_risk: float
    truncated: bool
    trajectory: tuple[TrajectoryRecord, ...] | None = None


def h_of_c(c: float, alpha: float) -> float:
    """Stopping threshold |log c| (1 + |log c|^-alpha)."""
    if not (0.0 < c < 1.0):
        raise ValidationError("c: must lie in (0, 1)")
    if not (0.0 < alpha < 1.0):
        raise ValidationError("alpha: must lie in (0, 1)")
    logc = abs(math.log(c))
    return logc * (1.0 + logc ** -alpha)


def t1_logsum(glr: GlrTable) -> float:
    """log sum_a exp(-GLR_a), evaluated stably (the T1 statistic)."""
    stats = glr.statistics
    m = float(np.max(-stats))
    return m + math.log(float(np.sum(np.exp(-stats - m))))


def mixed_distribution(config: PolicyConfig, lam: SelectionDistribution) -> np.ndarray:
    """Realized per-pair law of the epsilon-greedy draw."""
    p = config.resolved_explore_p()
    n = lam.weights.shape[0]
    return p / n + (1.0 - p) * lam.weights


def select_pair(state: PolicyState, config: PolicyConfig,
                rng: np.random.Generator) -> Pair:
    """Draw the next pair under the configured selection rule."""
    pairs = all_pairs(state.history.n_items)
    n = len(pairs)
    if config.selection == "uniform":
        return pairs[int(rng.integers(n))]
    if config.selection == "wald":
        try:
            z = wald_statistics(state.history, state.cached_mle)
        except UnderdeterminedError:
            return pairs[int(rng.integers(n))]
        absz = np.abs(z)
        tied = np.flatnonzero(absz == absz.min())
        return pairs[int(tied[rng.integers(len(tied))])]
    # epsilon-greedy around the design solution
    if rng.random() < config.resolved_explore_p():
        return pairs[int(rng.integers(n))]
    cum = np.cumsum(state.cached_lambda.weights)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return pairs[min(idx, n - 1)]


def should_stop(state: PolicyState, config: PolicyConfig, glr: GlrTable | None) -> bool:
    """Evaluate the stopping rule on the current evidence (n > 1 for T1/T2)."""
    n = state.step
    if config.stopping == "fixed":
        if n >= config.fixed_length:
            return True
    elif n > 1:
        h = h_of_c(config.c, config.alpha)
        if config.stopping == "T2":
            if glr.min_statistic() >= h:
                return True
        else:
            if t1_logsum(glr) <= -h:
                return True
    return n >= config.max_steps


def final_decision(state: PolicyState) -> RankPermutation:
    """Ranking induced by the MLE at the stopping time."""
    return rank_of(state.cached_mle)


def kendall_loss(decision: RankPermutation, truth: ModelParams) -> int:
    """Number of item pairs the decision orders against the true scores."""
    pos = decision.rank_positions()
    s = truth.scores
    loss = 0
    k = truth.n_items
    for i in range(k):
        for j in range(i + 1, k):
            above = pos[i] < pos[j]
            if s[i] > s[j] and not above:
                loss += 1
            elif s[i] < s[j] and above:
                loss += 1
    return loss


class _TrialEngine:
    """Per-trial solver state: warm starts persist across steps."""

    def __init__(self, spec: SupportSpec, config: PolicyConfig):
        self.spec = spec
        self.config = config
        self.sys = region_system(spec)
        self.pi, self.pj = pair_index_arrays(spec.n_items)
        self.n_pairs = len(self.pi)
        self.above = self.sys.above_matrix(self.pi, self.pj)
        self.ws = _kernels.make_scratch(spec.n_items)
        self.mle_warm = self.sys.centers()
        self.mle_steps = np.full(self.sys.n_regions, -1.0)
        self.region_values = np.empty(self.sys.n_regions)
        self.inner_warm = self.sys.centers()
        self.inner_steps = np.full(self.sys.n_regions, 2.0)
        self.lam = np.full(self.n_pairs, 1.0 / self.n_pairs)
        self.lam_hat = np.empty(self.n_pairs)
        self.p_hat = np.empty(self.n_pairs)
        self._wrong = {}

    def estimate(self, history: ComparisonHistory) -> tuple[ModelParams, GlrTable]:
        _kernels.solve_regions_mle(
            history.wins, float(history.n), self.pi, self.pj, self.sys.orders,
            self.sys.pos1, self.spec.kappa, self.spec.effective_delta,
            self.mle_warm, self.region_values, MLE_TOL, MLE_MAX_ITER, self.ws,
            self.mle_steps)
        best = int(np.argmax(self.region_values))
        mle = ModelParams.from_free(self.mle_warm[best].copy())
        glr = glr_from_region_values(self.spec.n_items, self.region_values,
                                     self.above)
        return mle, glr

    def wrong_indices(self, own: int) -> np.ndarray:
        if own not in self._wrong:
            self._wrong[own] = np.array(
                [r for r in range(self.sys.n_regions) if r != own], dtype=np.int64)
        return self._wrong[own]

    def solve_design(self, theta: ModelParams) -> SelectionDistribution:
        if self.n_pairs == 1:
            self.lam_hat[0] = 1.0
            return SelectionDistribution(np.array([1.0]))
        _kernels.pair_probs(np.ascontiguousarray(theta.free), self.pi, self.pj,
                            self.p_hat)
        own = self.sys.region_of(rank_of(theta))
        _kernels.mirror_descent_kernel(
            self.p_hat, self.lam, self.pi, self.pj, self.sys.orders,
            self.sys.pos1, self.sys.ranks, self.wrong_indices(own),
            self.spec.kappa, self.spec.effective_delta, self.inner_warm,
            self.config.design_iterations, self.config.design_c0,
            LOOP_INNER_TOL, LOOP_INNER_ITER, LOOP_FINAL_TOL, LOOP_FINAL_ITER,
            self.lam_hat, self.ws, self.inner_steps)
        self.lam[:] = self.lam_hat  # warm start for the next step
        return SelectionDistribution(self.lam_hat / self.lam_hat.sum())


def run_trial(truth: ModelParams, spec: SupportSpec, config: PolicyConfig,
              rng: np.random.Generator | None = None) -> TrialResult:
    """Execute one sequential trial against a fixed truth.

    `spec` is the support the policy assumes; mis-specified runs pass the
    box-only support here while the truth is drawn elsewhere.  Deterministic
    given the generator state.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    k = spec.n_items
    if truth.n_items != k:
        raise ValidationError("truth dimension does not match the support")
    pairs = all_pairs(k)
    n_pairs_ = len(pairs)
    p_true = np.array([win_probability(truth, p) for p in pairs])
    engine = _TrialEngine(spec, config)
    history = ComparisonHistory(k)
    state = PolicyState(
        history=history,
        step=0,
        cached_mle=ModelParams.from_free(engine.sys.centers()[0]),
        cached_lambda=SelectionDistribution.uniform(n_pairs_),
    )
    # per-step estimation is needed for GLR stopping, adaptive selection,
    # or trajectory logging; the plain fixed-length baseline skips it
    per_step_estimation = (config.stopping in ("T1", "T2")
                           or config.selection in ("optimal", "wald")
                           or config.record_trajectory)
    trajectory: list[TrajectoryRecord] | None = (
        [] if config.record_trajectory else None)
    explore_p = config.resolved_explore_p()
    glr: GlrTable | None = None

    def observe(pair: Pair) -> None:
        outcome = int(rng.random() < p_true[pair.index(k)])
        history.record(pair, outcome)
        state.step += 1
        nonlocal glr
        if per_step_estimation:
            state.cached_mle, glr = engine.estimate(history)
        if trajectory is not None:
            trajectory.append(TrajectoryRecord(
                step=state.step,
                pair=pair.one_based(),
                outcome=outcome,
                min_glr=float(glr.min_statistic()),
                t1_logsum=float(t1_logsum(glr)),
                mle_scores=tuple(float(v) for v in state.cached_mle.scores),
            ))

    # initialization: one uniformly sampled pair
    observe(pairs[int(rng.integers(n_pairs_))])
    truncated = False
    while True:
        if should_stop(state, config, glr):
            natural = (state.step >= config.fixed_length
                       if config.stopping == "fixed" else
                       state.step > 1 and (
                           glr.min_statistic() >= h_of_c(config.c, config.alpha)
                           if config.stopping == "T2" else
                           t1_logsum(glr) <= -h_of_c(config.c, config.alpha)))
            truncated = not natural
            break
        if config.selection == "optimal":
            if config.lazy_design:
                explore = rng.random() < explore_p
                if not explore:
                    state.cached_lambda = engine.solve_design(state.cached_mle)
            else:
                state.cached_lambda = engine.solve_design(state.cached_mle)
                explore = rng.random() < explore_p
            if explore:
                pair = pairs[int(rng.integers(n_pairs_))]
            else:
                cum = np.cumsum(state.cached_lambda.weights)
                idx = int(np.searchsorted(cum, rng.random(), side="right"))
                pair = pairs[min(idx, n_pairs_ - 1)]
        else:
            pair = select_pair(state, config, rng)
        observe(pair)

    if not per_step_estimation:
        state.cached_mle, glr = engine.estimate(history)
    decision = final_decision(state)
    loss = kendall_loss(decision, truth)
    return TrialResult(
        stopping_time=state.step,
        decision=decision,
        kendall_loss=loss,
        realized_risk=loss + config.c * state.step,
        truncated=truncated,
        trajectory=tuple(trajectory) if trajectory is not None else None,
    )
