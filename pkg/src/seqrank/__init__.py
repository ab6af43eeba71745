"""Sequential rank aggregation from pairwise comparisons."""

__version__ = "0.1.0"

from .design import SelectionDistribution, d_value, inner_min, mirror_descent, t_c
from .estimation import ComparisonHistory, glr_table, log_likelihood, mle, wald_statistics
from .model import ModelParams, Pair, pair_kl, sample_outcome, win_probability
from .policy import PolicyConfig, TrialResult, h_of_c, kendall_loss, run_trial
from .simulation import ExperimentSpec, estimate_e_tc, run_study
from .support import SupportSpec, contains, enumerate_regions, rank_of, sample_uniform

__all__ = [
    "ComparisonHistory",
    "ExperimentSpec",
    "ModelParams",
    "Pair",
    "PolicyConfig",
    "SelectionDistribution",
    "SupportSpec",
    "TrialResult",
    "contains",
    "d_value",
    "enumerate_regions",
    "estimate_e_tc",
    "glr_table",
    "h_of_c",
    "inner_min",
    "kendall_loss",
    "log_likelihood",
    "mirror_descent",
    "mle",
    "pair_kl",
    "rank_of",
    "run_study",
    "run_trial",
    "sample_outcome",
    "sample_uniform",
    "t_c",
    "wald_statistics",
    "win_probability",
]
