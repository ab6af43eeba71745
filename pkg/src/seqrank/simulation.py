"""Monte Carlo harness for the two simulation studies.

A study is a grid of cells (policy x cost, or baseline x fixed length); each
cell runs independently seeded trials against fresh prior draws and reduces
to one aggregate row.  Seeds derive from a stable 64-bit hash of
(master seed, cell id, repetition), so adding cells never perturbs the
streams of existing ones.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .design import mirror_descent
from .errors import IndistinguishableError, ValidationError
from .policy import PolicyConfig, h_of_c, run_trial
from .support import SupportSpec, sample_uniform

D_FLOOR = 1e-10

CSV_COLUMNS = (
    "study", "policy", "selection", "stopping", "c", "h_c", "fixed_N",
    "reps", "mean_kendall", "se_kendall", "mean_T", "se_T", "mean_risk",
    "se_risk", "e_tc_hat", "se_e_tc", "ratio", "truncated",
)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary hashable parts."""
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one study needs; a pure function of this is the output."""

    study: str
    support_true: SupportSpec
    c_list: tuple[float, ...] = ()
    reps: int = 300
    policies: tuple[tuple[str, str], ...] = (("optimal", "T1"), ("optimal", "T2"))
    fixed_lengths: tuple[int, ...] = ()
    support_policy: SupportSpec | None = None
    tc_samples: int = 300
    alpha: float = 0.5
    explore_p: float | str = "auto"
    design_iterations: int = 400
    design_c0: float = 2.0
    standalone_iterations: int = 2000
    max_steps: int = 10 ** 6
    seed: int = 0
    threads: int = 1
    output_path: str | None = None

    def __post_init__(self):
        if self.study not in ("study1", "study2"):
            raise ValidationError("study: must be 'study1' or 'study2'")
        if self.reps < 1:
            raise ValidationError("reps: must be at least 1")
        for idx, c in enumerate(self.c_list):
            if not (0.0 < c < 1.0):
                raise ValidationError(f"c_list[{idx}]: must lie in (0, 1)")
        if list(self.c_list) != sorted(self.c_list, reverse=True):
            raise ValidationError("c_list: must be sorted descending (increasing |log c|)")
        for idx, (sel, stop) in enumerate(self.policies):
            if sel not in ("optimal", "uniform", "wald"):
                raise ValidationError(f"policies[{idx}]: unknown selection {sel!r}")
            if stop not in ("T1", "T2", "fixed"):
                raise ValidationError(f"policies[{idx}]: unknown stopping {stop!r}")
            if stop == "fixed" and not self.fixed_lengths:
                raise ValidationError(
                    f"policies[{idx}]: fixed stopping needs fixed_lengths")
            if stop != "fixed" and not self.c_list:
                raise ValidationError(f"policies[{idx}]: {stop} stopping needs c_list")
        for idx, n in enumerate(self.fixed_lengths):
            if n < 1:
                raise ValidationError(f"fixed_lengths[{idx}]: must be at least 1")
        if self.tc_samples < 1:
            raise ValidationError("tc_samples: must be at least 1")

    @property
    def policy_support(self) -> SupportSpec:
        return self.support_policy if self.support_policy is not None else self.support_true


@dataclass(frozen=True)
class AggregateRow:
    """One CSV row: a (policy, cost-or-length) cell reduced over its reps."""

    study: str
    policy: str
    selection: str
    stopping: str
    c: float | None
    h_c: float | None
    fixed_n: int | None
    reps: int
    mean_kendall: float
    se_kendall: float
    mean_t: float
    se_t: float
    mean_risk: float
    se_risk: float
    e_tc_hat: float | None
    se_e_tc: float | None
    ratio: float | None
    truncated: int


class EtcEstimate(NamedTuple):
    mean: float
    stderr: float
    degenerate: bool


_D_SAMPLE_CACHE: dict[tuple, np.ndarray] = {}


def _d_samples(support: SupportSpec, n_samples: int, iterations: int,
               master_seed: int) -> np.ndarray:
    """Design values at shared prior draws (common random numbers across c)."""
    key = (support, n_samples, iterations, master_seed)
    if key not in _D_SAMPLE_CACHE:
        rng = np.random.default_rng(derive_seed(master_seed, "tc-draws"))
        vals = np.empty(n_samples)
        for i in range(n_samples):
            theta = sample_uniform(support, rng)
            vals[i] = mirror_descent(theta, support, iters=iterations).value
        _D_SAMPLE_CACHE[key] = vals
    return _D_SAMPLE_CACHE[key]


def estimate_e_tc(spec: ExperimentSpec, c: float) -> EtcEstimate:
    """Monte Carlo estimate of the prior-averaged sample-size scale at c.

    Prior draws are shared across every c, so two estimates differ exactly
    by the ratio of |log c| factors.
    """
    if not (0.0 < c < 1.0):
        raise ValidationError("c: must lie in (0, 1)")
    d = _d_samples(spec.support_true, spec.tc_samples,
                   spec.standalone_iterations, spec.seed)
    if np.any(d < D_FLOOR):
        raise IndistinguishableError(
            "a prior draw has numerically zero design value")
    t = abs(math.log(c)) / d
    if len(t) < 2:
        return EtcEstimate(float(t.mean()), 0.0, True)
    return EtcEstimate(float(t.mean()), float(t.std(ddof=1) / math.sqrt(len(t))),
                       False)


def _policy_config(spec: ExperimentSpec, selection: str, stopping: str,
                   c: float, fixed_n: int | None) -> PolicyConfig:
    return PolicyConfig(
        c=c,
        alpha=spec.alpha,
        explore_p=spec.explore_p,
        selection=selection,
        stopping=stopping,
        fixed_length=fixed_n,
        design_iterations=spec.design_iterations,
        design_c0=spec.design_c0,
        max_steps=spec.max_steps,
    )


def _run_one(args):
    """One seeded trial; top-level so process pools can pickle it."""
    support_true, support_policy, config, master_seed, cell_id, rep = args
    rng = np.random.default_rng(derive_seed(master_seed, cell_id, rep))
    truth = sample_uniform(support_true, rng)
    result = run_trial(truth, support_policy, config, rng)
    return (result.kendall_loss, result.stopping_time, result.realized_risk,
            result.truncated)


def _resolve_threads(threads: int) -> int:
    if threads == 0:
        env = os.environ.get("SEQRANK_THREADS", "")
        if env.strip():
            threads = int(env)
    if threads == 0:
        threads = os.cpu_count() or 1
    return max(1, threads)


def _se(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def _cells(spec: ExperimentSpec):
    for selection, stopping in spec.policies:
        if stopping == "fixed":
            for n in spec.fixed_lengths:
                yield selection, stopping, None, int(n)
        else:
            for c in spec.c_list:
                yield selection, stopping, float(c), None


def run_study(spec: ExperimentSpec) -> list[AggregateRow]:
    """Run every cell of the study and reduce to aggregate rows.

    Trials execute in deterministic per-(cell, rep) seed order; with
    threads > 1 they run in a process pool, and the output is identical
    either way.  Writes the CSV when output_path is set.
    """
    tasks = []
    cell_specs = []
    for selection, stopping, c, fixed_n in _cells(spec):
        cell_id = (f"{selection}|{stopping}|" +
                   (f"N={fixed_n}" if fixed_n is not None else f"c={c!r}"))
        config = _policy_config(spec, selection, stopping,
                                c if c is not None else 0.0, fixed_n)
        cell_specs.append((selection, stopping, c, fixed_n, cell_id))
        for rep in range(spec.reps):
            tasks.append((spec.support_true, spec.policy_support, config,
                          spec.seed, cell_id, rep))

    threads = _resolve_threads(spec.threads)
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_one, tasks, chunksize=8))
    else:
        outcomes = [_run_one(t) for t in tasks]

    rows = []
    for idx, (selection, stopping, c, fixed_n, cell_id) in enumerate(cell_specs):
        chunk = outcomes[idx * spec.reps:(idx + 1) * spec.reps]
        losses = np.array([o[0] for o in chunk], dtype=float)
        times = np.array([o[1] for o in chunk], dtype=float)
        risks = np.array([o[2] for o in chunk], dtype=float)
        truncs = sum(1 for o in chunk if o[3])
        e_tc = se_tc = ratio = None
        h_c = None
        if c is not None:
            h_c = h_of_c(c, spec.alpha)
        if spec.study == "study1" and c is not None:
            est = estimate_e_tc(spec, c)
            e_tc, se_tc = est.mean, est.stderr
            ratio = float(risks.mean() / (c * est.mean))
        rows.append(AggregateRow(
            study=spec.study,
            policy=f"{selection}-{stopping}",
            selection=selection,
            stopping=stopping,
            c=c,
            h_c=h_c,
            fixed_n=fixed_n,
            reps=spec.reps,
            mean_kendall=float(losses.mean()),
            se_kendall=_se(losses),
            mean_t=float(times.mean()),
            se_t=_se(times),
            mean_risk=float(risks.mean()),
            se_risk=_se(risks),
            e_tc_hat=e_tc,
            se_e_tc=se_tc,
            ratio=ratio,
            truncated=truncs,
        ))
    if spec.output_path:
        write_csv(rows, spec.output_path)
    return rows


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def write_csv(rows: list[AggregateRow], path: str) -> None:
    """Serialize rows with the fixed schema; floats carry 9 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([
                row.study, row.policy, row.selection, row.stopping,
                _format_cell(row.c), _format_cell(row.h_c),
                _format_cell(row.fixed_n), row.reps,
                _format_cell(row.mean_kendall), _format_cell(row.se_kendall),
                _format_cell(row.mean_t), _format_cell(row.se_t),
                _format_cell(row.mean_risk), _format_cell(row.se_risk),
                _format_cell(row.e_tc_hat), _format_cell(row.se_e_tc),
                _format_cell(row.ratio), row.truncated,
            ])
