"""Command-line interface.

Subcommands: study1, study2, solve-design, single-trial, estimate-tc.
Configuration comes from a JSON file (costs accept "2^-k" notation so the
study grids stay exact in binary); a few flags override it.  Every output
directory receives a run manifest echoing the resolved configuration.

Exit codes: 0 success, 2 validation error, 3 runtime/numerical error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .design import mirror_descent, t_c
from .errors import (
    IndistinguishableError,
    SamplingError,
    UnderdeterminedError,
    ValidationError,
)
from .model import ModelParams, all_pairs
from .policy import PolicyConfig, run_trial
from .simulation import (
    AggregateRow,
    ExperimentSpec,
    derive_seed,
    estimate_e_tc,
    run_study,
    write_csv,
)
from .support import SupportSpec, contains, sample_uniform


def parse_cost(token) -> float:
    """Parse a cost given as a float or in exact '2^-k' notation."""
    if isinstance(token, (int, float)):
        value = float(token)
    else:
        text = str(token).strip()
        if "^" in text:
            base, _, exp = text.partition("^")
            value = float(base) ** float(exp)
        else:
            value = float(text)
    if not (0.0 < value < 1.0):
        raise ValidationError(f"c: must lie in (0, 1), got {token!r}")
    return value


def load_config(path: str) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ValidationError("config: top level must be an object")
    return cfg


def _require(cfg: dict, key: str, kind, default=None):
    if key not in cfg:
        if default is not None:
            return default
        raise ValidationError(f"{key}: missing from config")
    value = cfg[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ValidationError(f"{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _support_from(cfg: dict, key: str, n_items: int) -> SupportSpec:
    block = cfg.get(key)
    if block is None:
        raise ValidationError(f"{key}: missing from config")
    if not isinstance(block, dict):
        raise ValidationError(f"{key}: expected an object")
    try:
        return SupportSpec(
            n_items=n_items,
            kappa=float(block.get("kappa", 0.0)),
            delta=float(block.get("delta", 0.0)),
            misspecified=bool(block.get("misspecified", False)),
        )
    except ValidationError as exc:
        raise ValidationError(f"{key}.{exc}") from exc


def _experiment_spec(cfg: dict, args, study: str,
                     policies, fixed_lengths=()) -> ExperimentSpec:
    n_items = _require(cfg, "k", int)
    support_true = _support_from(cfg, "support", n_items)
    support_policy = None
    if "policy_support" in cfg:
        support_policy = _support_from(cfg, "policy_support", n_items)
    c_tokens = args.c_list if args.c_list else cfg.get("c_list", [])
    c_list = tuple(parse_cost(t) for t in c_tokens)
    threads = args.threads if args.threads is not None else int(cfg.get("threads", 0))
    return ExperimentSpec(
        study=study,
        support_true=support_true,
        support_policy=support_policy,
        c_list=c_list,
        reps=args.reps if args.reps is not None else int(cfg.get("reps", 300)),
        policies=policies,
        fixed_lengths=tuple(int(n) for n in fixed_lengths),
        tc_samples=int(cfg.get("tc_samples", 300)),
        alpha=float(cfg.get("alpha", 0.5)),
        explore_p=cfg.get("explore_p", "auto"),
        design_iterations=int(cfg.get("design_iterations", 400)),
        design_c0=float(cfg.get("design_c0", 2.0)),
        standalone_iterations=int(cfg.get("standalone_iterations", 2000)),
        max_steps=int(cfg.get("max_steps", 10 ** 6)),
        seed=args.seed if args.seed is not None else int(cfg.get("seed", 0)),
        threads=threads,
    )


def _write_manifest(out_dir: str, command: str, cfg: dict, spec_fields: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "resolved": spec_fields,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _support_echo(sp: SupportSpec) -> dict:
    return {"n_items": sp.n_items, "kappa": sp.kappa, "delta": sp.delta,
            "misspecified": sp.misspecified}


def _spec_echo(spec: ExperimentSpec) -> dict:
    d = {k: getattr(spec, k) for k in (
        "study", "c_list", "reps", "policies", "fixed_lengths", "tc_samples",
        "alpha", "explore_p", "design_iterations", "design_c0",
        "standalone_iterations", "max_steps", "seed", "threads")}
    d["support_true"] = _support_echo(spec.support_true)
    d["support_policy"] = _support_echo(spec.policy_support)
    return d


def cmd_study1(args) -> int:
    cfg = load_config(args.config)
    spec = _experiment_spec(cfg, args, "study1",
                            policies=(("optimal", "T1"), ("optimal", "T2")))
    if not spec.c_list:
        raise ValidationError("c_list: study1 needs at least one cost")
    os.makedirs(args.out, exist_ok=True)
    rows = run_study(spec)
    results = os.path.join(args.out, "study1_results.csv")
    write_csv(rows, results)
    # the ratio-vs-|log c| plot reads the same schema
    write_csv(rows, os.path.join(args.out, "study1_plotdata.csv"))
    _write_manifest(args.out, "study1", cfg, _spec_echo(spec))
    print(f"study1: wrote {results} ({len(rows)} rows)")
    return 0


def cmd_study2(args) -> int:
    cfg = load_config(args.config)
    proposed = _experiment_spec(cfg, args, "study2",
                                policies=(("optimal", "T1"), ("optimal", "T2")))
    if not proposed.c_list:
        raise ValidationError("c_list: study2 needs at least one cost")
    os.makedirs(args.out, exist_ok=True)
    rows = run_study(proposed)
    # baselines run at the proposed policy's observed mean length per cell
    matched = sorted({max(1, int(round(r.mean_t))) for r in rows})
    baseline_cfg = cfg.get("baselines", ["uniform", "wald"])
    baseline_policies = tuple((str(b), "fixed") for b in baseline_cfg)
    if baseline_policies:
        base_spec = _experiment_spec(cfg, args, "study2",
                                     policies=baseline_policies,
                                     fixed_lengths=matched)
        rows = rows + run_study(base_spec)
    results = os.path.join(args.out, "study2_results.csv")
    write_csv(rows, results)
    _write_manifest(args.out, "study2", cfg, _spec_echo(proposed))
    print(f"study2: wrote {results} ({len(rows)} rows)")
    return 0


def _parse_theta(text: str) -> ModelParams:
    try:
        scores = np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError as exc:
        raise ValidationError(f"theta: could not parse {text!r}") from exc
    if scores.size and scores[0] != 0.0:
        raise ValidationError("theta: the first score is pinned at 0")
    try:
        return ModelParams(scores)
    except ValueError as exc:
        raise ValidationError(f"theta: {exc}") from exc


def cmd_solve_design(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    if args.theta:
        theta = _parse_theta(args.theta)
    elif args.theta_file:
        with open(args.theta_file) as fh:
            theta = _parse_theta(fh.read())
    else:
        raise ValidationError("theta: supply --theta or --theta-file")
    n_items = theta.n_items
    support = _support_from(cfg, "support", n_items) if "support" in cfg else \
        SupportSpec(n_items=n_items, kappa=float(args.kappa), delta=float(args.delta))
    if not contains(support, theta):
        # name the violated constraint for the error message
        if np.any(np.abs(theta.scores[1:]) > support.kappa):
            raise ValidationError(f"theta: outside the box bound kappa={support.kappa:g}")
        raise ValidationError(f"theta: violates the separation delta={support.effective_delta:g}")
    iters = int(cfg.get("standalone_iterations", args.iters))
    sol = mirror_descent(theta, support, iters=iters, c0=float(cfg.get("design_c0", 2.0)))
    c_list = [parse_cost(t) for t in (args.c_list or cfg.get("c_list", []))]
    doc = {
        "theta": [float(v) for v in theta.scores],
        "lambda": {f"{p.one_based()}": float(w)
                   for p, w in zip(all_pairs(n_items), sol.selection.weights)},
        "value": sol.value,
        "gap": sol.gap,
        "iterations": sol.iterations,
        "t_c": {},
    }
    for c in c_list:
        if sol.value < 1e-10:
            raise IndistinguishableError("design value is numerically zero")
        doc["t_c"][f"{c:.9g}"] = abs(math.log(c)) / sol.value
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "design.json"), "w") as fh:
            fh.write(text + "\n")
        _write_manifest(args.out, "solve-design", cfg, {"theta": doc["theta"]})
    return 0


def cmd_single_trial(args) -> int:
    cfg = load_config(args.config)
    n_items = _require(cfg, "k", int)
    support_true = _support_from(cfg, "support", n_items)
    support_policy = _support_from(cfg, "policy_support", n_items) \
        if "policy_support" in cfg else support_true
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    rng = np.random.default_rng(derive_seed(seed, "single-trial"))
    if args.theta:
        truth = _parse_theta(args.theta)
        if not contains(support_true, truth):
            raise ValidationError("theta: outside the data-generating support")
    else:
        truth = sample_uniform(support_true, rng)
    config = PolicyConfig(
        c=parse_cost(args.c if args.c else cfg.get("c", "2^-10")),
        alpha=float(cfg.get("alpha", 0.5)),
        explore_p=cfg.get("explore_p", "auto"),
        selection=args.selection,
        stopping=args.stopping,
        fixed_length=args.fixed_length,
        design_iterations=int(cfg.get("design_iterations", 400)),
        design_c0=float(cfg.get("design_c0", 2.0)),
        max_steps=int(cfg.get("max_steps", 10 ** 6)),
        record_trajectory=True,
    )
    result = run_trial(truth, support_policy, config, rng)
    summary = {
        "truth": [float(v) for v in truth.scores],
        "stopping_time": result.stopping_time,
        "decision": list(result.decision.one_based()),
        "kendall_loss": result.kendall_loss,
        "realized_risk": result.realized_risk,
        "truncated": result.truncated,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "trial_summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(args.out, "trajectory.jsonl"), "w") as fh:
            for rec in result.trajectory:
                fh.write(json.dumps({
                    "step": rec.step,
                    "pair": list(rec.pair),
                    "outcome": rec.outcome,
                    "min_glr": rec.min_glr,
                    "t1_logsum": rec.t1_logsum,
                    "mle": list(rec.mle_scores),
                }, sort_keys=True) + "\n")
        _write_manifest(args.out, "single-trial", cfg, summary)
    return 0


def cmd_estimate_tc(args) -> int:
    cfg = load_config(args.config)
    spec = _experiment_spec(cfg, args, "study1",
                            policies=(("optimal", "T2"),))
    if not spec.c_list:
        raise ValidationError("c_list: estimate-tc needs at least one cost")
    doc = {}
    for c in spec.c_list:
        est = estimate_e_tc(spec, c)
        doc[f"{c:.9g}"] = {"e_tc": est.mean, "stderr": est.stderr,
                           "degenerate": est.degenerate}
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "e_tc.json"), "w") as fh:
            fh.write(text + "\n")
        _write_manifest(args.out, "estimate-tc", cfg, {"tc_samples": spec.tc_samples})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqrank",
        description="Sequential rank aggregation simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config,
                       help="JSON configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--c-list", nargs="*", default=None,
                       help="costs, e.g. 2^-5 2^-15")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (0 = auto; SEQRANK_THREADS fallback)")

    p1 = sub.add_parser("study1", help="asymptotic-optimality study")
    common(p1)
    p1.set_defaults(func=cmd_study1)
    p1.set_defaults(out="out/study1")

    p2 = sub.add_parser("study2", help="baseline-comparison study")
    common(p2)
    p2.set_defaults(func=cmd_study2)
    p2.set_defaults(out="out/study2")

    p3 = sub.add_parser("solve-design", help="solve the max-min design at theta")
    common(p3, needs_config=False)
    p3.add_argument("--theta", default=None, help="scores, e.g. '0,1,-1'")
    p3.add_argument("--theta-file", default=None)
    p3.add_argument("--kappa", type=float, default=2.0)
    p3.add_argument("--delta", type=float, default=0.4)
    p3.add_argument("--iters", type=int, default=2000)
    p3.set_defaults(func=cmd_solve_design)

    p4 = sub.add_parser("single-trial", help="run one trial with trajectory log")
    common(p4)
    p4.add_argument("--theta", default=None, help="truth scores; sampled when omitted")
    p4.add_argument("--c", default=None)
    p4.add_argument("--selection", default="optimal",
                    choices=("optimal", "uniform", "wald"))
    p4.add_argument("--stopping", default="T2", choices=("T1", "T2", "fixed"))
    p4.add_argument("--fixed-length", type=int, default=None)
    p4.set_defaults(func=cmd_single_trial)

    p5 = sub.add_parser("estimate-tc", help="prior-averaged sample-size scale")
    common(p5)
    p5.set_defaults(func=cmd_estimate_tc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (SamplingError, UnderdeterminedError, IndistinguishableError,
            FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
