"""Command-line entry point.

Subcommands: train-models, gen-labels, train-judge, eval,
check-distribution, check-theorem. Flags override config-file values.
Exit codes: 0 success/pass, 1 check or evaluation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

from .pipeline import (
    POLICY_NAMES,
    PipelineConfig,
    run_check_distribution,
    run_check_theorem,
    run_eval,
    run_gen_labels,
    run_train_judge,
    run_train_models,
)
from .reports import render_table


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specdec",
        description="Speculative decoding with judge verification on n-gram language models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="pipeline seed")
        p.add_argument("--out", help="output directory for artifacts")

    p = sub.add_parser("train-models", help="train the target/draft model pair")
    add_common(p)

    p = sub.add_parser("gen-labels", help="generate verifier training labels")
    add_common(p)
    p.add_argument("--tau", type=float, help="skip calibration and use this threshold")

    p = sub.add_parser("train-judge", help="grid-search and save the judge verifier")
    add_common(p)

    p = sub.add_parser("eval", help="evaluate decoding policies on held-out prompts")
    add_common(p)
    p.add_argument(
        "--policy",
        action="append",
        choices=POLICY_NAMES,
        help="policy to evaluate (repeatable); default: rejection judge",
    )
    p.add_argument("--gamma", type=int, help="draft tokens per cycle")
    p.add_argument("--temperature", type=float, help="decode temperature")
    p.add_argument(
        "--theta",
        action="append",
        help="judge threshold: 'recall', 'f1', or a number; repeat to sweep "
        "several thresholds in one eval",
    )

    p = sub.add_parser("check-distribution", help="distribution-preservation check")
    add_common(p)
    p.add_argument("--samples", type=int, help="Monte Carlo sample count")

    p = sub.add_parser("check-theorem", help="conditional-entropy reduction check")
    add_common(p)
    p.add_argument("--trials", type=int, help="number of random joints")

    return parser


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides: dict = {"seed": args.seed, "out_dir": args.out}
    for attr, key in (
        ("tau", "tau"),
        ("gamma", "gamma"),
        ("temperature", "temperature"),
        ("samples", "check_samples"),
        ("trials", "theorem_trials"),
    ):
        if hasattr(args, attr):
            overrides[key] = getattr(args, attr)
    thetas = getattr(args, "theta", None)
    if thetas and len(thetas) == 1:
        overrides["theta"] = thetas[0]
    return config.with_overrides(**overrides)


def _eval_policies(args: argparse.Namespace) -> tuple[str, ...]:
    """Expand the policy list; repeated --theta sweeps the judge policy."""
    policies = tuple(args.policy) if args.policy else ("rejection", "judge")
    thetas = args.theta or []
    if len(thetas) <= 1:
        return policies
    expanded: list[str] = []
    for name in policies:
        if name == "judge":
            expanded.extend(f"judge:{t}" for t in thetas)
        else:
            expanded.append(name)
    return tuple(expanded)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _resolve_config(args)
        if args.command == "train-models":
            paths = run_train_models(config)
            print(f"wrote {paths.target_model} and {paths.draft_model}")
            return 0
        if args.command == "gen-labels":
            paths, summary = run_gen_labels(config)
            print(
                f"wrote {paths.dataset}: {summary['num_mismatches']} mismatches, "
                f"{summary['num_acceptable']} acceptable, tau={summary['tau']:.6f}"
            )
            return 0
        if args.command == "train-judge":
            paths, meta = run_train_judge(config)
            print(
                f"wrote {paths.verifier}: C={meta['C']:.4g} auc={meta['auc']:.4f} "
                f"thresholds={meta['thresholds']}"
            )
            return 0
        if args.command == "eval":
            paths, rows = run_eval(config, _eval_policies(args))
            print(render_table(rows, include_wall_time=True), end="")
            print(f"wrote {paths.traces} and {paths.report_jsonl}")
            return 0
        if args.command == "check-distribution":
            paths, result = run_check_distribution(config)
            status = "PASS" if result.passed else "FAIL"
            print(
                f"{status} tv={result.tv:.5f} (bound {result.bound}) "
                f"control_tv={result.control_tv:.5f} samples={result.n_samples}"
            )
            return 0 if result.passed else 1
        if args.command == "check-theorem":
            paths, result = run_check_theorem(config)
            status = "PASS" if result.passed else "FAIL"
            print(
                f"{status} trials={result.trials} violations={result.violations} "
                f"strict_failures={result.strict_failures} max_excess={result.max_excess:.3e}"
            )
            return 0 if result.passed else 1
        raise AssertionError(f"unhandled command {args.command}")
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
