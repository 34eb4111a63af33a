"""End-to-end pipeline commands behind the CLI.

Each command reads a resolved :class:`PipelineConfig`, consumes the
artifacts of earlier stages from the output directory, and writes its own
artifacts deterministically (the resolved config and seed are echoed into
every file's ``meta`` block, and nothing time-dependent is written), so a
fixed seed reproduces every artifact byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ReferenceChain, load_text_corpus
from .decoding import (
    DecodeConfig,
    GreedyPolicy,
    JudgePolicy,
    RejectionPolicy,
    TopKPolicy,
    decode,
)
from .features import FeatureExtractor
from .labeling import (
    LabelConfig,
    build_dataset,
    calibrate_tau_on_prompts,
    generate_response,
    read_dataset,
    write_dataset,
)
from .ngram import NGramModel, load_model, save_model
from .reports import PolicyReportRow, reduce_traces, trace_record, write_report, write_traces
from .verifier import TrainConfig, default_c_grid, grid_search, load_verifier, save_verifier
from . import checks

POLICY_NAMES = ("greedy", "rejection", "topk", "judge")

# Disjoint sub-seed offsets for the pipeline's independent random streams.
_CORPUS_STREAM = 1
_LABEL_PROMPT_STREAM = 2
_CALIBRATION_PROMPT_STREAM = 3
_EVAL_PROMPT_STREAM = 4
_DECODE_STREAM = 5


@dataclass(frozen=True)
class PipelineConfig:
    """Fully resolved settings for the five pipeline commands."""

    # corpus
    corpus_path: str | None = None  # None -> seeded synthetic chain
    tokenizer: str = "whitespace"
    chain_vocab_size: int = 20
    chain_context_len: int = 1
    chain_seed: int = 11
    chain_concentration: float = 1.0
    corpus_sequences: int = 300
    corpus_length: int = 48
    # models
    target_order: int = 3
    target_alpha: float = 0.5
    draft_order: int = 2
    draft_alpha: float = 0.5
    # decoding
    gamma: int = 6
    max_new_tokens: int = 48
    temperature: float = 0.0
    topk_k: int = 2
    theta: str = "f1"  # "recall" | "f1" | numeric string
    stop_id: int | None = None
    # labeling
    suffix_len: int = 20
    tau: float | None = None  # None -> calibrate
    calibration_quantile: float = 0.1
    oracle_horizon: int = 8
    num_label_prompts: int = 240
    num_calibration_prompts: int = 40
    num_eval_prompts: int = 100
    prompt_len: int = 4
    response_len: int = 48
    # verifier training
    c_grid: tuple[float, ...] = field(default_factory=default_c_grid)
    holdout_fraction: float = 0.2
    max_iter: int = 500
    tol: float = 1e-8
    target_recall: float = 0.99
    # checks
    check_vocab_size: int = 6
    check_length: int = 3
    check_samples: int = 200_000
    check_tv_bound: float = 0.02
    theorem_trials: int = 1000
    theorem_max_support: int = 8
    # run
    out_dir: str = "out"
    seed: int = 0

    def as_dict(self) -> dict:
        """Config echo for artifacts. Drops ``out_dir`` so artifacts stay
        byte-identical regardless of where a run writes them."""
        d = dataclasses.asdict(self)
        d["c_grid"] = list(self.c_grid)
        del d["out_dir"]
        return d

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        if "c_grid" in kwargs:
            kwargs["c_grid"] = tuple(kwargs["c_grid"])
        return dataclasses.replace(self, **kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "c_grid" in data:
            data["c_grid"] = tuple(data["c_grid"])
        return cls(**data)


class Paths:
    """Artifact locations inside the output directory."""

    def __init__(self, out_dir: str | Path):
        self.out = Path(out_dir)
        self.target_model = self.out / "target.model.json"
        self.draft_model = self.out / "draft.model.json"
        self.dataset = self.out / "dataset.jsonl"
        self.dataset_summary = self.out / "dataset.summary.json"
        self.verifier = self.out / "verifier.json"
        self.traces = self.out / "traces.jsonl"
        self.report_jsonl = self.out / "report.jsonl"
        self.report_txt = self.out / "report.txt"
        self.resolved_config = self.out / "resolved_config.json"
        self.distribution_result = self.out / "check_distribution.json"
        self.theorem_result = self.out / "check_theorem.json"

    def ensure(self) -> "Paths":
        self.out.mkdir(parents=True, exist_ok=True)
        return self


def _meta(config: PipelineConfig) -> dict:
    return {"seed": config.seed, "config": config.as_dict()}


def _write_resolved_config(config: PipelineConfig, paths: Paths) -> None:
    paths.resolved_config.write_text(
        json.dumps(config.as_dict(), sort_keys=True, indent=1) + "\n"
    )


def _load_corpus(config: PipelineConfig):
    if config.corpus_path is not None:
        return load_text_corpus(config.corpus_path, config.tokenizer)
    chain = ReferenceChain(
        vocab_size=config.chain_vocab_size,
        context_len=config.chain_context_len,
        seed=config.chain_seed,
        concentration=config.chain_concentration,
    )
    corpus = chain.sample_corpus(
        config.corpus_sequences, config.corpus_length, seed=(config.seed, _CORPUS_STREAM)
    )
    return corpus, chain.vocab


def _prompt_chain(config: PipelineConfig) -> ReferenceChain:
    if config.corpus_path is not None:
        raise ValueError("prompt sampling from text corpora is not supported; pass prompts")
    return ReferenceChain(
        vocab_size=config.chain_vocab_size,
        context_len=config.chain_context_len,
        seed=config.chain_seed,
        concentration=config.chain_concentration,
    )


def label_prompts(config: PipelineConfig) -> list[tuple[int, ...]]:
    return _prompt_chain(config).sample_prompts(
        config.num_label_prompts, config.prompt_len, seed=(config.seed, _LABEL_PROMPT_STREAM)
    )


def calibration_prompts(config: PipelineConfig) -> list[tuple[int, ...]]:
    return _prompt_chain(config).sample_prompts(
        config.num_calibration_prompts,
        config.prompt_len,
        seed=(config.seed, _CALIBRATION_PROMPT_STREAM),
    )


def eval_prompts(config: PipelineConfig) -> list[tuple[int, ...]]:
    held_out = set(label_prompts(config)) | set(calibration_prompts(config))
    return _prompt_chain(config).sample_prompts(
        config.num_eval_prompts,
        config.prompt_len,
        seed=(config.seed, _EVAL_PROMPT_STREAM),
        exclude=held_out,
    )


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def run_train_models(config: PipelineConfig) -> Paths:
    """Train the target/draft pair on the corpus and write model files."""
    paths = Paths(config.out_dir).ensure()
    corpus, vocab = _load_corpus(config)
    target = NGramModel(order=config.target_order, alpha=config.target_alpha, vocab=vocab)
    target.fit(corpus)
    draft_model = NGramModel(order=config.draft_order, alpha=config.draft_alpha, vocab=vocab)
    draft_model.fit(corpus)
    save_model(target, paths.target_model, meta=_meta(config))
    save_model(draft_model, paths.draft_model, meta=_meta(config))
    _write_resolved_config(config, paths)
    return paths


def _load_models(paths: Paths) -> tuple[NGramModel, NGramModel]:
    if not paths.target_model.exists() or not paths.draft_model.exists():
        raise FileNotFoundError(f"model files missing under {paths.out}; run train-models first")
    return load_model(paths.target_model), load_model(paths.draft_model)


def run_gen_labels(config: PipelineConfig) -> tuple[Paths, dict]:
    """Calibrate tau (unless supplied) and write the labeled dataset."""
    paths = Paths(config.out_dir).ensure()
    target, draft_model = _load_models(paths)
    label_cfg = LabelConfig(
        suffix_len=config.suffix_len,
        tau=config.tau,
        calibration_quantile=config.calibration_quantile,
        oracle_horizon=config.oracle_horizon,
    )
    if label_cfg.tau is None:
        tau = calibrate_tau_on_prompts(
            target, draft_model, calibration_prompts(config), label_cfg, config.response_len
        )
        label_cfg = dataclasses.replace(label_cfg, tau=tau)
    extractor = FeatureExtractor(target, draft_model)
    examples, summary = build_dataset(
        target, draft_model, label_prompts(config), label_cfg, config.response_len, extractor
    )
    write_dataset(examples, summary, paths.dataset, meta=_meta(config))
    _write_resolved_config(config, paths)
    return paths, summary


def run_train_judge(config: PipelineConfig) -> tuple[Paths, dict]:
    """Grid-search the verifier on the dataset and write the verifier file."""
    paths = Paths(config.out_dir).ensure()
    if not paths.dataset.exists():
        raise FileNotFoundError(f"dataset missing under {paths.out}; run gen-labels first")
    X, y, _ = read_dataset(paths.dataset)
    if X.size == 0:
        raise ValueError("dataset is empty; cannot train a verifier")
    train_cfg = TrainConfig(
        c_grid=config.c_grid,
        holdout_fraction=config.holdout_fraction,
        max_iter=config.max_iter,
        tol=config.tol,
        target_recall=config.target_recall,
        seed=config.seed,
    )
    model = grid_search(X, y, train_cfg)
    save_verifier(model, paths.verifier, meta=_meta(config))
    _write_resolved_config(config, paths)
    return paths, dict(model.training_meta_, thresholds=model.thresholds_)


def resolve_theta(theta: str, verifier) -> float:
    """Map a --theta value (recall|f1|number) onto a numeric threshold."""
    if theta in ("recall", "f1"):
        thresholds = getattr(verifier, "thresholds_", None)
        if not thresholds or theta not in thresholds:
            raise ValueError(f"verifier has no calibrated {theta!r} threshold")
        return float(thresholds[theta])
    return float(theta)


def _policy_from_name(name: str, config: PipelineConfig, verifier) -> object:
    """Instantiate a policy from its row name.

    ``judge`` uses the configured theta; ``judge:<theta>`` pins its own
    (recall, f1, or a number), which lets one eval sweep several thresholds.
    """
    if name == "greedy":
        return GreedyPolicy()
    if name == "rejection":
        return RejectionPolicy()
    if name == "topk":
        return TopKPolicy(k=config.topk_k)
    if name == "judge" or name.startswith("judge:"):
        if verifier is None:
            raise ValueError("judge policy requested but no verifier file was found")
        theta = name.partition(":")[2] if ":" in name else config.theta
        return JudgePolicy(verifier=verifier, theta=resolve_theta(theta, verifier))
    raise ValueError(f"unknown policy: {name!r}")


def run_eval(
    config: PipelineConfig, policies: tuple[str, ...] = ("rejection", "judge")
) -> tuple[Paths, list[PolicyReportRow]]:
    """Decode every held-out prompt under every policy with shared seeds.

    Writes the cycle traces and the report (JSONL + table). Raises if the
    evaluation prompts overlap the label-generation prompts.
    """
    paths = Paths(config.out_dir).ensure()
    target, draft_model = _load_models(paths)
    verifier = load_verifier(paths.verifier) if paths.verifier.exists() else None

    prompts = eval_prompts(config)
    overlap = set(prompts) & set(label_prompts(config))
    if overlap:
        raise RuntimeError(f"evaluation prompts overlap label prompts: {sorted(overlap)[:3]}")

    wants_judge = any(name.startswith("judge") for name in policies)
    extractor = FeatureExtractor(target, draft_model) if wants_judge else None
    records = []
    rows: list[PolicyReportRow] = []
    for name in policies:
        policy = _policy_from_name(name, config, verifier)
        started = time.perf_counter()
        accepted_total = 0
        emitted_total = 0
        cycles = 0
        matches = 0
        ll_sum = 0.0
        ll_tokens = 0
        for pid, prompt in enumerate(prompts):
            decode_cfg = DecodeConfig(
                gamma=config.gamma,
                max_new_tokens=config.max_new_tokens,
                temperature=config.temperature,
                seed=0,
                policy=policy,
                stop_id=config.stop_id,
            )
            rng = np.random.default_rng((config.seed, _DECODE_STREAM, pid))
            tokens, metrics, traces = decode(
                target, draft_model, prompt, decode_cfg, extractor=extractor, rng=rng
            )
            for ci, trace in enumerate(traces):
                records.append(trace_record(name, pid, ci, trace))
            accepted_total += sum(t.accepted_count for t in traces)
            emitted_total += sum(len(t.emitted) for t in traces)
            cycles += metrics.cycles
            reference = generate_response(target, prompt, len(tokens))
            if tokens == reference:
                matches += 1
            ll_sum += target.sequence_logprob(tokens, prompt)
            ll_tokens += len(tokens)
        rows.append(
            PolicyReportRow(
                policy=name,
                m=emitted_total / cycles,
                mean_accepted_draft=accepted_total / cycles,
                exact_match_rate=matches / len(prompts),
                mean_token_logprob=ll_sum / ll_tokens,
                cycles=cycles,
                wall_time_s=time.perf_counter() - started,
            )
        )

    write_traces(records, paths.traces, meta=_meta(config))
    write_report(rows, paths.report_jsonl, paths.report_txt, meta=_meta(config))
    _write_resolved_config(config, paths)
    return paths, rows


def run_check_distribution(config: PipelineConfig) -> tuple[Paths, checks.DistributionCheckResult]:
    """Distribution-preservation check on a small-vocab setup.

    Uses a dedicated chain with third-order structure so the order-2 draft
    and order-3 target genuinely differ, which the negative control needs.
    """
    paths = Paths(config.out_dir).ensure()
    chain = ReferenceChain(
        vocab_size=config.check_vocab_size,
        context_len=2,
        seed=config.chain_seed,
        concentration=config.chain_concentration,
    )
    corpus = chain.sample_corpus(200, 40, seed=(config.seed, _CORPUS_STREAM, 99))
    target = NGramModel(order=3, alpha=config.target_alpha, vocab=chain.vocab).fit(corpus)
    draft_model = NGramModel(order=2, alpha=config.draft_alpha, vocab=chain.vocab).fit(corpus)
    prompt = chain.sample_prompts(1, 2, seed=(config.seed, 98))[0]
    result = checks.distribution_check(
        target,
        draft_model,
        prompt,
        length=config.check_length,
        n_samples=config.check_samples,
        seed=config.seed,
        bound=config.check_tv_bound,
    )
    paths.distribution_result.write_text(
        json.dumps(
            {
                "tv": result.tv,
                "control_tv": result.control_tv,
                "bound": result.bound,
                "n_samples": result.n_samples,
                "length": result.length,
                "passed": result.passed,
                "meta": _meta(config),
            },
            sort_keys=True,
            indent=1,
        )
        + "\n"
    )
    return paths, result


def run_check_theorem(config: PipelineConfig) -> tuple[Paths, checks.TheoremCheckResult]:
    """Conditional-entropy reduction sweep over random joints."""
    paths = Paths(config.out_dir).ensure()
    result = checks.entropy_inequality_check(
        n_trials=config.theorem_trials,
        max_support=config.theorem_max_support,
        seed=config.seed,
    )
    paths.theorem_result.write_text(
        json.dumps(
            {
                "trials": result.trials,
                "violations": result.violations,
                "strict_failures": result.strict_failures,
                "max_excess": result.max_excess,
                "passed": result.passed,
                "meta": _meta(config),
            },
            sort_keys=True,
            indent=1,
        )
        + "\n"
    )
    return paths, result
