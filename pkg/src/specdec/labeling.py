"""Self-supervised training data for the judge verifier.

The pipeline rolls the target model out greedily, finds positions where the
draft model's top prediction disagrees, and scores each disagreement by how
much the substitution shifts the target model's likelihood of the
surrounding response. The score is a log-likelihood ratio under
bidirectional context, computed autoregressively as a prefix term plus a
suffix term; thresholding it at tau yields binary acceptability labels
paired with the verifier's feature vectors.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureExtractor
from .ngram import NGramModel


@dataclass(frozen=True)
class MismatchRecord:
    """One position where the draft's argmax differs from the response token."""

    prompt_id: int
    position: int
    original: int  # response token at this position
    alternative: int  # draft model argmax given the same prefix
    prompt: tuple[int, ...]
    response: tuple[int, ...]

    def prefix(self) -> list[int]:
        return list(self.prompt) + list(self.response[: self.position])

    def suffix(self) -> tuple[int, ...]:
        return self.response[self.position + 1 :]


@dataclass(frozen=True)
class ScoreBreakdown:
    """Substitution score split into its prefix and suffix terms.

    ``s == s_prefix + suffix_delta`` exactly; ``n_used`` is how many suffix
    tokens the suffix term actually covered.
    """

    s_prefix: float
    suffix_delta: float
    s: float
    n_used: int


@dataclass(frozen=True)
class LabelConfig:
    suffix_len: int = 20  # future tokens scored by the suffix term
    tau: float | None = None  # acceptability threshold on the score
    calibration_quantile: float = 0.1
    oracle_horizon: int = 8

    def __post_init__(self):
        if self.suffix_len < 0:
            raise ValueError("suffix_len must be >= 0")
        if not 0 < self.calibration_quantile < 1:
            raise ValueError("calibration_quantile must be in (0, 1)")


@dataclass
class LabeledExample:
    features: np.ndarray
    breakdown: ScoreBreakdown
    label: bool
    record: MismatchRecord


# ----------------------------------------------------------------------
# response generation and mismatch mining
# ----------------------------------------------------------------------


def generate_response(target: NGramModel, prompt: Sequence[int], max_len: int) -> list[int]:
    """Greedy (temperature 0) rollout of the target model."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    work = list(prompt)
    out: list[int] = []
    for _ in range(max_len):
        tok = target.greedy_token(work)
        out.append(tok)
        work.append(tok)
    return out


def find_mismatches(
    draft_model: NGramModel,
    response: Sequence[int],
    prompt: Sequence[int],
    prompt_id: int = 0,
) -> list[MismatchRecord]:
    """Positions where the draft argmax disagrees with the response token."""
    if len(response) == 0:
        raise ValueError("response must be nonempty")
    prompt = tuple(prompt)
    response = tuple(response)
    work = list(prompt)
    records: list[MismatchRecord] = []
    for i, tok in enumerate(response):
        alt = draft_model.greedy_token(work)
        if alt != tok:
            records.append(
                MismatchRecord(
                    prompt_id=prompt_id,
                    position=i,
                    original=tok,
                    alternative=alt,
                    prompt=prompt,
                    response=response,
                )
            )
        work.append(tok)
    return records


# ----------------------------------------------------------------------
# scoring
# ----------------------------------------------------------------------


def semantic_score(target: NGramModel, record: MismatchRecord, suffix_len: int) -> ScoreBreakdown:
    """Log-likelihood ratio of the substitution under bidirectional context.

    The prefix term compares the alternative and original token given the
    shared prefix; the suffix term compares the likelihood of the next
    ``suffix_len`` response tokens after substituting the alternative
    (fewer if the response ends sooner). With a suffix window that covers
    the remaining response, the sum equals the exact bidirectional
    log-ratio obtained by joint enumeration over the vocabulary.
    """
    if suffix_len < 0:
        raise ValueError("suffix_len must be >= 0")
    prefix = record.prefix()
    dist = target.next_distribution(prefix)
    s_prefix = math.log(dist[record.alternative]) - math.log(dist[record.original])

    n_used = min(suffix_len, len(record.response) - record.position - 1)
    if n_used > 0:
        suffix = record.response[record.position + 1 : record.position + 1 + n_used]
        lp_sub = target.sequence_logprob(suffix, prefix + [record.alternative])
        lp_orig = target.sequence_logprob(suffix, prefix + [record.original])
        suffix_delta = lp_sub - lp_orig
    else:
        suffix_delta = 0.0
    return ScoreBreakdown(
        s_prefix=s_prefix,
        suffix_delta=suffix_delta,
        s=s_prefix + suffix_delta,
        n_used=n_used,
    )


def bayes_factor(breakdown: ScoreBreakdown) -> float:
    """Evidence the suffix contributes, i.e. the score minus its prefix term."""
    return breakdown.suffix_delta


def calibrate_tau(scores_of_unacceptable: Sequence[float], q: float) -> float:
    """q-quantile (linear interpolation) of known-bad substitution scores."""
    if len(scores_of_unacceptable) == 0:
        raise ValueError("no scores to calibrate from")
    if not 0 < q < 1:
        raise ValueError("q must be in (0, 1)")
    return float(np.quantile(np.asarray(scores_of_unacceptable, dtype=float), q))


def oracle_unacceptable(target: NGramModel, record: MismatchRecord, horizon: int = 8) -> bool:
    """Desk-scale stand-in for an external judge used only for tau calibration.

    A substitution counts as unacceptable when it derails the target
    model's greedy continuation within ``horizon`` tokens.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if horizon == 0:
        return False
    prefix = record.prefix()
    cont_orig = generate_response(target, prefix + [record.original], horizon)
    cont_sub = generate_response(target, prefix + [record.alternative], horizon)
    return cont_orig != cont_sub


# ----------------------------------------------------------------------
# dataset construction
# ----------------------------------------------------------------------


def calibrate_tau_on_prompts(
    target: NGramModel,
    draft_model: NGramModel,
    prompts: Sequence[Sequence[int]],
    config: LabelConfig,
    response_len: int,
) -> float:
    """Run the tau-calibration recipe on a dedicated prompt set.

    Scores every mismatch, marks substitutions the greedy-divergence oracle
    rejects, and returns the configured quantile of the rejected scores.
    """
    bad_scores: list[float] = []
    for pid, prompt in enumerate(prompts):
        response = generate_response(target, prompt, response_len)
        for record in find_mismatches(draft_model, response, prompt, prompt_id=pid):
            if oracle_unacceptable(target, record, config.oracle_horizon):
                bad_scores.append(semantic_score(target, record, config.suffix_len).s)
    return calibrate_tau(bad_scores, config.calibration_quantile)


def build_dataset(
    target: NGramModel,
    draft_model: NGramModel,
    prompts: Sequence[Sequence[int]],
    config: LabelConfig,
    response_len: int,
    extractor: FeatureExtractor | None = None,
) -> tuple[list[LabeledExample], dict]:
    """Generate labeled verifier examples for every prompt.

    Requires ``config.tau`` to be set (calibrated beforehand or supplied).
    The label is exactly ``score > tau``; features are the verifier inputs
    for the alternative token in the original prefix context, matching how
    features are computed for draft tokens at decode time.
    """
    if config.tau is None:
        raise ValueError("tau must be calibrated or supplied before labeling")
    if extractor is None:
        extractor = FeatureExtractor(target, draft_model)
    examples: list[LabeledExample] = []
    num_mismatches = 0
    for pid, prompt in enumerate(prompts):
        response = generate_response(target, prompt, response_len)
        for record in find_mismatches(draft_model, response, prompt, prompt_id=pid):
            num_mismatches += 1
            breakdown = semantic_score(target, record, config.suffix_len)
            examples.append(
                LabeledExample(
                    features=extractor(record.prefix(), record.alternative),
                    breakdown=breakdown,
                    label=breakdown.s > config.tau,
                    record=record,
                )
            )
    summary = {
        "num_prompts": len(prompts),
        "num_mismatches": num_mismatches,
        "num_acceptable": sum(1 for e in examples if e.label),
        "tau": config.tau,
        "suffix_len": config.suffix_len,
    }
    return examples, summary


# ----------------------------------------------------------------------
# dataset files
# ----------------------------------------------------------------------


def write_dataset(
    examples: Sequence[LabeledExample],
    summary: dict,
    path: str | Path,
    meta: dict | None = None,
) -> None:
    """Write one JSON record per example plus a summary sidecar."""
    path = Path(path)
    with path.open("w") as fh:
        for ex in examples:
            rec = {
                "prompt_id": ex.record.prompt_id,
                "position": ex.record.position,
                "y_i": ex.record.original,
                "z_i": ex.record.alternative,
                "s_prefix": ex.breakdown.s_prefix,
                "suffix_delta": ex.breakdown.suffix_delta,
                "s": ex.breakdown.s,
                "n_used": ex.breakdown.n_used,
                "label": bool(ex.label),
                "features": [float(v) for v in ex.features],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    sidecar = dict(summary)
    if meta is not None:
        sidecar["meta"] = meta
    summary_path(path).write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n")


def summary_path(dataset_path: str | Path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".summary.json")


def read_dataset(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[dict]]:
    """Load a dataset file into a feature matrix, label vector, and raw rows."""
    rows = [json.loads(line) for line in Path(path).read_text().splitlines() if line]
    if not rows:
        return np.empty((0, 0)), np.empty(0, dtype=bool), rows
    X = np.array([r["features"] for r in rows])
    y = np.array([r["label"] for r in rows], dtype=bool)
    return X, y, rows
