"""Speculative decoding with learned judge verification, at desk scale.

Exact n-gram language models stand in for the target/draft pair, so every
decoding, scoring, and training behaviour can be checked against
enumeration oracles.
"""

from .vocab import Vocab
from .ngram import NGramModel, train_ngram, save_model, load_model
from .features import FeatureExtractor
from .sampling import apply_temperature, sample_token, top_k_tokens
from .decoding import (
    DecodeConfig,
    DecodeMetrics,
    DraftProposal,
    GreedyPolicy,
    JudgePolicy,
    RejectionPolicy,
    TopKPolicy,
    VerificationTrace,
    alignment_accept_count,
    decode,
    draft,
    target_scores,
    verify_greedy,
    verify_judge_two_stage,
    verify_rejection,
    verify_topk,
)
from .labeling import (
    LabelConfig,
    LabeledExample,
    MismatchRecord,
    ScoreBreakdown,
    bayes_factor,
    build_dataset,
    calibrate_tau,
    find_mismatches,
    generate_response,
    oracle_unacceptable,
    semantic_score,
)
from .verifier import (
    JudgeVerifier,
    TrainConfig,
    grid_search,
    load_verifier,
    roc_auc,
    save_verifier,
    select_threshold,
)
from .corpus import ReferenceChain, load_text_corpus
from .pipeline import PipelineConfig

__all__ = [
    "Vocab",
    "NGramModel",
    "train_ngram",
    "save_model",
    "load_model",
    "FeatureExtractor",
    "apply_temperature",
    "sample_token",
    "top_k_tokens",
    "DecodeConfig",
    "DecodeMetrics",
    "DraftProposal",
    "GreedyPolicy",
    "JudgePolicy",
    "RejectionPolicy",
    "TopKPolicy",
    "VerificationTrace",
    "alignment_accept_count",
    "decode",
    "draft",
    "target_scores",
    "verify_greedy",
    "verify_judge_two_stage",
    "verify_rejection",
    "verify_topk",
    "LabelConfig",
    "LabeledExample",
    "MismatchRecord",
    "ScoreBreakdown",
    "bayes_factor",
    "build_dataset",
    "calibrate_tau",
    "find_mismatches",
    "generate_response",
    "oracle_unacceptable",
    "semantic_score",
    "JudgeVerifier",
    "TrainConfig",
    "grid_search",
    "load_verifier",
    "roc_auc",
    "save_verifier",
    "select_threshold",
    "ReferenceChain",
    "load_text_corpus",
    "PipelineConfig",
]
