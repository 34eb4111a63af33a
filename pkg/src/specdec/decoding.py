"""Speculative decoding: draft, parallel target scoring, and verification.

One decode cycle proposes ``gamma`` draft tokens, scores them with the
target model in a single pass, and verifies them under one of four
policies:

* ``rejection``  — modified rejection sampling; accept d_t while
  u_t < min(1, p_t(d_t)/q_t(d_t)); on the first rejection emit a
  correction token from the normalized residual max(0, p - q). Preserves
  the target sampling distribution exactly; at temperature 0 it
  degenerates to strict argmax matching.
* ``greedy``     — accept while the draft token equals the target argmax.
* ``topk``       — accept while the draft token is among the target's k
  most probable tokens.
* ``judge``      — two-stage verification: a learned verifier scores every
  drafted position first, and alignment (the rejection rule on the same
  uniform stream) is the fallback for judge-rejected tokens.

Every cycle consumes one uniform draw per drafted position in position
order regardless of policy, so runs with shared seeds are comparable
across policies.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureExtractor
from .ngram import NGramModel
from .sampling import apply_temperature, sample_index, sample_token, top_k_tokens

_RESIDUAL_EPS = 1e-15


# ----------------------------------------------------------------------
# policies and configuration
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class GreedyPolicy:
    name: str = "greedy"


@dataclass(frozen=True)
class RejectionPolicy:
    name: str = "rejection"


@dataclass(frozen=True)
class TopKPolicy:
    k: int = 2
    name: str = "topk"


@dataclass(frozen=True)
class JudgePolicy:
    verifier: object = None  # JudgeVerifier; kept loose to avoid an import cycle
    theta: float = 0.5
    name: str = "judge"


Policy = GreedyPolicy | RejectionPolicy | TopKPolicy | JudgePolicy


@dataclass(frozen=True)
class DecodeConfig:
    """Knobs for one decode run.

    gamma is the number of draft tokens per verification cycle; emission is
    truncated at ``max_new_tokens`` and, if ``stop_id`` is set, right after
    the first emitted stop token.
    """

    gamma: int = 4
    max_new_tokens: int = 32
    temperature: float = 0.0
    seed: int = 0
    policy: Policy = field(default_factory=RejectionPolicy)
    stop_id: int | None = None

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


# ----------------------------------------------------------------------
# per-cycle records
# ----------------------------------------------------------------------


@dataclass
class DraftProposal:
    """gamma drafted tokens with the draft model's (temperature-shaped)
    per-step distributions and the probability of each chosen token."""

    tokens: list[int]
    q: np.ndarray
    dists: list[np.ndarray]


@dataclass
class VerificationTrace:
    """Everything one verification cycle did, for replay and audit.

    ``p`` holds the gamma+1 target distributions exactly as the policy saw
    them (temperature-shaped for rejection/judge, raw for greedy/topk).
    ``decisions`` has one tag per drafted position: ``accept_align``,
    ``accept_judge``, ``reject``, or ``not_reached``. ``emitted`` is the
    cycle's emission before any budget/stop truncation, so its length is
    always ``accepted_count + 1``.
    """

    policy: str
    draft_tokens: list[int]
    p: list[np.ndarray]
    q: np.ndarray | None
    u: np.ndarray | None
    r: np.ndarray | None
    judge_scores: np.ndarray | None
    accepted_count: int
    emitted: list[int]
    correction_source: str
    decisions: list[str]


@dataclass
class DecodeMetrics:
    """Per-run aggregates. ``mean_emitted_per_cycle`` is the average
    accepted length m; cycle means are taken over untruncated trace
    emissions, so m = mean_accepted_draft + 1 holds exactly."""

    cycles: int
    total_emitted: int
    mean_accepted_draft: float
    mean_emitted_per_cycle: float


# ----------------------------------------------------------------------
# drafting and scoring
# ----------------------------------------------------------------------


def draft(
    model: NGramModel,
    prefix: Sequence[int],
    gamma: int,
    temperature: float,
    rng: np.random.Generator,
) -> DraftProposal:
    """Propose gamma tokens autoregressively from the draft model."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    work = list(prefix)
    tokens: list[int] = []
    qs: list[float] = []
    dists: list[np.ndarray] = []
    for _ in range(gamma):
        dist = apply_temperature(model.next_distribution(work), temperature)
        tok = int(np.argmax(dist)) if temperature == 0 else sample_index(dist, rng)
        tokens.append(tok)
        qs.append(float(dist[tok]))
        dists.append(dist)
        work.append(tok)
    return DraftProposal(tokens=tokens, q=np.array(qs), dists=dists)


def target_scores(
    model: NGramModel,
    prefix: Sequence[int],
    draft_tokens: Sequence[int],
    extractor: FeatureExtractor | None = None,
) -> tuple[list[np.ndarray], list[np.ndarray] | None]:
    """Score drafted tokens with the target model in one pass.

    Returns gamma+1 raw next-token distributions (the last one backs the
    bonus token) and, when an extractor is given, one feature vector per
    drafted token.
    """
    if len(draft_tokens) == 0:
        raise ValueError("draft_tokens must be nonempty")
    work = list(prefix)
    dists: list[np.ndarray] = []
    feats: list[np.ndarray] | None = [] if extractor is not None else None
    for tok in draft_tokens:
        dists.append(model.next_distribution(work))
        if extractor is not None:
            feats.append(extractor(work, tok))
        work.append(tok)
    dists.append(model.next_distribution(work))
    return dists, feats


# ----------------------------------------------------------------------
# verification policies
# ----------------------------------------------------------------------


def _alignment_ratios(
    p: Sequence[np.ndarray], q_dists: Sequence[np.ndarray], draft_tokens: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    q = np.array([q_dists[t][tok] for t, tok in enumerate(draft_tokens)])
    p_tok = np.array([p[t][tok] for t, tok in enumerate(draft_tokens)])
    return q, np.minimum(1.0, p_tok / q)


def _residual_token(
    p_t: np.ndarray, q_t: np.ndarray, rng: np.random.Generator
) -> int:
    residual = np.maximum(0.0, p_t - q_t)
    mass = residual.sum()
    if mass <= _RESIDUAL_EPS:
        warnings.warn("residual distribution is empty; falling back to target", RuntimeWarning)
        return sample_index(p_t, rng)
    return sample_index(residual / mass, rng)


def verify_rejection(
    p: Sequence[np.ndarray],
    q_dists: Sequence[np.ndarray],
    draft_tokens: Sequence[int],
    u: np.ndarray,
    rng: np.random.Generator,
) -> VerificationTrace:
    """Rejection-sampling verification of one drafted cycle.

    ``p`` must hold gamma+1 target distributions and ``q_dists`` the gamma
    draft distributions, both already shaped for the decode temperature.
    """
    gamma = len(draft_tokens)
    if len(p) != gamma + 1:
        raise ValueError("need gamma+1 target distributions")
    q, r = _alignment_ratios(p, q_dists, draft_tokens)
    decisions = ["not_reached"] * gamma
    for t in range(gamma):
        if u[t] < r[t]:
            decisions[t] = "accept_align"
            continue
        decisions[t] = "reject"
        correction = _residual_token(p[t], q_dists[t], rng)
        return VerificationTrace(
            policy="rejection",
            draft_tokens=list(draft_tokens),
            p=list(p),
            q=q,
            u=np.asarray(u),
            r=r,
            judge_scores=None,
            accepted_count=t,
            emitted=list(draft_tokens[:t]) + [correction],
            correction_source="residual",
            decisions=decisions,
        )
    bonus = sample_index(p[gamma], rng)
    return VerificationTrace(
        policy="rejection",
        draft_tokens=list(draft_tokens),
        p=list(p),
        q=q,
        u=np.asarray(u),
        r=r,
        judge_scores=None,
        accepted_count=gamma,
        emitted=list(draft_tokens) + [bonus],
        correction_source="bonus",
        decisions=decisions,
    )


def verify_greedy(
    p: Sequence[np.ndarray],
    draft_tokens: Sequence[int],
    temperature: float = 0.0,
    rng: np.random.Generator | None = None,
) -> VerificationTrace:
    """Accept drafted tokens while they match the target argmax exactly."""
    return _verify_ranked(p, draft_tokens, k=1, temperature=temperature, rng=rng, policy="greedy")


def verify_topk(
    p: Sequence[np.ndarray],
    draft_tokens: Sequence[int],
    k: int,
    temperature: float = 0.0,
    rng: np.random.Generator | None = None,
) -> VerificationTrace:
    """Accept drafted tokens while they rank in the target's top k."""
    return _verify_ranked(p, draft_tokens, k=k, temperature=temperature, rng=rng, policy="topk")


def _verify_ranked(p, draft_tokens, k, temperature, rng, policy):
    gamma = len(draft_tokens)
    if len(p) != gamma + 1:
        raise ValueError("need gamma+1 target distributions")
    if k > len(p[0]):
        raise ValueError(f"k={k} exceeds vocab size {len(p[0])}")
    decisions = ["not_reached"] * gamma
    for t, tok in enumerate(draft_tokens):
        if tok in top_k_tokens(p[t], k):
            decisions[t] = "accept_align"
            continue
        decisions[t] = "reject"
        correction = int(np.argmax(p[t]))
        return VerificationTrace(
            policy=policy,
            draft_tokens=list(draft_tokens),
            p=list(p),
            q=None,
            u=None,
            r=None,
            judge_scores=None,
            accepted_count=t,
            emitted=list(draft_tokens[:t]) + [correction],
            correction_source="argmax",
            decisions=decisions,
        )
    if rng is None and temperature > 0:
        raise ValueError("rng required to sample the bonus token at temperature > 0")
    bonus = sample_token(p[gamma], temperature, rng) if temperature > 0 else int(np.argmax(p[gamma]))
    return VerificationTrace(
        policy=policy,
        draft_tokens=list(draft_tokens),
        p=list(p),
        q=None,
        u=None,
        r=None,
        judge_scores=None,
        accepted_count=gamma,
        emitted=list(draft_tokens) + [bonus],
        correction_source="bonus",
        decisions=decisions,
    )


def verify_judge_two_stage(
    features: Sequence[np.ndarray],
    p: Sequence[np.ndarray],
    q_dists: Sequence[np.ndarray],
    draft_tokens: Sequence[int],
    verifier,
    theta: float,
    u: np.ndarray,
    rng: np.random.Generator,
) -> VerificationTrace:
    """Two-stage verification: judge first, alignment as the fallback.

    Position t is accepted when the verifier's score exceeds ``theta`` or
    when the rejection rule accepts on the shared uniform stream; the cycle
    stops at the first position both stages reject, and the correction
    token follows the alignment rule at that position.
    """
    gamma = len(draft_tokens)
    if len(features) != gamma:
        raise ValueError("need one feature vector per drafted token")
    q, r = _alignment_ratios(p, q_dists, draft_tokens)
    scores = verifier.predict_proba(np.asarray(features))[:, 1]
    decisions = ["not_reached"] * gamma
    for t in range(gamma):
        if scores[t] > theta:
            decisions[t] = "accept_judge"
            continue
        if u[t] < r[t]:
            decisions[t] = "accept_align"
            continue
        decisions[t] = "reject"
        correction = _residual_token(p[t], q_dists[t], rng)
        return VerificationTrace(
            policy="judge",
            draft_tokens=list(draft_tokens),
            p=list(p),
            q=q,
            u=np.asarray(u),
            r=r,
            judge_scores=scores,
            accepted_count=t,
            emitted=list(draft_tokens[:t]) + [correction],
            correction_source="residual",
            decisions=decisions,
        )
    bonus = sample_index(p[gamma], rng)
    return VerificationTrace(
        policy="judge",
        draft_tokens=list(draft_tokens),
        p=list(p),
        q=q,
        u=np.asarray(u),
        r=r,
        judge_scores=scores,
        accepted_count=gamma,
        emitted=list(draft_tokens) + [bonus],
        correction_source="bonus",
        decisions=decisions,
    )


def alignment_accept_count(trace: VerificationTrace) -> int:
    """Accepted count the alignment rule alone would have produced on this
    cycle's inputs (same draft, same uniforms). Used for the paired
    two-stage dominance check."""
    if trace.r is None or trace.u is None:
        raise ValueError("trace has no alignment ratios")
    for t in range(len(trace.draft_tokens)):
        if not trace.u[t] < trace.r[t]:
            return t
    return len(trace.draft_tokens)


# ----------------------------------------------------------------------
# decode loop
# ----------------------------------------------------------------------


def decode(
    target: NGramModel,
    draft_model: NGramModel,
    prompt: Sequence[int],
    config: DecodeConfig,
    extractor: FeatureExtractor | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[list[int], DecodeMetrics, list[VerificationTrace]]:
    """Run the draft/verify loop until the new-token budget is spent.

    Returns the emitted new tokens (truncated at the budget and after any
    stop token), per-run metrics, and one trace per cycle. Cycle traces
    keep their full emission, so metric means are exact even when the last
    cycle is truncated.
    """
    target._check_fitted()
    draft_model._check_fitted()
    if not all(0 <= t < target.vocab.size for t in prompt):
        raise ValueError("prompt tokens out of vocab")
    policy = config.policy
    if isinstance(policy, JudgePolicy):
        if policy.verifier is None:
            raise ValueError("judge policy needs a verifier")
        if extractor is None:
            extractor = FeatureExtractor(target, draft_model)
    if rng is None:
        rng = np.random.default_rng(config.seed)

    temperature = config.temperature
    seq = list(prompt)
    new_tokens: list[int] = []
    traces: list[VerificationTrace] = []

    while len(new_tokens) < config.max_new_tokens:
        proposal = draft(draft_model, seq, config.gamma, temperature, rng)
        p_raw, feats = target_scores(
            target, seq, proposal.tokens,
            extractor if isinstance(policy, JudgePolicy) else None,
        )
        u = rng.random(config.gamma)

        if isinstance(policy, GreedyPolicy):
            trace = verify_greedy(p_raw, proposal.tokens, temperature, rng)
        elif isinstance(policy, TopKPolicy):
            trace = verify_topk(p_raw, proposal.tokens, policy.k, temperature, rng)
        elif isinstance(policy, RejectionPolicy):
            p_adj = [apply_temperature(d, temperature) for d in p_raw]
            trace = verify_rejection(p_adj, proposal.dists, proposal.tokens, u, rng)
        elif isinstance(policy, JudgePolicy):
            p_adj = [apply_temperature(d, temperature) for d in p_raw]
            trace = verify_judge_two_stage(
                feats, p_adj, proposal.dists, proposal.tokens,
                policy.verifier, policy.theta, u, rng,
            )
        else:
            raise TypeError(f"unknown policy: {policy!r}")
        if trace.u is None:
            trace.u = u
        traces.append(trace)

        emission = list(trace.emitted)
        stopped = False
        if config.stop_id is not None and config.stop_id in emission:
            emission = emission[: emission.index(config.stop_id) + 1]
            stopped = True
        emission = emission[: config.max_new_tokens - len(new_tokens)]
        seq.extend(emission)
        new_tokens.extend(emission)
        if stopped:
            break

    accepted = [t.accepted_count for t in traces]
    emitted = [len(t.emitted) for t in traces]
    metrics = DecodeMetrics(
        cycles=len(traces),
        total_emitted=len(new_tokens),
        mean_accepted_draft=float(np.mean(accepted)),
        mean_emitted_per_cycle=float(np.mean(emitted)),
    )
    return new_tokens, metrics, traces
