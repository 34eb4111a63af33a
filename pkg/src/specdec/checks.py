"""Statistical self-checks: distribution preservation and entropy reduction.

Both checks compare the implementation against exact enumeration. The
distribution check verifies that rejection-sampling verification leaves the
target model's sampling distribution intact (and that a deliberately broken
accept-all verifier does not); the entropy check verifies, over random
small joints, that conditioning on a suffix never increases the conditional
entropy of a token given its prefix, strictly decreasing it whenever the
conditional mutual information is positive.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from itertools import product

import numpy as np

from .decoding import DecodeConfig, RejectionPolicy, TopKPolicy, decode
from .ngram import NGramModel

MAX_ENUM_VOCAB = 8
MAX_ENUM_LEN = 4


# ----------------------------------------------------------------------
# distribution preservation
# ----------------------------------------------------------------------


def enumerate_sequence_distribution(
    model: NGramModel, prompt: Sequence[int], length: int
) -> dict[tuple[int, ...], float]:
    """Exact probability of every length-``length`` continuation."""
    vsize = model.vocab.size
    if vsize > MAX_ENUM_VOCAB or length > MAX_ENUM_LEN:
        raise ValueError(
            f"enumeration bounds exceeded (vocab {vsize} > {MAX_ENUM_VOCAB} "
            f"or length {length} > {MAX_ENUM_LEN})"
        )
    out: dict[tuple[int, ...], float] = {}
    for seq in product(range(vsize), repeat=length):
        work = list(prompt)
        prob = 1.0
        for tok in seq:
            prob *= model.next_distribution(work)[tok]
            work.append(tok)
        out[seq] = prob
    return out


def total_variation(
    exact: dict[tuple[int, ...], float], counts: Counter, n_samples: int
) -> float:
    tv = 0.0
    for seq, prob in exact.items():
        tv += abs(counts.get(seq, 0) / n_samples - prob)
    return 0.5 * tv


def _sampled_sequence_counts(
    target: NGramModel,
    draft_model: NGramModel,
    prompt: Sequence[int],
    length: int,
    n_samples: int,
    seed: int,
    policy,
) -> Counter:
    counts: Counter = Counter()
    config = DecodeConfig(
        gamma=length, max_new_tokens=length, temperature=1.0, seed=0, policy=policy
    )
    rng = np.random.default_rng(seed)
    for _ in range(n_samples):
        tokens, _, _ = decode(target, draft_model, prompt, config, rng=rng)
        counts[tuple(tokens)] += 1
    return counts


@dataclass
class DistributionCheckResult:
    tv: float
    control_tv: float
    bound: float
    n_samples: int
    length: int
    passed: bool  # main run under the bound AND the broken control above it


def distribution_check(
    target: NGramModel,
    draft_model: NGramModel,
    prompt: Sequence[int],
    length: int = 3,
    n_samples: int = 200_000,
    seed: int = 0,
    bound: float = 0.02,
) -> DistributionCheckResult:
    """Monte-Carlo vs exact enumeration, plus an accept-all negative control.

    The control replaces verification with a top-V policy that accepts every
    draft token, which collapses the emitted distribution onto the draft
    model's; it must fail the same bound for the check to count.
    """
    exact = enumerate_sequence_distribution(target, prompt, length)
    counts = _sampled_sequence_counts(
        target, draft_model, prompt, length, n_samples, seed, RejectionPolicy()
    )
    tv = total_variation(exact, counts, n_samples)

    control_counts = _sampled_sequence_counts(
        target, draft_model, prompt, length, n_samples, seed,
        TopKPolicy(k=target.vocab.size),
    )
    control_tv = total_variation(exact, control_counts, n_samples)
    return DistributionCheckResult(
        tv=float(tv),
        control_tv=float(control_tv),
        bound=bound,
        n_samples=n_samples,
        length=length,
        passed=bool(tv < bound and control_tv >= bound),
    )


# ----------------------------------------------------------------------
# conditional-entropy reduction
# ----------------------------------------------------------------------


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def joint_entropy_stats(joint: np.ndarray) -> tuple[float, float, float]:
    """(H(X), H(X|S), I(X;S)) for a joint distribution over (X, S).

    The mutual information is computed from the KL form, independently of
    the entropy difference, so the two routes cross-check each other.
    """
    px = joint.sum(axis=1)
    ps = joint.sum(axis=0)
    h_x = _entropy(px)
    h_x_given_s = 0.0
    for s in range(joint.shape[1]):
        if ps[s] > 0:
            h_x_given_s += ps[s] * _entropy(joint[:, s] / ps[s])
    outer = np.outer(px, ps)
    mask = joint > 0
    cmi = float((joint[mask] * np.log(joint[mask] / outer[mask])).sum())
    return h_x, float(h_x_given_s), cmi


@dataclass
class TheoremCheckResult:
    trials: int
    violations: int  # H(X|S) exceeded H(X) beyond tolerance
    strict_failures: int  # positive CMI without a strict entropy drop
    max_excess: float
    passed: bool


def entropy_inequality_check(
    n_trials: int = 1000,
    max_support: int = 8,
    seed: int = 0,
    tol: float = 1e-12,
    cmi_floor: float = 1e-6,
) -> TheoremCheckResult:
    """Exact-enumeration sweep over random joints of a token and its suffix."""
    violations = 0
    strict_failures = 0
    max_excess = -np.inf
    for trial in range(n_trials):
        rng = np.random.default_rng((seed, trial))
        nx = int(rng.integers(2, max_support + 1))
        ns = int(rng.integers(2, max_support + 1))
        joint = rng.gamma(0.6, size=(nx, ns))
        joint /= joint.sum()
        h_x, h_x_given_s, cmi = joint_entropy_stats(joint)
        excess = h_x_given_s - h_x
        max_excess = max(max_excess, excess)
        if excess > tol:
            violations += 1
        if cmi > cmi_floor and not h_x_given_s < h_x:
            strict_failures += 1
    return TheoremCheckResult(
        trials=n_trials,
        violations=violations,
        strict_failures=strict_failures,
        max_excess=float(max_excess),
        passed=(violations == 0 and strict_failures == 0),
    )
