"""Additive-smoothed n-gram language models with exactly computable probabilities.

These models stand in for the target/draft pair of a speculative-decoding
setup: every next-token distribution, sequence likelihood, and joint
probability is available in closed form, so decoding and scoring behaviour
can be verified against enumeration oracles.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .vocab import Vocab

MODEL_FORMAT_VERSION = 1

TokenSeq = Sequence[int]


class NGramModel(BaseEstimator):
    """Count-based language model with additive smoothing.

    An order-k model conditions on the last k-1 tokens:
    ``P(token | context) = (count + alpha) / (context_total + alpha * V)``,
    which is strictly positive and sums to one for every context. Prefixes
    shorter than k-1 tokens back off to the longest context they can fill
    (the count table holds all context lengths 0..k-1); no synthetic
    begin-of-sequence padding is used.

    Instances are immutable after :meth:`fit`; the per-context distribution
    cache is idempotent and safe for concurrent readers.

    Parameters
    ----------
    order : int
        Context length plus one. ``order=1`` is a unigram model.
    alpha : float
        Additive smoothing constant, must be positive.
    vocab : Vocab
        Shared token alphabet. Target and draft models of one pipeline must
        use the same vocab.
    """

    def __init__(self, order: int = 3, alpha: float = 0.5, vocab: Vocab | None = None):
        self.order = order
        self.alpha = alpha
        self.vocab = vocab

    # ------------------------------------------------------------------
    # training
    # ------------------------------------------------------------------

    def fit(self, corpus: Sequence[TokenSeq]) -> "NGramModel":
        """Accumulate context/token counts from token-id sequences."""
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.vocab is None:
            raise ValueError("vocab must be set before fitting")
        if len(corpus) == 0:
            raise ValueError("empty corpus")

        vsize = self.vocab.size
        counts: dict[tuple[int, ...], np.ndarray] = {}
        max_ctx = self.order - 1
        for seq in corpus:
            seq = list(seq)
            for i, tok in enumerate(seq):
                if not 0 <= tok < vsize:
                    raise ValueError(f"unknown token: id {tok} not in vocab of size {vsize}")
                for c in range(min(max_ctx, i) + 1):
                    ctx = tuple(seq[i - c : i])
                    row = counts.get(ctx)
                    if row is None:
                        row = np.zeros(vsize, dtype=np.int64)
                        counts[ctx] = row
                    row[tok] += 1
        self.counts_ = counts
        self._dist_cache: dict[tuple[int, ...], np.ndarray] = {}
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "counts_"):
            raise NotFittedError("model is not fitted; call fit() first")

    # ------------------------------------------------------------------
    # probabilities
    # ------------------------------------------------------------------

    def context_for(self, prefix: TokenSeq) -> tuple[int, ...]:
        """Effective conditioning context: the last order-1 prefix tokens."""
        span = self.order - 1
        if span == 0:
            return ()
        return tuple(prefix[-span:]) if len(prefix) >= span else tuple(prefix)

    def next_distribution(self, prefix: TokenSeq) -> np.ndarray:
        """Smoothed next-token distribution after ``prefix``.

        Returns a read-only length-V array with strictly positive entries
        summing to one. The array is shared via an internal cache; do not
        mutate it.
        """
        self._check_fitted()
        ctx = self.context_for(prefix)
        dist = self._dist_cache.get(ctx)
        if dist is None:
            vsize = self.vocab.size
            row = self.counts_.get(ctx)
            if row is None:
                dist = np.full(vsize, 1.0 / vsize)
            else:
                dist = (row + self.alpha) / (row.sum() + self.alpha * vsize)
            dist.flags.writeable = False
            self._dist_cache[ctx] = dist
        return dist

    def token_logprob(self, token: int, prefix: TokenSeq) -> float:
        return float(math.log(self.next_distribution(prefix)[token]))

    def sequence_logprob(self, continuation: TokenSeq, prefix: TokenSeq = ()) -> float:
        """Log-probability of ``continuation`` given ``prefix`` (chain rule)."""
        if len(continuation) == 0:
            raise ValueError("empty continuation")
        work = list(prefix)
        total = 0.0
        for tok in continuation:
            total += math.log(self.next_distribution(work)[tok])
            work.append(tok)
        return total

    def greedy_token(self, prefix: TokenSeq) -> int:
        """Argmax of the next-token distribution, lowest id on ties."""
        return int(np.argmax(self.next_distribution(prefix)))

    def entropy(self, prefix: TokenSeq) -> float:
        """Shannon entropy (nats) of the next-token distribution."""
        dist = self.next_distribution(prefix)
        return float(-(dist * np.log(dist)).sum())


def train_ngram(corpus: Sequence[TokenSeq], order: int, alpha: float, vocab: Vocab) -> NGramModel:
    """Convenience wrapper: construct and fit an :class:`NGramModel`."""
    return NGramModel(order=order, alpha=alpha, vocab=vocab).fit(corpus)


# ----------------------------------------------------------------------
# model files
# ----------------------------------------------------------------------


def save_model(model: NGramModel, path: str | Path, meta: dict | None = None) -> None:
    """Write a model as a JSON document.

    The count table is stored exactly (integers), so load/save round-trips
    are bit-exact and reproduce identical probabilities.
    """
    model._check_fitted()
    table = {
        " ".join(str(t) for t in ctx): row.tolist() for ctx, row in model.counts_.items()
    }
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "order": model.order,
        "alpha": model.alpha,
        "vocab": list(model.vocab.tokens),
        "counts": table,
    }
    if meta is not None:
        doc["meta"] = meta
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_model(path: str | Path) -> NGramModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {doc.get('format_version')}")
    model = NGramModel(order=doc["order"], alpha=doc["alpha"], vocab=Vocab(doc["vocab"]))
    counts: dict[tuple[int, ...], np.ndarray] = {}
    for key, row in doc["counts"].items():
        ctx = tuple(int(t) for t in key.split()) if key else ()
        counts[ctx] = np.asarray(row, dtype=np.int64)
    model.counts_ = counts
    model._dist_cache = {}
    return model
