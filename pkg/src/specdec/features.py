"""Deterministic per-token feature vectors for the judge verifier.

At desk scale there is no transformer hidden state to tap, so the verifier
consumes an explicit, model-derived feature layout instead. The extractor is
a pure function of (target model, draft model, prefix, token); a neural
backend can later supply real hidden states behind the same interface.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np

from .ngram import NGramModel

DEFAULT_FEATURE_DIM = 16
PROJECTION_SEED = 42
_BASE_SLOTS = 6
_MAX_PROJECTION_CELLS = 32_000_000


class FeatureExtractor:
    """Fixed feature layout for a (prefix, token) pair.

    Slots:
      0: log p_target(token | prefix)
      1: log p_draft(token | prefix)
      2: entropy of the target next-token distribution
      3: rank of the token under the target distribution, normalized to
         [0, 1] (count of strictly more probable tokens; equal-probability
         tokens share a rank)
      4: log-prob margin between the target's top token and this token
      5: prefix length saturation relative to the target's context span
      6..dim-1: frozen Gaussian random projection of the one-hot
         (context, token) pair, seeded at construction

    The projection matrix is materialized once per extractor from a fixed
    seed, so identical model pairs always produce byte-identical features.
    """

    def __init__(
        self,
        target: NGramModel,
        draft: NGramModel,
        dim: int = DEFAULT_FEATURE_DIM,
        projection_seed: int = PROJECTION_SEED,
    ):
        if dim <= _BASE_SLOTS:
            raise ValueError(f"feature dim must exceed {_BASE_SLOTS}")
        target._check_fitted()
        draft._check_fitted()
        if target.vocab != draft.vocab:
            raise ValueError("target and draft models must share a vocab")
        self.target = target
        self.draft = draft
        self.dim = dim
        self.projection_seed = projection_seed

        vsize = target.vocab.size
        span = target.order - 1
        n_pairs = (vsize + 1) ** span * vsize
        n_proj = dim - _BASE_SLOTS
        if n_pairs * n_proj > _MAX_PROJECTION_CELLS:
            raise ValueError(
                f"context/token space too large for a dense projection "
                f"({n_pairs} pairs x {n_proj} slots)"
            )
        rng = np.random.default_rng(projection_seed)
        self._projection = rng.standard_normal((n_proj, n_pairs))
        self._ctx_norm = max(span, 1)

    def pair_index(self, prefix: Sequence[int], token: int) -> int:
        """Mixed-radix index of the (effective context, token) pair.

        Context slots missing from short prefixes use a sentinel digit, so
        every backed-off context maps to a distinct column.
        """
        vsize = self.target.vocab.size
        ctx = self.target.context_for(prefix)
        span = self.target.order - 1
        idx = 0
        for j in range(span):
            digit = ctx[-1 - j] if j < len(ctx) else vsize
            idx += digit * (vsize + 1) ** j
        return idx * vsize + token

    def __call__(self, prefix: Sequence[int], token: int) -> np.ndarray:
        vsize = self.target.vocab.size
        if not 0 <= token < vsize:
            raise ValueError(f"unknown token: id {token}")
        p_t = self.target.next_distribution(prefix)
        p_d = self.draft.next_distribution(prefix)
        log_p = math.log(p_t[token])

        out = np.empty(self.dim)
        out[0] = log_p
        out[1] = math.log(p_d[token])
        out[2] = -(p_t * np.log(p_t)).sum()
        out[3] = int((p_t > p_t[token]).sum()) / (vsize - 1)
        out[4] = math.log(p_t.max()) - log_p
        out[5] = min(len(prefix), self._ctx_norm) / self._ctx_norm
        out[_BASE_SLOTS:] = self._projection[:, self.pair_index(prefix, token)]
        return out
