"""Temperature shaping and seeded sampling over explicit distributions."""

from __future__ import annotations

import numpy as np


def apply_temperature(probs: np.ndarray, temperature: float) -> np.ndarray:
    """Reshape a distribution for decoding at the given temperature.

    temperature 0 collapses to a one-hot at the argmax (lowest id on ties);
    temperature t > 0 returns probs**(1/t) renormalized. temperature 1 is
    the identity.
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if temperature == 0:
        out = np.zeros_like(probs)
        out[int(np.argmax(probs))] = 1.0
        return out
    if temperature == 1:
        return probs
    out = probs ** (1.0 / temperature)
    return out / out.sum()


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one index from ``probs`` using a single uniform variate."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(idx, len(probs) - 1)


def sample_token(probs: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    """Sample a token id at the given temperature.

    At temperature 0 this is the argmax (lowest id on ties) and consumes no
    randomness; otherwise one uniform draw from ``rng`` is consumed.
    """
    if temperature == 0:
        return int(np.argmax(probs))
    return sample_index(apply_temperature(probs, temperature), rng)


def top_k_tokens(probs: np.ndarray, k: int) -> set[int]:
    """Ids of the k highest-probability tokens, ties broken by lowest id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(probs):
        raise ValueError(f"k={k} exceeds vocab size {len(probs)}")
    order = np.lexsort((np.arange(len(probs)), -probs))
    return set(int(t) for t in order[:k])
