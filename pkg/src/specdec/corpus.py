"""Synthetic corpus generation and plain-text corpus ingestion.

The shipped corpus source is a seeded Markov chain with an explicit
transition table, so tests can compare trained models against analytic
ground truth (transition probabilities, conditional entropy). Plain-text
corpora are supported through whitespace or character tokenization.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .vocab import Vocab


class ReferenceChain:
    """Seeded Markov chain over a small symbol vocabulary.

    ``context_len`` is the number of conditioning tokens (1 gives the
    standard bigram-structured chain shipped as the default corpus source).
    The first ``context_len`` tokens of a sequence are drawn i.i.d. from the
    initial distribution; later tokens follow the transition table.
    """

    def __init__(
        self,
        vocab_size: int = 20,
        context_len: int = 1,
        seed: int = 7,
        concentration: float = 1.0,
    ):
        if vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if context_len < 1:
            raise ValueError("context_len must be >= 1")
        self.vocab_size = vocab_size
        self.context_len = context_len
        self.seed = seed
        rng = np.random.default_rng(seed)
        shape = (vocab_size,) * context_len
        trans = rng.gamma(concentration, size=shape + (vocab_size,))
        self.transition = trans / trans.sum(axis=-1, keepdims=True)
        init = rng.gamma(1.0, size=vocab_size)
        self.initial = init / init.sum()
        self.vocab = Vocab.of_size(vocab_size)

    def next_probs(self, context: Sequence[int]) -> np.ndarray:
        if len(context) != self.context_len:
            raise ValueError(f"context must have length {self.context_len}")
        return self.transition[tuple(context)]

    def sample_sequence(self, length: int, rng: np.random.Generator) -> list[int]:
        if length < 1:
            raise ValueError("length must be >= 1")
        seq: list[int] = []
        for i in range(length):
            if i < self.context_len:
                probs = self.initial
            else:
                probs = self.next_probs(seq[-self.context_len :])
            seq.append(int(rng.choice(self.vocab_size, p=probs)))
        return seq

    def sample_corpus(self, n_sequences: int, length: int, seed: int) -> list[list[int]]:
        rng = np.random.default_rng(seed)
        return [self.sample_sequence(length, rng) for _ in range(n_sequences)]

    def sample_prompts(
        self,
        n: int,
        length: int,
        seed: int,
        exclude: set[tuple[int, ...]] | frozenset = frozenset(),
    ) -> list[tuple[int, ...]]:
        """Distinct prompts of the given length, deterministic per seed.

        Prompts listed in ``exclude`` are skipped, which keeps evaluation
        prompts disjoint from label-generation prompts by construction.
        """
        rng = np.random.default_rng(seed)
        prompts: list[tuple[int, ...]] = []
        seen: set[tuple[int, ...]] = set(exclude)
        attempts = 0
        while len(prompts) < n:
            attempts += 1
            if attempts > 1000 * n:
                raise RuntimeError("could not sample enough distinct prompts")
            p = tuple(self.sample_sequence(length, rng))
            if p not in seen:
                seen.add(p)
                prompts.append(p)
        return prompts

    def stationary(self) -> np.ndarray:
        """Stationary distribution over contexts, by power iteration."""
        n_ctx = self.vocab_size**self.context_len
        flat = self.transition.reshape(n_ctx, self.vocab_size)
        # Context transition: (c_1..c_m) -> (c_2..c_m, t) with prob P(t | context).
        pi = np.full(n_ctx, 1.0 / n_ctx)
        for _ in range(10_000):
            nxt = np.zeros(n_ctx)
            for ctx in range(n_ctx):
                succ_base = (ctx % (self.vocab_size ** (self.context_len - 1))) * self.vocab_size
                for t in range(self.vocab_size):
                    nxt[succ_base + t] += pi[ctx] * flat[ctx, t]
            if np.abs(nxt - pi).sum() < 1e-13:
                pi = nxt
                break
            pi = nxt
        return pi

    def conditional_entropy(self) -> float:
        """Stationary per-step entropy of the chain, in nats."""
        pi = self.stationary()
        flat = self.transition.reshape(-1, self.vocab_size)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(flat > 0, np.log(flat), 0.0)
        return float(-(pi[:, None] * flat * logs).sum())


# ----------------------------------------------------------------------
# plain-text corpora
# ----------------------------------------------------------------------


def tokenize_text(text: str, mode: str) -> list[list[str]]:
    """Split text into per-line token-string sequences."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if mode == "whitespace":
        return [ln.split() for ln in lines]
    if mode == "char":
        return [list(ln) for ln in lines]
    raise ValueError(f"unknown tokenizer mode: {mode!r}")


def build_vocab(sequences: Sequence[Sequence[str]]) -> Vocab:
    """Vocabulary of all distinct tokens, in sorted order."""
    symbols = sorted({tok for seq in sequences for tok in seq})
    return Vocab(symbols)


def load_text_corpus(path: str | Path, mode: str = "whitespace") -> tuple[list[list[int]], Vocab]:
    """Read a text file into token-id sequences plus the induced vocab."""
    text = Path(path).read_text()
    seqs = tokenize_text(text, mode)
    seqs = [s for s in seqs if s]
    if not seqs:
        raise ValueError("empty corpus")
    vocab = build_vocab(seqs)
    return [vocab.encode(s) for s in seqs], vocab
