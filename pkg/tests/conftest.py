from __future__ import annotations

import numpy as np
import pytest

from specdec import FeatureExtractor, NGramModel, ReferenceChain, Vocab


@pytest.fixture(scope="session")
def chain() -> ReferenceChain:
    return ReferenceChain(vocab_size=20, context_len=1, seed=11, concentration=1.0)


@pytest.fixture(scope="session")
def corpus(chain) -> list[list[int]]:
    return chain.sample_corpus(300, 48, seed=(0, 1))


@pytest.fixture(scope="session")
def target(chain, corpus) -> NGramModel:
    return NGramModel(order=3, alpha=0.5, vocab=chain.vocab).fit(corpus)


@pytest.fixture(scope="session")
def draft_model(chain, corpus) -> NGramModel:
    return NGramModel(order=2, alpha=0.5, vocab=chain.vocab).fit(corpus)


@pytest.fixture(scope="session")
def extractor(target, draft_model) -> FeatureExtractor:
    return FeatureExtractor(target, draft_model)


@pytest.fixture(scope="session")
def prompts(chain) -> list[tuple[int, ...]]:
    return chain.sample_prompts(12, 4, seed=(0, 2))


@pytest.fixture(scope="session")
def fitted_judge(target, draft_model, chain, extractor):
    """Small but real verifier: labeled data from 40 prompts, grid-searched."""
    from specdec import LabelConfig, TrainConfig, build_dataset, grid_search
    from specdec.labeling import calibrate_tau_on_prompts

    label_cfg = LabelConfig(suffix_len=20)
    cal_prompts = chain.sample_prompts(20, 4, seed=(0, 30))
    tau = calibrate_tau_on_prompts(target, draft_model, cal_prompts, label_cfg, 48)
    label_cfg = LabelConfig(suffix_len=20, tau=tau)
    train_prompts = chain.sample_prompts(40, 4, seed=(0, 31))
    examples, _ = build_dataset(target, draft_model, train_prompts, label_cfg, 48, extractor)
    X = np.array([e.features for e in examples])
    y = np.array([e.label for e in examples])
    return grid_search(X, y, TrainConfig(c_grid=(0.01, 1.0, 100.0), seed=0))


def random_model(vocab_size: int, order: int, seed: int, alpha: float = 0.5) -> NGramModel:
    """Small model trained on a random corpus; shared helper for tests."""
    rng = np.random.default_rng(seed)
    corpus = [rng.integers(0, vocab_size, size=30).tolist() for _ in range(8)]
    vocab = Vocab.of_size(vocab_size)
    return NGramModel(order=order, alpha=alpha, vocab=vocab).fit(corpus)
