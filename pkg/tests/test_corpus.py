import numpy as np
import pytest

from specdec import NGramModel, ReferenceChain, load_text_corpus
from specdec.corpus import build_vocab, tokenize_text


class TestReferenceChain:
    def test_transition_rows_are_distributions(self, chain):
        rows = chain.transition.reshape(-1, chain.vocab_size)
        assert np.allclose(rows.sum(axis=1), 1.0)
        assert (rows >= 0).all()

    def test_seeded_construction_is_reproducible(self):
        a = ReferenceChain(vocab_size=10, seed=3)
        b = ReferenceChain(vocab_size=10, seed=3)
        assert np.array_equal(a.transition, b.transition)
        assert np.array_equal(a.initial, b.initial)

    def test_sampling_is_seed_deterministic(self, chain):
        assert chain.sample_corpus(5, 20, seed=9) == chain.sample_corpus(5, 20, seed=9)

    def test_prompts_are_distinct_and_respect_exclusions(self, chain):
        first = chain.sample_prompts(30, 4, seed=1)
        assert len(set(first)) == 30
        second = chain.sample_prompts(30, 4, seed=2, exclude=set(first))
        assert not set(first) & set(second)

    def test_stationary_is_fixed_point(self, chain):
        pi = chain.stationary()
        assert pi.sum() == pytest.approx(1.0, abs=1e-9)
        flat = chain.transition.reshape(-1, chain.vocab_size)
        nxt = np.zeros_like(pi)
        for ctx in range(len(pi)):
            for t in range(chain.vocab_size):
                nxt[t] += pi[ctx] * flat[ctx, t]
        assert np.abs(nxt - pi).max() < 1e-9

    @pytest.mark.parametrize("order", [2, 3])
    def test_trained_model_entropy_matches_chain(self, chain, corpus, order):
        # Per-step entropy of a fitted model vs the chain's analytic
        # conditional entropy, averaged along a long held-out sample.
        model = NGramModel(order=order, alpha=0.5, vocab=chain.vocab).fit(corpus)
        stream = chain.sample_sequence(4000, np.random.default_rng(6))
        entropies = [model.entropy(stream[:i]) for i in range(1, len(stream))]
        assert abs(np.mean(entropies) - chain.conditional_entropy()) < 0.1

    def test_second_order_chain_shapes(self):
        chain = ReferenceChain(vocab_size=6, context_len=2, seed=4)
        assert chain.transition.shape == (6, 6, 6)
        seq = chain.sample_sequence(30, np.random.default_rng(0))
        assert len(seq) == 30

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ReferenceChain(vocab_size=1)
        with pytest.raises(ValueError):
            ReferenceChain(context_len=0)


class TestTextCorpora:
    def test_whitespace_tokenization(self):
        seqs = tokenize_text("a b c\nd e\n\n", "whitespace")
        assert seqs == [["a", "b", "c"], ["d", "e"]]

    def test_char_tokenization(self):
        assert tokenize_text("ab\ncd", "char") == [["a", "b"], ["c", "d"]]

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="tokenizer"):
            tokenize_text("x", "bpe")

    def test_vocab_is_sorted_and_deduplicated(self):
        vocab = build_vocab([["b", "a"], ["a", "c"]])
        assert vocab.tokens == ("a", "b", "c")

    def test_corpus_round_trip(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("the cat sat\nthe dog ran\n")
        seqs, vocab = load_text_corpus(path, "whitespace")
        assert len(seqs) == 2
        assert vocab.decode(seqs[0]) == ["the", "cat", "sat"]

    def test_empty_corpus_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("\n\n")
        with pytest.raises(ValueError, match="empty corpus"):
            load_text_corpus(path)
