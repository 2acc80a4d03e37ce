import math

import numpy as np
import pytest

from trajlstm.ngram import EOS, NGramLM, read_lm, train_ngram, write_lm


def _random_corpus(rng, vocab, n_sentences=30, max_len=8):
    corpus = []
    for _ in range(n_sentences):
        n = int(rng.integers(1, max_len + 1))
        corpus.append([vocab[int(i)] for i in rng.integers(0, len(vocab), size=n)])
    return corpus


def test_unigram_empirical_frequencies():
    k = 0.3
    lm = train_ngram([["a", "b", "a"]], order=1, k=k)
    # targets a, b, </s>; counts 2, 1, 1; total 4
    p0 = 1.0 / 3.0
    assert lm.logprob("a", []) == pytest.approx(math.log((2 + k * p0) / (4 + k)), abs=1e-15)
    assert lm.logprob("b", []) == pytest.approx(math.log((1 + k * p0) / (4 + k)), abs=1e-15)


def test_bigram_deterministic_corpus():
    corpus = [["a", "b"] * 4 for _ in range(5)]
    lm = train_ngram(corpus, order=2, k=0.01)
    assert math.exp(lm.logprob("b", ["a"])) > 0.99
    assert math.exp(lm.logprob("a", ["b"])) > 0.7  # "b" also precedes </s>


def test_conditional_sums_to_one():
    rng = np.random.default_rng(5)
    vocab = ["w%d" % i for i in range(6)]
    corpus = _random_corpus(rng, vocab)
    for order in (1, 2, 3):
        lm = train_ngram(corpus, order=order, k=0.2, vocab=vocab)
        histories = [[], ["w0"], ["w1", "w2"], ["w5", "w5"], ["nothere"]]
        for h in histories[:4]:
            assert lm.conditional_sum(h) == pytest.approx(1.0, abs=1e-9)


def test_higher_order_perplexity_not_worse_on_training_text():
    rng = np.random.default_rng(7)
    vocab = ["w%d" % i for i in range(5)]
    for seed in range(3):
        corpus = _random_corpus(np.random.default_rng(seed), vocab)
        ppls = []
        for order in (1, 2, 3):
            lm = train_ngram(corpus, order=order, k=0.1, vocab=vocab)
            ppls.append(lm.perplexity(corpus))
        assert ppls[1] <= ppls[0] + 1e-9
        assert ppls[2] <= ppls[1] + 1e-9


def test_text_roundtrip_scores_bitwise(tmp_path):
    rng = np.random.default_rng(11)
    vocab = ["w%d" % i for i in range(5)]
    corpus = _random_corpus(rng, vocab)
    lm = train_ngram(corpus, order=3, k=0.15, vocab=vocab)
    path = tmp_path / "lm.txt"
    write_lm(path, lm)
    back = read_lm(path)
    assert back.order == lm.order
    assert back.vocab == lm.vocab
    for sent in corpus[:10]:
        assert back.sentence_logprob(sent) == lm.sentence_logprob(sent)
    # unseen continuations exercise the backoff path
    assert back.logprob("w4", ["w0", "w0"]) == lm.logprob("w4", ["w0", "w0"])
    assert back.conditional_sum(["w0", "w0"]) == pytest.approx(1.0, abs=1e-9)


def test_out_of_vocabulary_rejected():
    lm = train_ngram([["a", "b"]], order=2, k=0.1)
    with pytest.raises(ValueError):
        lm.logprob("zzz", [])
    with pytest.raises(ValueError):
        train_ngram([["a", "q"]], order=1, k=0.1, vocab=["a"])


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train_ngram([], order=1)


def test_eos_scoring():
    lm = train_ngram([["a"]], order=2, k=0.1)
    # P(</s> | a) should dominate after seeing "a" at sentence end every time
    assert math.exp(lm.logprob(EOS, ["a"])) > 0.9
