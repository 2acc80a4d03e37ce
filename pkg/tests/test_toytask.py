import dataclasses

import numpy as np
import pytest

from trajlstm.toytask import (
    SIL_ID, ToyTaskSpec, generate_corpus, generate_words, load_corpus,
    save_corpus,
)


def _small_spec(**kw):
    base = dict(vocab_size=5, feature_dim=4, min_words=2, max_words=4,
                noise_sigma=0.3, seed=7)
    base.update(kw)
    return ToyTaskSpec(**base)


def test_noiseless_features_nearest_mean_classifiable():
    spec = _small_spec(noise_sigma=0.0, label_delay_ms=0.0)
    corpus = generate_corpus(spec, 10)
    means = spec.class_means()
    for utt in corpus.utterances:
        d = ((utt.frames[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        predicted = d.argmin(axis=1)
        assert (predicted == utt.alignment).all()


def test_same_seed_bitwise_identical():
    a = generate_corpus(_small_spec(), 5)
    b = generate_corpus(_small_spec(), 5)
    for ua, ub in zip(a.utterances, b.utterances):
        assert ua.words == ub.words
        assert ua.frames.tobytes() == ub.frames.tobytes()
        assert (ua.alignment == ub.alignment).all()
        assert ua.segments == ub.segments


def test_label_delay_shifts_boundaries_five_raw_frames():
    # Same seed with and without delay: raw segmentations agree, so the
    # post-skip boundary shift must be ceil((a+5)/2) - ceil(a/2): 3 when the
    # raw boundary is even, 2 when odd (the alternating 2/3 pattern).
    spec0 = _small_spec(label_delay_ms=0.0)
    spec5 = _small_spec(label_delay_ms=50.0)
    assert spec5.label_delay_raw == 5
    c0 = generate_corpus(spec0, 20)
    c5 = generate_corpus(spec5, 20)
    diffs = []
    for u0, u5 in zip(c0.utterances, c5.utterances):
        assert u0.words == u5.words
        # interior boundaries only; the ends are clamped
        for (w0, a0, _), (w5, a5, _) in list(zip(u0.segments, u5.segments))[1:-1]:
            assert w0 == w5
            diffs.append(a5 - a0)
    assert set(diffs) <= {2, 3}
    assert 2.3 < np.mean(diffs) < 2.7  # the effective 2.5-frame shift


def test_bigram_statistics_converge_to_markov_matrix():
    spec = _small_spec()
    trans = spec.transition_matrix()
    rng = np.random.default_rng(123)
    counts = np.zeros_like(trans)
    for _ in range(10000):
        seq = generate_words(rng, spec)
        for a, b in zip(seq, seq[1:]):
            counts[a, b] += 1
    row_n = counts.sum(axis=1)
    for i in range(spec.vocab_size):
        if row_n[i] < 50:
            continue
        p_hat = counts[i] / row_n[i]
        sigma = np.sqrt(trans[i] * (1 - trans[i]) / row_n[i])
        assert (np.abs(p_hat - trans[i]) <= 3 * sigma + 1e-12).all()


def test_segments_consistent_with_alignment():
    spec = _small_spec()
    corpus = generate_corpus(spec, 20)
    lex = spec.lexicon()
    for utt in corpus.utterances:
        assert utt.segments[0][0] is None
        assert utt.segments[-1][0] is None
        assert [w for w, _, _ in utt.segments if w is not None] == utt.words
        for w, f0, f1, senones in utt.segment_tuples():
            assert f1 > f0
            if w is None:
                assert all(s == SIL_ID for s in senones)
            else:
                allowed = set(lex.prons[w])
                assert set(senones) <= allowed
        assert utt.segments[-1][2] == utt.num_frames
        assert len(utt.frames) == utt.num_frames


def test_every_senone_survives_preprocessing():
    spec = _small_spec()
    corpus = generate_corpus(spec, 20)
    lex = spec.lexicon()
    for utt in corpus.utterances:
        for w, f0, f1, senones in utt.segment_tuples():
            if w is None:
                continue
            # each of the word's senones keeps at least one frame, in order
            kept = [s for i, s in enumerate(senones) if i == 0 or senones[i - 1] != s]
            assert tuple(kept) == lex.prons[w]


def test_corpus_roundtrip(tmp_path):
    spec = _small_spec()
    corpus = generate_corpus(spec, 6)
    save_corpus(tmp_path / "corpus", corpus)
    back = load_corpus(tmp_path / "corpus")
    assert back.spec == spec
    for a, b in zip(corpus.utterances, back.utterances):
        assert a.uid == b.uid
        assert a.words == b.words
        assert a.frames.tobytes() == b.frames.tobytes()
        assert (a.alignment == b.alignment).all()
        assert a.segments == b.segments


def test_spec_validation():
    with pytest.raises(ValueError):
        _small_spec(senones_per_word=1)
    with pytest.raises(ValueError):
        _small_spec(frames_per_senone=3, duration_jitter=1)
    with pytest.raises(ValueError):
        _small_spec(sil_frames=6)
