import dataclasses

import numpy as np
import pytest

from trajlstm.criteria import AcousticScorer, frame_posteriors
from trajlstm.decoder import BeamConfig, generate_lattice
from trajlstm.lattice import best_path
from trajlstm.models import (
    DepthHead, ModelConfig, OutputLayer, TwoHeadModel, _copy_head,
    build_second_head, init_model, lookahead_frames,
)
from trajlstm.ngram import train_ngram
from trajlstm.tensor import Tensor
from trajlstm.toytask import ToyTaskSpec, generate_corpus
from trajlstm.twopass import (
    DecodeTimeline, FrameClock, Replacement, latency_ms, latency_report,
    perceived_latency, replacement_rate, two_pass_decode,
)


def test_latency_table_values():
    clock = FrameClock(frame_ms=10.0, skip_factor=2)
    assert latency_ms(0, clock) == 0.0
    assert latency_ms(6, clock) == 120.0
    assert latency_ms(12, clock) == 240.0
    assert latency_ms(24, clock) == 480.0
    with pytest.raises(ValueError):
        latency_ms(-1, clock)


def test_clock_arithmetic():
    clock = FrameClock()
    assert clock.effective_ms == 20.0
    assert clock.arrival_ms(0) == 20.0
    assert clock.arrival_ms(11) == 240.0


def _toy_setup(seed=0, n_utt=4):
    spec = ToyTaskSpec(vocab_size=4, feature_dim=4, min_words=2, max_words=3,
                       noise_sigma=0.3, seed=seed)
    corpus = generate_corpus(spec, n_utt)
    lm = train_ngram(corpus.transcripts(), order=2, k=0.2, vocab=spec.vocab)
    scorer = AcousticScorer(np.full(spec.num_senones, 1.0 / spec.num_senones))
    return spec, corpus, lm, scorer


def _two_head(spec, seed=1):
    cfg = ModelConfig("cltlstm", 2, spec.feature_dim, 6, 4, spec.num_senones, 1)
    clt = init_model(cfg, seed=seed)
    return build_second_head(clt, seed=seed + 1)


def test_identical_heads_no_replacements():
    spec, corpus, lm, scorer = _toy_setup()
    two = _two_head(spec)
    # clone the lt head into the clt slot with identity context at tau=0
    clone = _copy_head(two.head_lt)
    r = two.config.proj_dim
    ctx = [[Tensor(np.eye(r))] for _ in range(two.config.num_layers - 1)]
    two = TwoHeadModel(dataclasses.replace(two.config, tau=0), two.shared,
                       two.head_lt, DepthHead(0, clone.depth_layers, ctx, clone.output))
    utt = corpus.utterances[0]
    tl = two_pass_decode(two, utt.frames, spec.lexicon(), lm, scorer)
    assert tl.replacements == []
    assert tl.pass1_words == tl.pass2_words
    assert replacement_rate(tl) == 0.0
    assert perceived_latency(tl)["max_ms"] == 0.0


def test_final_transcript_equals_standalone_clt_decode():
    spec, corpus, lm, scorer = _toy_setup(seed=3)
    two = _two_head(spec, seed=5)
    lex = spec.lexicon()
    for utt in corpus.utterances:
        two.shared.frames_evaluated = 0
        tl = two_pass_decode(two, utt.frames, lex, lm, scorer)
        assert two.shared.frames_evaluated == utt.num_frames  # single evaluation
        posts = frame_posteriors(two.view("clt"), [Tensor(r) for r in utt.frames])
        fs = scorer.frame_scores(np.log(np.maximum(posts, 1e-300)))
        lat = generate_lattice(fs, lex, lm, BeamConfig())
        words, _, _ = best_path(lat)
        assert tl.final_words == tuple(words)


def test_pass2_timing_contract():
    spec, corpus, lm, scorer = _toy_setup(seed=7)
    two = _two_head(spec, seed=9)
    delay = lookahead_frames(two.config)
    assert delay == 2
    utt = corpus.utterances[0]
    clock = FrameClock()
    tl = two_pass_decode(two, utt.frames, spec.lexicon(), lm, scorer, clock)
    n = utt.num_frames
    for e in tl.emissions:
        if e.decode_pass == 2:
            # no pass-2 emission for frame t before pass 1 processed t + delay
            need = min(e.frame_index + delay, n - 1)
            assert e.time_ms >= clock.arrival_ms(need) - 1e-9
    # pass-1 emissions precede or match pass-2 for the same position
    assert all(t1 <= t2 + 1e-9 for t1, t2 in
               zip(tl.pass1_times, tl.pass2_times))


def test_increasing_lookahead_preserves_pass2_output():
    # same head weights, bigger tau through zero-padded context windows:
    # extra windows with zero matrices add nothing, so outputs must match
    spec, corpus, lm, scorer = _toy_setup(seed=11)
    two = _two_head(spec, seed=13)
    utt = corpus.utterances[0]
    tl1 = two_pass_decode(two, utt.frames, spec.lexicon(), lm, scorer)

    wide = _copy_head(two.head_clt)
    for mats in wide.context:
        mats.append(Tensor(np.zeros((two.config.proj_dim, two.config.proj_dim))))
    wide = DepthHead(wide.tau + 1, wide.depth_layers, wide.context, wide.output)
    two_wide = TwoHeadModel(dataclasses.replace(two.config, tau=two.config.tau + 1),
                            two.shared, two.head_lt, wide)
    tl2 = two_pass_decode(two_wide, utt.frames, spec.lexicon(), lm, scorer)
    assert tl1.pass2_words == tl2.pass2_words
    # only the timing moved
    assert all(a <= b + 1e-9 for a, b in zip(tl1.pass2_times, tl2.pass2_times))


def test_replacement_rate_arithmetic():
    tl = DecodeTimeline(10, FrameClock())
    tl.pass1_words = tuple("abcdefghij")
    tl.pass1_times = tuple(20.0 * (i + 1) for i in range(10))
    tl.pass2_words = tl.pass1_words
    tl.pass2_times = tl.pass1_times
    assert replacement_rate(tl) == 0.0
    tl.replacements = [Replacement(260.0, (2, 3), ("c",), ("x",))]
    assert replacement_rate(tl) == pytest.approx(0.1)
    tl.replacements = [Replacement(400.0, (0, 10), tl.pass1_words, tl.pass2_words)]
    assert replacement_rate(tl) == 1.0


def test_perceived_latency_single_replacement():
    tl = DecodeTimeline(10, FrameClock())
    tl.pass1_words = tuple("abcdefghij")
    tl.pass1_times = tuple(float(i) for i in range(10))
    tl.pass2_words = tl.pass1_words
    tl.pass2_times = tl.pass1_times
    tl.replacements = [Replacement(tl.pass1_times[4] + 240.0, (4, 5), ("e",), ("x",))]
    stats = perceived_latency(tl)
    assert stats["max_ms"] == pytest.approx(240.0)
    assert stats["mean_ms"] == pytest.approx(24.0)
    # mean equals replacement_rate-weighted mean correction delay
    assert stats["mean_ms"] == pytest.approx(replacement_rate(tl) * 240.0)


def test_constructed_disagreement_yields_one_replacement():
    # Handcrafted sharp score streams: the passes agree on "a ? d" but
    # disagree on the middle word (pass 1 hears "c", pass 2 hears "b").
    # Pass 2 runs N frames behind, as the look-ahead head would.
    from trajlstm.decoder import Lexicon
    from trajlstm.ngram import train_ngram
    from trajlstm.twopass import _PassTracker, _alignment_replacements

    lex = Lexicon({"a": (1, 2), "b": (3, 4), "c": (5, 6), "d": (7, 8)}, (0,))
    lm = train_ngram([["a", "b", "d"], ["a", "c", "d"]], order=1, k=0.5)
    # sil a ? d sil...; the long tail lets pass 2 catch up before the flush
    senone_seq_1 = [0, 0, 1, 2, 5, 6, 7, 8, 0, 0, 0, 0, 0, 0]
    senone_seq_2 = [0, 0, 1, 2, 3, 4, 7, 8, 0, 0, 0, 0, 0, 0]
    n = len(senone_seq_1)

    def sharp(seq):
        fs = np.full((n, 9), -50.0)
        for t, s in enumerate(seq):
            fs[t, s] = 50.0
        return fs

    clock = FrameClock()
    delay = 4
    beam = BeamConfig(beam=5.0, max_tokens=50)
    tl = DecodeTimeline(n, clock)
    p1 = _PassTracker(1, lex, lm, beam)
    p2 = _PassTracker(2, lex, lm, beam)
    fs1, fs2 = sharp(senone_seq_1), sharp(senone_seq_2)
    for s in range(n):
        tick = clock.arrival_ms(s)
        p1.feed(s, fs1[s], tick, tl.emissions)
        t2 = s - delay
        if t2 >= 0:
            p2.feed(t2, fs2[t2], tick, tl.emissions)
    final_tick = clock.arrival_ms(n - 1)
    for t2 in range(max(n - delay, 0), n):
        p2.feed(t2, fs2[t2], final_tick, tl.emissions)
    tl.pass1_words = p1.finalize(final_tick, n - 1, tl.emissions)
    tl.pass1_times = tuple(p1.times)
    tl.pass2_words = p2.finalize(final_tick, n - 1, tl.emissions)
    tl.pass2_times = tuple(p2.times)
    tl.replacements = _alignment_replacements(tl)

    assert tl.pass1_words == ("a", "c", "d")
    assert tl.pass2_words == ("a", "b", "d")
    assert len(tl.replacements) == 1
    r = tl.replacements[0]
    assert r.span == (1, 2)
    assert (r.old, r.new) == (("c",), ("b",))
    emitted = tl.pass1_times[1]
    assert emitted < final_tick  # the word was committed mid-stream
    assert r.time_ms >= emitted + delay * clock.effective_ms - 1e-9
    assert replacement_rate(tl) == pytest.approx(1 / 3)


def test_report_aggregation():
    spec, corpus, lm, scorer = _toy_setup(seed=19)
    two = _two_head(spec, seed=21)
    tls = [two_pass_decode(two, u.frames, spec.lexicon(), lm, scorer)
           for u in corpus.utterances]
    rep = latency_report(two, tls)
    assert rep.added_latency_lt_ms == 0.0
    assert rep.added_latency_clt_ms == latency_ms(lookahead_frames(two.config))
    assert 0.0 <= rep.replacement_rate <= 1.0
    text = rep.export_text()
    assert "replacement_rate" in text


def test_rejects_empty_stream():
    spec, corpus, lm, scorer = _toy_setup(seed=23)
    two = _two_head(spec, seed=25)
    with pytest.raises(ValueError):
        two_pass_decode(two, [], spec.lexicon(), lm, scorer)


def test_timeline_export_lines():
    spec, corpus, lm, scorer = _toy_setup(seed=27)
    two = _two_head(spec, seed=29)
    tl = two_pass_decode(two, corpus.utterances[0].frames, spec.lexicon(), lm, scorer)
    lines = tl.export_lines()
    assert lines
    assert all(line.startswith("{") for line in lines)
