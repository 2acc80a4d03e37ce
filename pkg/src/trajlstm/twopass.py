"""Two-pass streaming decode simulator with exact latency accounting.

Pass 1 decodes incrementally from the zero-look-ahead head, committing a
word once every beam token agrees on it. Pass 2 decodes from the
look-ahead head, whose logits for frame t become available only after
frame t + N has arrived (N = total look-ahead), reusing the stored shared
time-LSTM outputs rather than recomputing them. Where the two transcripts
differ, replacement events are recorded with the time pass 2 committed the
span.

The wall clock is simulated: frame t completes at (t+1) * effective frame
duration, and compute time is modeled as zero. A per-frame compute-cost
hook on FrameClock supports sensitivity studies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .decoder import BeamConfig, Lexicon, TokenPasser
from .lattice import best_path
from .models import TwoHeadModel, TwoHeadStreamingSession, lookahead_frames
from .ngram import NGramLM
from .tensor import Tensor


@dataclass(frozen=True)
class FrameClock:
    frame_ms: float = 10.0
    skip_factor: int = 2
    compute_cost_ms: float = 0.0   # optional per-frame processing cost

    @property
    def effective_ms(self) -> float:
        return self.frame_ms * self.skip_factor

    def arrival_ms(self, frame_index: int) -> float:
        return (frame_index + 1) * self.effective_ms + self.compute_cost_ms


def latency_ms(lookahead: int, clock: FrameClock = FrameClock()) -> float:
    """Added latency of N look-ahead frames under frame skipping."""
    if lookahead < 0:
        raise ValueError("look-ahead frame count must be >= 0")
    return lookahead * clock.frame_ms * clock.skip_factor


@dataclass
class Emission:
    time_ms: float
    decode_pass: int
    frame_index: int
    word: str


@dataclass
class Replacement:
    time_ms: float
    span: tuple          # [start, end) indices into the pass-1 word stream
    old: tuple
    new: tuple


@dataclass
class DecodeTimeline:
    num_frames: int
    clock: FrameClock
    emissions: list = field(default_factory=list)      # ordered Emission
    replacements: list = field(default_factory=list)   # ordered Replacement
    pass1_words: tuple = ()
    pass1_times: tuple = ()
    pass2_words: tuple = ()
    pass2_times: tuple = ()

    @property
    def final_words(self) -> tuple:
        return self.pass2_words

    def export_lines(self):
        out = []
        for e in self.emissions:
            out.append(json.dumps({"time_ms": e.time_ms, "type": "emit",
                                   "pass": e.decode_pass, "frame": e.frame_index,
                                   "word": e.word}, sort_keys=True))
        for r in self.replacements:
            out.append(json.dumps({"time_ms": r.time_ms, "type": "replace",
                                   "span": list(r.span), "old": list(r.old),
                                   "new": list(r.new)}, sort_keys=True))
        return out


class _PassTracker:
    """Feeds one TokenPasser and tracks word commit times."""

    def __init__(self, decode_pass: int, lexicon, lm, beam: BeamConfig):
        self.decode_pass = decode_pass
        self.tp = TokenPasser(lexicon, lm, beam)
        self.words: list = []
        self.times: list = []
        self.frames: list = []

    def feed(self, frame_index: int, scores_row, tick: float, emissions: list):
        self.tp.feed(scores_row)
        committed = self.tp.committed_words()
        for i in range(len(self.words), len(committed)):
            self.words.append(committed[i])
            self.times.append(tick)
            self.frames.append(frame_index)
            emissions.append(Emission(tick, self.decode_pass, frame_index, committed[i]))

    def finalize(self, tick: float, last_frame: int, emissions: list) -> tuple:
        words, _, _ = best_path(self.tp.finalize())
        for i in range(len(self.words), len(words)):
            self.words.append(words[i])
            self.times.append(tick)
            self.frames.append(last_frame)
            emissions.append(Emission(tick, self.decode_pass, last_frame, words[i]))
        assert tuple(self.words) == tuple(words)
        return tuple(words)


def two_pass_decode(model: TwoHeadModel, frames, lexicon: Lexicon, lm: NGramLM,
                    scorer, clock: FrameClock = FrameClock(),
                    beam: BeamConfig = BeamConfig()) -> DecodeTimeline:
    """Simulate the streaming two-pass decode of one utterance.

    ``frames`` are feature vectors (numpy rows or tensors); ``scorer`` maps
    log-posterior rows to acoustic scores. The shared time stack is stepped
    exactly once per frame; pass 2 consumes the stored outputs. The final
    transcript is pass 2's decode, bit-identical to a standalone decode of
    the look-ahead head on the same stream.
    """
    frames = [f if isinstance(f, Tensor) else Tensor(f) for f in frames]
    if len(frames) < 1:
        raise ValueError("stream must contain at least one frame")
    n = len(frames)
    delay = lookahead_frames(model.config)

    session = TwoHeadStreamingSession(model)
    timeline = DecodeTimeline(n, clock)
    p1 = _PassTracker(1, lexicon, lm, beam)
    p2 = _PassTracker(2, lexicon, lm, beam)

    def score_row(logits: Tensor) -> np.ndarray:
        lp = logits.data - _logsumexp(logits.data)
        return scorer.frame_scores(lp[None, :])[0]

    for s, frame in enumerate(frames):
        tick = clock.arrival_ms(s)
        lt_new, clt_new = session.feed(frame)
        for t, logits in lt_new:
            p1.feed(t, score_row(logits), tick, timeline.emissions)
        for t, logits in clt_new:
            assert s >= min(t + delay, n - 1)
            p2.feed(t, score_row(logits), tick, timeline.emissions)
    final_tick = clock.arrival_ms(n - 1)
    _, clt_tail = session.finish()
    for t, logits in clt_tail:
        p2.feed(t, score_row(logits), final_tick, timeline.emissions)

    timeline.pass1_words = p1.finalize(final_tick, n - 1, timeline.emissions)
    timeline.pass1_times = tuple(p1.times)
    timeline.pass2_words = p2.finalize(final_tick, n - 1, timeline.emissions)
    timeline.pass2_times = tuple(p2.times)
    timeline.replacements = _alignment_replacements(timeline)
    return timeline


def _logsumexp(x: np.ndarray) -> float:
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def _alignment_replacements(timeline: DecodeTimeline) -> list:
    """Minimum-edit-distance spans where pass 2 overwrote pass 1."""
    old = list(timeline.pass1_words)
    new = list(timeline.pass2_words)
    n, m = len(old), len(new)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = cost[i - 1][j - 1] + (0 if old[i - 1] == new[j - 1] else 1)
            cost[i][j] = min(diag, cost[i - 1][j] + 1, cost[i][j - 1] + 1)
    ops = []  # (old_index, new_index, kind)
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i][j] == cost[i - 1][j - 1] + (0 if old[i - 1] == new[j - 1] else 1):
            ops.append((i - 1, j - 1, "match" if old[i - 1] == new[j - 1] else "sub"))
            i, j = i - 1, j - 1
        elif i > 0 and cost[i][j] == cost[i - 1][j] + 1:
            ops.append((i - 1, None, "del"))
            i -= 1
        else:
            ops.append((None, j - 1, "ins"))
            j -= 1
    ops.reverse()

    replacements = []
    run: list = []
    for op in ops:
        if op[2] == "match":
            if run:
                replacements.append(_make_replacement(run, timeline))
                run = []
        else:
            run.append(op)
    if run:
        replacements.append(_make_replacement(run, timeline))
    return replacements


def _make_replacement(run, timeline: DecodeTimeline) -> Replacement:
    old_idx = [i for i, _, _ in run if i is not None]
    new_idx = [j for _, j, _ in run if j is not None]
    if old_idx:
        span = (old_idx[0], old_idx[-1] + 1)
    else:
        anchor = new_idx[0]
        span = (anchor, anchor)  # pure insertion point in the pass-1 stream
    old = tuple(timeline.pass1_words[span[0]:span[1]])
    new = tuple(timeline.pass2_words[j] for j in new_idx)
    if new_idx:
        time_ms = max(timeline.pass2_times[j] for j in new_idx)
    else:
        time_ms = timeline.pass2_times[-1] if timeline.pass2_times else \
            timeline.clock.arrival_ms(timeline.num_frames - 1)
    return Replacement(time_ms, span, old, new)


def replacement_rate(timeline: DecodeTimeline) -> float:
    """Replaced pass-1 words divided by total pass-1 words."""
    total = len(timeline.pass1_words)
    if total == 0:
        return 0.0
    replaced = sum(r.span[1] - r.span[0] for r in timeline.replacements)
    return replaced / total


def perceived_latency(timeline: DecodeTimeline) -> dict:
    """Per-word correction delays: replacement time minus first emission
    time for replaced words, zero otherwise. Returns mean/median/max."""
    delays = [0.0] * len(timeline.pass1_words)
    for r in timeline.replacements:
        for i in range(r.span[0], r.span[1]):
            delays[i] = r.time_ms - timeline.pass1_times[i]
    if not delays:
        return {"mean_ms": 0.0, "median_ms": 0.0, "max_ms": 0.0, "per_word": []}
    return {
        "mean_ms": float(np.mean(delays)),
        "median_ms": float(np.median(delays)),
        "max_ms": float(np.max(delays)),
        "per_word": delays,
    }


@dataclass
class LatencyReport:
    added_latency_lt_ms: float
    added_latency_clt_ms: float
    replacement_rate: float
    perceived_mean_ms: float
    perceived_median_ms: float
    perceived_max_ms: float

    def export_text(self) -> str:
        lines = [
            "added_latency_lt_ms %.17g" % self.added_latency_lt_ms,
            "added_latency_clt_ms %.17g" % self.added_latency_clt_ms,
            "replacement_rate %.17g" % self.replacement_rate,
            "perceived_mean_ms %.17g" % self.perceived_mean_ms,
            "perceived_median_ms %.17g" % self.perceived_median_ms,
            "perceived_max_ms %.17g" % self.perceived_max_ms,
        ]
        return "\n".join(lines) + "\n"


def latency_report(model: TwoHeadModel, timelines,
                   clock: FrameClock = FrameClock()) -> LatencyReport:
    """Aggregate replacement and perceived-latency metrics over utterances."""
    n_words = 0
    n_replaced = 0
    delays: list = []
    for tl in timelines:
        n_words += len(tl.pass1_words)
        n_replaced += sum(r.span[1] - r.span[0] for r in tl.replacements)
        delays.extend(perceived_latency(tl)["per_word"])
    rate = n_replaced / n_words if n_words else 0.0
    return LatencyReport(
        added_latency_lt_ms=0.0,
        added_latency_clt_ms=latency_ms(lookahead_frames(model.config), clock),
        replacement_rate=rate,
        perceived_mean_ms=float(np.mean(delays)) if delays else 0.0,
        perceived_median_ms=float(np.median(delays)) if delays else 0.0,
        perceived_max_ms=float(np.max(delays)) if delays else 0.0,
    )
