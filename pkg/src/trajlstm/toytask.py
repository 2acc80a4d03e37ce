"""Synthetic senone task: a desk-scale stand-in for a production corpus.

Words are fixed senone strings (default 3 senones each) plus one shared
silence senone; every utterance is silence-bracketed. Features are
per-senone Gaussian class means plus noise, emitted every frame_ms.

Preprocessing follows the streaming recipe exactly: senone labels are
shifted later by round(label_delay_ms / frame_ms) raw frames, then both
features and labels are decimated by skip_factor. All stored artifacts
(features, alignments, segments) live in the post-skip frame domain.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .decoder import SIL_WORD, Lexicon

SIL_ID = 0


@dataclass(frozen=True)
class ToyTaskSpec:
    vocab_size: int = 20
    senones_per_word: int = 3
    feature_dim: int = 8
    frames_per_senone: int = 4      # raw frames
    duration_jitter: int = 1
    min_words: int = 3
    max_words: int = 8
    noise_sigma: float = 0.4
    class_sep: float = 1.0
    frame_ms: float = 10.0
    skip_factor: int = 2
    label_delay_ms: float = 50.0
    sil_frames: int = 10            # raw; must stay comfortably above the delay
    sil_jitter: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 2 or self.senones_per_word < 2:
            raise ValueError("need at least 2 words and 2 senones per word")
        if self.frames_per_senone - self.duration_jitter < 3:
            raise ValueError("senones must last >= 3 raw frames to survive skipping")
        if self.sil_frames - self.sil_jitter < self.label_delay_raw + 3:
            raise ValueError("trailing silence must outlast the label delay")
        if self.skip_factor < 1:
            raise ValueError("skip_factor must be >= 1")

    @property
    def label_delay_raw(self) -> int:
        return int(round(self.label_delay_ms / self.frame_ms))

    @property
    def num_senones(self) -> int:
        return self.vocab_size * self.senones_per_word + 1

    @property
    def vocab(self) -> list:
        return ["w%02d" % i for i in range(self.vocab_size)]

    def pron(self, word_index: int) -> tuple:
        base = 1 + word_index * self.senones_per_word
        return tuple(range(base, base + self.senones_per_word))

    def lexicon(self) -> Lexicon:
        return Lexicon({w: self.pron(i) for i, w in enumerate(self.vocab)}, (SIL_ID,))

    def transition_matrix(self) -> np.ndarray:
        """Word-bigram generation structure, fixed by the spec seed."""
        rng = np.random.default_rng(self.seed + 1000003)
        raw = rng.uniform(0.0, 1.0, size=(self.vocab_size, self.vocab_size)) ** 3
        return raw / raw.sum(axis=1, keepdims=True)

    def initial_distribution(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed + 2000003)
        raw = rng.uniform(0.0, 1.0, size=self.vocab_size) ** 2
        return raw / raw.sum()

    def class_means(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed + 3000003)
        return self.class_sep * rng.normal(size=(self.num_senones, self.feature_dim))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ToyTaskSpec":
        return cls(**d)


@dataclass
class Utterance:
    uid: str
    words: list
    frames: np.ndarray       # [T x feature_dim], post-skip
    alignment: np.ndarray    # [T] senone ids, post-skip, label-delayed
    segments: list           # (word-or-None, f0, f1) in post-skip frames

    @property
    def num_frames(self) -> int:
        return len(self.alignment)

    def segment_tuples(self):
        """(word-or-None, f0, f1, senones) rows for forced lattices."""
        return [(w, f0, f1, tuple(int(s) for s in self.alignment[f0:f1]))
                for w, f0, f1 in self.segments]


@dataclass
class Corpus:
    spec: ToyTaskSpec
    utterances: list = field(default_factory=list)

    def transcripts(self):
        return [u.words for u in self.utterances]


def generate_words(rng: np.random.Generator, spec: ToyTaskSpec) -> list:
    trans = spec.transition_matrix()
    init = spec.initial_distribution()
    n = int(rng.integers(spec.min_words, spec.max_words + 1))
    idx = int(rng.choice(spec.vocab_size, p=init))
    seq = [idx]
    for _ in range(n - 1):
        idx = int(rng.choice(spec.vocab_size, p=trans[idx]))
        seq.append(idx)
    return seq


def _raw_utterance(rng, spec: ToyTaskSpec, word_ids):
    """Raw 10 ms-domain alignment and word segment boundaries."""
    align = []
    segments = []  # (word-or-None, raw start, raw end)

    def emit(label, senones, dur_base, jitter):
        start = len(align)
        for s in senones:
            dur = dur_base + int(rng.integers(-jitter, jitter + 1))
            align.extend([s] * dur)
        segments.append((label, start, len(align)))

    emit(None, [SIL_ID], spec.sil_frames, spec.sil_jitter)
    for wi in word_ids:
        emit(spec.vocab[wi], list(spec.pron(wi)), spec.frames_per_senone,
             spec.duration_jitter)
    emit(None, [SIL_ID], spec.sil_frames, spec.sil_jitter)
    return np.array(align, dtype=np.int64), segments


def _make_utterance(rng, spec: ToyTaskSpec, means: np.ndarray, uid: str) -> Utterance:
    word_ids = generate_words(rng, spec)
    raw_align, raw_segments = _raw_utterance(rng, spec, word_ids)
    n_raw = len(raw_align)
    feats = means[raw_align]
    if spec.noise_sigma > 0:
        feats = feats + spec.noise_sigma * rng.normal(size=feats.shape)

    d = spec.label_delay_raw
    delayed = raw_align[np.maximum(np.arange(n_raw) - d, 0)]
    skip = spec.skip_factor
    frames = np.ascontiguousarray(feats[::skip])
    alignment = np.ascontiguousarray(delayed[::skip])

    def to_proc(raw_frame: int) -> int:
        return (raw_frame + skip - 1) // skip

    segments = []
    for i, (label, a, b) in enumerate(raw_segments):
        a2 = 0 if i == 0 else min(a + d, n_raw)
        b2 = n_raw if i == len(raw_segments) - 1 else min(b + d, n_raw)
        f0, f1 = to_proc(a2), to_proc(b2)
        if f1 <= f0:
            raise RuntimeError("segment %r collapsed after preprocessing" % (label,))
        segments.append((label, f0, f1))
    assert segments[-1][2] == len(alignment)

    return Utterance(uid, [spec.vocab[i] for i in word_ids], frames, alignment, segments)


def generate_corpus(spec: ToyTaskSpec, num_utterances: int) -> Corpus:
    """Deterministic given the spec seed; see the module docstring for the
    label-delay and frame-skip conventions."""
    rng = np.random.default_rng(spec.seed)
    means = spec.class_means()
    corpus = Corpus(spec)
    for i in range(num_utterances):
        corpus.utterances.append(_make_utterance(rng, spec, means, "utt%05d" % i))
    return corpus


# ---------------------------------------------------------------------------
# Corpus files: features ride in the tensor container; transcripts,
# alignments and segments are line-delimited text keyed by utterance id.


def save_corpus(dirpath, corpus: Corpus) -> None:
    import os

    os.makedirs(dirpath, exist_ok=True)
    uids = [u.uid for u in corpus.utterances]
    write_container(os.path.join(dirpath, "features.ltc"),
                    {"task": corpus.spec.to_dict(), "uids": uids},
                    [(u.uid, u.frames) for u in corpus.utterances])
    with open(os.path.join(dirpath, "transcripts.txt"), "w", encoding="utf-8") as fh:
        for u in corpus.utterances:
            fh.write("%s %s\n" % (u.uid, " ".join(u.words)))
    with open(os.path.join(dirpath, "alignments.txt"), "w", encoding="utf-8") as fh:
        for u in corpus.utterances:
            fh.write("%s %s\n" % (u.uid, " ".join(str(int(s)) for s in u.alignment)))
    with open(os.path.join(dirpath, "segments.txt"), "w", encoding="utf-8") as fh:
        for u in corpus.utterances:
            parts = ["%s:%d:%d" % (w if w is not None else SIL_WORD, f0, f1)
                     for w, f0, f1 in u.segments]
            fh.write("%s %s\n" % (u.uid, ";".join(parts)))


def load_corpus(dirpath) -> Corpus:
    import os

    meta, tensors = read_container(os.path.join(dirpath, "features.ltc"))
    spec = ToyTaskSpec.from_dict(meta["task"])

    def read_lines(name):
        out = {}
        with open(os.path.join(dirpath, name), "r", encoding="utf-8") as fh:
            for line in fh:
                uid, _, rest = line.rstrip("\n").partition(" ")
                out[uid] = rest
        return out

    transcripts = read_lines("transcripts.txt")
    alignments = read_lines("alignments.txt")
    segments = read_lines("segments.txt")
    corpus = Corpus(spec)
    for uid in meta["uids"]:
        words = transcripts[uid].split()
        align = np.array([int(s) for s in alignments[uid].split()], dtype=np.int64)
        segs = []
        for part in segments[uid].split(";"):
            w, f0, f1 = part.split(":")
            segs.append((None if w == SIL_WORD else w, int(f0), int(f1)))
        corpus.utterances.append(Utterance(uid, words, tensors[uid], align, segs))
    return corpus
