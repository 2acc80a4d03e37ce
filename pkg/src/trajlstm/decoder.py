"""Frame-synchronous beam decoder over a lexicon/LM graph.

Token passing: a token sits inside one word's senone string at a given
position, carrying the acoustic score accumulated in the word, the LM score
applied when the word was entered, and the lattice node it started from.
Word ends create lattice nodes keyed by (frame, grammar position, LM
history), so arcs carry exact conditional LM scores and the result is a
proper word lattice. Utterances are bracketed by silence, which travels as
epsilon-labelled (but senone-aligned) arcs.

The decoder is incremental: TokenPasser.feed consumes one frame of
acoustic scores, and committed_words() exposes the stable partial-traceback
prefix (a word is committed once every live token agrees on it), which is
what a streaming first pass emits. All pruning uses deterministic sort
keys, so identical inputs produce identical lattices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Arc, Lattice, best_path, validate
from .ngram import EOS, NGramLM

SIL_WORD = "<sil>"

# grammar positions
_P_START = "S"    # before the initial silence
_P_FIRST = "W0"   # initial silence done, no words yet
_P_WORDS = "W"    # at least one word decoded
_P_FINAL = "F"    # trailing silence done


class DecodeError(RuntimeError):
    def __init__(self, message: str, frame: int | None = None):
        super().__init__(message)
        self.frame = frame


@dataclass(frozen=True)
class Lexicon:
    """Each word maps to one fixed senone string; silence brackets utterances."""
    prons: dict    # word -> tuple of senone ids
    sil: tuple     # silence senone string (one or more ids)

    def __post_init__(self):
        for w, p in self.prons.items():
            if not p:
                raise ValueError("word %r has an empty pronunciation" % w)
        if not self.sil:
            raise ValueError("silence pronunciation must be non-empty")


@dataclass(frozen=True)
class BeamConfig:
    beam: float = 14.0
    max_tokens: int = 3000
    lm_weight: float = 1.0


@dataclass
class _Token:
    pos: str
    hist: tuple
    word: str          # SIL_WORD for silence segments
    pron: tuple
    idx: int
    start_node: int
    base: float        # best score into start_node
    lm: float
    ac: float
    align: tuple

    @property
    def score(self) -> float:
        return self.base + self.lm + self.ac

    def key(self):
        return (self.pos, self.hist, self.word, self.idx, self.start_node)


class TokenPasser:
    """One utterance's frame-synchronous beam search."""

    def __init__(self, lexicon: Lexicon, lm: NGramLM,
                 config: BeamConfig = BeamConfig()):
        self.lexicon = lexicon
        self.lm = lm
        self.config = config
        self.t = 0
        self._alive: dict = {}
        self._node_key_to_id: dict = {}
        self._node_frames: list = []
        self._node_best: list = []
        self._node_back: list = []   # best incoming arc per node
        self._nodes_at: dict = {}
        self._arcs_best: dict = {}   # (src, dst, label) -> (total, Arc)
        self._trace_cache: dict = {}
        self._finalized = None
        self._start = self._get_node(0, _P_START, ())
        self._node_best[self._start] = 0.0

    # -- graph bookkeeping ---------------------------------------------------

    def _get_node(self, frame: int, pos: str, hist: tuple) -> int:
        key = (frame, pos, hist)
        nid = self._node_key_to_id.get(key)
        if nid is None:
            nid = len(self._node_frames)
            self._node_key_to_id[key] = nid
            self._node_frames.append(frame)
            self._node_best.append(-np.inf)
            self._node_back.append(None)
            self._nodes_at.setdefault(frame, []).append((nid, pos, hist))
        return nid

    def _close_word(self, tok: _Token, boundary: int):
        if tok.pos == _P_START:
            pos2, hist2, label = _P_FIRST, tok.hist, None
        elif tok.pos == _P_WORDS and tok.word == SIL_WORD:
            pos2, hist2, label = _P_FINAL, tok.hist, None
        else:
            pos2 = _P_WORDS
            if self.lm.order > 1:
                hist2 = (tok.hist + (tok.word,))[-(self.lm.order - 1):]
            else:
                hist2 = ()
            label = tok.word
        dst = self._get_node(boundary, pos2, hist2)
        arc = Arc(tok.start_node, dst, label, tok.align, tok.ac, tok.lm)
        total = tok.score
        if total > self._node_best[dst]:
            self._node_best[dst] = total
            self._node_back[dst] = arc
        akey = (tok.start_node, dst, label)
        prev = self._arcs_best.get(akey)
        if prev is None or tok.lm + tok.ac > prev[0]:
            self._arcs_best[akey] = (tok.lm + tok.ac, arc)

    def _spawn_from(self, nid: int, pos: str, hist: tuple):
        base = self._node_best[nid]
        out = []
        if pos == _P_START:
            out.append(_Token(_P_START, hist, SIL_WORD, self.lexicon.sil, 0, nid,
                              base, 0.0, 0.0, ()))
            return out
        if pos in (_P_FIRST, _P_WORDS):
            for w in sorted(self.lexicon.prons):
                lp = self.config.lm_weight * self.lm.logprob(w, hist)
                out.append(_Token(_P_WORDS, hist, w, self.lexicon.prons[w], 0, nid,
                                  base, lp, 0.0, ()))
        if pos == _P_WORDS:
            out.append(_Token(_P_WORDS, hist, SIL_WORD, self.lexicon.sil, 0, nid,
                              base, 0.0, 0.0, ()))
        return out

    # -- streaming interface ---------------------------------------------------

    def feed(self, scores_t) -> None:
        """Consume one frame of per-senone acoustic log-scores."""
        if self._finalized is not None:
            raise DecodeError("decoder already finalized")
        t = self.t
        candidates: dict = {}

        def offer(tok: _Token):
            key = tok.key()
            cur = candidates.get(key)
            if cur is None or tok.score > cur.score:
                candidates[key] = tok

        for tok in self._alive.values():
            s_stay = float(scores_t[tok.pron[tok.idx]])
            offer(_Token(tok.pos, tok.hist, tok.word, tok.pron, tok.idx,
                         tok.start_node, tok.base, tok.lm, tok.ac + s_stay,
                         tok.align + (tok.pron[tok.idx],)))
            if tok.idx + 1 < len(tok.pron):
                s_adv = float(scores_t[tok.pron[tok.idx + 1]])
                offer(_Token(tok.pos, tok.hist, tok.word, tok.pron, tok.idx + 1,
                             tok.start_node, tok.base, tok.lm, tok.ac + s_adv,
                             tok.align + (tok.pron[tok.idx + 1],)))
        for nid, pos, hist in self._nodes_at.get(t, []):
            for tok in self._spawn_from(nid, pos, hist):
                s0 = float(scores_t[tok.pron[0]])
                offer(_Token(tok.pos, tok.hist, tok.word, tok.pron, 0,
                             tok.start_node, tok.base, tok.lm, s0,
                             (tok.pron[0],)))

        if not candidates:
            raise DecodeError("beam emptied at frame %d" % t, frame=t)
        ranked = sorted(candidates.values(), key=lambda tk: (-tk.score, tk.key()))
        best = ranked[0].score
        kept = [tk for tk in ranked[:self.config.max_tokens]
                if tk.score >= best - self.config.beam]
        self._alive = {tk.key(): tk for tk in kept}
        for tok in kept:
            if tok.idx == len(tok.pron) - 1:
                self._close_word(tok, t + 1)
        self.t += 1

    def _traceback_words(self, nid: int) -> tuple:
        cached = self._trace_cache.get(nid)
        if cached is not None:
            return cached
        words = []
        v = nid
        while v != self._start:
            arc = self._node_back[v]
            if arc.word is not None:
                words.append(arc.word)
            v = arc.src
        out = tuple(reversed(words))
        self._trace_cache[nid] = out
        return out

    def committed_words(self) -> tuple:
        """Longest word prefix every live token agrees on (stable: it never
        retracts as more frames arrive)."""
        prefix = None
        for tok in self._alive.values():
            words = self._traceback_words(tok.start_node)
            if prefix is None:
                prefix = words
            else:
                n = 0
                for a, b in zip(prefix, words):
                    if a != b:
                        break
                    n += 1
                prefix = prefix[:n]
            if not prefix:
                return ()
        return prefix if prefix is not None else ()

    def finalize(self) -> Lattice:
        """Attach sentence-end scores and return the trimmed lattice."""
        if self._finalized is not None:
            return self._finalized
        num_frames = self.t
        if num_frames < 1:
            raise DecodeError("empty utterance", frame=0)
        end = None
        for nid, pos, hist in self._nodes_at.get(num_frames, []):
            if pos != _P_FINAL:
                continue
            if end is None:
                end = self._get_node(num_frames, "END", ())
            lp = self.config.lm_weight * self.lm.logprob(EOS, hist)
            total = self._node_best[nid] + lp
            arc = Arc(nid, end, None, (), 0.0, lp)
            if total > self._node_best[end]:
                self._node_best[end] = total
                self._node_back[end] = arc
            self._arcs_best[(nid, end, None)] = (lp, arc)
        if end is None:
            raise DecodeError("no complete hypothesis survived", frame=num_frames)
        self._finalized = _trim(num_frames, self._node_frames,
                                [a for _, a in self._arcs_best.values()],
                                self._start, end)
        return self._finalized


def generate_lattice(frame_scores: np.ndarray, lexicon: Lexicon, lm: NGramLM,
                     config: BeamConfig = BeamConfig()) -> Lattice:
    """Beam-search token passing; surviving hypotheses form a pruned lattice.

    frame_scores is the [frames x senones] acoustic log-score matrix. The
    lattice always contains the best path; arcs carry acoustic and LM
    scores separately.
    """
    if len(frame_scores) < 1:
        raise DecodeError("empty utterance", frame=0)
    tp = TokenPasser(lexicon, lm, config)
    for row in frame_scores:
        tp.feed(row)
    return tp.finalize()


def _trim(num_frames, node_frames, arcs, start, end) -> Lattice:
    """Drop nodes/arcs off every start-to-end path and remap ids."""
    n = len(node_frames)
    fwd = [[] for _ in range(n)]
    bwd = [[] for _ in range(n)]
    for arc in arcs:
        fwd[arc.src].append(arc.dst)
        bwd[arc.dst].append(arc.src)

    def reach(adj, root):
        seen = [False] * n
        seen[root] = True
        stack = [root]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        return seen

    alive = [a and b for a, b in zip(reach(fwd, start), reach(bwd, end))]
    if not alive[start] or not alive[end]:
        raise DecodeError("lattice lost its start or end during trimming")
    remap = {}
    new_frames = []
    for v in range(n):
        if alive[v]:
            remap[v] = len(new_frames)
            new_frames.append(node_frames[v])
    new_arcs = [Arc(remap[a.src], remap[a.dst], a.word, a.senones, a.acoustic, a.lm)
                for a in arcs if alive[a.src] and alive[a.dst]]
    lat = Lattice(num_frames, new_frames, new_arcs, remap[start], remap[end])
    validate(lat)
    return lat


def decode(frame_scores, lexicon, lm, config: BeamConfig = BeamConfig()):
    """Best-path word sequence (silences excluded) and its score."""
    lat = generate_lattice(frame_scores, lexicon, lm, config)
    words, score, _ = best_path(lat)
    return list(words), score


def forced_lattice(segments, num_frames: int, lm: NGramLM,
                   frame_scores=None, lm_weight: float = 1.0) -> Lattice:
    """Single-path lattice from a known segmentation.

    segments: list of (word-or-None, start_frame, end_frame, senone tuple);
    None marks silence. Acoustic scores are summed from frame_scores when
    given, else left at zero for later rescoring.
    """
    node_frames = [0]
    arcs = []
    prev = 0
    hist: tuple = ()
    order_hist = max(lm.order - 1, 1)
    for word, f0, f1, senones in segments:
        if f0 != node_frames[prev]:
            raise ValueError("segments are not contiguous at frame %d" % f0)
        if len(senones) != f1 - f0:
            raise ValueError("segment senones do not cover frames %d..%d" % (f0, f1))
        node_frames.append(f1)
        dst = len(node_frames) - 1
        ac = 0.0
        if frame_scores is not None:
            for k, s in enumerate(senones):
                ac += float(frame_scores[f0 + k, s])
        if word is None:
            lp = 0.0
        else:
            lp = lm_weight * lm.logprob(word, hist)
            hist = (hist + (word,))[-order_hist:] if lm.order > 1 else ()
        arcs.append(Arc(prev, dst, word, tuple(senones), ac, lp))
        prev = dst
    if node_frames[prev] != num_frames:
        raise ValueError("segments cover %d frames, utterance has %d"
                         % (node_frames[prev], num_frames))
    node_frames.append(num_frames)
    end = len(node_frames) - 1
    arcs.append(Arc(prev, end, None, (), 0.0, lm_weight * lm.logprob(EOS, hist)))
    lat = Lattice(num_frames, node_frames, arcs, 0, end)
    validate(lat)
    return lat
