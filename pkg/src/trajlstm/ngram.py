"""Backoff n-gram language models over a small closed vocabulary.

Smoothing is add-k with interpolated backoff: at each order the conditional
is (count(h,w) + k * P_lower(w)) / (count(h) + k), which normalizes exactly
and admits an equivalent backoff representation with weight k/(count(h)+k)
for unseen continuations. The unigram table covers the whole vocabulary
(plus the sentence-end token), so scoring never falls below it.

The in-memory representation is the serialized one (explicit log-probs and
log backoff weights), so a save/load round trip scores bit-identically.
"""

from __future__ import annotations

import math
from collections import Counter

BOS = "<s>"
EOS = "</s>"


class NGramLM:
    def __init__(self, order: int, vocab, table: dict, bows: dict):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.vocab = list(vocab)          # real words, no sentence tokens
        self.table = table                # (history tuple, word) -> logp
        self.bows = bows                  # history tuple -> log backoff weight
        self._targets = self.vocab + [EOS]

    # -- scoring ------------------------------------------------------------

    def logprob(self, word: str, history) -> float:
        """log P(word | history). History is the raw preceding word list;
        sentence starts are padded with the begin token."""
        if word not in self.table.get((), {}) and word != EOS:
            raise ValueError("word %r outside the LM vocabulary" % word)
        h = self._normalize_history(history)
        return self._lookup(h, word)

    def _normalize_history(self, history) -> tuple:
        h = tuple(history)
        need = self.order - 1
        if len(h) >= need:
            return h[len(h) - need:]
        return (BOS,) * (need - len(h)) + h

    def _lookup(self, h: tuple, word: str) -> float:
        row = self.table.get(h)
        if row is not None and word in row:
            return row[word]
        if not h:
            raise ValueError("word %r missing from the unigram table" % word)
        bow = self.bows.get(h, 0.0)
        return bow + self._lookup(h[1:], word)

    def sentence_logprob(self, words) -> float:
        total = 0.0
        prev: list = []
        for w in words:
            total += self.logprob(w, prev)
            prev.append(w)
        total += self.logprob(EOS, prev)
        return total

    def perplexity(self, corpus) -> float:
        total, events = 0.0, 0
        for sent in corpus:
            total += self.sentence_logprob(sent)
            events += len(sent) + 1
        if events == 0:
            raise ValueError("empty corpus")
        return math.exp(-total / events)

    def conditional_sum(self, history) -> float:
        """Sum of P(w|history) over the vocabulary plus the end token."""
        h = self._normalize_history(history)
        return sum(math.exp(self._lookup(h, w)) for w in self._targets)


def train_ngram(corpus, order: int, k: float = 0.1, vocab=None) -> NGramLM:
    """Estimate a backoff LM from word sequences.

    ``vocab`` fixes the closed universe; it defaults to the corpus words.
    """
    corpus = [list(s) for s in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    if k <= 0:
        raise ValueError("smoothing constant k must be positive")
    if vocab is None:
        vocab = sorted({w for s in corpus for w in s})
    else:
        vocab = list(vocab)
        unseen = {w for s in corpus for w in s} - set(vocab)
        if unseen:
            raise ValueError("corpus words outside the given vocabulary: %r"
                             % sorted(unseen))
    targets = vocab + [EOS]
    universe = len(targets)

    grams: dict = {m: {} for m in range(1, order + 1)}  # history -> Counter(word)
    for sent in corpus:
        stream = [BOS] * (order - 1) + list(sent) + [EOS]
        n_pad = order - 1
        for i in range(n_pad, len(stream)):
            w = stream[i]
            for m in range(1, order + 1):
                h = tuple(stream[i - m + 1:i])
                grams[m].setdefault(h, Counter())[w] += 1

    table: dict = {}
    bows: dict = {}

    # unigrams cover the whole universe so backoff always terminates
    uni = grams[1].get((), Counter())
    ctot = sum(uni.values())
    p0 = 1.0 / universe
    table[()] = {w: math.log((uni[w] + k * p0) / (ctot + k)) for w in targets}

    def lower_logp(h: tuple, w: str) -> float:
        row = table.get(h)
        if row is not None and w in row:
            return row[w]
        return bows.get(h, 0.0) + lower_logp(h[1:], w)

    for m in range(2, order + 1):
        for h in sorted(grams[m]):
            wc = grams[m][h]
            ch = sum(wc.values())
            bows[h] = math.log(k / (ch + k))
            table[h] = {
                w: math.log((c + k * math.exp(lower_logp(h[1:], w))) / (ch + k))
                for w, c in wc.items()
            }

    return NGramLM(order, vocab, table, bows)


# ---------------------------------------------------------------------------
# Text format: "order <n>", then one line per explicit entry:
# "<history|-> <word> <logp> <logbow-of-(history+word)>"
# Multi-word histories are comma-joined. Floats carry 17 significant digits.


def write_lm(path, lm: NGramLM) -> None:
    written = set()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("order %d\n" % lm.order)
        fh.write("vocab %s\n" % ",".join(lm.vocab))
        for h in sorted(lm.table, key=lambda t: (len(t), t)):
            for w in sorted(lm.table[h]):
                seq = h + (w,)
                written.add(seq)
                bow = lm.bows.get(seq, 0.0)
                htxt = ",".join(h) if h else "-"
                fh.write("%s %s %.17g %.17g\n" % (htxt, w, lm.table[h][w], bow))
        # backoff weights whose prefix has no probability entry (e.g. runs of
        # begin tokens) ride on dummy lines with a -inf probability
        for seq in sorted(set(lm.bows) - written, key=lambda t: (len(t), t)):
            htxt = ",".join(seq[:-1]) if seq[:-1] else "-"
            fh.write("%s %s -inf %.17g\n" % (htxt, seq[-1], lm.bows[seq]))


def read_lm(path) -> NGramLM:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().split()
        if len(first) != 2 or first[0] != "order":
            raise ValueError("bad LM header")
        order = int(first[1])
        vline = fh.readline().split()
        if len(vline) != 2 or vline[0] != "vocab":
            raise ValueError("bad LM vocab line")
        vocab = vline[1].split(",")
        table: dict = {}
        bows: dict = {}
        for line in fh:
            htxt, w, logp, logbow = line.split()
            h = () if htxt == "-" else tuple(htxt.split(","))
            p = float(logp)
            if not math.isinf(p):
                table.setdefault(h, {})[w] = p
            bow = float(logbow)
            if bow != 0.0:
                bows[h + (w,)] = bow
    return NGramLM(order, vocab, table, bows)
