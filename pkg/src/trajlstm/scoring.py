"""Word error rate scoring with explicit error components."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ScoredResult:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int
    senone_accuracy: float | None = None

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return self.errors / self.ref_len

    def __add__(self, other: "ScoredResult") -> "ScoredResult":
        return ScoredResult(self.substitutions + other.substitutions,
                            self.deletions + other.deletions,
                            self.insertions + other.insertions,
                            self.ref_len + other.ref_len)


def score_wer(hyp, ref) -> ScoredResult:
    """Levenshtein alignment with unit costs.

    Tie-break is deterministic: a substitution/match is preferred over a
    deletion, which is preferred over an insertion.
    """
    hyp = list(hyp)
    ref = list(ref)
    n, m = len(ref), len(hyp)
    # dp[i][j]: cost aligning ref[:i] to hyp[:j]; moves: 0=diag, 1=del, 2=ins
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    move = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
        move[i][0] = 1
    for j in range(1, m + 1):
        cost[0][j] = j
        move[0][j] = 2
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = cost[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            dele = cost[i - 1][j] + 1
            ins = cost[i][j - 1] + 1
            best = min(diag, dele, ins)
            cost[i][j] = best
            move[i][j] = 0 if diag == best else (1 if dele == best else 2)
    subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        mv = move[i][j]
        if mv == 0:
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif mv == 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return ScoredResult(subs, dels, inss, n)


def edit_distance(a, b) -> int:
    return score_wer(a, b).errors


def senone_accuracy(predicted, reference) -> float:
    if len(predicted) != len(reference):
        raise ValueError("alignment lengths differ")
    if not reference:
        raise ValueError("empty alignment")
    hits = sum(1 for p, r in zip(predicted, reference) if p == r)
    return hits / len(reference)


def relative_wer_reduction(baseline, improved) -> float:
    """(WER_base - WER_new) / WER_base; accepts ScoredResult or plain rates."""
    base = baseline.wer if isinstance(baseline, ScoredResult) else float(baseline)
    new = improved.wer if isinstance(improved, ScoredResult) else float(improved)
    if base <= 0:
        raise ValueError("baseline WER must be positive")
    return (base - new) / base
