"""Training criteria: frame CE, MMI, word-level expected-edit-risk (EMBR),
and sequence-level teacher-student with frame-level teacher combination.

The lattice criteria compute their loss values and the exact gradients
w.r.t. the frame log-posteriors from forward-backward occupancies, then
couple both to the gradient tape with attach_scalar so backpropagation
continues into the model parameters. Lattice structures and LM scores stay
fixed inside a criterion evaluation; only acoustic scores are recomputed
from the current model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .lattice import (
    EnumerationCapExceeded, Lattice, enumerate_paths, forward_backward,
    rescore_acoustic,
)
from .scoring import edit_distance
from .tensor import Tensor, attach_scalar


# ---------------------------------------------------------------------------
# Hybrid scaled-likelihood bridge


@dataclass(frozen=True)
class AcousticScorer:
    """Turns senone log-posteriors into scaled acoustic log-scores:
    score(t, s) = kappa * (log P(s | x_t) - log prior(s))."""

    priors: np.ndarray
    kappa: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.priors, dtype=np.float64)
        if p.ndim != 1 or abs(p.sum() - 1.0) > 1e-6 or (p < 0).any():
            raise ValueError("priors must form a probability vector")
        if (p == 0).any():
            raise ValueError("zero prior entries are not allowed")
        object.__setattr__(self, "priors", p)

    def frame_scores(self, log_posteriors: np.ndarray) -> np.ndarray:
        return self.kappa * (log_posteriors - np.log(self.priors)[None, :])


def acoustic_score(posteriors: np.ndarray, priors, kappa: float = 1.0) -> np.ndarray:
    """Scaled-likelihood scores from plain (not log) posteriors."""
    scorer = AcousticScorer(np.asarray(priors, dtype=np.float64), kappa)
    logp = np.log(np.maximum(np.asarray(posteriors, dtype=np.float64), 1e-300))
    return scorer.frame_scores(logp)


def estimate_priors(alignments, num_senones: int, smoothing: float = 1.0) -> np.ndarray:
    """Senone priors from training alignment frequencies (add-k smoothed)."""
    counts = np.full(num_senones, float(smoothing))
    for align in alignments:
        for s in align:
            counts[s] += 1.0
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# Model-side helpers


def tape_log_posteriors(model, frames):
    """On-tape per-frame log-posteriors plus their numpy matrix."""
    logits = model.forward_logits(frames)
    lps = [T.log_softmax(l) for l in logits]
    mat = np.stack([x.data for x in lps])
    return lps, mat


def frame_posteriors(model, frames) -> np.ndarray:
    """[frames x senones] posterior matrix; rows sum to 1."""
    logits = model.forward_logits(frames)
    return np.stack([T.softmax(l).data for l in logits])


# ---------------------------------------------------------------------------
# Frame-level cross entropy


def ce_loss(model, frames, alignment) -> Tensor:
    """Mean per-frame cross entropy against reference senones."""
    if len(alignment) != len(frames):
        raise ValueError("alignment covers %d frames, utterance has %d"
                         % (len(alignment), len(frames)))
    logits = model.forward_logits(frames)
    total = None
    for logit, label in zip(logits, alignment):
        nll = T.scale(T.pick(T.log_softmax(logit), int(label)), -1.0)
        total = nll if total is None else T.add(total, nll)
    return T.scale(total, 1.0 / len(frames))


# ---------------------------------------------------------------------------
# MMI


def mmi_loss(model, frames, num_lattice: Lattice, den_lattice: Lattice,
             scorer: AcousticScorer) -> Tensor:
    """-(numerator score - denominator total), both rescored by the model.

    The gradient w.r.t. the frame log-posteriors is
    kappa * (gamma_den - gamma_num), with the numerator being the single
    forced-alignment path.
    """
    lps, mat = tape_log_posteriors(model, frames)
    num_senones = mat.shape[1]
    _check_senone_range(num_lattice, num_senones)
    fs = scorer.frame_scores(mat)
    num = forward_backward(rescore_acoustic(num_lattice, fs), num_senones)
    den = forward_backward(rescore_acoustic(den_lattice, fs), num_senones)
    value = den.total - num.total
    coef = scorer.kappa * (den.gamma - num.gamma)
    return attach_scalar(value, lps, list(coef))


def _check_senone_range(lat: Lattice, num_senones: int):
    for arc in lat.arcs:
        for s in arc.senones:
            if not 0 <= s < num_senones:
                raise ValueError("lattice senone id %d outside the model's %d outputs"
                                 % (s, num_senones))


# ---------------------------------------------------------------------------
# EMBR (n-best expected word edit risk)


def expected_edit_risk(scores: Tensor, risks) -> Tensor:
    """sum_i softmax(scores)_i * risks_i, differentiable through the tape;
    d/d score_i = p_i * (risk_i - expected risk)."""
    risks = Tensor(np.asarray(risks, dtype=np.float64))
    return T.dot(T.softmax(scores), risks)


def embr_loss(model, frames, nbest, ref_words, lattice: Lattice,
              scorer: AcousticScorer) -> Tensor:
    """Expected edit distance over a fixed n-best hypothesis set.

    nbest entries are (words, arc_indices) pairs extracted from ``lattice``;
    their scores are re-derived from the current model's acoustic scores
    plus the fixed arc LM scores.
    """
    if not nbest:
        raise ValueError("empty n-best list")
    lps, mat = tape_log_posteriors(model, frames)
    fs = scorer.frame_scores(mat)
    scores = np.empty(len(nbest))
    risks = np.empty(len(nbest))
    for i, (words, arcs) in enumerate(nbest):
        total = 0.0
        for ai in arcs:
            arc = lattice.arcs[ai]
            f0 = lattice.node_frames[arc.src]
            for k, s in enumerate(arc.senones):
                total += fs[f0 + k, s]
            total += arc.lm
        scores[i] = total
        risks[i] = edit_distance(list(words), list(ref_words))

    m = scores.max()
    p = np.exp(scores - m)
    p /= p.sum()
    value = float(np.dot(p, risks))
    dscore = p * (risks - value)

    coef = np.zeros_like(mat)
    for i, (_, arcs) in enumerate(nbest):
        for ai in arcs:
            arc = lattice.arcs[ai]
            f0 = lattice.node_frames[arc.src]
            for k, s in enumerate(arc.senones):
                coef[f0 + k, s] += scorer.kappa * dscore[i]
    return attach_scalar(value, lps, list(coef))


# ---------------------------------------------------------------------------
# Teacher combination


def frame_combine(teacher_posteriors, weights) -> np.ndarray:
    """Mix per-frame senone posteriors across teachers; rows stay stochastic."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(teacher_posteriors) != len(weights):
        raise ValueError("need one weight per teacher")
    if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    mats = [np.asarray(p, dtype=np.float64) for p in teacher_posteriors]
    shape = mats[0].shape
    for m in mats:
        if m.shape != shape:
            raise ValueError("teacher posterior shapes differ")
    out = np.zeros(shape)
    for a, m in zip(weights, mats):
        out += a * m
    return out


def hyp_combine(lat: Lattice, teacher_frame_scores, weights, cap: int = 100000):
    """Hypothesis-level teacher mixture by explicit path enumeration.

    teacher_frame_scores: one [frames x senones] acoustic log-score matrix
    per teacher. Returns {arc-index path: combined posterior}. Oracle only;
    refuses lattices above the enumeration cap.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    combined: dict = {}
    for a, fs in zip(weights, teacher_frame_scores):
        rescored = rescore_acoustic(lat, fs)
        paths = enumerate_paths(rescored, cap=cap)  # may raise EnumerationCapExceeded
        scores = np.array([s for _, s in paths])
        total = float(np.logaddexp.reduce(np.sort(scores)))
        for (arcs, s) in paths:
            combined[arcs] = combined.get(arcs, 0.0) + a * np.exp(s - total)
    return combined


# ---------------------------------------------------------------------------
# Sequence-level teacher-student


def teacher_lattice_stats(lat: Lattice, teacher_frame_scores: np.ndarray,
                          num_senones: int):
    """Teacher-rescored occupancies for a fixed lattice.

    Returns (gamma_T, arc posteriors, entropy of the teacher's path
    distribution). Cacheable per stage: the teacher and lattice are fixed.
    """
    lat_t = rescore_acoustic(lat, teacher_frame_scores)
    fb = forward_backward(lat_t, num_senones)
    exp_score = sum(float(p) * arc.weight
                    for p, arc in zip(fb.arc_posteriors, lat_t.arcs))
    entropy = fb.total - exp_score
    return fb.gamma, fb.arc_posteriors, entropy


def seq_ts_loss(model, frames, lat: Lattice, teacher_gamma: np.ndarray,
                teacher_arc_posteriors: np.ndarray, scorer: AcousticScorer) -> Tensor:
    """Cross entropy between teacher and student path posteriors on one
    lattice: -sum_H P_T(H|X) log P_S(H|X).

    The gradient w.r.t. the student's frame log-posteriors is
    kappa * (gamma_S - gamma_T), from two forward-backward passes over the
    same lattice. Use teacher_lattice_stats for the fixed teacher side.
    """
    lps, mat = tape_log_posteriors(model, frames)
    num_senones = mat.shape[1]
    if teacher_gamma.shape != (len(frames), num_senones):
        raise ValueError("teacher gamma shape %r does not match %d frames x %d senones"
                         % (teacher_gamma.shape, len(frames), num_senones))
    fs = scorer.frame_scores(mat)
    lat_s = rescore_acoustic(lat, fs)
    fb_s = forward_backward(lat_s, num_senones)
    exp_student_score = sum(float(pt) * arc.weight
                            for pt, arc in zip(teacher_arc_posteriors, lat_s.arcs))
    value = fb_s.total - exp_student_score
    coef = scorer.kappa * (fb_s.gamma - teacher_gamma)
    return attach_scalar(value, lps, list(coef))
