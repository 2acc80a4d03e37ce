"""Staged training: CE -> MMI -> EMBR for teachers, frame-combined ensemble
construction, MMI-seeded sequence teacher-student, and the two-head
procedure that trains a zero-look-ahead head on a frozen shared stack.

Every stage is deterministic given its seed: utterance order comes from a
seeded permutation, gradients are applied one utterance at a time, and
lattices are generated once at stage start from the stage's seed model and
held fixed. Plain SGD with global gradient-norm clipping at 1.0 and a
step-decay schedule.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import criteria
from .criteria import AcousticScorer, estimate_priors, frame_combine, frame_posteriors
from .decoder import BeamConfig, DecodeError, forced_lattice, generate_lattice
from .lattice import best_path, nbest_paths
from .models import TwoHeadModel, build_second_head, checksum_tensors, lookahead_frames
from .ngram import NGramLM, train_ngram
from .scoring import ScoredResult, score_wer
from .tensor import Tensor, grad
from .toytask import Corpus

GRAD_CLIP = 1.0
CRITERIA = ("CE", "MMI", "EMBR", "SEQ_TS")
# which seed-checkpoint stage tags satisfy each criterion's prerequisite
STAGE_REQUIRES = {
    "CE": None,
    "MMI": ("CE", "MMI", "EMBR", "SEQ_TS"),
    "EMBR": ("CE", "MMI", "EMBR", "SEQ_TS"),
    "SEQ_TS": ("MMI",),
}


@dataclass(frozen=True)
class StageConfig:
    criterion: str
    epochs: int
    learning_rate: float
    lr_decay: float = 0.8
    lattice_lm_order: int = 2
    nbest: int = 8
    eval_wer: bool = True
    seed: int = 0
    freeze: tuple = ()

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError("unknown criterion %r" % (self.criterion,))
        if self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("bad epochs/learning rate")

    @classmethod
    def from_dict(cls, d: dict) -> "StageConfig":
        d = dict(d)
        if "freeze" in d:
            d["freeze"] = tuple(d["freeze"])
        return cls(**d)


def check_stage_dependency(criterion: str, seed_tag: str | None):
    need = STAGE_REQUIRES[criterion]
    if need is None:
        return
    if seed_tag not in need:
        raise ValueError("%s stage requires a seed checkpoint tagged %s, got %r"
                         % (criterion, " or ".join(need), seed_tag))


def validation_split(uid: str) -> bool:
    """Deterministic, config-free 10% split by utterance-id hash."""
    digest = hashlib.sha1(uid.encode("utf-8")).digest()
    return digest[0] % 10 == 0


@dataclass
class TrainContext:
    """Shared data plumbing for all stages of one experiment."""

    corpus: Corpus
    kappa: float = 1.0
    prior_smoothing: float = 1.0
    lm_k: float = 0.2
    runtime_lm_order: int = 3
    beam: BeamConfig = field(default_factory=BeamConfig)
    _lms: dict = field(default_factory=dict)
    _frames: dict = field(default_factory=dict)

    def __post_init__(self):
        self.train_utts = [u for u in self.corpus.utterances if not validation_split(u.uid)]
        self.val_utts = [u for u in self.corpus.utterances if validation_split(u.uid)]
        self.lexicon = self.corpus.spec.lexicon()
        self.num_senones = self.corpus.spec.num_senones
        priors = estimate_priors([u.alignment for u in self.train_utts],
                                 self.num_senones, self.prior_smoothing)
        self.scorer = AcousticScorer(priors, self.kappa)

    def lm(self, order: int) -> NGramLM:
        if order not in self._lms:
            self._lms[order] = train_ngram([u.words for u in self.train_utts],
                                           order=order, k=self.lm_k,
                                           vocab=self.corpus.spec.vocab)
        return self._lms[order]

    @property
    def runtime_lm(self) -> NGramLM:
        return self.lm(self.runtime_lm_order)

    def frames(self, utt):
        cached = self._frames.get(utt.uid)
        if cached is None:
            cached = [Tensor(row) for row in utt.frames]
            self._frames[utt.uid] = cached
        return cached


def frame_scores_for(model, ctx: TrainContext, utt) -> np.ndarray:
    posts = frame_posteriors(model, ctx.frames(utt))
    logp = np.log(np.maximum(posts, 1e-300))
    return ctx.scorer.frame_scores(logp)


def decode_wer(model, ctx: TrainContext, utts, lm=None) -> ScoredResult:
    """Pooled WER of beam decodes against the reference transcripts."""
    lm = lm if lm is not None else ctx.runtime_lm
    total = ScoredResult(0, 0, 0, 0)
    for utt in utts:
        try:
            lat = generate_lattice(frame_scores_for(model, ctx, utt),
                                   ctx.lexicon, lm, ctx.beam)
            words, _, _ = best_path(lat)
        except DecodeError:
            words = ()
        total = total + score_wer(list(words), utt.words)
    return total


# ---------------------------------------------------------------------------
# Stage preparation: fixed per-stage structures


def stage_lattice(fs, ctx: TrainContext, lm):
    """Hypothesis lattice for a training stage, with deterministic beam
    widening: if pruning kills every complete hypothesis (confused seed
    models do this), the beam doubles a few times before giving up."""
    beam = ctx.beam
    for _ in range(4):
        try:
            return generate_lattice(fs, ctx.lexicon, lm, beam)
        except DecodeError:
            beam = dataclasses.replace(beam, beam=beam.beam * 2.0,
                                       max_tokens=beam.max_tokens * 2)
    return generate_lattice(fs, ctx.lexicon, lm, beam)


def prepare_stage(model, stage: StageConfig, ctx: TrainContext, teacher_cache=None):
    lm = ctx.lm(stage.lattice_lm_order)
    prep: dict = {"lm": lm}
    if stage.criterion == "CE":
        return prep
    num, den, nbest, tstats = {}, {}, {}, {}
    for utt in ctx.train_utts + ctx.val_utts:
        fs = frame_scores_for(model, ctx, utt)
        num[utt.uid] = forced_lattice(utt.segment_tuples(), utt.num_frames, lm, None)
        if stage.criterion in ("MMI", "EMBR", "SEQ_TS"):
            den[utt.uid] = stage_lattice(fs, ctx, lm)
        if stage.criterion == "EMBR":
            entries = nbest_paths(den[utt.uid], stage.nbest)
            nbest[utt.uid] = [(words, arcs) for words, _, arcs in entries]
        if stage.criterion == "SEQ_TS":
            if teacher_cache is None:
                raise ValueError("SEQ_TS stage requires a teacher ensemble cache")
            tpost = teacher_cache[utt.uid]
            tfs = ctx.scorer.frame_scores(np.log(np.maximum(tpost, 1e-300)))
            gamma_t, post_t, entropy = criteria.teacher_lattice_stats(
                den[utt.uid], tfs, ctx.num_senones)
            tstats[utt.uid] = (gamma_t, post_t, entropy)
    prep.update(num=num, den=den, nbest=nbest, tstats=tstats)
    return prep


def stage_loss(model, stage: StageConfig, ctx: TrainContext, utt, prep):
    frames = ctx.frames(utt)
    if stage.criterion == "CE":
        return criteria.ce_loss(model, frames, utt.alignment)
    if stage.criterion == "MMI":
        return criteria.mmi_loss(model, frames, prep["num"][utt.uid],
                                 prep["den"][utt.uid], ctx.scorer)
    if stage.criterion == "EMBR":
        return criteria.embr_loss(model, frames, prep["nbest"][utt.uid],
                                  utt.words, prep["den"][utt.uid], ctx.scorer)
    gamma_t, post_t, _ = prep["tstats"][utt.uid]
    return criteria.seq_ts_loss(model, frames, prep["den"][utt.uid],
                                gamma_t, post_t, ctx.scorer)


def _sgd_step(tensors, grads, lr: float):
    norm = np.sqrt(sum(float((g.data ** 2).sum()) for g in grads))
    scale = lr if norm <= GRAD_CLIP else lr * GRAD_CLIP / norm
    for t, g in zip(tensors, grads):
        t.data -= scale * g.data


def run_stage(model, stage: StageConfig, ctx: TrainContext,
              teacher_cache=None, seed_tag=None, metrics=None):
    """Train a model (in place) under one criterion; returns metric records.

    ``model`` is anything with forward_logits/tensors/param_groups; the
    freeze set removes named parameter groups from the update. Zero epochs
    leave the parameters untouched.
    """
    check_stage_dependency(stage.criterion, seed_tag)
    groups = model.param_groups()
    for name in stage.freeze:
        if name not in groups:
            raise ValueError("freeze group %r does not exist (have %s)"
                             % (name, sorted(groups)))
    frozen_ids = {id(t) for name in stage.freeze for t in groups[name]}
    trainable = [t for t in model.tensors() if id(t) not in frozen_ids]

    prep = prepare_stage(model, stage, ctx, teacher_cache)
    records = []
    rng = np.random.default_rng(stage.seed)
    for epoch in range(stage.epochs):
        lr = stage.learning_rate * (stage.lr_decay ** epoch)
        order = rng.permutation(len(ctx.train_utts))
        train_losses = []
        for i in order:
            utt = ctx.train_utts[int(i)]
            value, grads = grad(lambda: stage_loss(model, stage, ctx, utt, prep),
                                trainable)
            _sgd_step(trainable, grads, lr)
            train_losses.append(value)
        val_losses = [stage_loss(model, stage, ctx, utt, prep).item()
                      for utt in ctx.val_utts]
        record = {
            "stage": stage.criterion,
            "epoch": epoch,
            "train_criterion": float(np.mean(train_losses)),
            "val_criterion": float(np.mean(val_losses)) if val_losses else None,
        }
        if stage.eval_wer:
            record["wer"] = decode_wer(model, ctx, ctx.val_utts).wer
        records.append(record)
        if metrics is not None:
            metrics.append(record)
    return records


def stage_criterion_mean(model, stage: StageConfig, ctx: TrainContext,
                         teacher_cache=None, utts=None, prep=None) -> float:
    """Mean stage-criterion value with the stage's own fixed lattices."""
    if prep is None:
        prep = prepare_stage(model, stage, ctx, teacher_cache)
    utts = utts if utts is not None else ctx.train_utts
    return float(np.mean([stage_loss(model, stage, ctx, u, prep).item()
                          for u in utts]))


# ---------------------------------------------------------------------------
# Ensembles


def build_ensemble(teacher_models, weights, ctx: TrainContext, cache_path=None):
    """Frame-combined posteriors per utterance, persisted for the T/S stage."""
    weights = list(weights)
    if len(weights) != len(teacher_models):
        raise ValueError("need one weight per teacher")
    for m in teacher_models:
        if m.config.num_senones != ctx.num_senones:
            raise ValueError("teachers must share the senone set")
    cache = {}
    for utt in ctx.corpus.utterances:
        posts = [frame_posteriors(m, ctx.frames(utt)) for m in teacher_models]
        cache[utt.uid] = frame_combine(posts, weights)
    if cache_path is not None:
        from .container import write_container

        write_container(cache_path, {"weights": weights,
                                     "uids": [u.uid for u in ctx.corpus.utterances]},
                        sorted(cache.items()))
    return cache


def load_ensemble_cache(path) -> dict:
    from .container import read_container

    _, tensors = read_container(path)
    return dict(tensors)


# ---------------------------------------------------------------------------
# Two-head recipe


def run_two_head_recipe(clt_model, stages, ctx: TrainContext, seed: int,
                        teacher_cache=None, metrics=None) -> TwoHeadModel:
    """Build the second head and train it through the given stages with the
    shared time stack frozen (checksum-verified after every stage)."""
    two = build_second_head(clt_model, seed=seed)
    shared_sum = checksum_tensors(two.shared.tensors())
    clt_sum = checksum_tensors(two.head_clt.tensors())
    view = two.view("lt")
    seed_tag = None
    for stage in stages:
        stage = dataclasses.replace(stage, freeze=("shared", "head_clt"))
        run_stage(view, stage, ctx, teacher_cache=teacher_cache,
                  seed_tag=seed_tag, metrics=metrics)
        seed_tag = stage.criterion
        if checksum_tensors(two.shared.tensors()) != shared_sum:
            raise RuntimeError("frozen shared time-LSTM parameters changed during %s"
                               % stage.criterion)
        if checksum_tensors(two.head_clt.tensors()) != clt_sum:
            raise RuntimeError("untouched clt head parameters changed during %s"
                               % stage.criterion)
    return two


# ---------------------------------------------------------------------------
# LM-strength comparison


def compare_lm_strength(student_seed_model, ts_stage: StageConfig, orders,
                        ctx: TrainContext, teacher_cache, metrics=None):
    """Run the T/S stage once per lattice-LM order; decode with the runtime
    LM. Reports the observed WERs; the direction is logged, not asserted."""
    from .models import copy_model

    rows = []
    for order in orders:
        student = copy_model(student_seed_model)
        stage = dataclasses.replace(ts_stage, lattice_lm_order=order)
        run_stage(student, stage, ctx, teacher_cache=teacher_cache,
                  seed_tag="MMI", metrics=metrics)
        wer = decode_wer(student, ctx, ctx.val_utts).wer
        rows.append({"lattice_lm_order": order, "wer": wer})
    return rows


# ---------------------------------------------------------------------------
# Metrics log


def write_metrics_log(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_metrics_log(path) -> list:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh]
