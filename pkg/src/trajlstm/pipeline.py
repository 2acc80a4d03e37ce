"""End-to-end experiment orchestration over a run directory.

An experiment config (JSON, schema below) drives the full ladder: student
CE -> MMI, two seeded teachers CE -> MMI -> EMBR, frame-combined ensemble,
MMI-seeded sequence teacher-student, the two-head second-head recipe, the
lattice-LM strength comparison, and the two-pass decode simulation.

Run directory layout:

    configs/      the experiment config as received
    checkpoints/  one checkpoint per completed stage
    lattices/     sample decode lattices from the final student
    logs/         metrics.jsonl (line-delimited stage/epoch records)
    reports/      summary.json, lm_comparison.json, twopass_report.txt,
                  timelines.jsonl

Config schema (all keys optional unless marked):

    version         1
    task            ToyTaskSpec fields (required)
    num_utterances  corpus size (required)
    model           ModelConfig fields for student and teachers (required)
    context         kappa, prior_smoothing, lm_k, runtime_lm_order, beam{}
    student         {seed, stages: [StageConfig...]} (CE then MMI)
    teachers        {seeds: [..], weights: [..], stages: [StageConfig...]}
    sequence_ts     StageConfig for the student T/S stage
    two_head        {seed, stages: [StageConfig...]}
    lm_comparison   {orders: [..]}
    twopass_utterances  how many utterances to simulate (default 0)
"""

from __future__ import annotations

import json
import os

import numpy as np

from .checkpoint import save_checkpoint
from .decoder import BeamConfig
from .lattice import write_lattice
from .models import ModelConfig, copy_model, init_model, lookahead_frames
from .recipes import (
    StageConfig, TrainContext, build_ensemble, compare_lm_strength, decode_wer,
    frame_scores_for, run_stage, run_two_head_recipe, stage_lattice,
    write_metrics_log,
)
from .scoring import relative_wer_reduction
from .toytask import ToyTaskSpec, generate_corpus, save_corpus
from .twopass import FrameClock, latency_ms, latency_report, two_pass_decode


def load_experiment_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if config.get("version", 1) != 1:
        raise ValueError("unsupported experiment config version")
    for key in ("task", "num_utterances", "model"):
        if key not in config:
            raise ValueError("experiment config is missing %r" % key)
    return config


def build_context(config: dict, corpus=None) -> TrainContext:
    spec = ToyTaskSpec.from_dict(config["task"])
    if corpus is None:
        corpus = generate_corpus(spec, config["num_utterances"])
    c = dict(config.get("context", {}))
    beam = BeamConfig(**c.pop("beam", {}))
    return TrainContext(corpus, beam=beam, **c)


def _stages(raw) -> list:
    return [StageConfig.from_dict(s) for s in raw]


def run_experiment(config: dict, run_dir, corpus=None, progress=None) -> dict:
    """Execute the configured ladder; returns the summary dict."""

    def say(msg):
        if progress is not None:
            progress(msg)

    for sub in ("configs", "checkpoints", "lattices", "logs", "reports"):
        os.makedirs(os.path.join(run_dir, sub), exist_ok=True)
    with open(os.path.join(run_dir, "configs", "experiment.json"), "w",
              encoding="utf-8") as fh:
        json.dump(config, fh, sort_keys=True, indent=2)

    ctx = build_context(config, corpus)
    save_corpus(os.path.join(run_dir, "corpus"), ctx.corpus)
    model_cfg = ModelConfig.from_dict(config["model"])
    metrics: list = []
    summary: dict = {"wer": {}, "relative_reduction": {}}

    def eval_wer(model, tag):
        wer = decode_wer(model, ctx, ctx.corpus.utterances).wer
        summary["wer"][tag] = wer
        say("%s WER %.4f" % (tag, wer))
        return wer

    def ckpt(model, tag, stage_tag, seed):
        path = os.path.join(run_dir, "checkpoints", "%s.ckpt" % tag)
        save_checkpoint(path, model, stage_tag, {"seed": seed})
        return path

    # -- student CE -> MMI ---------------------------------------------------
    student_cfg = config.get("student", {})
    student_seed = student_cfg.get("seed", 11)
    student = init_model(model_cfg, seed=student_seed)
    seed_tag = None
    for stage in _stages(student_cfg.get("stages", [])):
        run_stage(student, stage, ctx, seed_tag=seed_tag, metrics=metrics)
        seed_tag = stage.criterion
        ckpt(student, "student_%s" % stage.criterion.lower(), stage.criterion,
             student_seed)
        eval_wer(student, "student_%s" % stage.criterion.lower())
    mmi_seed_model = copy_model(student)

    # -- teachers --------------------------------------------------------------
    teachers_cfg = config.get("teachers", {})
    teacher_models = []
    for tseed in teachers_cfg.get("seeds", []):
        teacher = init_model(model_cfg, seed=tseed)
        tag = None
        for stage in _stages(teachers_cfg.get("stages", [])):
            stage = _reseed(stage, tseed)
            run_stage(teacher, stage, ctx, seed_tag=tag, metrics=metrics)
            tag = stage.criterion
        teacher_models.append(teacher)
        ckpt(teacher, "teacher_%d" % tseed, tag or "CE", tseed)
        eval_wer(teacher, "teacher_%d" % tseed)

    teacher_cache = None
    if teacher_models:
        weights = teachers_cfg.get("weights",
                                   [1.0 / len(teacher_models)] * len(teacher_models))
        teacher_cache = build_ensemble(
            teacher_models, weights, ctx,
            cache_path=os.path.join(run_dir, "checkpoints", "ensemble.ltc"))
        say("teacher ensemble cached (weights %s)" % (weights,))

    # -- sequence teacher-student ---------------------------------------------
    if "sequence_ts" in config and teacher_cache is not None:
        ts_stage = StageConfig.from_dict(config["sequence_ts"])
        run_stage(student, ts_stage, ctx, teacher_cache=teacher_cache,
                  seed_tag="MMI", metrics=metrics)
        ckpt(student, "student_seq_ts", "SEQ_TS", student_seed)
        eval_wer(student, "student_seq_ts")

    # -- two-head --------------------------------------------------------------
    two = None
    if "two_head" in config:
        th = config["two_head"]
        two = run_two_head_recipe(student, _stages(th.get("stages", [])), ctx,
                                  seed=th.get("seed", 31),
                                  teacher_cache=teacher_cache, metrics=metrics)
        ckpt(two, "two_head", "SEQ_TS", th.get("seed", 31))
        eval_wer(two.view("lt"), "two_head_first")
        eval_wer(two.view("clt"), "two_head_second")

    # -- LM strength comparison -------------------------------------------------
    if "lm_comparison" in config and teacher_cache is not None:
        orders = config["lm_comparison"].get("orders", [1, 3])
        ts_stage = StageConfig.from_dict(config["sequence_ts"])
        rows = compare_lm_strength(mmi_seed_model, ts_stage, orders, ctx,
                                   teacher_cache)
        with open(os.path.join(run_dir, "reports", "lm_comparison.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(rows, fh, sort_keys=True, indent=2)
        summary["lm_comparison"] = rows
        say("lm comparison: %s" % rows)

    # -- two-pass simulation -------------------------------------------------
    if two is not None and config.get("twopass_utterances", 0) > 0:
        clock = FrameClock()
        utts = ctx.corpus.utterances[:config["twopass_utterances"]]
        timelines = []
        with open(os.path.join(run_dir, "reports", "timelines.jsonl"), "w",
                  encoding="utf-8") as fh:
            for utt in utts:
                tl = two_pass_decode(two, utt.frames, ctx.lexicon,
                                     ctx.runtime_lm, ctx.scorer, clock, ctx.beam)
                timelines.append(tl)
                for line in tl.export_lines():
                    fh.write(line + "\n")
        rep = latency_report(two, timelines, clock)
        with open(os.path.join(run_dir, "reports", "twopass_report.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(rep.export_text())
        summary["twopass"] = {
            "replacement_rate": rep.replacement_rate,
            "perceived_mean_ms": rep.perceived_mean_ms,
            "added_latency_clt_ms": rep.added_latency_clt_ms,
        }
        say("two-pass: replacement rate %.3f, perceived mean %.1f ms"
            % (rep.replacement_rate, rep.perceived_mean_ms))

    # -- sample lattices and derived reductions -----------------------------
    lm = ctx.runtime_lm
    for utt in ctx.corpus.utterances[:3]:
        lat = stage_lattice(frame_scores_for(student, ctx, utt), ctx, lm)
        write_lattice(os.path.join(run_dir, "lattices", "%s.lat" % utt.uid), lat)

    wer = summary["wer"]
    if "student_ce" in wer and "student_mmi" in wer and wer["student_ce"] > 0:
        summary["relative_reduction"]["mmi_vs_ce"] = \
            relative_wer_reduction(wer["student_ce"], wer["student_mmi"])
    if "student_mmi" in wer and "student_seq_ts" in wer and wer["student_mmi"] > 0:
        summary["relative_reduction"]["seq_ts_vs_mmi"] = \
            relative_wer_reduction(wer["student_mmi"], wer["student_seq_ts"])

    write_metrics_log(os.path.join(run_dir, "logs", "metrics.jsonl"), metrics)
    with open(os.path.join(run_dir, "reports", "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
    return summary


def _reseed(stage: StageConfig, seed: int) -> StageConfig:
    import dataclasses

    return dataclasses.replace(stage, seed=stage.seed + seed)


def smoke_config() -> dict:
    """The bundled smoke experiment: tiny dims, 200 utterances."""
    return {
        "version": 1,
        "task": ToyTaskSpec(vocab_size=8, feature_dim=8, min_words=3,
                            max_words=6, noise_sigma=1.0, seed=101).to_dict(),
        "num_utterances": 200,
        "model": ModelConfig("cltlstm", 2, 8, 12, 6, 25, 1).to_dict(),
        "context": {"runtime_lm_order": 3,
                    "beam": {"beam": 10.0, "max_tokens": 400}},
        "student": {
            "seed": 11,
            "stages": [
                {"criterion": "CE", "epochs": 4, "learning_rate": 1.2,
                 "lr_decay": 0.85, "eval_wer": False},
                {"criterion": "MMI", "epochs": 2, "learning_rate": 0.05,
                 "eval_wer": False},
            ],
        },
        "teachers": {
            "seeds": [21, 22],
            "weights": [0.5, 0.5],
            "stages": [
                {"criterion": "CE", "epochs": 6, "learning_rate": 1.2,
                 "lr_decay": 0.85, "eval_wer": False},
                {"criterion": "MMI", "epochs": 2, "learning_rate": 0.05,
                 "eval_wer": False},
                {"criterion": "EMBR", "epochs": 2, "learning_rate": 0.3,
                 "eval_wer": False},
            ],
        },
        "sequence_ts": {"criterion": "SEQ_TS", "epochs": 3, "learning_rate": 0.2,
                        "lattice_lm_order": 3, "eval_wer": False},
        "two_head": {
            "seed": 31,
            "stages": [
                {"criterion": "CE", "epochs": 3, "learning_rate": 1.2,
                 "lr_decay": 0.85, "eval_wer": False},
                {"criterion": "MMI", "epochs": 1, "learning_rate": 0.05,
                 "eval_wer": False},
                {"criterion": "SEQ_TS", "epochs": 2, "learning_rate": 0.2,
                 "lattice_lm_order": 3, "eval_wer": False},
            ],
        },
        "lm_comparison": {"orders": [1, 3]},
        "twopass_utterances": 100,
    }
