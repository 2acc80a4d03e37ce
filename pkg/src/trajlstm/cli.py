"""Command-line surface tying the modules into runnable experiments.

Every subcommand reads config files and emits artifacts/logs to a run
directory, exits 0 on success and nonzero with a machine-readable JSON
error record on stderr otherwise.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # noqa: BLE001  (the CLI boundary reports, not raises)
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajlstm",
        description="Layer-trajectory LSTM toolkit: data generation, staged "
                    "training, decoding, two-pass simulation, verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--task", help="JSON file with task fields (default: smoke task)")
    p.add_argument("--num", type=int, default=200, help="number of utterances")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="run an experiment recipe")
    p.add_argument("--recipe", help="experiment config JSON (default: bundled smoke)")
    p.add_argument("--corpus", help="pre-generated corpus directory (optional)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("decode", help="decode a corpus with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="hypothesis output file")
    p.add_argument("--lm-order", type=int, default=3)
    p.add_argument("--head", choices=["lt", "clt"], default="clt",
                   help="head to use for two-head checkpoints")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("simulate-twopass", help="two-pass streaming simulation")
    p.add_argument("--checkpoint", required=True, help="two-head checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--utterances", type=int, default=0, help="0 = all")
    p.add_argument("--lm-order", type=int, default=3)
    p.set_defaults(func=_cmd_twopass)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("paramcount", help="parameter totals at production dims")
    p.set_defaults(func=_cmd_paramcount)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cmd_gen_data(args) -> int:
    from .pipeline import smoke_config
    from .toytask import ToyTaskSpec, generate_corpus, save_corpus

    task = _load_json(args.task) if args.task else smoke_config()["task"]
    spec = ToyTaskSpec.from_dict(task)
    corpus = generate_corpus(spec, args.num)
    save_corpus(args.out, corpus)
    print("wrote %d utterances to %s" % (len(corpus.utterances), args.out))
    return 0


def _cmd_train(args) -> int:
    from .pipeline import load_experiment_config, run_experiment, smoke_config
    from .toytask import load_corpus

    config = load_experiment_config(args.recipe) if args.recipe else smoke_config()
    corpus = load_corpus(args.corpus) if args.corpus else None
    progress = None if args.quiet else lambda msg: print(msg, flush=True)
    summary = run_experiment(config, args.out, corpus=corpus, progress=progress)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def _load_scorer_context(corpus_dir, lm_order):
    from .recipes import TrainContext
    from .toytask import load_corpus

    corpus = load_corpus(corpus_dir)
    return TrainContext(corpus, runtime_lm_order=lm_order)


def _cmd_decode(args) -> int:
    from .checkpoint import load_checkpoint
    from .models import TwoHeadModel
    from .recipes import frame_scores_for, stage_lattice
    from .lattice import best_path
    from .scoring import ScoredResult, score_wer

    model, tag, _ = load_checkpoint(args.checkpoint)
    if isinstance(model, TwoHeadModel):
        model = model.view(args.head)
    ctx = _load_scorer_context(args.corpus, args.lm_order)
    total = ScoredResult(0, 0, 0, 0)
    with open(args.out, "w", encoding="utf-8") as fh:
        for utt in ctx.corpus.utterances:
            lat = stage_lattice(frame_scores_for(model, ctx, utt), ctx, ctx.runtime_lm)
            words, _, _ = best_path(lat)
            fh.write("%s %s\n" % (utt.uid, " ".join(words)))
            total = total + score_wer(list(words), utt.words)
    print(json.dumps({"checkpoint_stage": tag, "wer": total.wer,
                      "substitutions": total.substitutions,
                      "deletions": total.deletions,
                      "insertions": total.insertions,
                      "ref_words": total.ref_len}, sort_keys=True))
    return 0


def _cmd_twopass(args) -> int:
    from .checkpoint import load_checkpoint
    from .models import TwoHeadModel
    from .twopass import FrameClock, latency_report, two_pass_decode

    model, _, _ = load_checkpoint(args.checkpoint)
    if not isinstance(model, TwoHeadModel):
        raise ValueError("simulate-twopass needs a two-head checkpoint")
    ctx = _load_scorer_context(args.corpus, args.lm_order)
    utts = ctx.corpus.utterances
    if args.utterances > 0:
        utts = utts[:args.utterances]
    os.makedirs(args.out, exist_ok=True)
    clock = FrameClock()
    timelines = []
    timeline_path = os.path.join(args.out, "timelines.jsonl")
    with open(timeline_path, "w", encoding="utf-8") as fh:
        for utt in utts:
            tl = two_pass_decode(model, utt.frames, ctx.lexicon, ctx.runtime_lm,
                                 ctx.scorer, clock, ctx.beam)
            timelines.append(tl)
            for line in tl.export_lines():
                fh.write(line + "\n")
    rep = latency_report(model, timelines, clock)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(rep.export_text())
    digest = hashlib.sha256(open(timeline_path, "rb").read()).hexdigest()
    print(json.dumps({"utterances": len(utts),
                      "replacement_rate": rep.replacement_rate,
                      "perceived_mean_ms": rep.perceived_mean_ms,
                      "timeline_sha256": digest}, sort_keys=True))
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    out = run_gradcheck(instances=args.instances, seed=args.seed,
                        step=args.step, tol=args.tol)
    for (variant, criterion), res in sorted(out["results"].items()):
        print("%-12s %-7s worst rel dev %.3e  %s"
              % (variant, criterion, res["max_rel_dev"],
                 "PASS" if res["passed"] else "FAIL"))
    print("overall: %s (tol %g)" % ("PASS" if out["passed"] else "FAIL", out["tol"]))
    return 0 if out["passed"] else 1


def _cmd_paramcount(args) -> int:
    from .models import ModelConfig, param_count, param_count_depth_head

    base = dict(num_layers=6, input_dim=80, hidden_dim=1024, proj_dim=512,
                num_senones=9404)
    rows = [
        ("LSTM", param_count(ModelConfig("plain_lstm", **base)), 31e6),
        ("ltLSTM", param_count(ModelConfig("ltlstm", **base)), 57e6),
        ("cltLSTM-6", param_count(ModelConfig("cltlstm", tau=1, **base)), 58e6),
        ("cltLSTM-12", param_count(ModelConfig("cltlstm", tau=2, **base)), 60e6),
        ("cltLSTM-24", param_count(ModelConfig("cltlstm", tau=4, **base)), 63e6),
        ("second head", param_count_depth_head(ModelConfig("cltlstm", tau=2, **base)), 34e6),
    ]
    print("%-12s %14s %12s %10s" % ("model", "parameters", "target (M)", "deviation"))
    worst = 0.0
    for name, got, target in rows:
        dev = (got - target) / target
        worst = max(worst, abs(dev))
        print("%-12s %14d %12.0f %+9.1f%%" % (name, got, target / 1e6, 100 * dev))
    print("largest deviation %.1f%% (context-matrix sizing in the original "
          "system is unpublished; totals stay within 10%%)" % (100 * worst))
    return 0


def _cmd_report(args) -> int:
    summary_path = os.path.join(args.run, "reports", "summary.json")
    metrics_path = os.path.join(args.run, "logs", "metrics.jsonl")
    summary = _load_json(summary_path)
    print(json.dumps(summary, sort_keys=True, indent=2))
    if os.path.exists(metrics_path):
        from .recipes import read_metrics_log

        records = read_metrics_log(metrics_path)
        print("metrics: %d stage-epoch records" % len(records))
        for rec in records[-5:]:
            print("  " + json.dumps(rec, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
