import numpy as np
import pytest

from trajlstm.criteria import frame_posteriors
from trajlstm.decoder import BeamConfig
from trajlstm.models import (
    ModelConfig, checksum_tensors, copy_model, forward_two_head, init_model,
)
from trajlstm.recipes import (
    StageConfig, TrainContext, build_ensemble, check_stage_dependency,
    compare_lm_strength, decode_wer, prepare_stage, run_stage,
    run_two_head_recipe, stage_criterion_mean, validation_split,
    write_metrics_log,
)
from trajlstm.scoring import senone_accuracy
from trajlstm.tensor import Tensor
from trajlstm.toytask import ToyTaskSpec, generate_corpus


def _ctx(seed=0, n_utt=30, noise=0.35, vocab=4):
    spec = ToyTaskSpec(vocab_size=vocab, feature_dim=4, min_words=2, max_words=3,
                       noise_sigma=noise, seed=seed)
    corpus = generate_corpus(spec, n_utt)
    return TrainContext(corpus, beam=BeamConfig(beam=12.0, max_tokens=600),
                        runtime_lm_order=2)


def _student_cfg(ctx, variant="cltlstm", tau=1, L=2, hidden=8, proj=4):
    return ModelConfig(variant, L, ctx.corpus.spec.feature_dim, hidden, proj,
                       ctx.num_senones, tau)


def test_validation_split_deterministic_and_sparse():
    uids = ["utt%05d" % i for i in range(2000)]
    flags = [validation_split(u) for u in uids]
    assert flags == [validation_split(u) for u in uids]
    frac = sum(flags) / len(flags)
    assert 0.05 < frac < 0.15


def test_zero_epochs_leaves_parameters():
    ctx = _ctx()
    model = init_model(_student_cfg(ctx), seed=1)
    before = checksum_tensors(model.tensors())
    records = run_stage(model, StageConfig("CE", 0, 0.1), ctx)
    assert records == []
    assert checksum_tensors(model.tensors()) == before


def test_ce_stage_reduces_loss():
    ctx = _ctx(seed=1)
    model = init_model(_student_cfg(ctx), seed=2)
    stage = StageConfig("CE", 3, 0.25, eval_wer=False)
    initial = stage_criterion_mean(model, stage, ctx)
    records = run_stage(model, stage, ctx)
    final = stage_criterion_mean(model, stage, ctx)
    assert final < initial
    assert [r["epoch"] for r in records] == [0, 1, 2]
    assert records[-1]["train_criterion"] < records[0]["train_criterion"]


def test_stage_dependencies():
    check_stage_dependency("CE", None)
    check_stage_dependency("MMI", "CE")
    check_stage_dependency("SEQ_TS", "MMI")
    with pytest.raises(ValueError, match="CE"):
        check_stage_dependency("MMI", None)
    with pytest.raises(ValueError, match="MMI"):
        check_stage_dependency("SEQ_TS", "CE")


def test_seq_ts_without_ensemble_rejected():
    ctx = _ctx(seed=2, n_utt=12)
    model = init_model(_student_cfg(ctx), seed=3)
    with pytest.raises(ValueError, match="ensemble"):
        run_stage(model, StageConfig("SEQ_TS", 1, 0.05, eval_wer=False), ctx,
                  seed_tag="MMI")


def test_freeze_group_bitwise_unchanged():
    ctx = _ctx(seed=3, n_utt=12)
    model = init_model(_student_cfg(ctx), seed=4)
    before_time = checksum_tensors(model.time_stack.tensors())
    before_head = checksum_tensors(model.head.tensors())
    run_stage(model, StageConfig("CE", 1, 0.2, eval_wer=False, freeze=("time",)), ctx)
    assert checksum_tensors(model.time_stack.tensors()) == before_time
    assert checksum_tensors(model.head.tensors()) != before_head


def test_unknown_freeze_group_rejected():
    ctx = _ctx(seed=3, n_utt=6)
    model = init_model(_student_cfg(ctx), seed=4)
    with pytest.raises(ValueError, match="freeze"):
        run_stage(model, StageConfig("CE", 1, 0.1, freeze=("nope",)), ctx)


def test_training_determinism_bitwise():
    outs = []
    for _ in range(2):
        ctx = _ctx(seed=4, n_utt=16)
        model = init_model(_student_cfg(ctx), seed=5)
        records = run_stage(model, StageConfig("CE", 2, 0.2, eval_wer=True), ctx)
        outs.append((checksum_tensors(model.tensors()), records))
    assert outs[0] == outs[1]


def test_mmi_stage_monotone_on_fixed_lattices():
    ctx = _ctx(seed=5, n_utt=16)
    model = init_model(_student_cfg(ctx), seed=6)
    run_stage(model, StageConfig("CE", 2, 0.25, eval_wer=False), ctx)
    stage = StageConfig("MMI", 2, 0.12, eval_wer=False)
    prep = prepare_stage(model, stage, ctx)
    before = stage_criterion_mean(model, stage, ctx, prep=prep)
    run_stage(model, stage, ctx, seed_tag="CE")
    after = stage_criterion_mean(model, stage, ctx, prep=prep)
    assert after < before
    assert before >= -1e-9  # MMI loss is nonnegative with contained numerator


def test_build_ensemble_identities(tmp_path):
    ctx = _ctx(seed=6, n_utt=8)
    cfg = _student_cfg(ctx)
    a = init_model(cfg, seed=7)
    b = init_model(cfg, seed=8)
    cache_a = build_ensemble([a], [1.0], ctx)
    cache_ab_same = build_ensemble([a, a], [0.4, 0.6], ctx)
    cache_mix = build_ensemble([a, b], [0.5, 0.5], ctx,
                               cache_path=tmp_path / "ens.ltc")
    for utt in ctx.corpus.utterances:
        pa = frame_posteriors(a, ctx.frames(utt))
        assert np.allclose(cache_a[utt.uid], pa, atol=1e-15)
        assert np.allclose(cache_ab_same[utt.uid], pa, atol=1e-15)
        pb = frame_posteriors(b, ctx.frames(utt))
        assert np.allclose(cache_mix[utt.uid], 0.5 * pa + 0.5 * pb, atol=1e-15)

    from trajlstm.recipes import load_ensemble_cache

    back = load_ensemble_cache(tmp_path / "ens.ltc")
    for uid, mat in cache_mix.items():
        assert (back[uid] == mat).all()


def test_seq_ts_stage_runs_and_reduces_its_criterion():
    ctx = _ctx(seed=7, n_utt=16)
    cfg = _student_cfg(ctx)
    student = init_model(cfg, seed=9)
    run_stage(student, StageConfig("CE", 2, 0.25, eval_wer=False), ctx)
    teacher = copy_model(student)
    run_stage(teacher, StageConfig("CE", 2, 0.2, seed=99, eval_wer=False), ctx)
    cache = build_ensemble([teacher], [1.0], ctx)
    stage = StageConfig("SEQ_TS", 2, 0.1, eval_wer=False)
    prep = prepare_stage(student, stage, ctx, teacher_cache=cache)
    before = stage_criterion_mean(student, stage, ctx, teacher_cache=cache, prep=prep)
    run_stage(student, stage, ctx, teacher_cache=cache, seed_tag="MMI")
    after = stage_criterion_mean(student, stage, ctx, teacher_cache=cache, prep=prep)
    assert after < before


def test_two_head_recipe_contracts():
    ctx = _ctx(seed=8, n_utt=16)
    cfg = _student_cfg(ctx)
    clt = init_model(cfg, seed=10)
    run_stage(clt, StageConfig("CE", 2, 0.25, eval_wer=False), ctx)
    teacher = copy_model(clt)
    cache = build_ensemble([teacher], [1.0], ctx)

    frames = ctx.frames(ctx.corpus.utterances[0])
    two_probe = None

    stages = [StageConfig("CE", 1, 0.2, eval_wer=False),
              StageConfig("MMI", 1, 0.08, eval_wer=False),
              StageConfig("SEQ_TS", 1, 0.08, eval_wer=False)]
    two = run_two_head_recipe(clt, stages, ctx, seed=11, teacher_cache=cache)
    assert checksum_tensors(two.shared.tensors()) == checksum_tensors(clt.time_stack.tensors())
    assert checksum_tensors(two.head_clt.tensors()) == checksum_tensors(clt.head.tensors())
    # clt head outputs identical before/after (untouched parameters)
    _, clt_logits, _ = forward_two_head(two, frames)
    from trajlstm.models import forward_cltlstm

    src_logits = forward_cltlstm(clt, frames)
    for a, b in zip(src_logits, clt_logits):
        assert (a.data == b.data).all()


def test_two_head_training_improves_lt_head_accuracy():
    ctx = _ctx(seed=9, n_utt=20)
    cfg = _student_cfg(ctx)
    clt = init_model(cfg, seed=12)
    run_stage(clt, StageConfig("CE", 2, 0.25, eval_wer=False), ctx)

    from trajlstm.models import build_second_head

    init_two = build_second_head(clt, seed=13)

    def lt_accuracy(two):
        correct, total = 0, 0
        for utt in ctx.val_utts:
            posts = frame_posteriors(two.view("lt"), ctx.frames(utt))
            pred = posts.argmax(axis=1)
            correct += int((pred == utt.alignment).sum())
            total += utt.num_frames
        return correct / total

    acc_before = lt_accuracy(init_two)
    two = run_two_head_recipe(clt, [StageConfig("CE", 2, 0.25, eval_wer=False)],
                              ctx, seed=13)
    acc_after = lt_accuracy(two)
    assert acc_after > acc_before


def test_compare_lm_strength_shapes_and_determinism():
    ctx = _ctx(seed=10, n_utt=14)
    cfg = _student_cfg(ctx)
    student = init_model(cfg, seed=14)
    run_stage(student, StageConfig("CE", 1, 0.25, eval_wer=False), ctx)
    cache = build_ensemble([student], [1.0], ctx)
    ts = StageConfig("SEQ_TS", 1, 0.08, eval_wer=False)

    rows = compare_lm_strength(student, ts, (2,), ctx, cache)
    assert len(rows) == 1 and rows[0]["lattice_lm_order"] == 2

    twice = [compare_lm_strength(student, ts, (2, 2), ctx, cache)]
    assert twice[0][0] == twice[0][1]  # identical LM in both slots, same seed


def test_metrics_log_roundtrip(tmp_path):
    from trajlstm.recipes import read_metrics_log

    records = [{"stage": "CE", "epoch": 0, "train_criterion": 1.5, "wer": 0.5}]
    write_metrics_log(tmp_path / "m.jsonl", records)
    assert read_metrics_log(tmp_path / "m.jsonl") == records
