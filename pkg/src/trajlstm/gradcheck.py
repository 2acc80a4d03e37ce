"""Finite-difference verification across every model variant and criterion.

Each instance draws a small random model, a random utterance, and the
lattice structures its criterion needs, then checks the analytic gradients
of the full parameter set against central differences.
"""

from __future__ import annotations

import numpy as np

from . import criteria
from .lattice import Arc, Lattice, validate
from .models import ModelConfig, build_second_head, init_model
from .tensor import Tensor, finite_diff_check

VARIANTS = ("plain_lstm", "ltlstm", "cltlstm", "two_head")
CRITERIA = ("CE", "MMI", "EMBR", "SEQ_TS")


def _random_instance(variant: str, rng: np.random.Generator):
    L = int(rng.integers(1, 3))
    hidden = int(rng.integers(2, 4))
    proj = 2
    input_dim = int(rng.integers(2, 4))
    senones = int(rng.integers(3, 6))
    tau = int(rng.integers(0, 3)) if variant in ("cltlstm", "two_head") else 0
    base_variant = "cltlstm" if variant == "two_head" else variant
    cfg = ModelConfig(base_variant, L, input_dim, hidden, proj, senones, tau)
    seed = int(rng.integers(0, 2 ** 31))
    model = init_model(cfg, seed=seed)
    if variant == "two_head":
        two = build_second_head(model, seed=seed + 1)
        model = two.view("lt")
    n_frames = int(rng.integers(3, 6))
    frames = [Tensor(rng.normal(size=input_dim)) for _ in range(n_frames)]
    align = [int(s) for s in rng.integers(0, senones, size=n_frames)]
    priors = rng.dirichlet(np.ones(senones) * 5.0)
    scorer = criteria.AcousticScorer(priors, kappa=float(rng.uniform(0.5, 1.5)))
    return model, frames, align, scorer


def _lattices_for(align, senones, rng, n_competitors=2):
    n = len(align)
    num = Lattice(n, [0, n], [Arc(0, 1, "ref", tuple(align), 0.0, -0.1)], 0, 1)
    validate(num)
    arcs = [Arc(0, 1, "ref", tuple(align), 0.0, -0.1)]
    for i in range(n_competitors):
        competitor = tuple(int(s) for s in rng.integers(0, senones, size=n))
        arcs.append(Arc(0, 1, "alt%d" % i, competitor, 0.0, -0.2 * (i + 1)))
    arcs.append(Arc(1, 2, None, (), 0.0, 0.0))
    den = Lattice(n, [0, n, n], arcs, 0, 2)
    validate(den)
    return num, den


def _loss_fn(criterion, model, frames, align, scorer, rng):
    senones = scorer.priors.shape[0]
    if criterion == "CE":
        return lambda: criteria.ce_loss(model, frames, align)
    num, den = _lattices_for(align, senones, rng)
    if criterion == "MMI":
        return lambda: criteria.mmi_loss(model, frames, num, den, scorer)
    if criterion == "EMBR":
        nbest = [(("ref",), (0, len(den.arcs) - 1))]
        for i in range(len(den.arcs) - 2):
            nbest.append((("alt%d" % i,), (i + 1, len(den.arcs) - 1)))
        ref = ["ref"]
        return lambda: criteria.embr_loss(model, frames, nbest, ref, den, scorer)
    teacher_fs = rng.normal(size=(len(frames), senones))
    gamma_t, post_t, _ = criteria.teacher_lattice_stats(den, teacher_fs, senones)
    return lambda: criteria.seq_ts_loss(model, frames, den, gamma_t, post_t, scorer)


def run_gradcheck(variants=VARIANTS, criteria_names=CRITERIA, instances: int = 20,
                  seed: int = 0, step: float = 1e-5, tol: float = 1e-4):
    """Returns {(variant, criterion): worst deviation} plus an overall flag."""
    results = {}
    all_passed = True
    for vi, variant in enumerate(variants):
        for ci, criterion in enumerate(criteria_names):
            worst = 0.0
            for i in range(instances):
                rng = np.random.default_rng(
                    seed + 7919 * i + 131 * (vi * len(CRITERIA) + ci))
                model, frames, align, scorer = _random_instance(variant, rng)
                loss_fn = _loss_fn(criterion, model, frames, align, scorer, rng)
                report = finite_diff_check(loss_fn, model.tensors(),
                                           step=step, tol=tol)
                worst = max(worst, report["max_rel_dev"])
            passed = worst <= tol
            all_passed = all_passed and passed
            results[(variant, criterion)] = {"max_rel_dev": worst, "passed": passed}
    return {"results": results, "passed": all_passed, "tol": tol}
