"""Model checkpoints on top of the tensor container format.

A checkpoint stores the model configuration, a training-stage tag, free-form
training metadata (seed, epoch, loss history), and every named parameter
tensor. Reloading reconstructs the model exactly (bit-for-bit), so a stored
validation loss can be re-verified after a round trip.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .container import ContainerError, read_container, write_container
from .models import (
    LayerTrajectoryModel, ModelConfig, TwoHeadModel, init_depth_head,
    init_model, named_tensors,
)


def save_checkpoint(path, model, stage_tag: str, meta: dict | None = None) -> None:
    if isinstance(model, TwoHeadModel):
        kind = "two_head"
        named = model.named_tensors()
    else:
        kind = "model"
        named = named_tensors(model)
    header = {
        "kind": kind,
        "config": model.config.to_dict(),
        "stage_tag": stage_tag,
        "train": dict(meta or {}),
    }
    write_container(path, header, [(n, t.data) for n, t in named])


def load_checkpoint(path):
    """Returns (model, stage_tag, train_meta)."""
    meta, tensors = read_container(path)
    config = ModelConfig.from_dict(meta["config"])
    if meta.get("kind") == "two_head":
        model = _empty_two_head(config)
        named = model.named_tensors()
    else:
        model = init_model(config, seed=0)
        named = named_tensors(model)
    for name, t in named:
        if name not in tensors:
            raise ContainerError("checkpoint missing tensor %r" % name)
        arr = tensors[name]
        if tuple(arr.shape) != t.shape:
            raise ContainerError("tensor %r shape %r, expected %r"
                                 % (name, arr.shape, t.shape))
        t.data[...] = arr
    extra = set(tensors) - {n for n, _ in named}
    if extra:
        raise ContainerError("checkpoint has unexpected tensors %r" % sorted(extra))
    return model, meta["stage_tag"], meta.get("train", {})


def _empty_two_head(config: ModelConfig) -> TwoHeadModel:
    base = init_model(config, seed=0)
    rng = np.random.default_rng(0)
    lt_config = dataclasses.replace(config, variant="ltlstm", tau=0)
    head_lt = init_depth_head(rng, lt_config, 0)
    return TwoHeadModel(config, base.time_stack, head_lt, base.head)
