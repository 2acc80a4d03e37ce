"""The LSTM cell with a linear output projection.

Gate ordering is fixed as input, forget, cell-candidate, output. No
peephole connections. The recurrent partner fed back into the gates is
the projected output, so the gate weight matrix is
[4*hidden_dim x (input_dim + proj_dim)].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import ShapeError, Tensor, _rec, _wrap, zeros

FORGET_BIAS = 1.0


def init_bound(fan_in: int) -> float:
    """Uniform init half-width: scales with fan-in so signal neither dies
    nor explodes across stacked projected cells at any model size."""
    return 1.0 / np.sqrt(fan_in)


@dataclass
class LstmpParams:
    input_dim: int
    hidden_dim: int
    proj_dim: int
    gate_weights: Tensor
    gate_biases: Tensor
    proj_weights: Tensor

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.proj_dim) < 1:
            raise ShapeError("all cell dimensions must be >= 1")
        expect_gw = (4 * self.hidden_dim, self.input_dim + self.proj_dim)
        if self.gate_weights.shape != expect_gw:
            raise ShapeError("gate_weights shape %r, expected %r" % (self.gate_weights.shape, expect_gw))
        if self.gate_biases.shape != (4 * self.hidden_dim,):
            raise ShapeError("gate_biases shape %r, expected (%d,)" % (self.gate_biases.shape, 4 * self.hidden_dim))
        if self.proj_weights.shape != (self.proj_dim, self.hidden_dim):
            raise ShapeError("proj_weights shape %r, expected %r"
                             % (self.proj_weights.shape, (self.proj_dim, self.hidden_dim)))

    def tensors(self):
        return [self.gate_weights, self.gate_biases, self.proj_weights]


@dataclass
class CellState:
    cell: Tensor
    output: Tensor


def zero_state(params: LstmpParams) -> CellState:
    return CellState(zeros(params.hidden_dim), zeros(params.proj_dim))


def init_lstmp(rng: np.random.Generator, input_dim: int, hidden_dim: int,
               proj_dim: int) -> LstmpParams:
    """Seeded initialization: fan-in-scaled uniform, forget biases at 1.0."""
    gb_bound = init_bound(input_dim + proj_dim)
    gw = rng.uniform(-gb_bound, gb_bound, size=(4 * hidden_dim, input_dim + proj_dim))
    gb = rng.uniform(-gb_bound, gb_bound, size=4 * hidden_dim)
    gb[hidden_dim:2 * hidden_dim] = FORGET_BIAS
    p_bound = init_bound(hidden_dim)
    pw = rng.uniform(-p_bound, p_bound, size=(proj_dim, hidden_dim))
    return LstmpParams(input_dim, hidden_dim, proj_dim, Tensor(gw), Tensor(gb), Tensor(pw))


def lstmp_step(params: LstmpParams, prev: CellState, x: Tensor) -> CellState:
    """Advance the cell one step. Pure: same inputs give identical outputs.

    Runs as a single fused tape operation so the backward pass also goes
    through the selected kernel backend.
    """
    if x.shape != (params.input_dim,):
        raise ShapeError("lstmp_step: input shape %r, cell expects (%d,)" % (x.shape, params.input_dim))
    if prev.cell.shape != (params.hidden_dim,):
        raise ShapeError("lstmp_step: prev.cell shape %r, cell expects (%d,)"
                         % (prev.cell.shape, params.hidden_dim))
    if prev.output.shape != (params.proj_dim,):
        raise ShapeError("lstmp_step: prev.output shape %r, cell expects (%d,)"
                         % (prev.output.shape, params.proj_dim))

    gw, gb, pw = params.gate_weights, params.gate_biases, params.proj_weights
    c_new, p_new, cache = kernels.lstmp_forward(
        gw.data, gb.data, pw.data, x.data, prev.cell.data, prev.output.data)
    c_out = _wrap(c_new)
    p_out = _wrap(p_new)

    def backward(gc, gp, gw_d=gw.data, pw_d=pw.data, cache=cache):
        return kernels.lstmp_backward(gw_d, pw_d, cache, gc, gp)

    _rec((c_out, p_out), (gw, gb, pw, x, prev.cell, prev.output), backward)
    return CellState(c_out, p_out)
