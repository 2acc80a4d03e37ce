"""The model zoo: time-LSTM stacks, layer-trajectory heads, the two-head
model with a shared time-LSTM, streaming evaluation, and parameter counting.

Architecture summary
--------------------
* plain_lstm: a stack of projected LSTM layers advancing over time; senone
  logits come from an affine layer on the top output.
* ltlstm: the same time stack, plus a depth-LSTM that sweeps layers 1..L at
  each frame. The depth cell's input at layer l is the time output h_t^l and
  its recurrent state comes from the layer below (reset to zero at the
  bottom of every frame). Logits come from the top depth output. Zero added
  look-ahead.
* cltlstm: the depth cell's recurrent partner at layers 2..L is replaced by
  a look-ahead embedding, a learned linear mix of the layer-below depth
  outputs for the current and the next tau frames. The streaming pipeline
  waits tau frames at every layer, so output for frame t is emitted after
  frame t + L*tau has arrived.

Models are immutable during inference; training mutates parameters only
through the optimizer. StreamingSession objects are single-owner.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .cells import CellState, LstmpParams, init_bound, init_lstmp, lstmp_step, zero_state
from .tensor import ShapeError, Tensor, zeros

VARIANTS = ("plain_lstm", "ltlstm", "cltlstm")


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    num_layers: int
    input_dim: int
    hidden_dim: int
    proj_dim: int
    num_senones: int
    tau: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError("unknown variant %r" % (self.variant,))
        if min(self.num_layers, self.input_dim, self.hidden_dim,
               self.proj_dim, self.num_senones) < 1:
            raise ValueError("all model dimensions must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.variant in ("plain_lstm", "ltlstm") and self.tau != 0:
            raise ValueError("variant %s implies tau == 0" % self.variant)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def lookahead_frames(config: ModelConfig) -> int:
    """Total look-ahead in frames: tau per layer over all layers."""
    if config.variant != "cltlstm":
        return 0
    return config.num_layers * config.tau


# ---------------------------------------------------------------------------
# Parameter containers


@dataclass
class OutputLayer:
    w: Tensor  # [num_senones x proj_dim]
    b: Tensor  # [num_senones]

    def tensors(self):
        return [self.w, self.b]


@dataclass
class TimeLstmStack:
    layers: list  # list[LstmpParams]; layer 0 input = input_dim, rest proj_dim
    frames_evaluated: int = 0  # instrumentation: how many frames were stepped

    def tensors(self):
        out = []
        for lp in self.layers:
            out.extend(lp.tensors())
        return out


@dataclass
class DepthHead:
    tau: int
    depth_layers: list  # list[LstmpParams], input dim = proj_dim each
    context: list | None  # [L-1 sets][tau+1 matrices (proj, proj)] or None
    output: OutputLayer

    def tensors(self):
        out = []
        for lp in self.depth_layers:
            out.extend(lp.tensors())
        if self.context is not None:
            for mats in self.context:
                out.extend(mats)
        out.extend(self.output.tensors())
        return out


@dataclass
class LayerTrajectoryModel:
    config: ModelConfig
    time_stack: TimeLstmStack
    head: DepthHead | None      # None for plain_lstm
    output: OutputLayer | None  # set for plain_lstm only

    def forward_logits(self, frames):
        return forward_logits(self, frames)

    def tensors(self):
        out = self.time_stack.tensors()
        if self.head is not None:
            out.extend(self.head.tensors())
        if self.output is not None:
            out.extend(self.output.tensors())
        return out

    def named_tensors(self):
        return named_tensors(self)

    def param_groups(self):
        groups = {"time": self.time_stack.tensors()}
        if self.head is not None:
            groups["head"] = self.head.tensors()
        if self.output is not None:
            groups["out"] = self.output.tensors()
        return groups


@dataclass
class TwoHeadModel:
    """Shared time-LSTM with an ltLSTM head and a cltLSTM head.

    Both heads read identical h_t^l values; the shared stack is stepped once
    per frame (see frames_evaluated on the stack).
    """

    config: ModelConfig  # the cltlstm configuration; the lt head derives from it
    shared: TimeLstmStack
    head_lt: DepthHead
    head_clt: DepthHead
    frozen_shared: bool = True

    @property
    def config_lt(self) -> ModelConfig:
        return dataclasses.replace(self.config, variant="ltlstm", tau=0)

    def view(self, which: str) -> "HeadView":
        return HeadView(self, which)

    def tensors(self):
        return self.shared.tensors() + self.head_lt.tensors() + self.head_clt.tensors()

    def named_tensors(self):
        out = []
        for name, t in _named_stack(self.shared, "shared"):
            out.append((name, t))
        out.extend(_named_head(self.head_lt, "lt"))
        out.extend(_named_head(self.head_clt, "clt"))
        return out

    def param_groups(self):
        return {
            "shared": self.shared.tensors(),
            "head_lt": self.head_lt.tensors(),
            "head_clt": self.head_clt.tensors(),
        }


class HeadView:
    """Adapter presenting one head of a TwoHeadModel as a standalone model."""

    def __init__(self, two_head: TwoHeadModel, which: str):
        if which not in ("lt", "clt"):
            raise ValueError("head must be 'lt' or 'clt'")
        self.two_head = two_head
        self.which = which

    @property
    def config(self) -> ModelConfig:
        return self.two_head.config_lt if self.which == "lt" else self.two_head.config

    @property
    def head(self) -> DepthHead:
        return self.two_head.head_lt if self.which == "lt" else self.two_head.head_clt

    def forward_logits(self, frames):
        h, _ = forward_time_lstm(self.two_head.shared, frames)
        num_layers = self.two_head.config.num_layers
        head = self.head
        if self.which == "lt":
            out = []
            for t in range(len(h[0])):
                g = _depth_sweep(head, [h[l][t] for l in range(num_layers)])
                out.append(T.affine(head.output.w, g, head.output.b))
            return out
        g_top = _clt_lanes(head, h, num_layers)
        return [T.affine(head.output.w, g, head.output.b) for g in g_top]

    def tensors(self):
        return self.two_head.shared.tensors() + self.head.tensors()

    def param_groups(self):
        return self.two_head.param_groups()


# ---------------------------------------------------------------------------
# Initialization


def init_model(config: ModelConfig, seed: int) -> LayerTrajectoryModel:
    rng = np.random.default_rng(seed)
    time_stack = _init_time_stack(rng, config)
    if config.variant == "plain_lstm":
        out = _init_output(rng, config)
        return LayerTrajectoryModel(config, time_stack, None, out)
    head = init_depth_head(rng, config, config.tau)
    return LayerTrajectoryModel(config, time_stack, head, None)


def _init_time_stack(rng, config: ModelConfig) -> TimeLstmStack:
    layers = []
    for l in range(config.num_layers):
        din = config.input_dim if l == 0 else config.proj_dim
        layers.append(init_lstmp(rng, din, config.hidden_dim, config.proj_dim))
    return TimeLstmStack(layers)


def init_depth_head(rng, config: ModelConfig, tau: int) -> DepthHead:
    layers = [init_lstmp(rng, config.proj_dim, config.hidden_dim, config.proj_dim)
              for _ in range(config.num_layers)]
    context = None
    if config.variant == "cltlstm":
        r = config.proj_dim
        bound = init_bound((tau + 1) * r)
        context = [
            [Tensor(rng.uniform(-bound, bound, size=(r, r))) for _ in range(tau + 1)]
            for _ in range(config.num_layers - 1)
        ]
    return DepthHead(tau, layers, context, _init_output(rng, config))


def _init_output(rng, config: ModelConfig) -> OutputLayer:
    bound = init_bound(config.proj_dim)
    w = Tensor(rng.uniform(-bound, bound, size=(config.num_senones, config.proj_dim)))
    b = Tensor(rng.uniform(-bound, bound, size=config.num_senones))
    return OutputLayer(w, b)


# ---------------------------------------------------------------------------
# Forward evaluation (batch)


def forward_time_lstm(stack: TimeLstmStack, frames, states=None):
    """Run the time stack over a frame sequence.

    Returns (h, states): h[l][t] is the layer-l output at frame t; states is
    the final per-layer CellState list, reusable for incremental feeding.
    """
    frames = list(frames)
    if states is None:
        states = [zero_state(lp) for lp in stack.layers]
    h = [[] for _ in stack.layers]
    for x in frames:
        inp = x
        for l, lp in enumerate(stack.layers):
            states[l] = lstmp_step(lp, states[l], inp)
            inp = states[l].output
            h[l].append(inp)
    stack.frames_evaluated += len(frames)
    return h, states


def lookahead_embedding(window, mats) -> Tensor:
    """Weighted sum of a depth-output window: sum_d mats[d] @ window[d].

    The window must hold exactly tau+1 vectors (current frame first).
    """
    if len(window) != len(mats):
        raise ShapeError(
            "lookahead_embedding: window holds %d vectors, need %d"
            % (len(window), len(mats)))
    acc = T.matvec(mats[0], window[0])
    for d in range(1, len(mats)):
        acc = T.add(acc, T.matvec(mats[d], window[d]))
    return acc


def _depth_sweep(head: DepthHead, h_t) -> Tensor:
    """One bottom-to-top depth sweep with a zero-reset recurrent state."""
    prev = zero_state(head.depth_layers[0])
    for l, lp in enumerate(head.depth_layers):
        prev = lstmp_step(lp, prev, h_t[l])
    return prev.output


def forward_ltlstm(model, frames):
    config, head = model.config, model.head
    if config.variant != "ltlstm":
        raise ValueError("forward_ltlstm requires an ltlstm model, got %s" % config.variant)
    h, _ = forward_time_lstm(model.time_stack, frames)
    logits = []
    for t in range(len(h[0])):
        g_top = _depth_sweep(head, [h[l][t] for l in range(config.num_layers)])
        logits.append(T.affine(head.output.w, g_top, head.output.b))
    return logits


def _clt_lanes(head: DepthHead, h, num_layers: int):
    """Depth lanes for a cltlstm head given time outputs h[l][t].

    Returns the top-layer depth outputs per frame. Windows past the end of
    the sequence replicate the last real frame (edge padding).
    """
    n = len(h[0])
    tau = head.tau
    c_prev = None
    g_prev = None
    for l in range(num_layers):
        lp = head.depth_layers[l]
        c_cur, g_cur = [], []
        for t in range(n):
            if l == 0:
                prev = zero_state(lp)
            else:
                window = [g_prev[min(t + d, n - 1)] for d in range(tau + 1)]
                zeta = lookahead_embedding(window, head.context[l - 1])
                prev = CellState(c_prev[t], zeta)
            state = lstmp_step(lp, prev, h[l][t])
            c_cur.append(state.cell)
            g_cur.append(state.output)
        c_prev, g_prev = c_cur, g_cur
    return g_prev


def forward_cltlstm(model, frames):
    config, head = model.config, model.head
    if config.variant != "cltlstm":
        raise ValueError("forward_cltlstm requires a cltlstm model, got %s" % config.variant)
    h, _ = forward_time_lstm(model.time_stack, frames)
    g_top = _clt_lanes(head, h, config.num_layers)
    return [T.affine(head.output.w, g, head.output.b) for g in g_top]


def forward_logits(model, frames):
    """Senone logit sequence for any single-head model variant."""
    config = model.config
    if config.variant == "plain_lstm":
        h, _ = forward_time_lstm(model.time_stack, frames)
        return [T.affine(model.output.w, ht, model.output.b) for ht in h[-1]]
    if config.variant == "ltlstm":
        return forward_ltlstm(model, frames)
    return forward_cltlstm(model, frames)


def forward_two_head(model: TwoHeadModel, frames):
    """One shared time pass feeding both heads.

    Returns (lt_logits, clt_logits, stored_h); stored_h[l][t] exposes the
    time outputs for second-pass reuse.
    """
    h, _ = forward_time_lstm(model.shared, frames)
    num_layers = model.config.num_layers
    lt_logits = []
    for t in range(len(h[0])):
        g_top = _depth_sweep(model.head_lt, [h[l][t] for l in range(num_layers)])
        lt_logits.append(T.affine(model.head_lt.output.w, g_top, model.head_lt.output.b))
    g_top_clt = _clt_lanes(model.head_clt, h, num_layers)
    clt_logits = [T.affine(model.head_clt.output.w, g, model.head_clt.output.b)
                  for g in g_top_clt]
    return lt_logits, clt_logits, h


# ---------------------------------------------------------------------------
# Streaming evaluation


class _HeadRunner:
    """Incremental depth evaluation of one head over shared time outputs.

    The h list is owned by the caller and grows as frames arrive. For a
    cltlstm head, every layer waits tau frames for the layer below (ring
    buffer of capacity tau+1), so frame t's logits appear once arrival
    index t + L*tau has been processed.
    """

    def __init__(self, variant: str, num_layers: int, h, head: DepthHead | None,
                 output: OutputLayer | None = None):
        self.variant = variant
        self.num_layers = num_layers
        self.h = h
        self.head = head
        self.output = output if output is not None else (head.output if head else None)
        self._lanes = [{} for _ in range(num_layers)]  # frame -> (cell, g)
        self.emitted_upto = 0

    @property
    def delay(self) -> int:
        return self.num_layers * self.head.tau if self.variant == "cltlstm" else 0

    def advance(self, s: int, last_real: int):
        """Process arrival index s (virtual past last_real); emit ready logits."""
        out = []
        if self.variant != "cltlstm":
            while self.emitted_upto <= min(s, last_real):
                t = self.emitted_upto
                out.append((t, self._emit_simple(t)))
                self.emitted_upto += 1
            return out

        head = self.head
        tau = head.tau
        for l in range(self.num_layers):
            t = s - (l + 1) * tau
            if t < 0 or t > last_real:
                continue
            lp = head.depth_layers[l]
            if l == 0:
                prev = zero_state(lp)
            else:
                below = self._lanes[l - 1]
                window = [below[min(t + d, last_real)][1] for d in range(tau + 1)]
                zeta = lookahead_embedding(window, head.context[l - 1])
                prev = CellState(below[t][0], zeta)
                below.pop(t - 1, None)
            state = lstmp_step(lp, prev, self.h[l][t])
            self._lanes[l][t] = (state.cell, state.output)
        t_emit = s - self.num_layers * tau
        if 0 <= t_emit <= last_real and t_emit == self.emitted_upto:
            g = self._lanes[-1][t_emit][1]
            out.append((t_emit, T.affine(self.output.w, g, self.output.b)))
            self.emitted_upto += 1
        return out

    def _emit_simple(self, t: int) -> Tensor:
        if self.variant == "plain_lstm":
            return T.affine(self.output.w, self.h[-1][t], self.output.b)
        g = _depth_sweep(self.head, [self.h[l][t] for l in range(self.num_layers)])
        return T.affine(self.output.w, g, self.output.b)


class StreamingSession:
    """Incremental frame-by-frame evaluation of a single-head model.

    feed() returns the (frame_index, logits) pairs that became emittable at
    this arrival; finish() flushes the tail, replicating the final depth
    outputs (edge padding), and returns the remaining emissions.
    """

    def __init__(self, model):
        self.model = model
        self.config = model.config
        if isinstance(model, HeadView):
            stack, head, output = model.two_head.shared, model.head, None
        elif model.config.variant == "plain_lstm":
            stack, head, output = model.time_stack, None, model.output
        else:
            stack, head, output = model.time_stack, model.head, None
        self._stack = stack
        self._states = [zero_state(lp) for lp in stack.layers]
        self._h = [[] for _ in stack.layers]
        self._runner = _HeadRunner(self.config.variant, self.config.num_layers,
                                   self._h, head, output)
        self._arrived = 0
        self._finished = False

    def feed(self, frame: Tensor):
        if self._finished:
            raise RuntimeError("session already finished")
        inp = frame
        for l, lp in enumerate(self._stack.layers):
            self._states[l] = lstmp_step(lp, self._states[l], inp)
            inp = self._states[l].output
            self._h[l].append(inp)
        self._stack.frames_evaluated += 1
        self._arrived += 1
        return self._runner.advance(self._arrived - 1, self._arrived - 1)

    def finish(self):
        if self._finished:
            return []
        self._finished = True
        n = self._arrived
        out = []
        for s in range(n, n + self._runner.delay):
            out.extend(self._runner.advance(s, n - 1))
        return out

    @property
    def stored_h(self):
        return self._h


class TwoHeadStreamingSession:
    """Both heads driven incrementally from a single shared time pass.

    The shared stack is stepped exactly once per fed frame; both head
    runners read the same stored h values.
    """

    def __init__(self, model: TwoHeadModel):
        self.model = model
        self._states = [zero_state(lp) for lp in model.shared.layers]
        self._h = [[] for _ in model.shared.layers]
        L = model.config.num_layers
        self._lt = _HeadRunner("ltlstm", L, self._h, model.head_lt)
        self._clt = _HeadRunner("cltlstm", L, self._h, model.head_clt)
        self._arrived = 0
        self._finished = False

    def feed(self, frame: Tensor):
        if self._finished:
            raise RuntimeError("session already finished")
        inp = frame
        for l, lp in enumerate(self.model.shared.layers):
            self._states[l] = lstmp_step(lp, self._states[l], inp)
            inp = self._states[l].output
            self._h[l].append(inp)
        self.model.shared.frames_evaluated += 1
        self._arrived += 1
        s = self._arrived - 1
        return self._lt.advance(s, s), self._clt.advance(s, s)

    def finish(self):
        if self._finished:
            return [], []
        self._finished = True
        n = self._arrived
        clt_out = []
        for s in range(n, n + self._clt.delay):
            clt_out.extend(self._clt.advance(s, n - 1))
        return [], clt_out

    @property
    def stored_h(self):
        return self._h


# ---------------------------------------------------------------------------
# Parameter counting


def _lstmp_count(din: int, hidden: int, proj: int) -> int:
    return 4 * hidden * (din + proj) + 4 * hidden + proj * hidden


def param_count(config: ModelConfig) -> int:
    """Exact allocated-parameter total for the configured variant."""
    L, h, r = config.num_layers, config.hidden_dim, config.proj_dim
    time = _lstmp_count(config.input_dim, h, r) + (L - 1) * _lstmp_count(r, h, r)
    out = config.num_senones * r + config.num_senones
    if config.variant == "plain_lstm":
        return time + out
    total = time + L * _lstmp_count(r, h, r) + out
    if config.variant == "cltlstm":
        total += (L - 1) * (config.tau + 1) * r * r
    return total


def param_count_depth_head(config: ModelConfig) -> int:
    """Parameters of a depth head alone (the second head of a two-head model)."""
    L, h, r = config.num_layers, config.hidden_dim, config.proj_dim
    total = L * _lstmp_count(r, h, r) + config.num_senones * r + config.num_senones
    if config.variant == "cltlstm":
        total += (L - 1) * (config.tau + 1) * r * r
    return total


def param_count_model(model) -> int:
    """Structural count: entries summed over all allocated tensors."""
    return sum(t.size for t in model.tensors())


# ---------------------------------------------------------------------------
# Two-head construction and checksums


def checksum_tensors(tensors) -> str:
    """SHA-256 over shapes and raw little-endian float64 bytes."""
    hsh = hashlib.sha256()
    for t in tensors:
        hsh.update(repr(t.shape).encode())
        hsh.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return hsh.hexdigest()


def _copy_lstmp(lp: LstmpParams) -> LstmpParams:
    return LstmpParams(lp.input_dim, lp.hidden_dim, lp.proj_dim,
                       lp.gate_weights.copy(), lp.gate_biases.copy(),
                       lp.proj_weights.copy())


def _copy_head(head: DepthHead) -> DepthHead:
    ctx = None
    if head.context is not None:
        ctx = [[m.copy() for m in mats] for mats in head.context]
    return DepthHead(head.tau, [_copy_lstmp(lp) for lp in head.depth_layers], ctx,
                     OutputLayer(head.output.w.copy(), head.output.b.copy()))


def copy_model(model: LayerTrajectoryModel) -> LayerTrajectoryModel:
    out = None if model.output is None else OutputLayer(model.output.w.copy(),
                                                        model.output.b.copy())
    head = None if model.head is None else _copy_head(model.head)
    return LayerTrajectoryModel(model.config,
                                TimeLstmStack([_copy_lstmp(lp) for lp in model.time_stack.layers]),
                                head, out)


def build_second_head(trained_clt: LayerTrajectoryModel, seed: int) -> TwoHeadModel:
    """Form a two-head model from a trained cltlstm.

    The shared stack and the clt head are copied by value from the source;
    the lt head (tau 0, fresh output layer) comes from the seeded
    initializer. The shared stack starts frozen.
    """
    if trained_clt.config.variant != "cltlstm":
        raise ValueError("build_second_head requires a cltlstm model, got %s"
                         % trained_clt.config.variant)
    rng = np.random.default_rng(seed)
    shared = TimeLstmStack([_copy_lstmp(lp) for lp in trained_clt.time_stack.layers])
    head_clt = _copy_head(trained_clt.head)
    lt_config = dataclasses.replace(trained_clt.config, variant="ltlstm", tau=0)
    head_lt = init_depth_head(rng, lt_config, 0)
    return TwoHeadModel(trained_clt.config, shared, head_lt, head_clt, frozen_shared=True)


# ---------------------------------------------------------------------------
# Named tensors (checkpoint support)


def _named_stack(stack: TimeLstmStack, prefix: str):
    out = []
    for i, lp in enumerate(stack.layers):
        out.append(("%s.%d.gate_w" % (prefix, i), lp.gate_weights))
        out.append(("%s.%d.gate_b" % (prefix, i), lp.gate_biases))
        out.append(("%s.%d.proj_w" % (prefix, i), lp.proj_weights))
    return out


def _named_head(head: DepthHead, prefix: str):
    out = []
    for i, lp in enumerate(head.depth_layers):
        out.append(("%s.depth.%d.gate_w" % (prefix, i), lp.gate_weights))
        out.append(("%s.depth.%d.gate_b" % (prefix, i), lp.gate_biases))
        out.append(("%s.depth.%d.proj_w" % (prefix, i), lp.proj_weights))
    if head.context is not None:
        for j, mats in enumerate(head.context):
            for d, m in enumerate(mats):
                out.append(("%s.ctx.%d.%d" % (prefix, j + 1, d), m))
    out.append(("%s.out.w" % prefix, head.output.w))
    out.append(("%s.out.b" % prefix, head.output.b))
    return out


def named_tensors(model: LayerTrajectoryModel):
    out = _named_stack(model.time_stack, "time")
    if model.head is not None:
        out.extend(_named_head(model.head, "head"))
    if model.output is not None:
        out.append(("out.w", model.output.w))
        out.append(("out.b", model.output.b))
    return out
