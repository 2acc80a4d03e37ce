"""Dense float64 tensors with a reverse-mode gradient tape.

Everything trains through this module: ops executed while a
:class:`GradientTape` is active append records to it, and replaying the
records in reverse yields d(scalar)/d(parameter) for every watched
parameter. Values are plain numpy arrays underneath; the tape only ever
sees 64-bit floats.

All operations are pure functions of their inputs. There is no internal
locking: callers may evaluate different sequences concurrently, but a
single tape must stay on one thread.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when an operand's shape does not match the operation."""


class Tensor:
    """A dense real-valued n-dimensional array (row-major, float64).

    Public operations never produce NaN or Inf; construction rejects them.
    """

    __slots__ = ("data",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite (no NaN/Inf)")
        if any(d <= 0 for d in arr.shape):
            raise ShapeError("tensor extents must be positive, got %r" % (arr.shape,))
        self.data = arr

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() requires a single-element tensor, got shape %r" % (self.shape,))
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return "Tensor(shape=%r)" % (self.shape,)


def zeros(*shape) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = np.zeros(shape, dtype=np.float64)
    return t


def _wrap(arr: np.ndarray) -> Tensor:
    # Internal fast path: ops validate finiteness explicitly where it can break.
    if not np.all(np.isfinite(arr)):
        raise ValueError("operation produced non-finite values")
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim > 0 and not out.flags["C_CONTIGUOUS"]:
        out = np.ascontiguousarray(out)
    t = Tensor.__new__(Tensor)
    t.data = out
    return t


# ---------------------------------------------------------------------------
# Gradient tape


class _Record:
    __slots__ = ("outs", "parents", "backward")

    def __init__(self, outs, parents, backward):
        self.outs = outs
        self.parents = parents
        self.backward = backward


_TAPE_STACK: list = []


class GradientTape:
    """Records operations so gradients of a scalar can be accumulated.

    Use as a context manager; ops executed inside append records. The
    record list is already in topological order, so one reverse sweep
    produces all gradients.
    """

    def __init__(self):
        self._records: list[_Record] = []
        self._watched: list[Tensor] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def watch(self, *tensors: Tensor):
        for t in tensors:
            self._watched.append(t)

    def record(self, outs, parents, backward):
        self._records.append(_Record(tuple(outs), tuple(parents), backward))

    def gradients(self, loss: Tensor, params) -> list:
        """Gradient of a scalar loss w.r.t. each parameter tensor.

        Parameters never touched by the recorded ops get zero gradients of
        the matching shape.
        """
        if loss.shape != ():
            raise ShapeError("loss must be a scalar, got shape %r" % (loss.shape,))
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for rec in reversed(self._records):
            gouts = tuple(grads.get(id(o)) for o in rec.outs)
            if all(g is None for g in gouts):
                continue
            gouts = tuple(
                g if g is not None else np.zeros(o.shape, dtype=np.float64)
                for g, o in zip(gouts, rec.outs)
            )
            pgrads = rec.backward(*gouts)
            for parent, pg in zip(rec.parents, pgrads):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        out = []
        for p in params:
            g = grads.get(id(p))
            if g is None:
                g = np.zeros(p.shape, dtype=np.float64)
            out.append(_wrap(np.asarray(g, dtype=np.float64).reshape(p.shape)))
        return out


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _rec(outs, parents, backward):
    tape = active_tape()
    if tape is not None:
        tape.record(outs, parents, backward)


# ---------------------------------------------------------------------------
# Primitive operations


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("add: shapes %r and %r differ" % (a.shape, b.shape))
    out = _wrap(a.data + b.data)
    _rec((out,), (a, b), lambda g: (g, g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("sub: shapes %r and %r differ" % (a.shape, b.shape))
    out = _wrap(a.data - b.data)
    _rec((out,), (a, b), lambda g: (g, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError("mul: shapes %r and %r differ" % (a.shape, b.shape))
    out = _wrap(a.data * b.data)
    _rec((out,), (a, b), lambda g, ad=a.data, bd=b.data: (g * bd, g * ad))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = _wrap(a.data * c)
    _rec((out,), (a,), lambda g: (g * c,))
    return out


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if len(w.shape) != 2 or len(x.shape) != 1:
        raise ShapeError("matvec: need matrix and vector, got %r and %r" % (w.shape, x.shape))
    if w.shape[1] != x.shape[0]:
        raise ShapeError("matvec: matrix columns %d != vector length %d" % (w.shape[1], x.shape[0]))
    out = _wrap(w.data @ x.data)
    _rec((out,), (w, x), lambda g, wd=w.data, xd=x.data: (np.outer(g, xd), wd.T @ g))
    return out


def affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    return add(matvec(w, x), b)


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid_np(a.data)
    out = _wrap(y)
    _rec((out,), (a,), lambda g, yv=y: (g * yv * (1.0 - yv),))
    return out


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = _wrap(y)
    _rec((out,), (a,), lambda g, yv=y: (g * (1.0 - yv * yv),))
    return out


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    y[~pos] = e / (1.0 + e)
    return y


def softmax(logits: Tensor) -> Tensor:
    """Probability vector from 1-D logits, computed with max-subtraction.

    Output entries are nonnegative and sum to 1 within 1e-12 for any
    finite input.
    """
    if len(logits.shape) != 1:
        raise ShapeError("softmax: need 1-D logits, got shape %r" % (logits.shape,))
    p = _softmax_np(logits.data)
    out = _wrap(p)
    _rec((out,), (logits,), lambda g, pv=p: (pv * (g - np.dot(g, pv)),))
    return out


def _softmax_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / e.sum()


def log_softmax(logits: Tensor) -> Tensor:
    if len(logits.shape) != 1:
        raise ShapeError("log_softmax: need 1-D logits, got shape %r" % (logits.shape,))
    m = np.max(logits.data)
    shifted = logits.data - m
    lse = m + np.log(np.sum(np.exp(shifted)))
    y = logits.data - lse
    out = _wrap(y)
    _rec((out,), (logits,), lambda g, yv=y: (g - np.exp(yv) * g.sum(),))
    return out


def pick(v: Tensor, index: int) -> Tensor:
    if len(v.shape) != 1:
        raise ShapeError("pick: need a vector, got shape %r" % (v.shape,))
    if not 0 <= index < v.shape[0]:
        raise ShapeError("pick: index %d out of range for length %d" % (index, v.shape[0]))

    def backward(g, n=v.shape[0], i=index):
        gv = np.zeros(n, dtype=np.float64)
        gv[i] = g
        return (gv,)

    out = _wrap(np.asarray(v.data[index]))
    _rec((out,), (v,), backward)
    return out


def vsum(v: Tensor) -> Tensor:
    out = _wrap(np.asarray(v.data.sum()))
    _rec((out,), (v,), lambda g, s=v.shape: (np.broadcast_to(g, s).copy(),))
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape or len(a.shape) != 1:
        raise ShapeError("dot: need equal-length vectors, got %r and %r" % (a.shape, b.shape))
    out = _wrap(np.asarray(np.dot(a.data, b.data)))
    _rec((out,), (a, b), lambda g, ad=a.data, bd=b.data: (g * bd, g * ad))
    return out


def attach_scalar(value: float, parents, parent_grads) -> Tensor:
    """A scalar tape node with externally computed partial derivatives.

    Training criteria whose gradients come from lattice occupancies use
    this to couple an analytically derived d(loss)/d(input) to the tape,
    so backpropagation continues into the model parameters.
    """
    parents = tuple(parents)
    coefs = tuple(np.asarray(g, dtype=np.float64) for g in parent_grads)
    if len(parents) != len(coefs):
        raise ShapeError("attach_scalar: %d parents but %d gradients" % (len(parents), len(coefs)))
    for p, c in zip(parents, coefs):
        if p.shape != c.shape:
            raise ShapeError("attach_scalar: gradient shape %r != parent shape %r" % (c.shape, p.shape))
    out = _wrap(np.asarray(float(value)))
    _rec((out,), parents, lambda g, cs=coefs: tuple(g * c for c in cs))
    return out


# ---------------------------------------------------------------------------
# Gradient computation and verification


def grad(loss_fn, params):
    """Evaluate ``loss_fn()`` under a fresh tape and differentiate it.

    Returns ``(loss_value, gradients)`` with one gradient tensor per
    parameter, shapes matching. ``loss_fn`` must return a scalar tensor.
    """
    params = list(params)
    with GradientTape() as tape:
        tape.watch(*params)
        loss = loss_fn()
    if not isinstance(loss, Tensor) or loss.shape != ():
        raise ShapeError("loss_fn must return a scalar tensor")
    return loss.item(), tape.gradients(loss, params)


def finite_diff_check(loss_fn, params, step: float = 1e-5, tol: float = 1e-4,
                      abs_floor: float = 1e-7):
    """Compare analytic gradients of ``loss_fn`` against central differences.

    Every coordinate of every parameter is perturbed in place by ±step and
    the loss re-evaluated. A coordinate passes when
    |analytic - numeric| <= abs_floor + tol * max(|analytic|, |numeric|);
    the reported deviation is normalized so that values <= tol pass.
    Returns a report dict with per-parameter maxima and an overall flag.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = list(params)
    _, analytic = grad(loss_fn, params)
    per_param = []
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.data.reshape(-1)
        pmax = 0.0
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            fp = loss_fn().item()
            flat[j] = orig - step
            fm = loss_fn().item()
            flat[j] = orig
            numeric = (fp - fm) / (2.0 * step)
            dev = abs(aflat[j] - numeric) / (max(abs(aflat[j]), abs(numeric)) + abs_floor / tol)
            if dev > pmax:
                pmax = dev
        per_param.append(pmax)
        worst = max(worst, pmax)
    return {
        "per_param_max_rel_dev": per_param,
        "max_rel_dev": worst,
        "tol": tol,
        "passed": worst <= tol,
    }
