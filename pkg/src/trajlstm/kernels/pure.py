"""Pure-numpy LSTM-with-projection cell kernels (fallback backend)."""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    y[~pos] = e / (1.0 + e)
    return y


def lstmp_forward(gw, gb, pw, x, c_prev, p_prev):
    """One projected-LSTM cell step.

    Gate order in ``gw``/``gb`` is input, forget, cell-candidate, output.
    Returns (c_new, p_new, cache); the cache feeds :func:`lstmp_backward`.
    """
    hidden = c_prev.shape[0]
    xcat = np.concatenate([x, p_prev])
    z = gw @ xcat + gb
    i = _sigmoid(z[:hidden])
    f = _sigmoid(z[hidden:2 * hidden])
    g = np.tanh(z[2 * hidden:3 * hidden])
    o = _sigmoid(z[3 * hidden:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    hh = o * tc
    p = pw @ hh
    cache = (xcat, c_prev, i, f, g, o, tc, hh)
    return c, p, cache


def lstmp_backward(gw, pw, cache, gc_out, gp_out):
    """Backward pass matching :func:`lstmp_forward`.

    Returns (d_gw, d_gb, d_pw, dx, dc_prev, dp_prev).
    """
    xcat, c_prev, i, f, g, o, tc, hh = cache
    input_dim = xcat.shape[0] - pw.shape[0]

    d_pw = np.outer(gp_out, hh)
    dhh = pw.T @ gp_out
    dc = gc_out + dhh * o * (1.0 - tc * tc)
    do = dhh * tc
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dc * i * (1.0 - g * g),
        do * o * (1.0 - o),
    ])
    d_gw = np.outer(dz, xcat)
    d_gb = dz
    dxcat = gw.T @ dz
    dc_prev = dc * f
    return d_gw, d_gb, d_pw, dxcat[:input_dim], dc_prev, dxcat[input_dim:]
