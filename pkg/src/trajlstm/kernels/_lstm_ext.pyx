# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM-with-projection cell kernels.

Same contract as trajlstm.kernels.pure; selected at import when built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double v) nogil:
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    else:
        return exp(v) / (1.0 + exp(v))


def lstmp_forward(double[:, ::1] gw, double[::1] gb, double[:, ::1] pw,
                  double[::1] x, double[::1] c_prev, double[::1] p_prev):
    cdef Py_ssize_t hidden = c_prev.shape[0]
    cdef Py_ssize_t din = x.shape[0]
    cdef Py_ssize_t dr = p_prev.shape[0]
    cdef Py_ssize_t dcat = din + dr
    cdef Py_ssize_t proj = pw.shape[0]

    xcat_arr = np.empty(dcat, dtype=np.float64)
    i_arr = np.empty(hidden, dtype=np.float64)
    f_arr = np.empty(hidden, dtype=np.float64)
    g_arr = np.empty(hidden, dtype=np.float64)
    o_arr = np.empty(hidden, dtype=np.float64)
    c_arr = np.empty(hidden, dtype=np.float64)
    tc_arr = np.empty(hidden, dtype=np.float64)
    hh_arr = np.empty(hidden, dtype=np.float64)
    p_arr = np.empty(proj, dtype=np.float64)

    cdef double[::1] xcat = xcat_arr
    cdef double[::1] iv = i_arr
    cdef double[::1] fv = f_arr
    cdef double[::1] gv = g_arr
    cdef double[::1] ov = o_arr
    cdef double[::1] cv = c_arr
    cdef double[::1] tcv = tc_arr
    cdef double[::1] hhv = hh_arr
    cdef double[::1] pv = p_arr

    cdef Py_ssize_t j, k
    cdef double zi, zf, zg, zo

    with nogil:
        for k in range(din):
            xcat[k] = x[k]
        for k in range(dr):
            xcat[din + k] = p_prev[k]
        for j in range(hidden):
            zi = gb[j]
            zf = gb[hidden + j]
            zg = gb[2 * hidden + j]
            zo = gb[3 * hidden + j]
            for k in range(dcat):
                zi += gw[j, k] * xcat[k]
                zf += gw[hidden + j, k] * xcat[k]
                zg += gw[2 * hidden + j, k] * xcat[k]
                zo += gw[3 * hidden + j, k] * xcat[k]
            iv[j] = _sig(zi)
            fv[j] = _sig(zf)
            gv[j] = tanh(zg)
            ov[j] = _sig(zo)
            cv[j] = fv[j] * c_prev[j] + iv[j] * gv[j]
            tcv[j] = tanh(cv[j])
            hhv[j] = ov[j] * tcv[j]
        for j in range(proj):
            zi = 0.0
            for k in range(hidden):
                zi += pw[j, k] * hhv[k]
            pv[j] = zi

    cache = (xcat_arr, np.asarray(c_prev), i_arr, f_arr, g_arr, o_arr, tc_arr, hh_arr)
    return c_arr, p_arr, cache


def lstmp_backward(double[:, ::1] gw, double[:, ::1] pw, cache,
                   double[::1] gc_out, double[::1] gp_out):
    xcat_arr, c_prev_arr, i_arr, f_arr, g_arr, o_arr, tc_arr, hh_arr = cache

    cdef double[::1] xcat = xcat_arr
    cdef double[::1] c_prev = c_prev_arr
    cdef double[::1] iv = i_arr
    cdef double[::1] fv = f_arr
    cdef double[::1] gv = g_arr
    cdef double[::1] ov = o_arr
    cdef double[::1] tcv = tc_arr
    cdef double[::1] hhv = hh_arr

    cdef Py_ssize_t hidden = c_prev.shape[0]
    cdef Py_ssize_t dcat = xcat.shape[0]
    cdef Py_ssize_t proj = pw.shape[0]
    cdef Py_ssize_t din = dcat - proj

    d_gw_arr = np.empty((4 * hidden, dcat), dtype=np.float64)
    d_gb_arr = np.empty(4 * hidden, dtype=np.float64)
    d_pw_arr = np.empty((proj, hidden), dtype=np.float64)
    dx_arr = np.empty(din, dtype=np.float64)
    dc_prev_arr = np.empty(hidden, dtype=np.float64)
    dp_prev_arr = np.empty(proj, dtype=np.float64)
    dz_arr = np.empty(4 * hidden, dtype=np.float64)

    cdef double[:, ::1] d_gw = d_gw_arr
    cdef double[::1] d_gb = d_gb_arr
    cdef double[:, ::1] d_pw = d_pw_arr
    cdef double[::1] dx = dx_arr
    cdef double[::1] dc_prev = dc_prev_arr
    cdef double[::1] dp_prev = dp_prev_arr
    cdef double[::1] dz = dz_arr

    cdef Py_ssize_t j, k
    cdef double dhh, dc, acc

    with nogil:
        for j in range(hidden):
            dhh = 0.0
            for k in range(proj):
                dhh += pw[k, j] * gp_out[k]
            dc = gc_out[j] + dhh * ov[j] * (1.0 - tcv[j] * tcv[j])
            dz[j] = dc * gv[j] * iv[j] * (1.0 - iv[j])
            dz[hidden + j] = dc * c_prev[j] * fv[j] * (1.0 - fv[j])
            dz[2 * hidden + j] = dc * iv[j] * (1.0 - gv[j] * gv[j])
            dz[3 * hidden + j] = dhh * tcv[j] * ov[j] * (1.0 - ov[j])
            dc_prev[j] = dc * fv[j]
        for j in range(proj):
            for k in range(hidden):
                d_pw[j, k] = gp_out[j] * hhv[k]
        for j in range(4 * hidden):
            d_gb[j] = dz[j]
            for k in range(dcat):
                d_gw[j, k] = dz[j] * xcat[k]
        for k in range(dcat):
            acc = 0.0
            for j in range(4 * hidden):
                acc += gw[j, k] * dz[j]
            if k < din:
                dx[k] = acc
            else:
                dp_prev[k - din] = acc

    return d_gw_arr, d_gb_arr, d_pw_arr, dx_arr, dc_prev_arr, dp_prev_arr
