# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the numpy kernels in ``numpy_kernels.py``.

The recurrent time loops and the dilated-convolution inner loops are the
hot spots of training at small/medium channel counts, where per-call numpy
overhead dominates; they are compiled here.  The large dense products of
the RNN kernels (input projections, weight-gradient accumulations) stay in
numpy/BLAS, which is the faster tool for them.  Signatures and cache
layouts match ``numpy_kernels`` exactly.
"""

import numpy as np

cimport cython
from libc.math cimport exp, tanh

ctypedef fused real:
    float
    double


cdef inline real _sig(real v) noexcept nogil:
    cdef real e
    if v >= 0:
        return <real>(1.0 / (1.0 + exp(-v)))
    e = <real>exp(v)
    return <real>(e / (1.0 + e))


# ---------------------------------------------------------------------------
# Dilated 1-D convolution
# ---------------------------------------------------------------------------

cdef void _conv_fwd(real[:, ::1] x, real[:, :, ::1] w, real[::1] b,
                    real[:, ::1] y, Py_ssize_t dilation) noexcept nogil:
    cdef Py_ssize_t c_in = x.shape[0], t_len = x.shape[1]
    cdef Py_ssize_t c_out = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t pad = dilation * (k - 1) // 2
    cdef Py_ssize_t c, i, j, t, off, t0, t1
    cdef real wv
    for c in range(c_out):
        for t in range(t_len):
            y[c, t] = b[c]
    for c in range(c_out):
        for i in range(c_in):
            for j in range(k):
                wv = w[c, i, j]
                off = j * dilation - pad
                t0 = -off if off < 0 else 0
                t1 = t_len - off if off > 0 else t_len
                for t in range(t0, t1):
                    y[c, t] += wv * x[i, t + off]


cdef void _conv_bwd(real[:, ::1] x, real[:, :, ::1] w, real[:, ::1] dy,
                    real[:, ::1] dx, real[:, :, ::1] dw, real[::1] db,
                    Py_ssize_t dilation) noexcept nogil:
    cdef Py_ssize_t c_in = x.shape[0], t_len = x.shape[1]
    cdef Py_ssize_t c_out = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t pad = dilation * (k - 1) // 2
    cdef Py_ssize_t c, i, j, t, off, t0, t1
    cdef real wv, acc, g
    for c in range(c_out):
        acc = 0
        for t in range(t_len):
            acc += dy[c, t]
        db[c] = acc
    for c in range(c_out):
        for i in range(c_in):
            for j in range(k):
                off = j * dilation - pad
                t0 = -off if off < 0 else 0
                t1 = t_len - off if off > 0 else t_len
                wv = w[c, i, j]
                acc = 0
                for t in range(t0, t1):
                    g = dy[c, t]
                    acc += g * x[i, t + off]
                    dx[i, t + off] += wv * g
                dw[c, i, j] = acc


def conv1d_forward(x, w, b, dilation):
    y = np.empty((w.shape[0], x.shape[1]), dtype=x.dtype)
    if x.dtype == np.float32:
        _conv_fwd[cython.float](x, w, b, y, dilation)
    else:
        _conv_fwd[cython.double](x, w, b, y, dilation)
    return y


def conv1d_backward(x, w, dy, dilation):
    dx = np.zeros_like(x)
    dw = np.empty_like(w)
    db = np.empty_like(dy[:, 0])
    if x.dtype == np.float32:
        _conv_bwd[cython.float](x, w, dy, dx, dw, db, dilation)
    else:
        _conv_bwd[cython.double](x, w, dy, dx, dw, db, dilation)
    return dx, dw, db


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

cdef void _lstm_fwd_loop(real[:, ::1] pre_x, real[:, ::1] wh,
                         real[:, ::1] gates, real[:, ::1] c,
                         real[:, ::1] h) noexcept nogil:
    cdef Py_ssize_t t_len = pre_x.shape[0], q = wh.shape[1]
    cdef Py_ssize_t t, u, j
    cdef real acc, ig, fg, gg, og, ct
    for t in range(t_len):
        for u in range(4 * q):
            acc = pre_x[t, u]
            if t > 0:
                for j in range(q):
                    acc += wh[u, j] * h[t - 1, j]
            gates[t, u] = acc
        for j in range(q):
            ig = _sig(gates[t, j])
            fg = _sig(gates[t, q + j])
            gg = <real>tanh(gates[t, 2 * q + j])
            og = _sig(gates[t, 3 * q + j])
            ct = ig * gg
            if t > 0:
                ct += fg * c[t - 1, j]
            gates[t, j] = ig
            gates[t, q + j] = fg
            gates[t, 2 * q + j] = gg
            gates[t, 3 * q + j] = og
            c[t, j] = ct
            h[t, j] = og * <real>tanh(ct)


cdef void _lstm_bwd_loop(real[:, ::1] wh, real[:, ::1] gates, real[:, ::1] c,
                         real[:, ::1] dh_out, real[:, ::1] dpre_all,
                         real[::1] dh_next, real[::1] dc_next) noexcept nogil:
    cdef Py_ssize_t t_len = gates.shape[0], q = wh.shape[1]
    cdef Py_ssize_t t, u, j
    cdef real ig, fg, gg, og, tc, dh, dc, di, df, dg, do, acc
    for t in range(t_len - 1, -1, -1):
        for j in range(q):
            ig = gates[t, j]
            fg = gates[t, q + j]
            gg = gates[t, 2 * q + j]
            og = gates[t, 3 * q + j]
            tc = <real>tanh(c[t, j])
            dh = dh_out[t, j] + dh_next[j]
            do = dh * tc
            dc = dh * og * (1 - tc * tc) + dc_next[j]
            di = dc * gg
            df = dc * (c[t - 1, j] if t > 0 else <real>0)
            dg = dc * ig
            dc_next[j] = dc * fg
            dpre_all[t, j] = di * ig * (1 - ig)
            dpre_all[t, q + j] = df * fg * (1 - fg)
            dpre_all[t, 2 * q + j] = dg * (1 - gg * gg)
            dpre_all[t, 3 * q + j] = do * og * (1 - og)
        for j in range(q):
            acc = 0
            for u in range(4 * q):
                acc += wh[u, j] * dpre_all[t, u]
            dh_next[j] = acc


def lstm_forward(x, wx, wh, b):
    t_len = x.shape[0]
    q = wh.shape[1]
    pre_x = np.ascontiguousarray(x @ wx.T + b)
    gates = np.empty((t_len, 4 * q), dtype=x.dtype)
    c = np.empty((t_len, q), dtype=x.dtype)
    h = np.empty((t_len, q), dtype=x.dtype)
    if x.dtype == np.float32:
        _lstm_fwd_loop[cython.float](pre_x, wh, gates, c, h)
    else:
        _lstm_fwd_loop[cython.double](pre_x, wh, gates, c, h)
    return h, (x, wx, wh, gates, c, h)


def lstm_backward(cache, dh_out):
    x, wx, wh, gates, c, h = cache
    t_len, q = h.shape
    dpre_all = np.empty((t_len, 4 * q), dtype=x.dtype)
    dh_next = np.zeros(q, dtype=x.dtype)
    dc_next = np.zeros(q, dtype=x.dtype)
    dh_out = np.ascontiguousarray(dh_out)
    if x.dtype == np.float32:
        _lstm_bwd_loop[cython.float](wh, gates, c, dh_out, dpre_all, dh_next, dc_next)
    else:
        _lstm_bwd_loop[cython.double](wh, gates, c, dh_out, dpre_all, dh_next, dc_next)
    h_prev_mat = np.zeros_like(h)
    h_prev_mat[1:] = h[:-1]
    dx = dpre_all @ wx
    dwx = dpre_all.T @ x
    dwh = dpre_all.T @ h_prev_mat
    db = dpre_all.sum(axis=0)
    return dx, dwx, dwh, db


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------

cdef void _gru_fwd_loop(real[:, ::1] pre_x, real[:, ::1] wh, real[::1] bh,
                        real[:, ::1] gates, real[:, ::1] hpre,
                        real[:, ::1] h) noexcept nogil:
    cdef Py_ssize_t t_len = pre_x.shape[0], q = wh.shape[1]
    cdef Py_ssize_t t, u, j
    cdef real acc, r, z, n, hp
    for t in range(t_len):
        for u in range(3 * q):
            acc = pre_x[t, u]
            if t > 0:
                for j in range(q):
                    acc += wh[u, j] * h[t - 1, j]
            gates[t, u] = acc
        for j in range(q):
            r = _sig(gates[t, j])
            z = _sig(gates[t, q + j])
            hp = bh[j]
            if t > 0:
                hp += gates[t, 2 * q + j] - pre_x[t, 2 * q + j]
            n = <real>tanh(pre_x[t, 2 * q + j] + r * hp)
            gates[t, j] = r
            gates[t, q + j] = z
            gates[t, 2 * q + j] = n
            hpre[t, j] = hp
            h[t, j] = (1 - z) * n + (z * h[t - 1, j] if t > 0 else <real>0)


cdef void _gru_bwd_loop(real[:, ::1] wh, real[:, ::1] gates, real[:, ::1] hpre,
                        real[:, ::1] h, real[:, ::1] dh_out,
                        real[:, ::1] dprex_all, real[:, ::1] dpreh_all,
                        real[::1] dh_next) noexcept nogil:
    cdef Py_ssize_t t_len = gates.shape[0], q = wh.shape[1]
    cdef Py_ssize_t t, u, j
    cdef real r, z, n, h_prev, dh, dz, dn, dpn, dr, dhp, acc
    for t in range(t_len - 1, -1, -1):
        for j in range(q):
            r = gates[t, j]
            z = gates[t, q + j]
            n = gates[t, 2 * q + j]
            h_prev = h[t - 1, j] if t > 0 else <real>0
            dh = dh_out[t, j] + dh_next[j]
            dz = dh * (h_prev - n)
            dn = dh * (1 - z)
            dpn = dn * (1 - n * n)
            dr = dpn * hpre[t, j]
            dhp = dpn * r
            dprex_all[t, j] = dr * r * (1 - r)
            dprex_all[t, q + j] = dz * z * (1 - z)
            dprex_all[t, 2 * q + j] = dpn
            dpreh_all[t, j] = dprex_all[t, j]
            dpreh_all[t, q + j] = dprex_all[t, q + j]
            dpreh_all[t, 2 * q + j] = dhp
            dh_next[j] = dh * z
        for j in range(q):
            acc = 0
            for u in range(3 * q):
                acc += wh[u, j] * dpreh_all[t, u]
            dh_next[j] += acc


def gru_forward(x, wx, wh, bx, bh):
    t_len = x.shape[0]
    q = wh.shape[1]
    pre_x = np.ascontiguousarray(x @ wx.T + bx)
    gates = np.empty((t_len, 3 * q), dtype=x.dtype)
    hpre = np.empty((t_len, q), dtype=x.dtype)
    h = np.empty((t_len, q), dtype=x.dtype)
    if x.dtype == np.float32:
        _gru_fwd_loop[cython.float](pre_x, wh, bh, gates, hpre, h)
    else:
        _gru_fwd_loop[cython.double](pre_x, wh, bh, gates, hpre, h)
    return h, (x, wx, wh, gates, hpre, h)


def gru_backward(cache, dh_out):
    x, wx, wh, gates, hpre, h = cache
    t_len, q = h.shape
    dprex_all = np.empty((t_len, 3 * q), dtype=x.dtype)
    dpreh_all = np.empty((t_len, 3 * q), dtype=x.dtype)
    dh_next = np.zeros(q, dtype=x.dtype)
    dh_out = np.ascontiguousarray(dh_out)
    if x.dtype == np.float32:
        _gru_bwd_loop[cython.float](wh, gates, hpre, h, dh_out,
                                    dprex_all, dpreh_all, dh_next)
    else:
        _gru_bwd_loop[cython.double](wh, gates, hpre, h, dh_out,
                                     dprex_all, dpreh_all, dh_next)
    h_prev_mat = np.zeros_like(h)
    h_prev_mat[1:] = h[:-1]
    dx = dprex_all @ wx
    dwx = dprex_all.T @ x
    dwh = dpreh_all.T @ h_prev_mat
    dbx = dprex_all.sum(axis=0)
    dbh = dpreh_all[:, 2 * q:].sum(axis=0)
    return dx, dwx, dwh, dbx, dbh
