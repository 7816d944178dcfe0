"""Numpy implementations of the hot kernels.

These are the reference implementations; the compiled extension in
``_ckernels.pyx`` implements the same functions with the same signatures
and cache layouts, so the two are interchangeable behind
:mod:`kinseg.backend`.

Conventions
-----------
conv1d: channels-first, ``x (C_in, T)``, ``w (C_out, C_in, K)``, "same"
zero padding of ``dilation * (K - 1) // 2`` frames per side (K odd), and
cross-correlation indexing ``y[c, t] = b[c] + sum_{i,k} w[c, i, k] *
x_pad[i, t + k * dilation]``.

lstm/gru: one direction, one layer, time-major ``x (T, M)``, zero initial
state.  Gate blocks are stacked along the first weight axis: LSTM order
(i, f, g, o) with a single bias per gate; GRU order (r, z, n) with
input-side biases for all three gates and a hidden-side bias for the n
gate only, matching ``n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))``.
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Dilated 1-D convolution
# ---------------------------------------------------------------------------

def conv1d_forward(x, w, b, dilation):
    c_in, t = x.shape
    c_out, _, k = w.shape
    pad = dilation * (k - 1) // 2
    xp = np.zeros((c_in, t + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + t] = x
    y = np.empty((c_out, t), dtype=x.dtype)
    y[:] = b[:, None]
    for j in range(k):
        y += w[:, :, j] @ xp[:, j * dilation:j * dilation + t]
    return y


def conv1d_backward(x, w, dy, dilation):
    c_in, t = x.shape
    c_out, _, k = w.shape
    pad = dilation * (k - 1) // 2
    xp = np.zeros((c_in, t + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + t] = x
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    for j in range(k):
        seg = xp[:, j * dilation:j * dilation + t]
        dw[:, :, j] = dy @ seg.T
        dxp[:, j * dilation:j * dilation + t] += w[:, :, j].T @ dy
    db = dy.sum(axis=1)
    dx = dxp[:, pad:pad + t]
    return dx, dw, db


# ---------------------------------------------------------------------------
# LSTM (single direction, single layer)
# ---------------------------------------------------------------------------

def lstm_forward(x, wx, wh, b):
    t_len, _ = x.shape
    q = wh.shape[1]
    pre_x = x @ wx.T + b  # (T, 4Q)
    gates = np.empty((t_len, 4 * q), dtype=x.dtype)
    c = np.empty((t_len, q), dtype=x.dtype)
    h = np.empty((t_len, q), dtype=x.dtype)
    h_prev = np.zeros(q, dtype=x.dtype)
    c_prev = np.zeros(q, dtype=x.dtype)
    for t in range(t_len):
        pre = pre_x[t] + wh @ h_prev
        i = _sigmoid(pre[:q])
        f = _sigmoid(pre[q:2 * q])
        g = np.tanh(pre[2 * q:3 * q])
        o = _sigmoid(pre[3 * q:])
        c_t = f * c_prev + i * g
        h_t = o * np.tanh(c_t)
        gates[t, :q], gates[t, q:2 * q] = i, f
        gates[t, 2 * q:3 * q], gates[t, 3 * q:] = g, o
        c[t], h[t] = c_t, h_t
        h_prev, c_prev = h_t, c_t
    cache = (x, wx, wh, gates, c, h)
    return h, cache


def lstm_backward(cache, dh_out):
    x, wx, wh, gates, c, h = cache
    t_len, q = h.shape
    dpre_all = np.empty((t_len, 4 * q), dtype=x.dtype)
    dh_next = np.zeros(q, dtype=x.dtype)
    dc_next = np.zeros(q, dtype=x.dtype)
    for t in range(t_len - 1, -1, -1):
        i, f = gates[t, :q], gates[t, q:2 * q]
        g, o = gates[t, 2 * q:3 * q], gates[t, 3 * q:]
        tc = np.tanh(c[t])
        dh = dh_out[t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        c_prev = c[t - 1] if t > 0 else np.zeros(q, dtype=x.dtype)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dpre = dpre_all[t]
        dpre[:q] = di * i * (1.0 - i)
        dpre[q:2 * q] = df * f * (1.0 - f)
        dpre[2 * q:3 * q] = dg * (1.0 - g * g)
        dpre[3 * q:] = do * o * (1.0 - o)
        dh_next = wh.T @ dpre
    h_prev_mat = np.zeros_like(h)
    h_prev_mat[1:] = h[:-1]
    dx = dpre_all @ wx
    dwx = dpre_all.T @ x
    dwh = dpre_all.T @ h_prev_mat
    db = dpre_all.sum(axis=0)
    return dx, dwx, dwh, db


# ---------------------------------------------------------------------------
# GRU (single direction, single layer)
# ---------------------------------------------------------------------------

def gru_forward(x, wx, wh, bx, bh):
    t_len, _ = x.shape
    q = wh.shape[1]
    pre_x = x @ wx.T + bx  # (T, 3Q)
    gates = np.empty((t_len, 3 * q), dtype=x.dtype)
    hpre = np.empty((t_len, q), dtype=x.dtype)  # Wh_n h_prev + bh_n
    h = np.empty((t_len, q), dtype=x.dtype)
    h_prev = np.zeros(q, dtype=x.dtype)
    for t in range(t_len):
        wh_h = wh @ h_prev
        r = _sigmoid(pre_x[t, :q] + wh_h[:q])
        z = _sigmoid(pre_x[t, q:2 * q] + wh_h[q:2 * q])
        hp = wh_h[2 * q:] + bh
        n = np.tanh(pre_x[t, 2 * q:] + r * hp)
        h_t = (1.0 - z) * n + z * h_prev
        gates[t, :q], gates[t, q:2 * q], gates[t, 2 * q:] = r, z, n
        hpre[t], h[t] = hp, h_t
        h_prev = h_t
    cache = (x, wx, wh, gates, hpre, h)
    return h, cache


def gru_backward(cache, dh_out):
    x, wx, wh, gates, hpre, h = cache
    t_len, q = h.shape
    dprex_all = np.empty((t_len, 3 * q), dtype=x.dtype)  # input-side pre grads
    dpreh_all = np.empty((t_len, 3 * q), dtype=x.dtype)  # hidden-side pre grads
    dh_next = np.zeros(q, dtype=x.dtype)
    for t in range(t_len - 1, -1, -1):
        r, z, n = gates[t, :q], gates[t, q:2 * q], gates[t, 2 * q:]
        h_prev = h[t - 1] if t > 0 else np.zeros(q, dtype=x.dtype)
        dh = dh_out[t] + dh_next
        dz = dh * (h_prev - n)
        dn = dh * (1.0 - z)
        dpre_n = dn * (1.0 - n * n)
        dr = dpre_n * hpre[t]
        dhp = dpre_n * r
        dpre_r = dr * r * (1.0 - r)
        dpre_z = dz * z * (1.0 - z)
        dprex_all[t, :q], dprex_all[t, q:2 * q] = dpre_r, dpre_z
        dprex_all[t, 2 * q:] = dpre_n
        dpreh_all[t, :q], dpreh_all[t, q:2 * q] = dpre_r, dpre_z
        dpreh_all[t, 2 * q:] = dhp
        dh_next = dh * z + wh.T @ dpreh_all[t]
    h_prev_mat = np.zeros_like(h)
    h_prev_mat[1:] = h[:-1]
    dx = dprex_all @ wx
    dwx = dprex_all.T @ x
    dwh = dpreh_all.T @ h_prev_mat
    dbx = dprex_all.sum(axis=0)
    dbh = dpreh_all[:, 2 * q:].sum(axis=0)
    return dx, dwx, dwh, dbx, dbh
