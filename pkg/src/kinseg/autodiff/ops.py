"""Graph-building operations that are not Tensor methods.

``conv1d``, ``lstm`` and ``gru`` dispatch to the active kernel backend
(compiled or numpy); everything else is plain numpy.
"""

from __future__ import annotations

import numpy as np

from .. import backend
from .tensor import Tensor


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        out = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return tuple(out)

    return Tensor._make(data, tensors, bw, "concat")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: identity in eval mode, survivor scaling 1/(1-p) in training."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.dtype)
    mask = keep * scale
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def conv1d(x: Tensor, w: Tensor, b: Tensor, dilation: int = 1) -> Tensor:
    """Length-preserving dilated 1-d convolution over a (C_in, T) tensor.

    Zero-pads ``dilation * (K - 1) / 2`` frames on each side, so the kernel
    width K must be odd.
    """
    if x.data.ndim != 2 or w.data.ndim != 3 or b.data.ndim != 1:
        raise ValueError("conv1d expects x (C_in,T), w (C_out,C_in,K), b (C_out,)")
    c_out, c_in, k = w.data.shape
    if x.data.shape[0] != c_in:
        raise ValueError(f"conv1d channel mismatch: x has {x.data.shape[0]}, w expects {c_in}")
    if b.data.shape[0] != c_out:
        raise ValueError("conv1d bias length must equal C_out")
    if k % 2 == 0:
        raise ValueError("kernel width must be odd for same padding")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    kern = backend.active()
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    y = kern.conv1d_forward(xd, wd, b.data, dilation)

    def bw(g):
        dx, dw, db = kern.conv1d_backward(xd, wd, np.ascontiguousarray(g), dilation)
        return dx, dw, db

    return Tensor._make(y, (x, w, b), bw, "conv1d")


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """One LSTM layer, one direction, zero initial state.

    x (T, M), wx (4Q, M), wh (4Q, Q), b (4Q,), gate order (i, f, g, o);
    returns hidden states (T, Q).
    """
    kern = backend.active()
    h, cache = kern.lstm_forward(np.ascontiguousarray(x.data),
                                 np.ascontiguousarray(wx.data),
                                 np.ascontiguousarray(wh.data), b.data)

    def bw(g):
        return kern.lstm_backward(cache, g)

    return Tensor._make(h, (x, wx, wh, b), bw, "lstm")


def gru(x: Tensor, wx: Tensor, wh: Tensor, bx: Tensor, bh: Tensor) -> Tensor:
    """One GRU layer, one direction, zero initial state.

    x (T, M), wx (3Q, M), wh (3Q, Q), bx (3Q,), bh (Q,), gate order
    (r, z, n); the hidden-side bias bh enters the n gate inside the reset
    product.  Returns hidden states (T, Q).
    """
    kern = backend.active()
    h, cache = kern.gru_forward(np.ascontiguousarray(x.data),
                                np.ascontiguousarray(wx.data),
                                np.ascontiguousarray(wh.data), bx.data, bh.data)

    def bw(g):
        return kern.gru_backward(cache, g)

    return Tensor._make(h, (x, wx, wh, bx, bh), bw, "gru")
