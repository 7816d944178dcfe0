"""Dense-tensor reverse-mode differentiation engine.

Deliberately minimal: exactly the operations the segmentation model needs,
no broadcasting beyond per-op requirements, dynamic graphs rebuilt per
sequence.  Float32 is the training default; gradient tests switch to
float64 via ``set_default_dtype`` because finite differences are not
reliable in single precision.
"""

from __future__ import annotations

import numpy as np

_DEFAULT_DTYPE = np.float32
_CHECK_FINITE = False

LOG_FLOOR = 1e-10  # probability floor applied before log


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError("supported dtypes are float32 and float64")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


def set_check_finite(flag: bool) -> None:
    """Debug switch: verify every op output is finite (slow)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


class Tensor:
    """N-d array node in a dynamically built reverse-mode graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw", "_op")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._bw = None
        self._op = "leaf"

    # -- construction helper ------------------------------------------------

    @staticmethod
    def _make(data, parents, bw, op):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._op = op
        if out.requires_grad:
            out._parents = tuple(parents)
            out._bw = bw
        else:
            out._parents = ()
            out._bw = None
        if _CHECK_FINITE and not np.all(np.isfinite(data)):
            raise FloatingPointError(f"non-finite values produced by op {op!r}")
        return out

    # -- basics ---------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate dL/dx into ``grad`` of every reachable requires_grad tensor.

        Repeated calls without ``zero_grad`` accumulate, which is the
        documented behavior, not an error.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss tensor")
        topo: list[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        if self.grad is None:
            self.grad = np.ones_like(self.data)
        else:
            self.grad = self.grad + np.ones_like(self.data)
        for node in reversed(topo):
            if node._bw is None:
                continue
            grads = node._bw(node.grad)
            for p, g in zip(node._parents, grads):
                if g is None or not p.requires_grad:
                    continue
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
                p.grad += g

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise ValueError(f"add shape mismatch {self.shape} vs {other.shape}")
            return Tensor._make(self.data + other.data, (self, other),
                                lambda g: (g, g), "add")
        return Tensor._make(self.data + other, (self,), lambda g: (g,), "add_const")

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise ValueError(f"sub shape mismatch {self.shape} vs {other.shape}")
            return Tensor._make(self.data - other.data, (self, other),
                                lambda g: (g, -g), "sub")
        return Tensor._make(self.data - other, (self,), lambda g: (g,), "sub_const")

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if self.data.shape != other.data.shape:
                raise ValueError(f"mul shape mismatch {self.shape} vs {other.shape}")
            return Tensor._make(self.data * other.data, (self, other),
                                lambda g: (g * other.data, g * self.data), "mul")
        return Tensor._make(self.data * other, (self,), lambda g: (g * other,),
                            "mul_const")

    __rmul__ = __mul__

    # -- elementwise ----------------------------------------------------------

    def relu(self):
        mask = self.data > 0
        return Tensor._make(np.where(mask, self.data, 0.0).astype(self.dtype),
                            (self,), lambda g: (g * mask,), "relu")

    def sigmoid(self):
        x = self.data
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        return Tensor._make(y, (self,), lambda g: (g * y * (1.0 - y),), "sigmoid")

    def tanh(self):
        y = np.tanh(self.data)
        return Tensor._make(y, (self,), lambda g: (g * (1.0 - y * y),), "tanh")

    def log(self, floor: float = LOG_FLOOR):
        """Natural log with the non-positive domain clamped at ``floor``."""
        clamped = np.maximum(self.data, floor)
        mask = self.data > floor
        return Tensor._make(np.log(clamped), (self,),
                            lambda g: (np.where(mask, g / clamped, 0.0),), "log")

    def abs(self):
        sign = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,),
                            lambda g: (g * sign,), "abs")

    def square(self):
        return Tensor._make(self.data * self.data, (self,),
                            lambda g: (2.0 * g * self.data,), "square")

    def clamp_max(self, cap: float):
        """Elementwise min(x, cap); the clamped branch gets zero gradient."""
        mask = self.data < cap
        return Tensor._make(np.minimum(self.data, cap), (self,),
                            lambda g: (g * mask,), "clamp_max")

    def clamp_min(self, floor: float):
        mask = self.data > floor
        return Tensor._make(np.maximum(self.data, floor), (self,),
                            lambda g: (g * mask,), "clamp_min")

    def softmax(self, axis: int = 0):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        ex = np.exp(shifted)
        y = ex / ex.sum(axis=axis, keepdims=True)

        def bw(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            return (y * (g - dot),)

        return Tensor._make(y, (self,), bw, "softmax")

    # -- reductions -------------------------------------------------------------

    def sum(self):
        def bw(g):
            return (np.full_like(self.data, float(g)),)

        return Tensor._make(np.asarray(self.data.sum(), dtype=self.dtype),
                            (self,), bw, "sum")

    def mean(self):
        n = self.data.size

        def bw(g):
            return (np.full_like(self.data, float(g) / n),)

        return Tensor._make(np.asarray(self.data.mean(), dtype=self.dtype),
                            (self,), bw, "mean")

    # -- structure --------------------------------------------------------------

    def transpose(self):
        if self.data.ndim != 2:
            raise ValueError("transpose expects a 2-d tensor")
        return Tensor._make(np.ascontiguousarray(self.data.T), (self,),
                            lambda g: (np.ascontiguousarray(g.T),), "transpose")

    def flip(self, axis: int):
        return Tensor._make(np.flip(self.data, axis=axis).copy(), (self,),
                            lambda g: (np.flip(g, axis=axis).copy(),), "flip")

    def subsample(self, axis: int, step: int):
        """Keep every ``step``-th element along ``axis`` (indices 0, step, ...)."""
        if step < 1:
            raise ValueError("step must be >= 1")
        idx = [slice(None)] * self.data.ndim
        idx[axis] = slice(None, None, step)
        idx = tuple(idx)

        def bw(g):
            z = np.zeros_like(self.data)
            z[idx] = g
            return (z,)

        return Tensor._make(self.data[idx].copy(), (self,), bw, "subsample")

    def repeat_upsample(self, axis: int, k: int):
        """Replace every element along ``axis`` with k copies."""
        if k < 1:
            raise ValueError("k must be >= 1")
        n = self.data.shape[axis]

        def bw(g):
            shape = list(self.data.shape)
            shape[axis:axis + 1] = [n, k]
            return (g.reshape(shape).sum(axis=axis + 1),)

        return Tensor._make(np.repeat(self.data, k, axis=axis), (self,), bw,
                            "repeat_upsample")

    def narrow(self, axis: int, start: int, length: int):
        idx = [slice(None)] * self.data.ndim
        idx[axis] = slice(start, start + length)
        idx = tuple(idx)

        def bw(g):
            z = np.zeros_like(self.data)
            z[idx] = g
            return (z,)

        return Tensor._make(self.data[idx].copy(), (self,), bw, "narrow")

    def take_per_column(self, rows):
        """For a (C, T) tensor and int rows (T,), return out[t] = x[rows[t], t]."""
        rows = np.asarray(rows, dtype=np.int64)
        t = np.arange(self.data.shape[1])

        def bw(g):
            z = np.zeros_like(self.data)
            np.add.at(z, (rows, t), g)
            return (z,)

        return Tensor._make(self.data[rows, t].copy(), (self,), bw,
                            "take_per_column")
