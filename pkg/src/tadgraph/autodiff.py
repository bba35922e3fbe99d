"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Values are float64 numpy arrays. Every operation that participates in
gradient computation records its parents and a closure that propagates the
incoming adjoint; ``backward`` replays those closures in reverse
topological order, visiting each node exactly once. Gradients accumulate
into ``Tensor.grad`` until explicitly reset with ``zero_grad``.

Broadcasting is deliberately restricted to scalar-with-tensor; shaped
operands must match exactly. Row-vector bias addition has its own op
(``add_bias``) so the backward rule stays explicit.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure forward evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A float64 array plus an optional record of how it was computed."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, *, op: str = "",
                 parents: tuple = (), backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self._parents = parents
        self._backward = backward

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    # -- gradient bookkeeping ------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Propagate d(self)/d(leaf) into every reachable ``grad``.

        ``self`` must be a scalar (one element). Repeated calls without a
        ``zero_grad`` in between accumulate.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() requires a scalar loss, got shape {self.shape}")
        order = graph_nodes(self)
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("division is supported by scalars only")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tslice(self, key)

    # -- reductions / shaping as methods for readability ----------------------

    def sum(self):
        return tsum(self)

    def mean(self, axis=None):
        return tmean(self, axis)

    def transpose(self):
        return transpose(self)

    def reshape(self, *shape):
        return reshape(self, shape)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _make(data, op: str, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    record = _grad_enabled and any(p.requires_grad for p in parents)
    if record:
        return Tensor(data, requires_grad=True, op=op, parents=tuple(parents), backward=backward)
    return Tensor(data)


def graph_nodes(root: Tensor) -> list[Tensor]:
    """Topological order of the graph below ``root`` (parents first)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def zero_grad(params: Iterable[Tensor]) -> None:
    """Explicit gradient reset; accumulation continues until this is called."""
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise and reduction operations
# ---------------------------------------------------------------------------

def _check_matched(a: Tensor, b: Tensor, opname: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not match")


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor) or not isinstance(a, Tensor):
        t, s = (a, b) if isinstance(a, Tensor) else (b, a)
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 0 and s.shape != t.shape:
            raise ShapeError(f"add: shapes {t.shape} and {s.shape} do not match")
        out_data = t.data + s

        def bwd(g, t=t):
            if t.requires_grad:
                t._accumulate(g)

        return _make(out_data, "add", (t,), bwd)
    _check_matched(a, b, "add")

    def bwd(g, a=a, b=b):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(a.data + b.data, "add", (a, b), bwd)


def mul(a, b) -> Tensor:
    """Elementwise product; one operand may be a python scalar or ndarray."""
    if not isinstance(b, Tensor) or not isinstance(a, Tensor):
        t, s = (a, b) if isinstance(a, Tensor) else (b, a)
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 0:
            s_arr = s
            if s_arr.shape != t.shape:
                raise ShapeError(f"mul: shapes {t.shape} and {s_arr.shape} do not match")
        out_data = t.data * s

        def bwd(g, t=t, s=s):
            if t.requires_grad:
                t._accumulate(g * s)

        return _make(out_data, "mul", (t,), bwd)
    _check_matched(a, b, "mul")

    def bwd(g, a=a, b=b):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(a.data * b.data, "mul", (a, b), bwd)


def square(x: Tensor) -> Tensor:
    def bwd(g, x=x):
        if x.requires_grad:
            x._accumulate(g * (2.0 * x.data))

    return _make(x.data * x.data, "square", (x,), bwd)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bwd(g, x=x, mask=mask):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(np.where(mask, x.data, 0.0), "relu", (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)

    def bwd(g, x=x, s=s):
        if x.requires_grad:
            x._accumulate(g * s * (1.0 - s))

    return _make(s, "sigmoid", (x,), bwd)


def log(x: Tensor) -> Tensor:
    def bwd(g, x=x):
        if x.requires_grad:
            x._accumulate(g / x.data)

    return _make(np.log(x.data), "log", (x,), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only through the strict interior."""
    mask = (x.data > lo) & (x.data < hi)

    def bwd(g, x=x, mask=mask):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(np.clip(x.data, lo, hi), "clip", (x,), bwd)


def tsum(x: Tensor) -> Tensor:
    def bwd(g, x=x):
        if x.requires_grad:
            x._accumulate(np.full_like(x.data, g.reshape(())))

    return _make(x.data.sum(), "sum", (x,), bwd)


def tmean(x: Tensor, axis=None) -> Tensor:
    if axis is not None and not (-x.data.ndim <= axis < x.data.ndim):
        raise ShapeError(f"mean: axis {axis} invalid for shape {x.shape}")
    n = x.data.size if axis is None else x.data.shape[axis]

    def bwd(g, x=x, axis=axis, n=n):
        if not x.requires_grad:
            return
        if axis is None:
            x._accumulate(np.full_like(x.data, g.reshape(()) / n))
        else:
            x._accumulate(np.expand_dims(g, axis) / n * np.ones_like(x.data))

    return _make(x.data.mean(axis=axis), "mean", (x,), bwd)


# ---------------------------------------------------------------------------
# linear algebra and shaping
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def bwd(g, a=a, b=b):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, "matmul", (a, b), bwd)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-n bias vector to every row of an (m, n) tensor."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias: {x.shape} incompatible with bias {b.shape}")

    def bwd(g, x=x, b=b):
        if x.requires_grad:
            x._accumulate(g)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    return _make(x.data + b.data, "add_bias", (x, b), bwd)


def transpose(x: Tensor) -> Tensor:
    def bwd(g, x=x):
        if x.requires_grad:
            x._accumulate(g.T)

    return _make(x.data.T, "transpose", (x,), bwd)


def reshape(x: Tensor, shape) -> Tensor:
    def bwd(g, x=x):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return _make(x.data.reshape(shape), "reshape", (x,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    ndim = tensors[0].data.ndim
    if not (-ndim <= axis < ndim):
        raise ShapeError(f"concat: axis {axis} invalid for ndim {ndim}")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def bwd(g, tensors=tensors, offsets=offsets, axis=axis):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(int(lo), int(hi))
                t._accumulate(g[tuple(idx)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis),
                 "concat", tuple(tensors), bwd)


def tslice(x: Tensor, key) -> Tensor:
    out_data = x.data[key]
    if out_data.base is not None:
        out_data = out_data.copy()

    def bwd(g, x=x, key=key):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[key] = g
            x._accumulate(full)

    return _make(out_data, "slice", (x,), bwd)


def resample_columns(x: Tensor, weights) -> Tensor:
    """Linear resampling of an (C, L) tensor along its column axis.

    ``weights`` is a constant (rows, L) matrix, dense or scipy-sparse; row i
    of the output is ``sum_l weights[i, l] * x[:, l]``. The adjoint maps
    back through the transposed weights, so every column with nonzero
    weight receives gradient.
    """
    if x.data.ndim != 2 or weights.shape[1] != x.shape[1]:
        raise ShapeError(f"resample_columns: weights {weights.shape} incompatible with {x.shape}")
    out_data = weights @ x.data.T

    def bwd(g, x=x, weights=weights):
        if x.requires_grad:
            x._accumulate((weights.T @ g).T)

    return _make(np.asarray(out_data), "resample_columns", (x,), bwd)


# ---------------------------------------------------------------------------
# grouped 1-D convolution over the temporal axis
# ---------------------------------------------------------------------------

def grouped_conv1d(x: Tensor, w: Tensor, groups: int = 1, padding: int | None = None) -> Tensor:
    """Per-group cross-correlation of an (C_in, L) signal with (k, C_in/g, C_out) taps.

    Zero padding of ``(k - 1) // 2`` on both ends preserves L. Output
    channel block j of group i sees only input channel block i, matching
    the usual grouped-convolution wiring.
    """
    from .errors import ConfigError

    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ShapeError(f"grouped_conv1d: expected (C,L) and (k,C_in/g,C_out), got {x.shape}, {w.shape}")
    c_in, length = x.shape
    k, c_in_g, c_out = w.shape
    if k % 2 != 1:
        raise ConfigError(f"grouped_conv1d: kernel size {k} must be odd")
    if c_in % groups != 0 or c_out % groups != 0:
        raise ConfigError(f"grouped_conv1d: channels ({c_in} in, {c_out} out) not divisible by {groups} groups")
    if c_in // groups != c_in_g:
        raise ShapeError(f"grouped_conv1d: weight expects {c_in_g} channels/group, input provides {c_in // groups}")
    pad = (k - 1) // 2 if padding is None else padding
    c_out_g = c_out // groups

    xp = np.zeros((c_in, length + 2 * pad))
    xp[:, pad:pad + length] = x.data
    out_len = length + 2 * pad - k + 1
    out = np.zeros((c_out, out_len))
    for gi in range(groups):
        rows_in = slice(gi * c_in_g, (gi + 1) * c_in_g)
        rows_out = slice(gi * c_out_g, (gi + 1) * c_out_g)
        for t in range(k):
            out[rows_out] += w.data[t, :, rows_out].T @ xp[rows_in, t:t + out_len]

    def bwd(g, x=x, w=w, xp=xp, pad=pad, k=k, groups=groups,
            c_in_g=c_in_g, c_out_g=c_out_g, length=length, out_len=out_len):
        gxp = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(w.data) if w.requires_grad else None
        for gi in range(groups):
            rows_in = slice(gi * c_in_g, (gi + 1) * c_in_g)
            rows_out = slice(gi * c_out_g, (gi + 1) * c_out_g)
            for t in range(k):
                if gxp is not None:
                    gxp[rows_in, t:t + out_len] += w.data[t, :, rows_out] @ g[rows_out]
                if gw is not None:
                    gw[t, :, rows_out] += xp[rows_in, t:t + out_len] @ g[rows_out].T
        if gxp is not None:
            x._accumulate(gxp[:, pad:pad + length])
        if gw is not None:
            w._accumulate(gw)

    return _make(out, "grouped_conv1d", (x, w), bwd)


# ---------------------------------------------------------------------------
# finite-difference audit
# ---------------------------------------------------------------------------

def grad_check(f: Callable[[], Tensor], params: Tensor | Sequence[Tensor],
               h: float = 1e-4) -> float:
    """Compare analytic gradients of ``f()`` against central differences.

    Returns the maximum over all parameter coordinates of
    ``|analytic - numeric| / max(1e-8, |analytic| + |numeric|)``.
    """
    if isinstance(params, Tensor):
        params = [params]
    zero_grad(params)
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                fp = f().item()
            flat[i] = orig - h
            with no_grad():
                fm = f().item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(1e-8, abs(gflat[i]) + abs(numeric))
            worst = max(worst, err)
    zero_grad(params)
    return worst
