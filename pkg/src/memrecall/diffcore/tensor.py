"""Dense tensors with define-by-run reverse-mode differentiation.

Every op builds a node holding its forward value, its parents and a closure
mapping the output cotangent to parent cotangents.  The graph is rebuilt per
step; nothing persists between calls to :func:`grad`.

Broadcasting is deliberately narrow: elementwise binary ops accept equal
shapes or a scalar operand.  Anything else goes through :func:`expand`.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


def _check_finite() -> bool:
    return getattr(_state, "check_finite", False)


@contextlib.contextmanager
def no_grad():
    """Forward-only evaluation: ops return constants and record nothing."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@contextlib.contextmanager
def check_finite(enabled: bool = True):
    """Raise :class:`NumericError` as soon as any op produces NaN/Inf."""
    prev = _check_finite()
    _state.check_finite = enabled
    try:
        yield
    finally:
        _state.check_finite = prev


def set_check_finite(enabled: bool) -> None:
    _state.check_finite = enabled


class Tensor:
    """A numpy array plus its position on the tape.

    ``op`` names the primitive that produced the value, ``parents`` the input
    nodes and ``grad`` is filled by :func:`backward` for leaves that require
    gradients.
    """

    __slots__ = ("data", "requires_grad", "parents", "backward_fn", "op", "grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, *, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None, _op: str = "leaf"):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.parents = _parents
        self.backward_fn = _backward
        self.op = _op
        self.grad = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.op != "leaf" else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(data: np.ndarray, parents: tuple, backward: Callable, op: str) -> Tensor:
    if _check_finite() and not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by {op}")
    if _grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, True, _parents=parents, _backward=backward, _op=op)
    return Tensor(data, _op=op)


def _coerce_pair(a, b):
    """Bring a number operand to the tensor operand's dtype; check shapes.

    Returns the operands plus flags marking which one acts as a scalar.
    """
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    elif not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    if a.shape == b.shape:
        return a, b, False, False
    if b.data.size == 1 and b.ndim <= a.ndim:
        return a, b, False, True
    if a.data.size == 1 and a.ndim <= b.ndim:
        return a, b, True, False
    raise DimensionError(f"elementwise op needs equal shapes or a scalar, got {a.shape} and {b.shape}")


def _val(t: Tensor, scalar: bool) -> np.ndarray:
    return t.data.reshape(()) if scalar else t.data


def _unbroadcast(g: np.ndarray, like: Tensor, was_scalar: bool) -> np.ndarray:
    if was_scalar:
        return np.asarray(g.sum(), dtype=like.dtype).reshape(like.shape)
    return g


def add(a, b) -> Tensor:
    a, b, sa, sb = _coerce_pair(a, b)
    av, bv = _val(a, sa), _val(b, sb)
    out = av + bv

    def back(g):
        return _unbroadcast(g, a, sa), _unbroadcast(g, b, sb)

    return _make(out, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b, sa, sb = _coerce_pair(a, b)
    av, bv = _val(a, sa), _val(b, sb)
    out = av - bv

    def back(g):
        return _unbroadcast(g, a, sa), _unbroadcast(-g, b, sb)

    return _make(out, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b, sa, sb = _coerce_pair(a, b)
    av, bv = _val(a, sa), _val(b, sb)
    out = av * bv

    def back(g):
        return _unbroadcast(g * bv, a, sa), _unbroadcast(g * av, b, sb)

    return _make(out, (a, b), back, "mul")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _make(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_ELEMENTWISE = {
    "sigmoid": sigmoid, "tanh": tanh, "relu": relu, "square": square,
    "add": add, "mul": mul, "sub": sub,
}


def elementwise(kind: str, *args) -> Tensor:
    """Dispatch by name; ``kind`` is one of sigmoid/tanh/relu/add/mul/sub/square."""
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {kind!r}") from None
    return fn(*args)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data
    return _make(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched product of [B, m, k] and [B, k, n]."""
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise DimensionError(f"bmm shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def back(g):
        return g @ b.data.transpose(0, 2, 1), a.data.transpose(0, 2, 1) @ g

    return _make(out, (a, b), back, "bmm")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` for x of shape [..., in], w [out, in], b [out]."""
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear shape mismatch: input {x.shape}, weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError(f"linear bias {b.shape} does not match weight {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data.T
    if b is not None:
        out = out + b.data
    out = out.reshape(lead + (w.shape[0],))
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        g2 = g.reshape(-1, w.shape[0])
        gx = (g2 @ w.data).reshape(x.shape)
        gw = g2.T @ x2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _make(out, parents, back, "linear")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise DimensionError(f"concat shape mismatch: {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def back(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return _make(out, tuple(tensors), back, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack needs equal shapes, got {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(out, tuple(tensors), back, "stack")


def getitem(a: Tensor, key) -> Tensor:
    out = a.data[key]

    advanced = _is_advanced(key)

    def back(g):
        full = np.zeros_like(a.data)
        if advanced:
            np.add.at(full, key, g)
        else:
            full[key] = g
        return (full,)

    return _make(np.array(out, copy=True), (a,), back, "getitem")


def _is_advanced(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), lambda g: (np.transpose(g, inv),), "transpose")


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),)

    return _make(out, (a,), back, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis), 1.0 / float(n))


def expand(a: Tensor, axis: int, n: int) -> Tensor:
    """Insert ``axis`` and repeat ``n`` times along it (explicit broadcast)."""
    out = np.repeat(np.expand_dims(a.data, axis), n, axis=axis)
    return _make(out, (a,), lambda g: (g.sum(axis=axis),), "expand")


def where_mask(a: Tensor, mask: np.ndarray) -> Tensor:
    """Multiply by a constant 0/1 mask of the same shape."""
    mask = np.asarray(mask, dtype=a.dtype)
    if mask.shape != a.shape:
        raise DimensionError(f"mask {mask.shape} does not match {a.shape}")
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "mask")


def log_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def back(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _make(out, (a,), back, "log_softmax")


def softmax_xent(logits: Tensor, target) -> Tensor:
    """Categorical cross-entropy ``-log softmax(logits)[target]`` on the last axis.

    ``target`` is an int (for 1-D logits) or an int array matching the leading
    shape; the result has the leading shape.
    """
    n = logits.shape[-1]
    if n < 1:
        raise ContractError("softmax_xent needs at least one outcome")
    tgt = np.asarray(target, dtype=np.int64)
    if tgt.shape != logits.shape[:-1]:
        raise DimensionError(f"target shape {tgt.shape} does not match logits {logits.shape}")
    if np.any(tgt < 0) or np.any(tgt >= n):
        raise ContractError(f"target index out of range [0, {n})")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, tgt[..., None], axis=-1)[..., 0]
    out = np.asarray(lse - picked, dtype=logits.dtype)
    soft = np.exp(z - lse[..., None])

    def back(g):
        onehot = np.zeros_like(soft)
        np.put_along_axis(onehot, tgt[..., None], 1.0, axis=-1)
        return ((soft - onehot) * np.asarray(g)[..., None],)

    return _make(out, (logits,), back, "softmax_xent")


def sigmoid_xent(logits: Tensor, targets) -> Tensor:
    """Elementwise ``-t log σ(z) - (1-t) log(1-σ(z))``, evaluated stably."""
    t = np.asarray(targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise DimensionError(f"targets {t.shape} do not match logits {logits.shape}")
    z = logits.data
    out = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    sig = _sigmoid(z)
    return _make(out, (logits,), lambda g: (g * (sig - t),), "sigmoid_xent")


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Valid, stride-1 convolution. x [N, H, W, C], w [kh, kw, C, F], b [F]."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2] or b.shape != (w.shape[3],):
        raise DimensionError(f"conv2d shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    kh, kw = w.shape[:2]
    n, hh, ww, _ = x.shape
    oh, ow = hh - kh + 1, ww - kw + 1
    if oh < 1 or ow < 1:
        raise DimensionError(f"conv2d kernel {w.shape[:2]} larger than input {x.shape[1:3]}")
    xd, wd = x.data, w.data
    out = np.zeros((n, oh, ow, w.shape[3]), dtype=np.result_type(xd, wd))
    for i in range(kh):
        for j in range(kw):
            out += xd[:, i:i + oh, j:j + ow, :] @ wd[i, j]
    out += b.data

    def back(g):
        gx = np.zeros_like(xd)
        gw = np.zeros_like(wd)
        g2 = g.reshape(-1, g.shape[-1])
        for i in range(kh):
            for j in range(kw):
                patch = xd[:, i:i + oh, j:j + ow, :]
                gw[i, j] = patch.reshape(-1, patch.shape[-1]).T @ g2
                gx[:, i:i + oh, j:j + ow, :] += g @ wd[i, j].T
        return gx, gw, g2.sum(axis=0)

    return _make(out, (x, w, b), back, "conv2d")


def stop_gradient(x: Tensor) -> Tensor:
    """Forward identity that severs the tape.

    Inside :func:`grad_check` the frozen value is replayed so finite
    differences only see live branches.
    """
    x = as_tensor(x)
    replay = getattr(_state, "sg_replay", None)
    if replay is not None:
        data = replay.next(x.data)
    else:
        data = x.data
    return Tensor(data, _op="stop_gradient")


def custom_op(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    """Register an op defined outside this module."""
    return _make(np.asarray(data), tuple(parents), backward, op)


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in reversed(node.parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Reverse-mode gradients of a scalar ``loss`` w.r.t. ``wrt``.

    Tensors that the loss does not reach get zeros.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    keep = {id(t) for t in wrt}
    if loss.requires_grad:
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(_topo_order(loss)):
            nid = id(node)
            g = grads.get(nid) if nid in keep or not node.parents else grads.pop(nid, None)
            if g is None or node.backward_fn is None:
                continue
            pgrads = node.backward_fn(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    return [np.asarray(grads.get(id(t), np.zeros_like(t.data)), dtype=t.dtype).reshape(t.shape)
            for t in wrt]


def backward(loss: Tensor, params) -> dict[str, np.ndarray]:
    """Gradient map over a parameter mapping (name -> Tensor); also sets ``.grad``."""
    names = list(params.keys())
    tensors = [params[n] for n in names]
    gs = grad(loss, tensors)
    for t, g in zip(tensors, gs):
        t.grad = g
    return dict(zip(names, gs))
