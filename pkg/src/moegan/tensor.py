"""Dense tensors with a reverse-mode differentiation tape.

Operations record onto the innermost active :class:`Tape` whenever at least
one input requires grad. Outside a ``with Tape():`` block nothing is
recorded, which doubles as "no-grad" mode for sampling and evaluation.

Shape rules
-----------
* ``add``/``sub``/``mul``: numpy broadcasting; gradients are summed back to
  each operand's shape.
* ``matmul``: ``(..., n, k) @ (k, m)`` or equal-batch ``(..., n, k) @ (..., k, m)``.
* ``conv1d``: ``x (B, T, Cin)`` or ``(T, Cin)``, ``w (K, Cin, Cout)``,
  ``b (Cout,)`` -> ``(B, T-K+1, Cout)``; valid convolution only.
* ``max_over_time``: reduces axis -2, ``(B, T, C) -> (B, C)``.
"""
from __future__ import annotations

import contextlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from moegan import kernels

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes violate an op's shape rule."""

    def __init__(self, op: str, detail: str):
        super().__init__(f"{op}: {detail}")
        self.op = op


class DomainError(ValueError):
    """Input outside an op's mathematical domain (e.g. log of 0)."""


class BackwardError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    index: int = -1


@dataclass(eq=False)
class Tape:
    """Ordered record of executed primitives; execution order is a topological order."""

    nodes: list[Node] = field(default_factory=list)

    def __enter__(self) -> Tape:
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        node.index = next(_CLOCK)
        self.nodes.append(node)

    def backward(self, loss: Tensor, params: dict[str, Tensor] | None = None) -> dict[str, Tensor]:
        return backward(loss, params)


_TAPES: list[Tape] = []
# global execution counter: node indices order every recorded op across tapes
_CLOCK = itertools.count()


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


@contextlib.contextmanager
def no_grad():
    """Suspend recording, including inside an active tape."""
    saved = _TAPES[:]
    _TAPES.clear()
    try:
        yield
    finally:
        _TAPES.extend(saved)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None and isinstance(x, np.ndarray) and x.dtype in (np.float32, np.float64):
        dtype = x.dtype
    return Tensor(x, dtype=dtype)


def _emit(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype if data.dtype in (np.float32, np.float64) else None)
    if needs:
        node = Node(op, inputs, out, vjp)
        tape.record(node)
        out._node = node
    return out


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` for 2-d ``b``; leading dims of ``a`` are folded into one BLAS call."""
    if a.ndim == 2:
        return a @ b
    return (a.reshape(-1, a.shape[-1]) @ b).reshape(a.shape[:-1] + (b.shape[1],))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = a.data.dtype.type(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def neg(a) -> Tensor:
    return scale(a, -1.0)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a, floor: float | None = None) -> Tensor:
    """Natural log. With ``floor``, computes ``log(max(a, floor))`` and passes
    zero gradient where the floor is active; without it, non-positive input
    raises :class:`DomainError`."""
    a = as_tensor(a)
    if floor is None:
        if np.any(a.data <= 0):
            raise DomainError("log: non-positive input")
        x = a.data
        mask = None
    else:
        x = np.maximum(a.data, a.data.dtype.type(floor))
        mask = a.data >= floor
    out = np.log(x)

    def vjp(g):
        grad = g / x
        return (grad if mask is None else grad * mask,)

    return _emit("log", out, (a,), vjp)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return _emit("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def log_sigmoid(a) -> Tensor:
    """``log(sigmoid(a))`` as ``-softplus(-a)``, finite for any finite input."""
    a = as_tensor(a)
    x = a.data
    out = np.minimum(x, 0) - np.log1p(np.exp(-np.abs(x)))
    return _emit("log_sigmoid", out.astype(x.dtype, copy=False), (a,),
                 lambda g: (g * _stable_sigmoid(-x),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _emit("relu", a.data * mask, (a,), lambda g: (g * mask,))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (a,), vjp)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", out, (a,), vjp)


# ---------------------------------------------------------------- reductions / shape


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", out, (a,), vjp)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    inv = a.data.dtype.type(1.0 / count)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * inv, a.shape).copy(),)

    return _emit("mean", out, (a,), vjp)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", "no inputs")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", f"shape {t.shape} does not match {ref} off axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax)
                     for i in range(len(tensors)))

    return _emit("concat", out, tuple(tensors), vjp)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) if axis >= 0
                   else reshape(t, t.shape + (1,)) for t in tensors], axis=axis)


def take(a, key) -> Tensor:
    """Indexing/slicing (``a[key]``)."""
    a = as_tensor(a)
    out = np.array(a.data[key])

    def vjp(g):
        full = np.zeros_like(a.data, dtype=g.dtype)
        np.add.at(full, key, g)
        return (full,)

    return _emit("slice", out, (a,), vjp)


slice_ = take


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)
    return _emit("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose", f"expected 2-d, got {a.shape}")
    return _emit("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def l2_norm(a, axis=None) -> Tensor:
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    out = norm if axis is not None else norm.reshape(())
    if axis is not None:
        out = np.squeeze(norm, axis=axis)

    def vjp(g):
        gk = g if axis is None else np.expand_dims(g, axis)
        safe = np.where(norm > 0, norm, 1)
        return (np.where(norm > 0, gk * a.data / safe, 0).astype(a.data.dtype, copy=False),)

    return _emit("l2_norm", out, (a,), vjp)


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", f"operands must be at least 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", f"inner dimensions differ: {a.shape} @ {b.shape} ({a.shape[-1]} != {b.shape[-2]})")
    if b.ndim > 2 and b.shape[:-2] != a.shape[:-2]:
        raise ShapeError("matmul", f"batch dimensions differ: {a.shape[:-2]} vs {b.shape[:-2]}")
    out = _dot(a.data, b.data) if b.ndim == 2 else a.data @ b.data

    def vjp(g):
        ga = _dot(g, b.data.T) if b.ndim == 2 else g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2:
            k, m = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _emit("matmul", out, (a, b), vjp)


def one_hot(ids, depth: int, dtype=None) -> Tensor:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= depth):
        raise ValueError(f"token id out of range [0, {depth})")
    out = np.zeros(ids.shape + (depth,), dtype=dtype or DEFAULT_DTYPE)
    np.put_along_axis(out, ids[..., None], 1, axis=-1)
    return Tensor(out, dtype=out.dtype)


# ---------------------------------------------------------------- sequence ops


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    b, t, e = x.shape
    cols = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)  # (B, L, E, K)
    return cols.transpose(0, 1, 3, 2).reshape(b, t - k + 1, k * e)


def _check_conv(op: str, x: Tensor, w: Tensor, b: Tensor | None):
    if w.ndim != 3:
        raise ShapeError(op, f"weight must be (K, Cin, Cout), got {w.shape}")
    if x.ndim not in (2, 3):
        raise ShapeError(op, f"input must be (T, Cin) or (B, T, Cin), got {x.shape}")
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(op, f"input channels {x.shape[-1]} != weight channels {w.shape[1]}")
    if x.shape[-2] < w.shape[0]:
        raise ShapeError(op, f"sequence length {x.shape[-2]} shorter than window {w.shape[0]}")
    if b is not None and b.shape != (w.shape[2],):
        raise ShapeError(op, f"bias shape {b.shape} != ({w.shape[2]},)")


def conv1d(x, w, b=None) -> Tensor:
    """Valid 1-d convolution over time."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    _check_conv("conv1d", x, w, b)
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    k, cin, cout = w.shape
    cols = _im2col(xd, k)
    out = _dot(cols, w.data.reshape(k * cin, cout))
    if b is not None:
        out = out + b.data
    length = out.shape[1]

    def vjp(g):
        g3 = g[None] if squeeze else g
        flat = g3.reshape(-1, cout)
        dw = (cols.reshape(-1, k * cin).T @ flat).reshape(k, cin, cout)
        dcols = (flat @ w.data.reshape(k * cin, cout).T).reshape(g3.shape[0], length, k, cin)
        dx = np.zeros(xd.shape, dtype=dcols.dtype)
        for j in range(k):
            dx[:, j:j + length, :] += dcols[:, :, j, :]
        grads = [dx[0] if squeeze else dx, dw]
        if b is not None:
            grads.append(flat.sum(axis=0))
        return grads

    inputs = (x, w) if b is None else (x, w, b)
    return _emit("conv1d", out[0] if squeeze else out, inputs, vjp)


def max_over_time(x) -> Tensor:
    """Max over the time axis (-2); ties resolve to the earliest step."""
    x = as_tensor(x)
    if x.ndim not in (2, 3):
        raise ShapeError("max_over_time", f"expected (T, C) or (B, T, C), got {x.shape}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    vals, idx = kernels.max_over_time(xd)

    def vjp(g):
        g2 = g[None] if squeeze else g
        dx = np.zeros(xd.shape, dtype=g2.dtype)
        np.put_along_axis(dx, idx[:, None, :], g2[:, None, :], axis=1)
        return (dx[0] if squeeze else dx,)

    return _emit("max_over_time", vals[0] if squeeze else vals, (x,), vjp)


def conv_max_pool(x, w, b) -> Tensor:
    """Fused ``max_over_time(conv1d(x, w, b))`` with a sparse backward."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    _check_conv("conv_max_pool", x, w, b)
    if x.ndim != 3:
        raise ShapeError("conv_max_pool", f"expected (B, T, Cin), got {x.shape}")
    k, cin, cout = w.shape
    y = _dot(_im2col(x.data, k), w.data.reshape(k * cin, cout))
    vals, idx = kernels.max_over_time(y)
    vals = vals + b.data

    def vjp(g):
        dx, dw = kernels.conv_max_backward(x.data, w.data, idx, g)
        return dx, dw, g.sum(axis=0)

    return _emit("conv_max_pool", vals, (x, w, b), vjp)


def gru_cell(x, h, w_x, w_h, b_x, b_h) -> Tensor:
    """One GRU step, gates laid out [reset | update | candidate]:

    r = s(x Wr + h Ur + b), z = s(x Wz + h Uz + b),
    n = tanh(x Wn + b + r * (h Un + b)), h' = (1 - z) * n + z * h
    """
    x, h, w_x, w_h, b_x, b_h = (as_tensor(t) for t in (x, h, w_x, w_h, b_x, b_h))
    d = h.shape[-1]
    if h.ndim != 2 or x.ndim != 2 or x.shape[0] != h.shape[0]:
        raise ShapeError("gru_cell", f"x {x.shape} and h {h.shape} must be (B, d_in) and (B, D)")
    if w_x.shape != (x.shape[1], 3 * d) or w_h.shape != (d, 3 * d):
        raise ShapeError("gru_cell", f"weights {w_x.shape}, {w_h.shape} do not fit d_in={x.shape[1]}, D={d}")
    if b_x.shape != (3 * d,) or b_h.shape != (3 * d,):
        raise ShapeError("gru_cell", f"biases {b_x.shape}, {b_h.shape} must be ({3 * d},)")
    gx = x.data @ w_x.data + b_x.data
    gh = h.data @ w_h.data + b_h.data
    h_new, r, z, n = kernels.gru_forward(gx, gh, h.data)

    def vjp(g):
        d_gx, d_gh, dh = kernels.gru_backward(g, gh, h.data, r, z, n)
        return (d_gx @ w_x.data.T,
                dh + d_gh @ w_h.data.T,
                x.data.T @ d_gx,
                h.data.T @ d_gh,
                d_gx.sum(axis=0),
                d_gh.sum(axis=0))

    return _emit("gru_cell", h_new, (x, h, w_x, w_h, b_x, b_h), vjp)


# ---------------------------------------------------------------- backward


def _leaf_name(t: Tensor) -> str:
    return t.name if t.name is not None else f"tensor@{id(t):x}"


def backward(loss: Tensor, params: dict[str, Tensor] | None = None) -> dict[str, Tensor]:
    """Reverse pass from a scalar ``loss``.

    Accumulates (sums) into each reachable leaf's ``.grad`` and returns this
    pass's gradients keyed by leaf name. Entries of ``params`` that the loss
    does not reach are returned as exact zeros.
    """
    if loss.data.size != 1:
        raise BackwardError(f"loss must be scalar, got shape {loss.shape}")
    if loss._node is None:
        raise BackwardError("backward on empty tape: loss was not produced by a recorded op")
    # reachable nodes replayed in reverse execution order
    seen: dict[int, Node] = {}
    stack = [loss._node]
    while stack:
        current = stack.pop()
        if id(current) in seen:
            continue
        seen[id(current)] = current
        stack.extend(t._node for t in current.inputs if t._node is not None)
    order = sorted(seen.values(), key=lambda n: n.index, reverse=True)
    pending: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    leaves: dict[int, tuple[Tensor, np.ndarray]] = {}
    for current in order:
        g = pending.pop(id(current.output), None)
        if g is None:
            continue
        for inp, gi in zip(current.inputs, current.vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            gi = np.asarray(gi, dtype=inp.dtype)
            key = id(inp)
            if inp._node is None:
                if key in leaves:
                    leaves[key] = (inp, leaves[key][1] + gi)
                else:
                    leaves[key] = (inp, gi)
            elif key in pending:
                pending[key] = pending[key] + gi
            else:
                pending[key] = gi
    grads: dict[str, Tensor] = {}
    for inp, gi in leaves.values():
        inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
        grads[_leaf_name(inp)] = Tensor(gi, dtype=gi.dtype)
    for name, p in (params or {}).items():
        if name not in grads:
            grads[name] = Tensor(np.zeros_like(p.data), dtype=p.dtype)
    return grads


def finite_difference_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-4) -> float:
    """Max over coordinates of ``|analytic - central| / max(1, |analytic|)``.

    The analytic gradient is taken at ``x``'s own precision; the central
    differences evaluate ``f`` on a float64 copy of ``x`` so they are not
    limited by 32-bit rounding.
    """
    x0 = np.array(as_tensor(x).data)
    probe = Tensor(x0.copy(), requires_grad=True, name="__fd_probe__", dtype=x0.dtype)
    with Tape():
        out = f(probe)
        if out._node is None:
            analytic = np.zeros_like(x0, dtype=np.float64)
        else:
            analytic = backward(out, {"__fd_probe__": probe})["__fd_probe__"].data.astype(np.float64)
    base = x0.astype(np.float64)
    numeric = np.zeros_like(base)
    flat = numeric.reshape(-1)
    for i in range(base.size):
        plus = base.copy().reshape(-1)
        minus = base.copy().reshape(-1)
        plus[i] += eps
        minus[i] -= eps
        f_plus = float(f(Tensor(plus.reshape(base.shape), dtype=np.float64)).data)
        f_minus = float(f(Tensor(minus.reshape(base.shape), dtype=np.float64)).data)
        flat[i] = (f_plus - f_minus) / (2 * eps)
    if base.size == 0:
        return 0.0
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max())
