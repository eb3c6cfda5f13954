"""Dense float64 tensors with a reverse-mode gradient tape.

Every operation computes its result eagerly with numpy. When a :class:`Tape`
is active and at least one operand requires a gradient, the operation is
appended to the tape together with a closure that maps the output gradient
to input gradients. ``Tape.backward`` then walks the recorded nodes once, in
reverse recording order.

    >>> x = Tensor([1.0, 2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (x * x).sum()
    >>> tape.backward(loss)
    >>> x.grad
    array([2., 4.])

Broadcasting is limited to leading dimensions: an operand may be a scalar or
have a shape equal to the trailing dimensions of the other operand.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_TAPES: list["Tape"] = []
_MAC_COUNTERS: list["MacCounter"] = []
_STAGES: list[str] = []


class Tensor:
    """n-dimensional float64 array with an optional gradient buffer."""

    __array_priority__ = 100
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: Tape | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    def backward(self) -> None:
        """Backpropagate from this scalar through the tape that produced it."""
        if self._tape is None:
            raise ContractError("tensor was not produced on an active tape")
        self._tape.backward(self)

    # -- operators -----------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended as operations execute, so inputs always precede the
    operations that consume them.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        out.requires_grad = True
        out._tape = self
        self.nodes.append(_Node(out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.nodes:
            raise ContractError("backward called on an empty tape")
        produced = {id(node.out) for node in self.nodes}
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key not in produced:
                    leaves[key] = inp
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        for key, leaf in leaves.items():
            g = grads[key].reshape(leaf.shape)
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def record_op(data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    """Wrap ``data`` as the result of an operation on ``inputs``.

    ``backward(g)`` must return one gradient (or None) per input. Extension
    modules use this to add differentiable primitives.
    """
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, tuple(inputs), backward)
    return out


def recording(*inputs: Tensor) -> bool:
    return bool(_TAPES) and any(t.requires_grad for t in inputs)


# -- multiply-accumulate instrumentation --------------------------------


@dataclass
class MacCounter:
    """Tally of dense multiply-accumulates, keyed by the active stage label."""

    counts: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@contextlib.contextmanager
def count_macs() -> Iterator[MacCounter]:
    counter = MacCounter()
    _MAC_COUNTERS.append(counter)
    try:
        yield counter
    finally:
        _MAC_COUNTERS.remove(counter)


@contextlib.contextmanager
def mac_stage(name: str) -> Iterator[None]:
    _STAGES.append(name)
    try:
        yield
    finally:
        _STAGES.pop()


def _tally(macs: int) -> None:
    if _MAC_COUNTERS:
        stage = _STAGES[-1] if _STAGES else "other"
        for counter in _MAC_COUNTERS:
            counter.counts[stage] = counter.counts.get(stage, 0) + int(macs)


# -- broadcasting helpers -------------------------------------------------


def _check_broadcast(a: tuple, b: tuple) -> None:
    if a == b or a == () or b == ():
        return
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"shapes {a} and {b} are not leading-dim broadcastable")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead))) if lead else g


# -- elementwise arithmetic -----------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    return record_op(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    return record_op(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    return record_op(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return record_op(out, (a, b), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return record_op(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return record_op(np.log(x.data), (x,), lambda g: (g / x.data,))


# -- reductions and shape manipulation ----------------------------------


def tsum(x: Tensor, axis=None) -> Tensor:
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return record_op(out, (x,), backward)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis) * (1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return record_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)
    return record_op(
        np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),)
    )


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, tuple(axes))


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return record_op(np.array(x.data[index]), (x,), backward)


def pad_end(x: Tensor, amount: int, axis: int = 0) -> Tensor:
    """Zero-pad ``amount`` entries at the end of ``axis``."""
    if amount == 0:
        return x
    widths = [(0, 0)] * x.ndim
    widths[axis] = (0, amount)
    keep = [slice(None)] * x.ndim
    keep[axis] = slice(0, x.shape[axis])
    keep = tuple(keep)
    return record_op(np.pad(x.data, widths), (x,), lambda g: (g[keep],))


def crop_or_pad(x: Tensor, length: int) -> Tensor:
    """Trim or zero-extend axis 0 to ``length``."""
    n = x.shape[0]
    if n == length:
        return x
    if n > length:
        return getitem(x, slice(0, length))
    return pad_end(x, length - n)


# -- linear algebra -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product ``a @ b`` with numpy batch broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    try:
        batch = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch dims incompatible: {a.shape} @ {b.shape}") from None
    out = np.matmul(a.data, b.data)
    m, k, n = a.shape[-2], a.shape[-1], b.shape[-1]
    _tally(int(np.prod(batch, dtype=np.int64)) * m * k * n)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_reduce_batch(ga, a.shape), _reduce_batch(gb, b.shape))

    return record_op(out, (a, b), backward)


def _reduce_batch(g, shape):
    if g is None or g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape[:-2], shape[:-2])) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis; weight is (d_out, d_in)."""
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in:
        raise ShapeError(f"linear expects last dim {d_in}, got input {x.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out += bias.data
    rows = x.size // d_in
    _tally(rows * d_in * d_out)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, d_out)
        gx = (g @ weight.data) if x.requires_grad else None
        gw = g2.T @ x.data.reshape(-1, d_in) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return record_op(out, inputs, backward)


# -- nonlinearities -------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def prelu(x: Tensor, alpha: Tensor) -> Tensor:
    """``x`` for x >= 0, ``alpha * x`` otherwise; alpha is a scalar tensor."""
    alpha = as_tensor(alpha)
    pos = x.data >= 0
    out = np.where(pos, x.data, alpha.data * x.data)

    def backward(g):
        gx = g * np.where(pos, 1.0, alpha.data)
        ga = np.asarray((g * np.where(pos, 0.0, x.data)).sum()).reshape(alpha.shape)
        return gx, ga

    return record_op(out, (x, alpha), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return record_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return record_op(out, (x,), lambda g: (g * (1.0 - out * out),))


def activation(x: Tensor, kind: str, alpha: Tensor | float | None = None) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "prelu":
        if alpha is None:
            raise ContractError("prelu needs a slope")
        return prelu(x, alpha)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ContractError(f"unknown activation {kind!r}")


def softmax(x: Tensor, axis: int = -1, inplace: bool = False) -> Tensor:
    """Max-subtracted softmax along ``axis``.

    With ``inplace`` and no active recording, ``x.data`` is overwritten.
    """
    keep = recording(x)
    if inplace and not keep:
        out = x.data
        out -= out.max(axis=axis, keepdims=True)
    else:
        out = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=axis, keepdims=True)
    if not keep:
        return Tensor(out)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record_op(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data

    def backward(g):
        gx = None
        if x.requires_grad:
            gh = g * gain.data
            gx = inv_std * (
                gh
                - gh.mean(axis=-1, keepdims=True)
                - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            )
        lead = tuple(range(x.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record_op(out, (x, gain, bias), backward)


# -- framing --------------------------------------------------------------


def frame(x: Tensor, size: int, hop: int) -> Tensor:
    """Slice axis 0 into ``1 + (N - size) // hop`` windows: (L, size, ...)."""
    n = x.shape[0]
    if n < size:
        raise ShapeError(f"cannot frame length {n} with window {size}")
    count = 1 + (n - size) // hop
    windows = np.lib.stride_tricks.sliding_window_view(x.data, size, axis=0)[::hop]
    out = np.ascontiguousarray(np.moveaxis(windows, -1, 1))

    def backward(g):
        summed = _overlap_add(g, hop)
        if summed.shape[0] < n:
            widths = [(0, n - summed.shape[0])] + [(0, 0)] * (summed.ndim - 1)
            summed = np.pad(summed, widths)
        return (summed,)

    assert out.shape[0] == count
    return record_op(out, (x,), backward)


def overlap_add(frames: Tensor, hop: int) -> Tensor:
    """Inverse layout of :func:`frame`: sum (L, size, ...) windows spaced by ``hop``."""
    size = frames.shape[1]
    return record_op(
        _overlap_add(frames.data, hop),
        (frames,),
        lambda g: (_frames(g, size, hop, frames.shape[0]),),
    )


def _overlap_add(y: np.ndarray, hop: int) -> np.ndarray:
    count, size = y.shape[:2]
    rest = y.shape[2:]
    out = np.zeros(((count - 1) * hop + size,) + rest)
    if size % hop == 0:
        for j in range(size // hop):
            seg = y[:, j * hop:(j + 1) * hop].reshape((count * hop,) + rest)
            out[j * hop:j * hop + count * hop] += seg
    else:
        for i in range(count):
            out[i * hop:i * hop + size] += y[i]
    return out


def _frames(x: np.ndarray, size: int, hop: int, count: int) -> np.ndarray:
    windows = np.lib.stride_tricks.sliding_window_view(x, size, axis=0)[::hop][:count]
    return np.ascontiguousarray(np.moveaxis(windows, -1, 1))
