"""Reverse-mode differentiation over complex numpy arrays.

Every complex quantity is treated as a pair of real numbers. For a real-valued
loss ``L`` the gradient carried for a tensor ``z`` is the complex array

    G_z = dL/d(re z) + 1j * dL/d(im z),

which makes the chain rule for a holomorphic map ``z = f(a)`` read
``G_a = G_z * conj(f'(a))``. Real tensors carry real gradients.

Graphs are recorded define-by-run on a :class:`Tape`. Values stored on a tape
are frozen (read-only) so a recorded node can never change under the
backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, ShapeError

@dataclass
class _Node:
    parents: tuple[int, ...]
    # One (vjp, parent_shape, parent_is_complex) triple per parent.
    rules: tuple[tuple[Callable, tuple[int, ...], bool], ...]
    # (shape, is_complex) for parameter leaves.
    leaf: tuple[tuple[int, ...], bool] | None = None


@dataclass
class Gradient:
    """Real partials of a scalar loss with respect to one parameter."""

    re: np.ndarray
    im: np.ndarray
    is_complex: bool = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    def as_complex(self) -> np.ndarray:
        """``d/dre + 1j*d/dim`` (real array for real parameters)."""
        if self.is_complex:
            return self.re + 1j * self.im
        return self.re.copy()


class Tape:
    """Ordered record of primitive operations.

    Parents always precede children because nodes are appended as the
    forward computation runs.
    """

    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self.params: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def param(self, value, name: str) -> "Tensor":
        """Register a trainable leaf and return its tensor."""
        if name in self.params:
            raise ContractError(f"parameter {name!r} already on tape")
        t = Tensor(np.array(value, dtype=_float_or_complex(value)))
        t.tape = self
        t.index = len(self.nodes)
        self.nodes.append(_Node((), (), leaf=(t.shape, t.is_complex)))
        self.params[name] = t.index
        return t

    @staticmethod
    def constant(value) -> "Tensor":
        return as_tensor(value)


def _float_or_complex(value) -> type:
    return np.complex128 if np.iscomplexobj(value) else np.float64


class Tensor:
    """Immutable real or complex array, optionally recorded on a tape."""

    __slots__ = ("data", "tape", "index")
    # Make ndarray (op) Tensor defer to the Tensor's reflected operators.
    __array_ufunc__ = None

    def __init__(self, data) -> None:
        arr = np.asarray(data)
        if arr.dtype.kind not in "fc":
            arr = arr.astype(np.float64)
        elif arr.dtype not in (np.float64, np.complex128):
            arr = arr.astype(_float_or_complex(arr))
        if arr.flags.writeable:
            arr = arr.view()
            arr.flags.writeable = False
        self.data = arr
        self.tape: Tape | None = None
        self.index: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_complex(self) -> bool:
        return self.data.dtype.kind == "c"

    @property
    def re(self) -> np.ndarray:
        return self.data.real

    @property
    def im(self) -> np.ndarray:
        return self.data.imag if self.is_complex else np.zeros_like(self.data)

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def item(self) -> float | complex:
        return self.data.item()

    def __repr__(self) -> str:
        tag = f", node={self.index}" if self.tracked else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    def __len__(self) -> int:
        return len(self.data)

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    @property
    def H(self) -> "Tensor":
        return conj(transpose(self))

    def conj(self) -> "Tensor":
        return conj(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def value_of(x) -> np.ndarray:
    """Underlying array of a tensor, or the argument as an array."""
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _record(value: np.ndarray, inputs: Sequence[Tensor], vjps: Sequence[Callable]) -> Tensor:
    out = Tensor(value)
    tape = None
    parents: list[int] = []
    rules = []
    for t, vjp in zip(inputs, vjps):
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise ContractError("operands recorded on different tapes")
        parents.append(t.index)
        rules.append((vjp, t.shape, t.is_complex))
    if tape is not None:
        out.tape = tape
        out.index = len(tape.nodes)
        tape.nodes.append(_Node(tuple(parents), tuple(rules)))
    return out


def backward(loss: Tensor, tape: Tape | None = None) -> dict[str, Gradient]:
    """Gradients of a real scalar ``loss`` for every parameter on ``tape``.

    Args:
        loss: real-valued tensor with exactly one element.
        tape: tape holding the parameters; defaults to the loss's own tape.

    Returns:
        Mapping from parameter name to its :class:`Gradient`. Parameters the
        loss does not depend on get all-zero gradients.

    Raises:
        ContractError: loss is not a real scalar, or lives on another tape.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError("loss must be a scalar tensor")
    if loss.is_complex:
        raise ContractError("loss must be real-valued")
    tape = tape if tape is not None else loss.tape
    if tape is None:
        raise ContractError("no tape to differentiate")
    if loss.tape is not None and loss.tape is not tape:
        raise ContractError("loss was recorded on a different tape")

    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    if loss.tape is not None:
        grads[loss.index] = np.ones(loss.shape)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            node = tape.nodes[i]
            for parent, (vjp, shape, cplx) in zip(node.parents, node.rules):
                gp = _unbroadcast(np.asarray(vjp(g)), shape)
                if not cplx:
                    gp = gp.real
                grads[parent] = gp if grads[parent] is None else grads[parent] + gp

    out = {}
    for name, idx in tape.params.items():
        shape, cplx = tape.nodes[idx].leaf
        g = grads[idx]
        if g is None:
            g = np.zeros(shape)
        out[name] = Gradient(
            re=np.array(g.real, dtype=np.float64),
            im=np.array(g.imag, dtype=np.float64) if cplx else np.zeros(shape),
            is_complex=cplx,
        )
    return out


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b), (lambda g: g, lambda g: g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data - b.data, (a, b), (lambda g: g, lambda g: -g))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), (lambda g: -g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.data, b.data
    return _record(av * bv, (a, b), (lambda g: g * np.conj(bv), lambda g: g * np.conj(av)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.data, b.data
    out = av / bv
    return _record(
        out, (a, b), (lambda g: g / np.conj(bv), lambda g: -g * np.conj(out / bv))
    )


def conj(a) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return a
    return _record(np.conj(a.data), (a,), (np.conj,))


def real(a) -> Tensor:
    a = as_tensor(a)
    if not a.is_complex:
        return a
    return _record(a.data.real.copy(), (a,), (lambda g: g,))


def imag(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.array(a.im), (a,), (lambda g: 1j * g,))


def abs2(a) -> Tensor:
    """Squared magnitude ``re^2 + im^2`` (real output)."""
    a = as_tensor(a)
    av = a.data
    return _record(av.real**2 + av.imag**2, (a,), (lambda g: 2.0 * g * av,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record(out, (a,), (lambda g: g * np.conj(out),))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.data
    return _record(np.log(av), (a,), (lambda g: g / np.conj(av),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _record(out, (a,), (lambda g: g * np.conj(0.5 / out),))


def relu(a) -> Tensor:
    """``max(a, 0)`` for real ``a``; the subgradient at 0 is 0."""
    a = as_tensor(a)
    _require_real(a, "relu")
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a,), (lambda g: g * mask,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Hard clip of a real tensor; zero gradient where the clip is active."""
    a = as_tensor(a)
    _require_real(a, "clip")
    mask = (a.data > lo) & (a.data < hi)
    return _record(np.clip(a.data, lo, hi), (a,), (lambda g: g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    _require_real(a, "sigmoid")
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(out, (a,), (lambda g: g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    """``log(1 + e^a)``, evaluated without overflow."""
    a = as_tensor(a)
    _require_real(a, "softplus")
    av = a.data
    s = 0.5 * (1.0 + np.tanh(0.5 * av))
    return _record(np.logaddexp(0.0, av), (a,), (lambda g: g * s,))


def _require_real(a: Tensor, op: str) -> None:
    if a.is_complex:
        raise ContractError(f"{op} needs a real tensor")


# ---------------------------------------------------------------- reductions


def _expand(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    return _record(out, (a,), (lambda g: _expand(g, shape, axis, keepdims),))


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    n = a.size // max(out.size, 1) if out.size else 1
    return _record(out, (a,), (lambda g: _expand(g, shape, axis, keepdims) / n,))


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Stable ``log(sum(exp(a)))`` over one axis of a real tensor."""
    a = as_tensor(a)
    _require_real(a, "logsumexp")
    av = a.data
    m = np.max(av, axis=axis, keepdims=True)
    e = np.exp(av - m)
    s = np.sum(e, axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * soft

    return _record(out, (a,), (vjp,))


def trace(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace needs a square matrix, got {a.shape}")
    n = a.shape[0]
    return _record(np.trace(a.data), (a,), (lambda g: g * np.eye(n),))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """Matrix-matrix or matrix-vector product."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports (m,k)@(k,n) and (m,k)@(k,); got {a.shape}, {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    if b.ndim == 1:
        grad_a = lambda g: np.outer(g, np.conj(bv))  # noqa: E731
    else:
        grad_a = lambda g: g @ np.conj(bv).T  # noqa: E731
    return _record(av @ bv, (a, b), (grad_a, lambda g: np.conj(av).T @ g))


# ---------------------------------------------------------------- shape ops


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _record(a.data.reshape(shape), (a,), (lambda g: g.reshape(old),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _record(out, (a,), (lambda g: np.transpose(g, inv),))


def getitem(a, key) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        z = np.zeros(shape, dtype=np.result_type(g.dtype, a.data.dtype))
        np.add.at(z, key, g)
        return z

    return _record(a.data[key], (a,), (vjp,))


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather along ``axis`` (indices may repeat)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    shape = a.shape
    axis = axis % a.ndim

    def vjp(g):
        z = np.zeros(shape, dtype=np.result_type(g.dtype, a.data.dtype))
        zm = np.moveaxis(z, axis, 0)
        gm = np.moveaxis(g, tuple(range(axis, axis + idx.ndim)), tuple(range(idx.ndim)))
        np.add.at(zm, idx, gm)
        return z

    return _record(np.take(a.data, idx, axis=axis), (a,), (vjp,))
