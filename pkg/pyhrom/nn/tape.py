"""
Reverse-mode differentiation over whole-array operations.

Operations executed while a :class:`Tape` is active, and touching at least one tensor that requires a
gradient, are recorded together with a closure mapping the output gradient to the input gradients.
:meth:`Tape.backward` replays the record in reverse. Outside of an active tape the same operations run
as plain ``numpy`` arithmetic, which is what evaluation and finite differences use.
"""

from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from pyhrom.exceptions import HromStateError, HromValidationError

_ACTIVE_TAPES: List['Tape'] = []


class Tensor:
    """ A float64 array plus, when it is a leaf that requires one, a gradient buffer. """

    # makes ndarray operators return NotImplemented, so the reflected Tensor operator runs
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._node: Optional['_Node'] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return take(self, index)

    def __repr__(self):
        return f'<Tensor{"(" + self.name + ")" if self.name else ""}: shape={self.shape}, ' \
               f'requires_grad={self.requires_grad}>'


TensorLike = Union[Tensor, np.ndarray, float, int]


class _Node:
    __slots__ = ('output', 'inputs', 'backward')

    def __init__(self, output: Tensor, inputs: Sequence[Tensor], backward: Callable):
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """
    Records differentiable operations.

    Usage::

        with Tape() as tape:
            loss = mse(model(x), x)
        tape.backward(loss)
    """

    def __init__(self):
        self._nodes: List[_Node] = []

    def __enter__(self) -> 'Tape':
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _ACTIVE_TAPES.remove(self)

    def __len__(self):
        return len(self._nodes)

    def record(self, node: _Node) -> None:
        self._nodes.append(node)

    def reset(self) -> None:
        self._nodes = []

    def backward(self, loss: Tensor) -> None:
        """
        Accumulates d(loss)/d(leaf) into the ``grad`` buffer of every leaf that requires a gradient.

        :param loss: scalar tensor produced while this tape was active.
        :raises HromStateError: when nothing was recorded on the tape.
        :raises HromValidationError: when the loss is not a finite scalar.
        """

        if not self._nodes:
            raise HromStateError("backward called before any forward pass was recorded")
        if not isinstance(loss, Tensor) or loss.value.size != 1:
            raise HromValidationError("loss must be a scalar tensor")
        if not np.isfinite(loss.value).all():
            raise HromValidationError("loss is not finite")

        if not loss.requires_grad:
            return

        grads = {id(loss): np.ones_like(loss.value)}
        if loss.is_leaf:
            _accumulate_leaf(loss, grads[id(loss)])
            return

        for node in reversed(self._nodes):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue

            g_inputs = node.backward(g_out)
            for tensor, g in zip(node.inputs, g_inputs):
                if g is None or not tensor.requires_grad:
                    continue
                if tensor.is_leaf:
                    _accumulate_leaf(tensor, g)
                elif id(tensor) in grads:
                    grads[id(tensor)] = grads[id(tensor)] + g
                else:
                    grads[id(tensor)] = g


def _accumulate_leaf(tensor: Tensor, g: np.ndarray) -> None:
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.value)
    tensor.grad += g


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def as_tensor(x: TensorLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs_grad)
    if needs_grad:
        out._node = _Node(out, inputs, backward)
        tape.record(out._node)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """ Sums ``g`` down to ``shape`` along the axes numpy broadcasting expanded. """

    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# Elementwise binary operations (numpy broadcasting rules)

def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.value * b.value, (a, b),
                   lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise HromValidationError("matmul expects two-dimensional operands")
    if a.shape[1] != b.shape[0]:
        raise HromValidationError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    return _result(a.value @ b.value, (a, b),
                   lambda g: (g @ b.value.T, a.value.T @ g))


# Elementwise unary operations

def tanh(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.value)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.value)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


def silu(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.value)
    return _result(x.value * s, (x,), lambda g: (g * (s + x.value * s * (1.0 - s)),))


def relu(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    mask = x.value > 0.0
    return _result(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def sin(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.sin(x.value), (x,), lambda g: (g * np.cos(x.value),))


def cos(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    return _result(np.cos(x.value), (x,), lambda g: (-g * np.sin(x.value),))


def square(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    return _result(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# Reductions and shape operations

def total(x: TensorLike) -> Tensor:
    """ Sum of all entries, as a scalar tensor. """

    x = as_tensor(x)
    return _result(np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reshape(x: TensorLike, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return _result(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[TensorLike], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    value = np.concatenate([t.value for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _result(value, tensors, backward)


def take(x: TensorLike, index) -> Tensor:
    """ Basic (slice) indexing. """

    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.value)
        full[index] += g
        return (full,)

    return _result(x.value[index], (x,), backward)


def transpose(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    return _result(x.value.T, (x,), lambda g: (g.T,))
