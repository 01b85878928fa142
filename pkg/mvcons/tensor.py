# -*- coding: utf-8 -*-
"""
Minimal dense-tensor engine with reverse-mode automatic differentiation.

- A Tensor wraps a row-major numpy array plus an optional gradient.
- Every differentiable operation is a Function subclass; applying it records the
  Function as the creator of its output, which links the differentiation graph.
- backward() on a scalar walks the graph once in reverse topological order and
  accumulates dLoss/dLeaf into ``.grad`` of every leaf that requires grad.
  Gradients are never zeroed implicitly: two backward passes without a reset add up.
- Training runs in 32-bit floats; ``precision(np.float64)`` switches newly created
  tensors to 64-bit for gradient checks.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, UsageError

logger = logging.getLogger(__name__)

# --- Constants ---
TRAINING_DTYPE = np.float32
CHECK_DTYPE = np.float64

ArrayLike = Union[np.ndarray, float, int, Sequence]

_mode = threading.local()


def get_default_dtype() -> np.dtype:
    return getattr(_mode, "dtype", TRAINING_DTYPE)


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise UsageError(f"Unsupported tensor dtype {dtype}; use float32 or float64")
    _mode.dtype = dtype.type


@contextmanager
def precision(dtype) -> Iterator[None]:
    """Create tensors in ``dtype`` inside the block (float32 or float64)."""
    previous = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _mode.dtype = previous


def is_grad_enabled() -> bool:
    return getattr(_mode, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate operations without recording them in the differentiation graph."""
    previous = is_grad_enabled()
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = previous


class Tensor:
    """n-dimensional float array participating in the differentiation graph."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 creator: Optional["Function"] = None, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=get_default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.creator = creator
        self.name = name
        self._consumed = False

    # --- Introspection ---
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same values, cut from the graph."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # --- Differentiation ---
    def backward(self) -> None:
        """Populate ``.grad`` on every leaf reachable from this scalar loss."""
        if self.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise UsageError("This graph was already consumed by an earlier backward()")
        if not self.requires_grad:
            raise UsageError("Loss does not depend on any tensor that requires grad")
        graph = Graph.from_output(self)
        graph.run_backward(self)
        graph.release()

    # --- Operators ---
    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Sub.apply(self, other)

    def __rsub__(self, other):
        return Sub.apply(other, self)

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Neg.apply(self)

    def __pow__(self, exponent: float):
        return Pow.apply(self, exponent=float(exponent))

    def __matmul__(self, other):
        return MatMul.apply(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or None)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    """Base class of differentiable operations.

    ``forward`` receives raw arrays and returns the output array; ``backward``
    receives dLoss/dOutput and returns one gradient (or None) per input.
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        tensors = tuple(as_tensor(x) for x in inputs)
        fn = cls(*tensors)
        out = fn.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)

    @property
    def op(self) -> str:
        return type(self).__name__


class Graph:
    """Topologically ordered view of the operations that produced a tensor.

    Inputs always precede the tensors computed from them; the backward traversal
    visits every node exactly once in reverse order.
    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        order: List[Tensor] = []
        visited = set()
        stack = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor.creator is not None:
                for parent in reversed(tensor.creator.inputs):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def records(self) -> List[Tuple[str, List[int]]]:
        """(op kind, input node positions) for every node, leaves reported as 'leaf'."""
        position = {id(t): i for i, t in enumerate(self.nodes)}
        out = []
        for tensor in self.nodes:
            if tensor.creator is None:
                out.append(("leaf", []))
            else:
                parents = [position[id(p)] for p in tensor.creator.inputs if id(p) in position]
                out.append((tensor.creator.op, parents))
        return out

    def run_backward(self, output: Tensor) -> None:
        pending = {id(output): np.ones_like(output.data)}
        for tensor in reversed(self.nodes):
            grad = pending.pop(id(tensor), None)
            if grad is None:
                continue
            if tensor.creator is None:
                tensor.grad = np.array(grad, copy=True) if tensor.grad is None else tensor.grad + grad
                continue
            input_grads = tensor.creator.backward(grad)
            for parent, parent_grad in zip(tensor.creator.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    def release(self) -> None:
        """Drop saved values of intermediate nodes; their graph cannot be replayed."""
        for tensor in self.nodes:
            if tensor.creator is not None:
                tensor.creator = None
                tensor._consumed = True


# --- Elementwise and shape primitives ---

def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcasting added to reach it from ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)


class Mul(Function):
    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.inputs
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)


class Div(Function):
    def forward(self, a, b):
        return a / b

    def backward(self, grad):
        a, b = self.inputs
        return (unbroadcast(grad / b.data, a.shape),
                unbroadcast(-grad * a.data / (b.data * b.data), b.shape))


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Pow(Function):
    def forward(self, a, exponent: float):
        self.exponent = exponent
        return a ** exponent

    def backward(self, grad):
        (a,) = self.inputs
        return (grad * self.exponent * a.data ** (self.exponent - 1.0),)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        return np.log(a)

    def backward(self, grad):
        (a,) = self.inputs
        return (grad / a.data,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul needs [n,k] @ [k,m], got {a.shape} @ {b.shape}")
        return a @ b

    def backward(self, grad):
        a, b = self.inputs
        return grad @ b.data.T, a.data.T @ grad


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


class Sum(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.axes = _normalize_axes(axis, a.ndim)
        self.keepdims = keepdims
        return np.sum(a, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        (a,) = self.inputs
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, a.shape),)


class Mean(Function):
    def forward(self, a, axis=None, keepdims=False):
        self.axes = _normalize_axes(axis, a.ndim)
        self.keepdims = keepdims
        self.count = int(np.prod([a.shape[i] for i in self.axes])) if self.axes else 1
        return np.mean(a, axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        (a,) = self.inputs
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad / self.count, a.shape),)


class Reshape(Function):
    def forward(self, a, shape):
        try:
            return a.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"Cannot reshape {a.shape} into {tuple(shape)}") from exc

    def backward(self, grad):
        (a,) = self.inputs
        return (grad.reshape(a.shape),)


class Transpose(Function):
    def forward(self, a, axes=None):
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)
