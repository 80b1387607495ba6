# services/tensor/tensor.py
"""
Reverse-mode automatic differentiation record.

A `Tensor` wraps a float64 numpy array. Every differentiable operation is a
`Function` subclass; applying it records the function as the creator of its
output so that `Tensor.backward()` can walk the record in reverse
topological order and accumulate gradients into leaf tensors.

A record is consumed by its first backward pass; calling backward again on
the same record raises `StateError`.
"""
import contextlib
import threading
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.exceptions.custom_exceptions import StateError

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording them (inference, TTA, finite-difference evaluations)."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Function:
    """
    Base class for differentiable operations.

    `forward` receives the raw arrays of the input tensors and returns the
    output array; `backward` receives dL/d(output) and returns one gradient
    array (or None) per input tensor, in input order.
    """

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors
        self.consumed = False

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out_data, requires_grad=requires_grad, creator=func if requires_grad else None)


class Tensor:
    """Dense float64 array taking part in a reverse-mode computation record."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: Optional[str] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator = creator
        self.name = name
        self._consumed = False

    # ------------------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # ** Operators (implemented in ops)
    def __add__(self, other):
        from app.services.tensor import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from app.services.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from app.services.tensor import ops
        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other):
        from app.services.tensor import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from app.services.tensor import ops
        return ops.scale(self, -1.0)

    def __truediv__(self, other: float):
        from app.services.tensor import ops
        return ops.scale(self, 1.0 / float(other))

    def sum(self) -> "Tensor":
        from app.services.tensor import ops
        return ops.sum_all(self)

    def mean(self) -> "Tensor":
        from app.services.tensor import ops
        return ops.mean_all(self)

    def reshape(self, *shape: int) -> "Tensor":
        from app.services.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    # ------------------------------------------------------------------
    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in reversed(node.creator.tensors):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """
        Populate `.grad` of every leaf tensor reachable from this one.

        Leaf gradients accumulate into any existing `.grad` buffer, so callers
        zero them between steps. Intermediate gradients are not retained.
        """
        if not self.requires_grad:
            raise StateError("backward called on a tensor that does not require grad")
        if self._consumed:
            raise StateError("backward already ran on this computation record")
        if grad is None:
            if self.size != 1:
                raise StateError("backward without an explicit gradient needs a scalar output")
            grad = np.ones_like(self.data)

        order = self._topological_order()
        for node in order:
            if node.creator is not None and node.creator.consumed:
                raise StateError("backward already ran on this computation record")

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.creator is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            func = node.creator
            input_grads = func.backward(g)
            for parent, parent_grad in zip(func.tensors, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad
            func.consumed = True
        self._consumed = True
