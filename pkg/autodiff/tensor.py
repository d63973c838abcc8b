"""
Reverse-mode differentiation core
Dense fp64 tensors recording the operations that produced them
"""

import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import GraphError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread"""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """
    Dense fp64 array participating in a differentiation graph

    Leaves created by the user carry requires_grad; results of operations keep
    links to their parents and a closure mapping the output gradient to one
    gradient per parent.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_consumed")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
        op: str = "leaf",
    ):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self._parents = _parents
        self._backward = _backward
        self._consumed = False

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
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self) -> Dict["Tensor", np.ndarray]:
        return backward(self)

    # Operator sugar; the primitives live in autodiff.ops
    def __add__(self, other):
        from autodiff import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from autodiff import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from autodiff import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from autodiff import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from autodiff import ops
        return ops.matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}, op={self.op}{flag})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Graph:
    """Topologically ordered record of the operations leading to an output"""

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: List[Tensor] = self._topological_order(output)

    @staticmethod
    def _topological_order(output: Tensor) -> List[Tensor]:
        order: List[Tensor] = []
        visited = set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited and parent.requires_grad:
                    stack.append((parent, False))
        return order

    @property
    def leaves(self) -> List[Tensor]:
        return [node for node in self.nodes if node.is_leaf and node.requires_grad]

    def backward(self) -> Dict[Tensor, np.ndarray]:
        output = self.output
        if any(node._consumed for node in self.nodes if not node.is_leaf):
            raise GraphError("backward already ran through this graph; rebuild it before calling again")

        grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf:
                node.grad = grad if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

        for node in self.nodes:
            if not node.is_leaf:
                node._consumed = True
        return {leaf: leaf.grad for leaf in self.leaves}


def backward(output: Tensor) -> Dict[Tensor, np.ndarray]:
    """
    Populate .grad on every requires_grad leaf reachable from a scalar output

    Args:
        output: Tensor of shape [] or [1]

    Returns:
        Mapping leaf tensor -> its accumulated gradient
    """
    if output.data.size != 1 or output.ndim > 1:
        raise GraphError(f"backward needs a scalar output, got shape {list(output.shape)}")
    if not output.requires_grad:
        raise GraphError("output is detached from any tensor that requires gradients")
    return Graph(output).backward()


def zero_grad(tensors: Sequence[Tensor]):
    for tensor in tensors:
        tensor.zero_grad()
