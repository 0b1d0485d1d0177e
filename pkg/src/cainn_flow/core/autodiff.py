"""Tape-style reverse-mode differentiation over the tensor primitives.

Primitives record a :class:`Node` on the active :class:`OpGraph` whenever one
of their inputs tracks gradients. ``backward`` walks the tape in reverse
execution order and applies each node's vector-Jacobian product.
"""

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.errors import ContractError, OracleError
from .tensor import Tensor

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_graph: ContextVar[Optional["OpGraph"]] = ContextVar("cainn_active_graph", default=None)


@dataclass(frozen=True)
class Node:
    """One recorded primitive application."""

    id: int
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


class OpGraph:
    """Execution-ordered tape of primitive applications.

    Use as a context manager; primitives evaluated inside the block are
    recorded. A graph belongs to one training step and is not shared.
    """

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self._token = None

    def __enter__(self) -> "OpGraph":
        self._token = _active_graph.set(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        _active_graph.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def append(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, vjp: VJP) -> None:
        self.nodes.append(Node(len(self.nodes), op, inputs, output, vjp))


def current_graph() -> Optional[OpGraph]:
    return _active_graph.get()


def record(op: str, inputs: Sequence[Tensor], result: np.ndarray, vjp: VJP) -> Tensor:
    """Wrap a primitive's result and put it on the active tape if any input is tracked."""
    graph = current_graph()
    tracked = graph is not None and any(t.requires_grad for t in inputs)
    output = Tensor.wrap(result, requires_grad=tracked)
    if tracked:
        graph.append(op, tuple(inputs), output, vjp)
    return output


class GradientMap:
    """dLoss/dNode for the nodes a backward pass reached.

    Lookups accept a tensor or its uid. Nodes the pass never reached read as
    zeros of the tensor's shape.
    """

    def __init__(self, grads: Dict[int, np.ndarray]) -> None:
        self._grads = grads

    def __contains__(self, key: Union[Tensor, int]) -> bool:
        uid = key.uid if isinstance(key, Tensor) else key
        return uid in self._grads

    def __getitem__(self, tensor: Tensor) -> Tensor:
        grad = self._grads.get(tensor.uid)
        if grad is None:
            return Tensor.zeros(tensor.shape, tensor.precision)
        return Tensor.wrap(grad.astype(tensor.precision.dtype, copy=False))

    def get(self, uid: int) -> Optional[np.ndarray]:
        return self._grads.get(uid)

    def __len__(self) -> int:
        return len(self._grads)


def backward(graph: OpGraph, loss: Tensor) -> GradientMap:
    """
    Run reverse-mode accumulation from a scalar loss.

    Args:
        graph: The tape the loss was computed on
        loss: Scalar tensor of shape (1, 1, 1, 1)

    Returns:
        GradientMap with dLoss/dNode for every reached node

    Raises:
        ContractError: If the loss holds more than one element
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {loss.uid: np.ones(loss.shape, dtype=loss.data.dtype)}
    if not loss.requires_grad:
        return GradientMap(grads)

    for node in reversed(graph.nodes):
        upstream = grads.get(node.output.uid)
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.vjp(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            existing = grads.get(tensor.uid)
            grads[tensor.uid] = grad if existing is None else existing + grad
    return GradientMap(grads)


def grad_check(
    function: Callable[[Tensor], Tensor],
    point: Tensor,
    eps: float = 1e-5,
    max_coordinates: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare reverse-mode gradients against central differences.

    Args:
        function: Pure map from a tensor to a scalar tensor
        point: Where to evaluate the gradient
        eps: Central-difference step
        max_coordinates: Check a seeded random subset of coordinates instead of all
        seed: Seed for the coordinate subset

    Returns:
        max over checked coordinates of |g_ad - g_fd| / max(1, |g_fd|)

    Raises:
        ContractError: If eps is not positive
        OracleError: If the function value is not finite
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")

    leaf = point.as_parameter()
    with OpGraph() as graph:
        value = function(leaf)
    if not value.is_finite():
        raise OracleError("Function value is not finite at the check point")
    analytic = backward(graph, value)[leaf].data.reshape(-1)

    base = point.numpy()
    flat = base.reshape(-1)
    indices = np.arange(flat.size)
    if max_coordinates is not None and max_coordinates < flat.size:
        chosen = np.random.default_rng(seed).choice(flat.size, max_coordinates, replace=False)
        indices = np.sort(chosen)

    worst = 0.0
    for index in indices:
        original = flat[index]
        flat[index] = original + eps
        f_plus = _scalar(function(Tensor(base)))
        flat[index] = original - eps
        f_minus = _scalar(function(Tensor(base)))
        flat[index] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise OracleError(f"Function value is not finite near coordinate {int(index)}")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        error = abs(float(analytic[index]) - numeric) / max(1.0, abs(numeric))
        worst = max(worst, error)
    return worst


def _scalar(tensor: Tensor) -> float:
    if tensor.size != 1:
        raise ContractError(f"Expected a scalar output, got shape {tensor.shape}")
    return float(tensor.data.reshape(-1)[0])
