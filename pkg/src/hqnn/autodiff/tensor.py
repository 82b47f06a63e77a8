"""Dense tensors and the append-only tape used for reverse-mode differentiation.

A tensor produced by an operation on at least one ``requires_grad`` input is
recorded as a node on a :class:`Graph`. Leaves (parameters, inputs) never belong
to a graph, so they can be handed to another thread once the graph that
references them is dropped.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ContractError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A float64 n-dimensional array with an optional gradient."""

    __slots__ = ("data", "requires_grad", "grad", "graph", "node_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.graph: Graph | None = None
        self.node_id: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.graph is None:
            raise ContractError("tensor was not produced by a recorded operation")
        self.graph.backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the actual ops live in functional.
    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)


@dataclass
class Node:
    tag: str
    inputs: tuple[Tensor, ...]
    backward: BackwardFn
    output: Tensor


class Graph:
    """Append-only list of recorded operations.

    Node inputs always precede the node, so reverse append order is a valid
    reverse topological order.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, tag: str, inputs: Sequence[Tensor], data: np.ndarray, backward: BackwardFn) -> Tensor:
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = True
        out.grad = None
        out.graph = self
        out.node_id = len(self.nodes)
        out.name = None
        self.nodes.append(Node(tag, tuple(inputs), backward, out))
        return out

    def absorb(self, other: Graph) -> None:
        """Move every node of ``other`` to the end of this graph.

        Both graphs are independently topologically ordered and share no
        nodes, so appending one after the other keeps the ordering valid.
        """
        offset = len(self.nodes)
        for node in other.nodes:
            node.output.graph = self
            node.output.node_id += offset
            self.nodes.append(node)
        other.nodes = []

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every leaf that requires it.

        Gradients accumulate into existing ``grad`` arrays; zero them first to
        get a fresh gradient.
        """
        if loss.graph is not self or loss.node_id is None:
            raise ContractError("loss tensor does not belong to this graph")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

        pending: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
        for idx in range(loss.node_id, -1, -1):
            g = pending.pop(idx, None)
            if g is None:
                continue
            node = self.nodes[idx]
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.node_id is not None:
                    if inp.node_id in pending:
                        pending[inp.node_id] = pending[inp.node_id] + gi
                    else:
                        pending[inp.node_id] = gi
                elif inp.grad is None:
                    inp.grad = np.array(gi, dtype=np.float64).reshape(inp.shape)
                else:
                    inp.grad = inp.grad + gi


def record(tag: str, inputs: Sequence[Tensor], data: np.ndarray, backward: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of an op, recording it if any input needs a gradient."""
    graph = None
    tracked = False
    for t in inputs:
        if t.graph is not None:
            if graph is None:
                graph = t.graph
            elif t.graph is not graph:
                graph.absorb(t.graph)
        tracked = tracked or t.requires_grad
    if not tracked:
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out.graph = None
        out.node_id = None
        out.name = None
        return out
    if graph is None:
        graph = Graph()
    return graph.record(tag, inputs, data, backward)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)
