from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from app.utils.errors import NumericalError, ShapeError
from app.utils.variable_types import NodeId

LEAF = "leaf"


@dataclass
class Node:
    kind: str
    inputs: tuple
    attrs: Dict[str, Any]
    value: np.ndarray
    name: Optional[str] = None
    trainable: bool = False


@dataclass
class Tape:
    """
    Eager record of one forward computation. Node ids are list indices, so every
    input id is smaller than the id of its consumer.
    """

    nodes: List[Node] = field(default_factory=list)
    parameters: Dict[str, NodeId] = field(default_factory=dict)

    def leaf(self, value, name: Optional[str] = None, trainable: bool = False) -> NodeId:
        array = np.array(value, dtype=np.float64)
        self.nodes.append(Node(LEAF, (), {}, array, name=name, trainable=trainable))
        return len(self.nodes) - 1

    def constant(self, value) -> NodeId:
        return self.leaf(value)

    def parameter(self, name: str, value) -> NodeId:
        if name in self.parameters:
            raise ValueError(f"parameter {name} is already on the tape")
        node_id = self.leaf(value, name=name, trainable=True)
        self.parameters[name] = node_id
        return node_id

    def value(self, node_id: NodeId) -> np.ndarray:
        return self.nodes[node_id].value

    def shape(self, node_id: NodeId) -> tuple:
        return self.nodes[node_id].value.shape

    def apply(self, kind: str, *inputs: NodeId, **attrs) -> NodeId:
        return apply_primitive(self, kind, inputs, attrs)


def apply_primitive(tape: Tape, kind: str, inputs: Sequence[NodeId], attrs: Optional[Dict[str, Any]] = None) -> NodeId:
    from app.domain.autodiff.primitives import get_primitive

    attrs = attrs or {}
    primitive = get_primitive(kind)
    values = [tape.nodes[i].value for i in inputs]
    primitive.check([v.shape for v in values], attrs)
    out = np.asarray(primitive.forward(values, attrs), dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"{kind} produced non-finite values")
    tape.nodes.append(Node(kind, tuple(inputs), attrs, out))
    return len(tape.nodes) - 1


def backward(tape: Tape, loss: NodeId) -> Dict[str, np.ndarray]:
    """
    Reverse sweep from a scalar loss. Returns one gradient per trainable leaf;
    leaves the loss does not reach get zeros of their own shape.
    """
    from app.domain.autodiff.primitives import get_primitive

    loss_value = tape.value(loss)
    if loss_value.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {list(loss_value.shape)}")

    pending: Dict[NodeId, np.ndarray] = {loss: np.ones(())}
    gradients: Dict[str, np.ndarray] = {}
    for node_id in range(loss, -1, -1):
        grad = pending.pop(node_id, None)
        if grad is None:
            continue
        node = tape.nodes[node_id]
        if node.kind == LEAF:
            if node.trainable:
                gradients[node.name] = grad
            continue
        primitive = get_primitive(node.kind)
        in_values = [tape.nodes[i].value for i in node.inputs]
        for input_id, input_grad in zip(node.inputs, primitive.vjp(grad, in_values, node.value, node.attrs)):
            if input_grad is None:
                continue
            pending[input_id] = pending[input_id] + input_grad if input_id in pending else input_grad

    for name, node_id in tape.parameters.items():
        if name not in gradients:
            gradients[name] = np.zeros_like(tape.value(node_id))
    return gradients
