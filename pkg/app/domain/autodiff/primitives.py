"""
Primitive registry of the autodiff tape.

Every primitive owns a shape rule (`check`), an eager `forward` and a
vector-Jacobian product `vjp(grad, inputs, out, attrs)` that returns one
gradient per input (None for inputs that are not differentiable).

Shape rules:
    matmul          [m,k] x [k,n] -> [m,n]
    transpose       [m,n] -> [n,m]
    add / subtract / multiply
                    numpy broadcasting of the two shapes
    scale           any -> same (attr factor)
    softmax / log_softmax
                    any -> same, over the last axis (softmax takes an optional
                    additive `mask` of the input shape)
    layer_norm      any -> same, over the last axis, no affine terms
    l2_normalize    [T,d] -> [T,d], per group of d/groups columns
    sigmoid / silu  any -> same
    sum             any -> [] or the input with `axis` removed
    mean            any -> []
    sq_frobenius    any -> []
    embedding       table [V,d] with attr ids [T] -> [T,d]
    slice           any -> shape of x[index] (attr index)
    concat          n inputs agreeing off `axis` -> concatenation
    delta_scan      q,k,v [T,d], g,beta [T,H] -> [T,d] (gated delta rule, H heads)
"""
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from app.utils.constants import KEY_NORM_EPS, LAYER_NORM_EPS, MASK_VALUE
from app.utils.errors import ShapeError

PRIMITIVES: Dict[str, "Primitive"] = {}


def register_primitive(name: str) -> Callable:
    def register_primitive_cls(cls):
        if name in PRIMITIVES:
            raise ValueError(f"Cannot register duplicate primitive ({name})")
        instance = cls()
        instance.name = name
        PRIMITIVES[name] = instance
        return cls
    return register_primitive_cls


def get_primitive(name: str) -> "Primitive":
    try:
        return PRIMITIVES[name]
    except KeyError:
        raise ValueError(f"unknown primitive: {name}") from None


def _shape_error(name: str, shapes: Sequence[tuple], detail: str) -> ShapeError:
    return ShapeError(f"{name}: {detail} (input shapes {[list(s) for s in shapes]})")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def softmax_array(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def log_softmax_array(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def sigmoid_array(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Primitive(ABC):
    name: str = ""
    arity: Optional[int] = 1

    def check(self, shapes: Sequence[tuple], attrs: Dict[str, Any]) -> None:
        if self.arity is not None and len(shapes) != self.arity:
            raise _shape_error(self.name, shapes, f"expects {self.arity} inputs")

    @abstractmethod
    def forward(self, inputs: List[np.ndarray], attrs: Dict[str, Any]) -> np.ndarray:
        pass

    @abstractmethod
    def vjp(self, grad: np.ndarray, inputs: List[np.ndarray], out: np.ndarray, attrs: Dict[str, Any]) -> list:
        pass


@register_primitive("matmul")
class MatMul(Primitive):
    arity = 2

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        a, b = shapes
        if len(a) != 2 or len(b) != 2 or a[1] != b[0]:
            raise _shape_error(self.name, shapes, "needs [m,k] x [k,n]")

    def forward(self, inputs, attrs):
        return inputs[0] @ inputs[1]

    def vjp(self, grad, inputs, out, attrs):
        a, b = inputs
        return [grad @ b.T, a.T @ grad]


@register_primitive("transpose")
class Transpose(Primitive):

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        if len(shapes[0]) != 2:
            raise _shape_error(self.name, shapes, "needs a matrix")

    def forward(self, inputs, attrs):
        return inputs[0].T

    def vjp(self, grad, inputs, out, attrs):
        return [grad.T]


class _Broadcasting(Primitive):
    arity = 2

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        try:
            np.broadcast_shapes(*shapes)
        except ValueError:
            raise _shape_error(self.name, shapes, "shapes do not broadcast") from None


@register_primitive("add")
class Add(_Broadcasting):

    def forward(self, inputs, attrs):
        return inputs[0] + inputs[1]

    def vjp(self, grad, inputs, out, attrs):
        return [_unbroadcast(grad, inputs[0].shape), _unbroadcast(grad, inputs[1].shape)]


@register_primitive("subtract")
class Subtract(_Broadcasting):

    def forward(self, inputs, attrs):
        return inputs[0] - inputs[1]

    def vjp(self, grad, inputs, out, attrs):
        return [_unbroadcast(grad, inputs[0].shape), _unbroadcast(-grad, inputs[1].shape)]


@register_primitive("multiply")
class Multiply(_Broadcasting):

    def forward(self, inputs, attrs):
        return inputs[0] * inputs[1]

    def vjp(self, grad, inputs, out, attrs):
        a, b = inputs
        return [_unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)]


@register_primitive("scale")
class Scale(Primitive):

    def forward(self, inputs, attrs):
        return inputs[0] * attrs["factor"]

    def vjp(self, grad, inputs, out, attrs):
        return [grad * attrs["factor"]]


@register_primitive("softmax")
class Softmax(Primitive):
    """
    Softmax over the last axis after adding `mask` (0 or MASK_VALUE entries).
    A row whose mask entries are all masked outputs zeros.
    """

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        mask = attrs.get("mask")
        if len(shapes[0]) == 0:
            raise _shape_error(self.name, shapes, "needs at least one axis")
        if mask is not None and np.shape(mask) != tuple(shapes[0]):
            raise _shape_error(self.name, shapes, f"mask shape {list(np.shape(mask))} differs from input")

    def forward(self, inputs, attrs):
        mask = attrs.get("mask")
        if mask is None:
            return softmax_array(inputs[0])
        probs = softmax_array(inputs[0] + mask)
        dead_rows = np.all(mask <= MASK_VALUE / 2, axis=-1, keepdims=True)
        return np.where(dead_rows, 0.0, probs)

    def vjp(self, grad, inputs, out, attrs):
        return [out * (grad - np.sum(grad * out, axis=-1, keepdims=True))]


@register_primitive("log_softmax")
class LogSoftmax(Primitive):

    def forward(self, inputs, attrs):
        return log_softmax_array(inputs[0])

    def vjp(self, grad, inputs, out, attrs):
        return [grad - np.exp(out) * np.sum(grad, axis=-1, keepdims=True)]


@register_primitive("layer_norm")
class LayerNorm(Primitive):
    """(x - mean) / sqrt(var + eps) over the last axis; a constant row maps to zeros."""

    def forward(self, inputs, attrs):
        x = inputs[0]
        centered = x - x.mean(axis=-1, keepdims=True)
        return centered / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + LAYER_NORM_EPS)

    def vjp(self, grad, inputs, out, attrs):
        x = inputs[0]
        centered = x - x.mean(axis=-1, keepdims=True)
        std = np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + LAYER_NORM_EPS)
        mean_grad = grad.mean(axis=-1, keepdims=True)
        mean_grad_out = (grad * out).mean(axis=-1, keepdims=True)
        return [(grad - mean_grad - out * mean_grad_out) / std]


@register_primitive("l2_normalize")
class L2Normalize(Primitive):
    """Row-wise x / sqrt(|x|^2 + eps), applied per group of columns (one group per head)."""

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        groups = attrs.get("groups", 1)
        if len(shapes[0]) != 2 or shapes[0][1] % groups != 0:
            raise _shape_error(self.name, shapes, f"needs [T,d] with d divisible by groups={groups}")

    @staticmethod
    def _grouped(x, attrs):
        groups = attrs.get("groups", 1)
        return x.reshape(x.shape[0], groups, x.shape[1] // groups)

    def forward(self, inputs, attrs):
        x = self._grouped(inputs[0], attrs)
        norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True) + KEY_NORM_EPS)
        return (x / norm).reshape(inputs[0].shape)

    def vjp(self, grad, inputs, out, attrs):
        x = self._grouped(inputs[0], attrs)
        g = self._grouped(grad, attrs)
        norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True) + KEY_NORM_EPS)
        dx = g / norm - x * np.sum(g * x, axis=-1, keepdims=True) / norm ** 3
        return [dx.reshape(inputs[0].shape)]


@register_primitive("sigmoid")
class Sigmoid(Primitive):

    def forward(self, inputs, attrs):
        return sigmoid_array(inputs[0])

    def vjp(self, grad, inputs, out, attrs):
        return [grad * out * (1.0 - out)]


@register_primitive("silu")
class SiLU(Primitive):

    def forward(self, inputs, attrs):
        return inputs[0] * sigmoid_array(inputs[0])

    def vjp(self, grad, inputs, out, attrs):
        s = sigmoid_array(inputs[0])
        return [grad * (s + inputs[0] * s * (1.0 - s))]


@register_primitive("sum")
class Sum(Primitive):

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        axis = attrs.get("axis")
        if axis is not None and not -len(shapes[0]) <= axis < len(shapes[0]):
            raise _shape_error(self.name, shapes, f"axis {axis} out of range")

    def forward(self, inputs, attrs):
        return np.sum(inputs[0], axis=attrs.get("axis"))

    def vjp(self, grad, inputs, out, attrs):
        axis = attrs.get("axis")
        if axis is not None:
            grad = np.expand_dims(grad, axis)
        return [np.broadcast_to(grad, inputs[0].shape).copy()]


@register_primitive("mean")
class Mean(Primitive):

    def forward(self, inputs, attrs):
        return np.mean(inputs[0])

    def vjp(self, grad, inputs, out, attrs):
        return [np.full(inputs[0].shape, grad / max(inputs[0].size, 1))]


@register_primitive("sq_frobenius")
class SquaredFrobenius(Primitive):

    def forward(self, inputs, attrs):
        return np.sum(inputs[0] * inputs[0])

    def vjp(self, grad, inputs, out, attrs):
        return [2.0 * grad * inputs[0]]


@register_primitive("embedding")
class Embedding(Primitive):
    """Row lookup table[ids]; the token ids live in attrs and get no gradient."""

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        ids = np.asarray(attrs["ids"])
        if len(shapes[0]) != 2 or ids.ndim != 1:
            raise _shape_error(self.name, shapes, "needs table [V,d] and ids [T]")
        if ids.size and (ids.min() < 0 or ids.max() >= shapes[0][0]):
            raise _shape_error(self.name, shapes, f"token id out of range [0, {shapes[0][0]})")

    def forward(self, inputs, attrs):
        return inputs[0][np.asarray(attrs["ids"])]

    def vjp(self, grad, inputs, out, attrs):
        table_grad = np.zeros_like(inputs[0])
        np.add.at(table_grad, np.asarray(attrs["ids"]), grad)
        return [table_grad]


@register_primitive("slice")
class Slice(Primitive):

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        try:
            result = np.empty(shapes[0])[attrs["index"]]
        except IndexError as err:
            raise _shape_error(self.name, shapes, str(err)) from None
        if result.size == 0:
            raise _shape_error(self.name, shapes, f"index {attrs['index']} selects nothing")

    def forward(self, inputs, attrs):
        return inputs[0][attrs["index"]].copy()

    def vjp(self, grad, inputs, out, attrs):
        full = np.zeros_like(inputs[0])
        full[attrs["index"]] = grad
        return [full]


@register_primitive("concat")
class Concat(Primitive):
    arity = None

    def check(self, shapes, attrs):
        axis = attrs.get("axis", -1)
        if not shapes:
            raise _shape_error(self.name, shapes, "needs at least one input")
        reference = list(shapes[0])
        for shape in shapes[1:]:
            if len(shape) != len(reference):
                raise _shape_error(self.name, shapes, "rank mismatch")
            for dim, (a, b) in enumerate(zip(reference, shape)):
                if dim != axis % len(reference) and a != b:
                    raise _shape_error(self.name, shapes, f"mismatch off axis {axis}")

    def forward(self, inputs, attrs):
        return np.concatenate(inputs, axis=attrs.get("axis", -1))

    def vjp(self, grad, inputs, out, attrs):
        axis = attrs.get("axis", -1)
        cuts = np.cumsum([x.shape[axis] for x in inputs])[:-1]
        return list(np.split(grad, cuts, axis=axis))


def delta_scan_states(q, k, v, g, beta, n_heads):
    """
    Gated delta rule per head, with the value-by-key state S:
        S_t = g_t S_{t-1} + beta_t (v_t - S_{t-1} k_t) k_t^T,   y_t = S_t^T q_t
    The state is stored transposed (M = S^T, [d_k, d_v]), so the write is
    M_t = g_t M_{t-1} + beta_t k_t (v_t - M_{t-1}^T k_t)^T and the read is y_t = M_t q_t.
    Returns the outputs and the T+1 stored states (M_0 = 0).
    """
    steps, width = q.shape
    d_head = width // n_heads
    shaped = [x.reshape(steps, n_heads, d_head) for x in (q, k, v)]
    state = np.zeros((n_heads, d_head, d_head))
    states = [state]
    outputs = np.zeros((steps, n_heads, d_head))
    for t in range(steps):
        q_t, k_t, v_t = (x[t] for x in shaped)
        error = v_t - np.einsum("hij,hi->hj", state, k_t)
        state = g[t][:, None, None] * state + beta[t][:, None, None] * k_t[:, :, None] * error[:, None, :]
        outputs[t] = np.einsum("hij,hj->hi", state, q_t)
        states.append(state)
    return outputs.reshape(steps, width), states


@register_primitive("delta_scan")
class DeltaScan(Primitive):
    arity = 5

    def check(self, shapes, attrs):
        super().check(shapes, attrs)
        n_heads = attrs["n_heads"]
        q, k, v, g, beta = shapes
        if len(q) != 2 or q != k or q != v or q[1] % n_heads:
            raise _shape_error(self.name, shapes, "q, k, v must share shape [T,d] with d divisible by n_heads")
        if g != (q[0], n_heads) or beta != (q[0], n_heads):
            raise _shape_error(self.name, shapes, f"gates must be [T,{n_heads}]")

    def forward(self, inputs, attrs):
        return delta_scan_states(*inputs, attrs["n_heads"])[0]

    def vjp(self, grad, inputs, out, attrs):
        q, k, v, g, beta = inputs
        n_heads = attrs["n_heads"]
        steps, width = q.shape
        d_head = width // n_heads
        _, states = delta_scan_states(q, k, v, g, beta, n_heads)
        qs, ks, vs, dys = (x.reshape(steps, n_heads, d_head) for x in (q, k, v, grad))
        dq, dk, dv = (np.zeros((steps, n_heads, d_head)) for _ in range(3))
        dg, dbeta = np.zeros_like(g), np.zeros_like(beta)
        d_state = np.zeros((n_heads, d_head, d_head))
        for t in range(steps - 1, -1, -1):
            prev, cur = states[t], states[t + 1]
            k_t, b_t = ks[t], beta[t][:, None]
            d_state = d_state + dys[t][:, :, None] * qs[t][:, None, :]
            dq[t] = np.einsum("hij,hi->hj", cur, dys[t])
            error = vs[t] - np.einsum("hij,hi->hj", prev, k_t)
            dbeta[t] = np.einsum("hi,hij,hj->h", k_t, d_state, error)
            d_error = b_t * np.einsum("hij,hi->hj", d_state, k_t)
            dk[t] = b_t * np.einsum("hij,hj->hi", d_state, error) - np.einsum("hij,hj->hi", prev, d_error)
            dg[t] = np.einsum("hij,hij->h", d_state, prev)
            dv[t] = d_error
            d_state = g[t][:, None, None] * d_state - k_t[:, :, None] * d_error[:, None, :]
        return [dq.reshape(steps, width), dk.reshape(steps, width), dv.reshape(steps, width), dg, dbeta]
