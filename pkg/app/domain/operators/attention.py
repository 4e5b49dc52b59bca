from typing import Dict, Optional

import numpy as np

from app.domain.autodiff.tape import Tape
from app.utils.constants import MASK_VALUE
from app.utils.errors import AppError, ErrorType, ShapeError
from app.utils.variable_types import NodeId

LayerWeights = Dict[str, NodeId]


def causal_mask(seq_len: int) -> np.ndarray:
    return np.triu(np.full((seq_len, seq_len), MASK_VALUE), k=1)


def window_mask(seq_len: int, window: int) -> np.ndarray:
    """Causal mask that also hides every key older than window - 1 positions."""
    if window < 1:
        raise AppError(ErrorType.VALIDATION_ERROR, f"window size must be >= 1, got {window}")
    mask = causal_mask(seq_len)
    for query in range(seq_len):
        mask[query, :max(0, query - window + 1)] = MASK_VALUE
    return mask


def check_length(tape: Tape, x: NodeId, t_max: Optional[int]):
    seq_len = tape.shape(x)[0]
    if t_max is not None and seq_len > t_max:
        raise ShapeError(f"sequence length {seq_len} exceeds t_max={t_max}")


def head_columns(head: int, d_head: int) -> tuple:
    return (slice(None), slice(head * d_head, (head + 1) * d_head))


def multi_head_attention(tape: Tape, x: NodeId, weights: LayerWeights, n_heads: int, mask: np.ndarray) -> NodeId:
    """Softmax attention with an additive mask over the shared attn.* projections."""
    width = tape.shape(x)[1]
    d_head = width // n_heads
    q = tape.apply("matmul", x, weights["attn.wq"])
    k = tape.apply("matmul", x, weights["attn.wk"])
    v = tape.apply("matmul", x, weights["attn.wv"])
    heads = []
    for head in range(n_heads):
        cols = head_columns(head, d_head)
        q_h = tape.apply("slice", q, index=cols)
        k_h = tape.apply("slice", k, index=cols)
        v_h = tape.apply("slice", v, index=cols)
        scores = tape.apply("scale", tape.apply("matmul", q_h, tape.apply("transpose", k_h)),
                            factor=1.0 / np.sqrt(d_head))
        weights_h = tape.apply("softmax", scores, mask=mask)
        heads.append(tape.apply("matmul", weights_h, v_h))
    mixed = tape.apply("concat", *heads, axis=1) if n_heads > 1 else heads[0]
    return tape.apply("matmul", mixed, weights["attn.wo"])


def full_attention(tape: Tape, x: NodeId, weights: LayerWeights, n_heads: int, t_max: Optional[int] = None) -> NodeId:
    check_length(tape, x, t_max)
    return multi_head_attention(tape, x, weights, n_heads, causal_mask(tape.shape(x)[0]))


def window_attention(tape: Tape, x: NodeId, weights: LayerWeights, n_heads: int, window: int,
                     t_max: Optional[int] = None) -> NodeId:
    check_length(tape, x, t_max)
    return multi_head_attention(tape, x, weights, n_heads, window_mask(tape.shape(x)[0], window))
