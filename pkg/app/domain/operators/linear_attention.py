from typing import Optional

from app.domain.autodiff.tape import Tape
from app.domain.operators.attention import LayerWeights, check_length
from app.utils.variable_types import NodeId


def linear_attention(tape: Tape, x: NodeId, weights: LayerWeights, n_heads: int, t_max: Optional[int] = None) -> NodeId:
    """
    Per-head gated delta rule over the linear.* projections.

    Keys are L2-normalized per head, the forget gate g and the write strength
    beta are per-head sigmoids of the input, and the recurrent state starts at
    zero. See primitives.delta_scan_states for the recurrence.
    """
    check_length(tape, x, t_max)
    q = tape.apply("matmul", x, weights["linear.wq"])
    k = tape.apply("l2_normalize", tape.apply("matmul", x, weights["linear.wk"]), groups=n_heads)
    v = tape.apply("matmul", x, weights["linear.wv"])
    gate = tape.apply("sigmoid", tape.apply("matmul", x, weights["linear.wg"]))
    beta = tape.apply("sigmoid", tape.apply("matmul", x, weights["linear.wb"]))
    mixed = tape.apply("delta_scan", q, k, v, gate, beta, n_heads=n_heads)
    return tape.apply("matmul", mixed, weights["linear.wo"])
