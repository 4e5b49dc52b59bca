"""
Continuous relaxation of the per-layer operator choice: routing, expected
cost, the cost-regularized search objective, temperature annealing and the
hard argmax that turns routing into a deployable architecture.

Layer 0 is held FULL while searching, owns no logits and is instantiated as
LINEAR in the final model.
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.domain.autodiff.primitives import softmax_array
from app.domain.autodiff.tape import Tape
from app.domain.entities.arch_state import ArchState, CostVector, LayerRouting, RoutingDiagnostics
from app.domain.entities.model_spec import HybridArch, OperatorKind
from app.domain.operators.losses import kl_distill_loss
from app.utils.constants import AMBIGUOUS_MARGIN
from app.utils.errors import AppError, ErrorType
from app.utils.variable_types import NodeId


def routing_probs(alpha: np.ndarray, t_arch: float) -> np.ndarray:
    if t_arch <= 0:
        raise ValueError(f"T_arch must be positive, got {t_arch}")
    return softmax_array(np.asarray(alpha, dtype=np.float64) * (1.0 / t_arch))


def routing_probs_node(tape: Tape, alpha: NodeId, t_arch: float) -> NodeId:
    if t_arch <= 0:
        raise ValueError(f"T_arch must be positive, got {t_arch}")
    return tape.apply("softmax", tape.apply("scale", alpha, factor=1.0 / t_arch))


def all_routing_probs(state: ArchState) -> Dict[int, np.ndarray]:
    return {layer: routing_probs(state.alpha[layer], state.t_arch) for layer in state.searchable_layers}


def cost_value(probs: Dict[int, np.ndarray], cost: CostVector) -> float:
    """Expected cost summed over the searchable layers only."""
    weights = cost.as_array()
    return float(sum(np.dot(p, weights) for _, p in sorted(probs.items())))


def cost_loss(state: ArchState, cost: CostVector) -> float:
    return cost_value(all_routing_probs(state), cost)


def cost_loss_node(tape: Tape, probs: Dict[int, NodeId], cost: CostVector) -> NodeId:
    weights = tape.constant(cost.as_array())
    total = None
    for _, node in sorted(probs.items()):
        term = tape.apply("sum", tape.apply("multiply", node, weights))
        total = term if total is None else tape.apply("add", total, term)
    return total if total is not None else tape.constant(0.0)


def search_loss(tape: Tape, teacher_logits: np.ndarray, student_logits: NodeId, probs: Dict[int, NodeId],
                cost: CostVector, tau: float, lam: float) -> Tuple[NodeId, NodeId, NodeId]:
    """L_search = L_KL + lambda * L_cost. Returns (L_search, L_KL, L_cost) nodes."""
    kl = kl_distill_loss(tape, teacher_logits, student_logits, tau)
    expected_cost = cost_loss_node(tape, probs, cost)
    total = tape.apply("add", kl, tape.apply("scale", expected_cost, factor=lam))
    return total, kl, expected_cost


def anneal_schedule(step: int, t_initial: float, t_final: float, anneal_steps: int, anneal: bool = True) -> float:
    """
    Geometric interpolation T_init * (T_final / T_init) ** (step / anneal_steps),
    held at T_final afterwards. With anneal=False the temperature stays at T_init.
    """
    if not anneal:
        return t_initial
    if anneal_steps <= 0 or step >= anneal_steps:
        return t_final
    return t_initial * (t_final / t_initial) ** (max(step, 0) / anneal_steps)


def cheapest_argmax(probs: np.ndarray, operators: Sequence[OperatorKind], cost: CostVector) -> OperatorKind:
    """Argmax of `probs`; exact ties go to the operator with the lower cost."""
    order = sorted(range(len(operators)), key=lambda i: (cost.cost_of(operators[i]), i))
    best = order[0]
    for index in order[1:]:
        if probs[index] > probs[best]:
            best = index
    return operators[best]


def searchable_allocation(state: ArchState, cost: CostVector) -> List[OperatorKind]:
    operators = state.space.operators
    return [cheapest_argmax(p, operators, cost) for _, p in sorted(all_routing_probs(state).items())]


def discretize(state: ArchState, cost: CostVector) -> HybridArch:
    return HybridArch(ops=[OperatorKind.LINEAR] + searchable_allocation(state, cost))


def budget_matched_allocation(state: ArchState, budget: int) -> HybridArch:
    """
    Binary allocation with exactly `budget` FULL layers: the searchable layers
    with the highest FULL routing probability, ties to the lower layer index.
    Every other layer, layer 0 included, is LINEAR.
    """
    searchable = state.searchable_layers
    if not 0 <= budget <= len(searchable):
        raise AppError(ErrorType.VALIDATION_ERROR, f"budget {budget} outside [0, {len(searchable)}]")
    probs = all_routing_probs(state)
    full_index = state.space.operators.index(OperatorKind.FULL)
    ranked = sorted(searchable, key=lambda layer: (-probs[layer][full_index], layer))
    full = set(ranked[:budget])
    return HybridArch(ops=[OperatorKind.LINEAR] + [OperatorKind.FULL if layer in full else OperatorKind.LINEAR
                                                   for layer in searchable])


def realized_budget(arch: HybridArch, window: int, seq_len: int) -> float:
    counts = arch.counts()
    return counts[OperatorKind.FULL] + (min(window, seq_len) / seq_len) * counts[OperatorKind.WINDOW]


def layer_routing(layer: int, probs: np.ndarray) -> LayerRouting:
    positive = probs[probs > 0]
    ranked = np.sort(probs)[::-1]
    margin = ranked[0] - ranked[1] if ranked.size > 1 else 1.0
    return LayerRouting(layer=layer, entropy=float(-np.sum(positive * np.log(positive))),
                        top1=float(ranked[0]), margin=float(margin))


def routing_diagnostics(state: ArchState) -> RoutingDiagnostics:
    layers = [layer_routing(layer, p) for layer, p in sorted(all_routing_probs(state).items())]
    if not layers:
        return RoutingDiagnostics()
    return RoutingDiagnostics(
        layers=layers,
        avg_entropy=float(np.mean([r.entropy for r in layers])),
        avg_top1=float(np.mean([r.top1 for r in layers])),
        avg_margin=float(np.mean([r.margin for r in layers])),
        ambiguous_count=sum(1 for r in layers if r.margin < AMBIGUOUS_MARGIN),
    )
