from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from app.domain.autodiff.tape import Tape
from app.domain.entities.model_spec import ModelSpec, OperatorKind
from app.domain.operators.attention import LayerWeights, full_attention, window_attention
from app.domain.operators.linear_attention import linear_attention
from app.utils.constants import PROBS_SUM_TOL
from app.utils.errors import AppError, ErrorType
from app.utils.variable_types import NodeId


@dataclass(frozen=True)
class SoftChoice:
    """Routing probabilities (a tape node) over `candidates`, in the same order."""

    probs: NodeId
    candidates: Tuple[OperatorKind, ...]


Mixer = Union[OperatorKind, SoftChoice]


def apply_operator(tape: Tape, x: NodeId, weights: LayerWeights, kind: OperatorKind, spec: ModelSpec) -> NodeId:
    if kind is OperatorKind.FULL:
        return full_attention(tape, x, weights, spec.n_heads, spec.t_max)
    if kind is OperatorKind.WINDOW:
        return window_attention(tape, x, weights, spec.n_heads, spec.window, spec.t_max)
    return linear_attention(tape, x, weights, spec.n_heads, spec.t_max)


def soft_mix(tape: Tape, x: NodeId, weights: LayerWeights, choice: SoftChoice, spec: ModelSpec) -> NodeId:
    """
    Probability-weighted sum of every candidate evaluated on the same input.
    A one-hot choice reproduces the selected operator exactly.
    """
    probs = tape.value(choice.probs)
    if probs.shape != (len(choice.candidates),):
        raise AppError(ErrorType.VALIDATION_ERROR,
                       f"routing vector of shape {list(probs.shape)} for {len(choice.candidates)} candidates")
    if abs(float(np.sum(probs)) - 1.0) > PROBS_SUM_TOL:
        raise AppError(ErrorType.VALIDATION_ERROR, f"routing probabilities sum to {np.sum(probs)!r}, not 1")
    mixed = None
    for position, kind in enumerate(choice.candidates):
        weight = tape.apply("slice", choice.probs, index=(position,))
        term = tape.apply("multiply", apply_operator(tape, x, weights, kind, spec), weight)
        mixed = term if mixed is None else tape.apply("add", mixed, term)
    return mixed


def apply_mixer(tape: Tape, x: NodeId, weights: LayerWeights, mixer: Mixer, spec: ModelSpec) -> NodeId:
    if isinstance(mixer, SoftChoice):
        return soft_mix(tape, x, weights, mixer, spec)
    return apply_operator(tape, x, weights, OperatorKind(mixer), spec)
