"""
Selector baselines over the binary FULL/LINEAR space.

Greedy selectors score un-retrained single-layer flips with a caller-supplied
held-out KL; candidate scores of one step may be computed by any `map_fn`
(the built-in `map` or a worker pool) since the reduction that picks the
winner is deterministic.
"""
from typing import Callable, Iterable, List

from pydantic import Field, model_validator

from app.domain.entities.base_model import BaseDomainModel
from app.domain.entities.model_spec import HybridArch, OperatorKind
from app.utils.errors import AppError, ErrorType

ArchScore = Callable[[HybridArch], float]
MapFn = Callable[[ArchScore, Iterable[HybridArch]], Iterable[float]]


class SelectionStep(BaseDomainModel):
    layer: int
    scores: List[float]
    candidates: List[int]


class SelectorResult(BaseDomainModel):
    method: str
    arch: HybridArch
    budget: int = Field(ge=0)
    score_trace: List[SelectionStep] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_budget(self) -> "SelectorResult":
        n_full = self.arch.counts()[OperatorKind.FULL]
        if n_full != self.budget:
            raise ValueError(f"{self.method} produced {n_full} FULL layers for budget {self.budget}")
        return self


def _check_budget(n_layers: int, budget: int):
    if not 0 <= budget <= n_layers:
        raise AppError(ErrorType.VALIDATION_ERROR, f"budget {budget} outside [0, {n_layers}]")


def uniform_alloc(n_layers: int, budget: int) -> HybridArch:
    """FULL at floor((i + 0.5) L / B) for i < B, LINEAR elsewhere; B=0 gives all-LINEAR."""
    _check_budget(n_layers, budget)
    full = {int((i + 0.5) * n_layers // budget) for i in range(budget)}
    return HybridArch(ops=[OperatorKind.FULL if layer in full else OperatorKind.LINEAR for layer in range(n_layers)])


def _best_flip(arch: HybridArch, layers: List[int], to: OperatorKind, score: ArchScore, map_fn: MapFn,
               ) -> SelectionStep:
    flipped = [arch.with_layer(layer, to) for layer in layers]
    scores = [float(s) for s in map_fn(score, flipped)]
    # lowest held-out KL wins; ties go to the lower layer index
    best = min(range(len(layers)), key=lambda i: (scores[i], layers[i]))
    return SelectionStep(layer=layers[best], scores=scores, candidates=layers)


def greedy_add_select(n_layers: int, budget: int, score: ArchScore, map_fn: MapFn = map) -> SelectorResult:
    """Start all-LINEAR and add, B times, the FULL layer that lowers held-out KL the most."""
    _check_budget(n_layers, budget)
    arch = HybridArch.uniform(OperatorKind.LINEAR, n_layers)
    trace = []
    for _ in range(budget):
        remaining = [i for i, op in enumerate(arch.ops) if op is OperatorKind.LINEAR]
        step = _best_flip(arch, remaining, OperatorKind.FULL, score, map_fn)
        arch = arch.with_layer(step.layer, OperatorKind.FULL)
        trace.append(step)
    return SelectorResult(method="greedy_add", arch=arch, budget=budget, score_trace=trace)


def greedy_remove_select(n_layers: int, budget: int, score: ArchScore, map_fn: MapFn = map) -> SelectorResult:
    """Start all-FULL and turn, L - B times, the layer whose removal hurts held-out KL least into LINEAR."""
    _check_budget(n_layers, budget)
    arch = HybridArch.uniform(OperatorKind.FULL, n_layers)
    trace = []
    for _ in range(n_layers - budget):
        remaining = [i for i, op in enumerate(arch.ops) if op is OperatorKind.FULL]
        step = _best_flip(arch, remaining, OperatorKind.LINEAR, score, map_fn)
        arch = arch.with_layer(step.layer, OperatorKind.LINEAR)
        trace.append(step)
    return SelectorResult(method="greedy_remove", arch=arch, budget=budget, score_trace=trace)
