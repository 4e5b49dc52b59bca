import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from app.domain.autodiff.optim import AdamW
from app.domain.autodiff.tape import Tape, backward
from app.domain.corpus.generator import CorpusData, iter_batches
from app.domain.entities.arch_state import ArchState, CostVector, SearchRecord, SearchResult
from app.domain.entities.model_spec import ModelSpec
from app.domain.entities.parameters import Parameters
from app.domain.operators.mixer import SoftChoice
from app.domain.operators.model import HybridModel, bind_parameters, model_forward, soft_arch
from app.domain.ports.input_port.search_service import ISearchUseCase
from app.domain.search.relaxation import (
    anneal_schedule,
    discretize,
    routing_diagnostics,
    routing_probs_node,
    search_loss,
)
from app.infrastructure.dto.config_schema import SearchConfig
from app.infrastructure.dto.reports_schema import SweepRecord
from app.utils.constants import SEARCH_LOG_COLUMNS
from app.utils.errors import AppError, ErrorType, FreezeViolationError
from app.utils.logger import log

ALPHA_PREFIX = "alpha."


def search_window_loss(window: np.ndarray, teacher_logits: np.ndarray, params: Parameters, spec: ModelSpec,
                       state: ArchState, cost: CostVector, tau: float, lam: float
                       ) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
    """Search loss of one window; model weights are tape constants, alphas the only trainable leaves."""
    tape = Tape()
    bound = bind_parameters(tape, params)
    operators = state.space.operators
    probs = {
        layer: routing_probs_node(tape, tape.parameter(ArchState.parameter_name(layer), state.alpha[layer]),
                                  state.t_arch)
        for layer in state.searchable_layers
    }
    mixers = soft_arch({layer: SoftChoice(node, operators) for layer, node in probs.items()}, spec.n_layers)
    result = model_forward(tape, window[:-1], bound, spec, mixers)
    total, kl, expected_cost = search_loss(tape, teacher_logits, result.logits, probs, cost, tau, lam)
    values = {"L_KL": float(tape.value(kl)), "L_cost": float(tape.value(expected_cost)),
              "L_search": float(tape.value(total))}
    return values, backward(tape, total)


def search_step(windows: Sequence[np.ndarray], teacher_logits: Sequence[np.ndarray], params: Parameters,
                spec: ModelSpec, state: ArchState, cost: CostVector, cfg: SearchConfig, optimizer: AdamW,
                step: int) -> Tuple[ArchState, SearchRecord]:
    """
    One optimizer update of the architecture logits from the averaged
    gradient of `windows` (all micro-batches of the step). Any gradient on a
    model weight, or any change of the weights, is a freeze violation.
    """
    digest = params.digest()
    totals: Dict[str, np.ndarray] = {}
    losses: List[Dict[str, float]] = []
    for window, logits in zip(windows, teacher_logits):
        values, grads = search_window_loss(window, logits, params, spec, state, cost, cfg.tau, cfg.lam)
        leaked = [name for name, g in grads.items() if not name.startswith(ALPHA_PREFIX) and np.any(g != 0)]
        if leaked:
            raise FreezeViolationError(f"search produced gradients for model weights: {leaked[:5]}")
        losses.append(values)
        for name, grad in grads.items():
            totals[name] = totals[name] + grad if name in totals else grad
    grads = {name: grad / len(losses) for name, grad in totals.items()}
    current = {ArchState.parameter_name(layer): logits for layer, logits in state.alpha.items()}
    updated = optimizer.step(current, grads)
    if params.digest() != digest:
        raise FreezeViolationError("model weights changed during an architecture step")

    new_state = state.copy()
    for layer in state.searchable_layers:
        new_state.alpha[layer] = updated[ArchState.parameter_name(layer)]
    mean = {key: float(np.mean([v[key] for v in losses])) for key in ("L_KL", "L_cost", "L_search")}
    record = SearchRecord(step=step, l_kl=mean["L_KL"], l_cost=mean["L_cost"], l_search=mean["L_search"],
                          t_arch=state.t_arch)
    return new_state, record


def search_log_frame(records: Sequence[SearchRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.as_row() for r in records], columns=SEARCH_LOG_COLUMNS)


def select_operating_point(records: Sequence[SweepRecord], target_budget: float) -> SweepRecord:
    """Run whose realized budget is closest to the target; ties by lower held-out KL, then smaller lambda."""
    usable = [r for r in records if not r.failed and r.budget is not None]
    if not usable:
        raise AppError(ErrorType.VALIDATION_ERROR, "no successful sweep run to choose an operating point from")
    return min(usable, key=lambda r: (abs(r.budget - target_budget),
                                      r.heldout_kl if r.heldout_kl is not None else math.inf, r.lam, r.seed))


class SearchUseCaseImpl(ISearchUseCase):

    def run_search(self, cfg: SearchConfig, spec: ModelSpec, teacher: Parameters, candidates: Parameters,
                   corpus: CorpusData) -> SearchResult:
        self.set_logging_headers(f"Architecture search (lambda={cfg.lam}, seed={cfg.seed})")
        cost = CostVector.for_window(cfg.candidate_space, spec.window, cfg.seq_len)
        state = ArchState.initial(spec.n_layers, cfg.candidate_space, cfg.t_arch_initial)
        teacher_model = HybridModel.teacher(spec, teacher)
        batches = iter_batches(corpus.train, cfg.micro_batch, cfg.seq_len, cfg.seed)
        optimizer = AdamW(lr_for=lambda name: cfg.lr_alpha, weight_decay=0.0)
        digest = candidates.digest()

        records = []
        n_updates = math.ceil(cfg.steps / cfg.grad_accum)
        for update in range(n_updates):
            micro_step = update * cfg.grad_accum
            state.t_arch = anneal_schedule(micro_step, cfg.t_arch_initial, cfg.t_arch_final, cfg.anneal_steps,
                                           cfg.anneal)
            windows = np.concatenate([next(batches) for _ in range(cfg.grad_accum)])
            teacher_logits = [teacher_model.logits(w[:-1]) for w in windows]
            state, record = search_step(windows, teacher_logits, candidates, spec, state, cost, cfg, optimizer,
                                        micro_step)
            records.append(record)
            self.log_progress(update, max(cfg.log_every // cfg.grad_accum, 1), L_KL=record.l_kl,
                              L_cost=record.l_cost, T_arch=record.t_arch)

        if candidates.digest() != digest:
            raise FreezeViolationError("model weights changed during search")
        state.t_arch = anneal_schedule(cfg.steps, cfg.t_arch_initial, cfg.t_arch_final, cfg.anneal_steps, cfg.anneal)
        arch = discretize(state, cost)
        diagnostics = routing_diagnostics(state)
        log(f"Search finished: {arch.mnemonics()} avg_entropy={diagnostics.avg_entropy:.4f} "
            f"avg_margin={diagnostics.avg_margin:.4f} ambiguous={diagnostics.ambiguous_count}")
        return SearchResult(state=state, arch=arch, diagnostics=diagnostics, log=records)
