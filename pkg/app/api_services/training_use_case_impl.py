from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from app.domain.autodiff.optim import AdamW, LrSchedule, clip_by_global_norm, schedule_factor
from app.domain.autodiff.tape import Tape, backward
from app.domain.corpus.generator import CorpusData, fixed_windows, iter_batches
from app.domain.entities.model_spec import HybridArch, ModelSpec, OperatorKind
from app.domain.entities.parameters import Parameters, is_attention_operator_weight, is_linear_weight
from app.domain.operators.losses import alignment_loss, cross_entropy_loss, cross_entropy_value, kl_distill_loss
from app.domain.operators.model import HybridModel, bind_parameters, model_forward
from app.domain.ports.input_port.training_service import ITrainingUseCase
from app.infrastructure.dto.config_schema import TrainConfig, TrainStage
from app.utils.constants import LOSS_CURVE_COLUMNS
from app.utils.errors import AppError, ErrorType, FreezeViolationError, NumericalError
from app.utils.logger import log

Gradients = Dict[str, np.ndarray]
StepFn = Callable[[np.ndarray, Parameters], Tuple[float, Gradients]]


@dataclass
class TrainingResult:
    params: Parameters
    curve: pd.DataFrame
    steps: int = 0
    final_loss: Optional[float] = None
    extras: Dict[str, float] = field(default_factory=dict)


def is_teacher_weight(name: str) -> bool:
    return not is_linear_weight(name)


def _all_full(spec: ModelSpec) -> HybridArch:
    return HybridArch.uniform(OperatorKind.FULL, spec.n_layers)


def teacher_step(window: np.ndarray, params: Parameters, spec: ModelSpec) -> Tuple[float, Gradients]:
    """Next-token cross-entropy of the all-FULL model on one window."""
    tape = Tape()
    bound = bind_parameters(tape, params, trainable=is_teacher_weight)
    result = model_forward(tape, window[:-1], bound, spec, _all_full(spec))
    loss = cross_entropy_loss(tape, result.logits, window[1:])
    return float(tape.value(loss)), backward(tape, loss)


def stage1_align_step(window: np.ndarray, teacher: Parameters, student: Parameters, spec: ModelSpec
                      ) -> Tuple[float, Gradients]:
    """
    Post-mixer hidden-state alignment of the all-LINEAR student against the
    frozen teacher on the same inputs. Only linear.* weights are trainable.
    """
    tokens = window[:-1]
    teacher_states = HybridModel.teacher(spec, teacher).post_mixer_states(tokens)
    tape = Tape()
    bound = bind_parameters(tape, student, trainable=is_linear_weight)
    result = model_forward(tape, tokens, bound, spec, HybridArch.uniform(OperatorKind.LINEAR, spec.n_layers))
    loss = alignment_loss(tape, teacher_states, result.post_mixer)
    return float(tape.value(loss)), backward(tape, loss)


def stage3_distill_step(window: np.ndarray, teacher: Parameters, student: Parameters, arch, spec: ModelSpec,
                        tau: float = 1.0) -> Tuple[float, Gradients]:
    """KL(teacher || student) at temperature tau; every student parameter is trainable."""
    if not isinstance(arch, HybridArch):
        raise AppError(ErrorType.VALIDATION_ERROR, "final distillation needs a discrete HybridArch, not soft routing")
    tokens = window[:-1]
    teacher_logits = HybridModel.teacher(spec, teacher).logits(tokens)
    tape = Tape()
    bound = bind_parameters(tape, student, trainable=lambda name: True)
    result = model_forward(tape, tokens, bound, spec, arch)
    loss = kl_distill_loss(tape, teacher_logits, result.logits, tau)
    return float(tape.value(loss)), backward(tape, loss)


def heldout_loss(params: Parameters, spec: ModelSpec, windows: np.ndarray, arch: Optional[HybridArch] = None) -> float:
    model = HybridModel(spec=spec, params=params, arch=arch or _all_full(spec))
    return float(np.mean([cross_entropy_value(model.logits(w[:-1]), w[1:]) for w in windows]))


def batch_gradients(step_fn: StepFn, batch: np.ndarray, params: Parameters) -> Tuple[float, Gradients]:
    losses, totals = [], {}
    for window in batch:
        loss, grads = step_fn(window, params)
        losses.append(loss)
        for name, grad in grads.items():
            totals[name] = totals[name] + grad if name in totals else grad
    return float(np.mean(losses)), {name: grad / len(batch) for name, grad in totals.items()}


def run_training(cfg: TrainConfig, params: Parameters, batches, step_fn: StepFn,
                 trainable: Callable[[str], bool] = lambda name: True) -> TrainingResult:
    """
    Generic loop: grad_accum batches per optimizer step, global-norm clipping,
    two learning-rate groups and a warmup + cosine/constant schedule. Only
    names accepted by `trainable` are ever updated.
    """
    optimizer = AdamW(
        lr_for=lambda name: cfg.lr_attn_op if is_attention_operator_weight(name) else cfg.lr_main,
        weight_decay=cfg.weight_decay,
    )
    rows = []
    loss = None
    for step in range(cfg.steps):
        micro_losses, accumulated = [], {}
        for _ in range(cfg.grad_accum):
            micro_loss, grads = batch_gradients(step_fn, next(batches), params)
            micro_losses.append(micro_loss)
            for name, grad in grads.items():
                accumulated[name] = accumulated[name] + grad if name in accumulated else grad
        loss = float(np.mean(micro_losses))
        if not np.isfinite(loss):
            raise NumericalError(f"{cfg.stage.value} loss diverged at step {step}: {loss}")
        frozen = [name for name, g in accumulated.items() if not trainable(name) and np.any(g != 0)]
        if frozen:
            raise FreezeViolationError(f"gradient reached frozen parameters: {frozen[:5]}")
        grads = clip_by_global_norm({n: g / cfg.grad_accum for n, g in accumulated.items() if trainable(n)},
                                    cfg.clip_norm)
        factor = schedule_factor(step, cfg.steps, LrSchedule(cfg.lr_schedule), cfg.warmup_steps)
        params = params.replace(optimizer.step(params, grads, lr_scale=factor))
        lr = cfg.lr_main * factor
        rows.append({"step": step, "loss": loss, "lr": lr})
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            log(f"{cfg.stage.value} step={step} loss={loss:.6f} lr={lr:.3e}")
    return TrainingResult(params=params, curve=pd.DataFrame(rows, columns=LOSS_CURVE_COLUMNS),
                          steps=cfg.steps, final_loss=loss)


class TrainingUseCaseImpl(ITrainingUseCase):

    def train_teacher(self, corpus: CorpusData, spec: ModelSpec, cfg: TrainConfig, params: Parameters
                      ) -> TrainingResult:
        self.set_logging_headers("Teacher training")
        batches = iter_batches(corpus.train, cfg.batch, cfg.seq_len, cfg.seed)
        result = run_training(cfg, params, batches, lambda window, p: teacher_step(window, p, spec),
                              trainable=is_teacher_weight)
        windows = fixed_windows(corpus.heldout, 16, cfg.seq_len)
        result.extras["heldout_loss"] = heldout_loss(result.params, spec, windows)
        log(f"Teacher held-out loss {result.extras['heldout_loss']:.4f} (ln vocab {np.log(spec.vocab):.4f})")
        return result

    def align(self, corpus: CorpusData, spec: ModelSpec, cfg: TrainConfig, teacher: Parameters) -> TrainingResult:
        self.set_logging_headers("Linear candidate alignment")
        batches = iter_batches(corpus.train, cfg.batch, cfg.seq_len, cfg.seed)
        frozen_digest = teacher.digest(lambda name: not is_linear_weight(name))
        result = run_training(cfg, teacher, batches,
                              lambda window, p: stage1_align_step(window, teacher, p, spec),
                              trainable=is_linear_weight)
        if result.params.digest(lambda name: not is_linear_weight(name)) != frozen_digest:
            raise FreezeViolationError("alignment changed a non-linear parameter")
        return result

    def distill(self, corpus: CorpusData, spec: ModelSpec, cfg: TrainConfig, teacher: Parameters,
                student: Parameters, arch: HybridArch, tau: float = 1.0) -> TrainingResult:
        self.set_logging_headers(f"Distillation of {arch.mnemonics()}")
        arch.validate_for(spec)
        batches = iter_batches(corpus.train, cfg.batch, cfg.seq_len, cfg.seed)
        return run_training(cfg, student, batches,
                            lambda window, p: stage3_distill_step(window, teacher, p, arch, spec, tau))


def distill_model(corpus: CorpusData, spec: ModelSpec, cfg: TrainConfig, teacher: Parameters,
                  student: Parameters, arch: HybridArch, tau: float = 1.0) -> Parameters:
    if cfg.stage is not TrainStage.DISTILL:
        cfg = cfg.model_copy(update={"stage": TrainStage.DISTILL})
    return TrainingUseCaseImpl().distill(corpus, spec, cfg, teacher, student, arch, tau).params
