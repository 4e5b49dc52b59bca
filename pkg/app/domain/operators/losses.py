from typing import Sequence

import numpy as np

from app.domain.autodiff.primitives import log_softmax_array
from app.domain.autodiff.tape import Tape
from app.utils.errors import ShapeError
from app.utils.variable_types import NodeId


def _check_tau(tau: float):
    if tau <= 0:
        raise ValueError(f"distillation temperature must be positive, got {tau}")


def kl_distill_value(teacher_logits: np.ndarray, student_logits: np.ndarray, tau: float = 1.0) -> float:
    """(tau^2 / T) * sum_t KL(softmax(z_T/tau) || softmax(z_S/tau))."""
    _check_tau(tau)
    if teacher_logits.shape != student_logits.shape:
        raise ShapeError(f"teacher logits {list(teacher_logits.shape)} vs student {list(student_logits.shape)}")
    log_p = log_softmax_array(teacher_logits * (1.0 / tau))
    log_q = log_softmax_array(student_logits * (1.0 / tau))
    return float(tau * tau / teacher_logits.shape[0] * np.sum(np.exp(log_p) * (log_p - log_q)))


def kl_distill_loss(tape: Tape, teacher_logits: np.ndarray, student_logits: NodeId, tau: float = 1.0) -> NodeId:
    """Tape version of kl_distill_value; the teacher side is a constant."""
    _check_tau(tau)
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    if teacher_logits.shape != tape.shape(student_logits):
        raise ShapeError(f"teacher logits {list(teacher_logits.shape)} vs student {list(tape.shape(student_logits))}")
    log_p = log_softmax_array(teacher_logits * (1.0 / tau))
    log_q = tape.apply("log_softmax", tape.apply("scale", student_logits, factor=1.0 / tau))
    gap = tape.apply("subtract", tape.constant(log_p), log_q)
    total = tape.apply("sum", tape.apply("multiply", tape.constant(np.exp(log_p)), gap))
    return tape.apply("scale", total, factor=tau * tau / teacher_logits.shape[0])


def cross_entropy_value(logits: np.ndarray, targets) -> float:
    targets = np.asarray(targets, dtype=np.int64)
    log_probs = log_softmax_array(logits)
    return float(-np.mean(log_probs[np.arange(targets.size), targets]))


def cross_entropy_loss(tape: Tape, logits: NodeId, targets) -> NodeId:
    """Mean next-token negative log-likelihood of `targets` under `logits`."""
    targets = np.asarray(targets, dtype=np.int64)
    steps, vocab = tape.shape(logits)
    if targets.shape != (steps,):
        raise ShapeError(f"{targets.size} targets for {steps} logit rows")
    one_hot = np.zeros((steps, vocab))
    one_hot[np.arange(steps), targets] = 1.0
    picked = tape.apply("multiply", tape.apply("log_softmax", logits), tape.constant(one_hot))
    return tape.apply("scale", tape.apply("sum", picked), factor=-1.0 / steps)


def alignment_value(teacher_states: Sequence[np.ndarray], student_states: Sequence[np.ndarray]) -> float:
    return float(sum(np.sum((s - t) ** 2) / t.shape[0] for t, s in zip(teacher_states, student_states)))


def alignment_loss(tape: Tape, teacher_states: Sequence[np.ndarray], student_states: Sequence[NodeId]) -> NodeId:
    """sum over layers of (1/T) ||U_teacher - U_student||_F^2 on post-mixer states."""
    if len(teacher_states) != len(student_states):
        raise ShapeError(f"{len(teacher_states)} teacher layers vs {len(student_states)} student layers")
    total = None
    for teacher_u, student_u in zip(teacher_states, student_states):
        gap = tape.apply("subtract", student_u, tape.constant(teacher_u))
        term = tape.apply("scale", tape.apply("sq_frobenius", gap), factor=1.0 / teacher_u.shape[0])
        total = term if total is None else tape.apply("add", total, term)
    return total
