from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from app.domain.autodiff.tape import Tape, backward
from app.utils.variable_types import NodeId

# relative error is measured against max(|analytic|, |numeric|, REL_FLOOR)
REL_FLOOR = 1e-3

TapeFunction = Callable[[Tape, NodeId], NodeId]


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    worst_index: Tuple[int, ...]
    analytic: np.ndarray
    numeric: np.ndarray

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"gradcheck {status}: max rel error {self.max_rel_error:.3e} at {self.worst_index}"


def evaluate(fn: TapeFunction, point: np.ndarray) -> float:
    tape = Tape()
    return float(tape.value(fn(tape, tape.parameter("x", point))))


def analytic_gradient(fn: TapeFunction, point: np.ndarray) -> np.ndarray:
    tape = Tape()
    loss = fn(tape, tape.parameter("x", point))
    return backward(tape, loss)["x"]


def numeric_gradient(fn: TapeFunction, point: np.ndarray, step: float) -> np.ndarray:
    point = np.array(point, dtype=np.float64)
    grad = np.zeros_like(point)
    for index in np.ndindex(point.shape):
        original = point[index]
        point[index] = original + step
        upper = evaluate(fn, point)
        point[index] = original - step
        lower = evaluate(fn, point)
        point[index] = original
        grad[index] = (upper - lower) / (2.0 * step)
    return grad


def finite_difference_check(fn: TapeFunction, point, step: float = 1e-5, tol: float = 1e-5) -> GradCheckReport:
    """
    Compare backward() against central differences for a scalar function.

    `fn(tape, x)` builds the computation on the given tape from the input node
    `x` and returns the scalar loss node. The report never raises; it lists
    the coordinate with the worst relative error.
    """
    if step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    point = np.array(point, dtype=np.float64)
    analytic = analytic_gradient(fn, point)
    numeric = numeric_gradient(fn, point, step)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    rel_error = np.abs(analytic - numeric) / scale
    if rel_error.size == 0:
        return GradCheckReport(True, 0.0, (), analytic, numeric)
    worst = np.unravel_index(int(np.argmax(rel_error)), rel_error.shape)
    max_error = float(rel_error[worst])
    return GradCheckReport(
        passed=max_error < tol,
        max_rel_error=max_error,
        worst_index=tuple(int(i) for i in worst),
        analytic=analytic,
        numeric=numeric,
    )
