import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Mapping

import numpy as np

from app.utils.constants import ADAM_BETAS, ADAM_EPS


class LrSchedule(str, Enum):
    COSINE = "cosine"
    CONSTANT = "constant"


def schedule_factor(step: int, total_steps: int, schedule: LrSchedule, warmup_steps: int = 0) -> float:
    """
    Multiplier applied to the base learning rate at optimizer step `step` (0-based).
    Linear warmup over the first `warmup_steps`, then cosine decay to 0 at
    `total_steps` or a constant plateau.
    """
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    if schedule is LrSchedule.CONSTANT:
        return 1.0
    decay_steps = max(total_steps - warmup_steps, 1)
    progress = min(max(step - warmup_steps, 0) / decay_steps, 1.0)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Dict[str, np.ndarray]:
    if max_norm <= 0:
        return dict(grads)
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    factor = max_norm / (norm + 1e-12)
    return {name: g * factor for name, g in grads.items()}


@dataclass
class AdamW:
    """
    Adaptive-moment optimizer with decoupled weight decay over named arrays.

    `lr_for(name)` gives each tensor its base learning rate, which is how the
    two parameter groups (attention operators vs. the rest) are expressed.
    """

    lr_for: Callable[[str], float]
    weight_decay: float = 0.0
    betas: tuple = ADAM_BETAS
    eps: float = ADAM_EPS
    steps_taken: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr_scale: float = 1.0
             ) -> Dict[str, np.ndarray]:
        """Returns updated copies of the tensors named in `grads`; `params` is not mutated."""
        beta1, beta2 = self.betas
        self.steps_taken += 1
        t = self.steps_taken
        updated = {}
        for name in sorted(grads):
            grad = grads[name]
            m = self.first_moment.get(name, np.zeros_like(grad))
            v = self.second_moment.get(name, np.zeros_like(grad))
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            self.first_moment[name], self.second_moment[name] = m, v
            m_hat = m / (1 - beta1 ** t)
            v_hat = v / (1 - beta2 ** t)
            lr = self.lr_for(name) * lr_scale
            value = params[name]
            updated[name] = value - lr * self.weight_decay * value - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated
