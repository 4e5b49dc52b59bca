from typing import Protocol, Sequence

import numpy as np
import pandas as pd

from app.domain.corpus.generator import MarkovSource, TokenLayout, recall_queries
from app.domain.operators.losses import kl_distill_value


class LanguageModel(Protocol):
    def logits(self, tokens) -> np.ndarray:
        ...


def window_inputs(windows: np.ndarray) -> np.ndarray:
    return windows[:, :-1]


def eval_heldout_kl(model: LanguageModel, teacher: LanguageModel, windows: np.ndarray) -> float:
    """Mean token-averaged KL(teacher || model) at temperature 1 over held-out windows."""
    inputs = window_inputs(windows)
    return float(np.mean([kl_distill_value(teacher.logits(seq), model.logits(seq), 1.0) for seq in inputs]))


def eval_agreement(model: LanguageModel, teacher: LanguageModel, windows: np.ndarray) -> float:
    """Fraction of positions where the model's argmax equals the teacher's."""
    matches, total = 0, 0
    for seq in window_inputs(windows):
        matches += int(np.sum(np.argmax(model.logits(seq), axis=-1) == np.argmax(teacher.logits(seq), axis=-1)))
        total += seq.size
    return matches / total if total else 0.0


def eval_recall_task(model: LanguageModel, layout: TokenLayout, source: MarkovSource, n_trials: int,
                     n_pairs: int, gap: int, seed: int) -> float:
    """Greedy one-token answers to `QUERY k` prompts; fraction equal to the paired value."""
    prompts, answers = recall_queries(layout, source, n_trials, n_pairs, gap, seed)
    correct = sum(int(np.argmax(model.logits(prompt)[-1]) == answer) for prompt, answer in zip(prompts, answers))
    return correct / len(answers)


def spearman_sign(xs: Sequence[float], ys: Sequence[float]) -> int:
    """Sign (-1, 0, 1) of the Spearman rank correlation of two samples."""
    rank_x = pd.Series(list(xs), dtype=float).rank()
    rank_y = pd.Series(list(ys), dtype=float).rank()
    rho = rank_x.corr(rank_y)
    if rho is None or np.isnan(rho) or rho == 0:
        return 0
    return 1 if rho > 0 else -1
