from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from app.adapters.worker_pool import get_worker_pool
from app.api_services.training_use_case_impl import distill_model
from app.domain.baselines.selectors import (
    SelectorResult,
    greedy_add_select,
    greedy_remove_select,
    uniform_alloc,
)
from app.domain.corpus.generator import CorpusData
from app.domain.entities.model_spec import HybridArch, ModelSpec
from app.domain.entities.parameters import Parameters
from app.domain.operators.losses import kl_distill_value
from app.domain.operators.model import HybridModel
from app.domain.ports.input_port.evaluation_service import IEvaluationUseCase
from app.domain.ports.input_port.selector_service import ISelectorUseCase
from app.infrastructure.dto.config_schema import TrainConfig
from app.infrastructure.dto.reports_schema import EvalReport
from app.utils.errors import AppError, ErrorType
from app.utils.logger import log

SELECTOR_METHODS = ("uniform", "greedy_add", "greedy_remove")


@dataclass
class HeldoutKlScorer:
    """
    Held-out KL(teacher || arch) of an un-retrained allocation built from the
    aligned candidates. Teacher logits are computed once; instances pickle, so
    a process pool can score the flips of one greedy step.
    """

    spec: ModelSpec
    candidates: Parameters
    inputs: np.ndarray
    teacher_logits: List[np.ndarray]

    @classmethod
    def build(cls, spec: ModelSpec, teacher: Parameters, candidates: Parameters, windows: np.ndarray
              ) -> "HeldoutKlScorer":
        inputs = windows[:, :-1]
        teacher_model = HybridModel.teacher(spec, teacher)
        return cls(spec=spec, candidates=candidates, inputs=inputs,
                   teacher_logits=[teacher_model.logits(seq) for seq in inputs])

    def __call__(self, arch: HybridArch) -> float:
        model = HybridModel(spec=self.spec, params=self.candidates, arch=arch)
        return float(np.mean([kl_distill_value(target, model.logits(seq), 1.0)
                              for seq, target in zip(self.inputs, self.teacher_logits)]))


class SelectorUseCaseImpl(ISelectorUseCase):

    def __init__(self, spec: ModelSpec, teacher: Parameters, candidates: Parameters, corpus: CorpusData,
                 evaluation: IEvaluationUseCase, distill_cfg: TrainConfig, workers: Optional[int] = None):
        self.spec = spec
        self.teacher = teacher
        self.candidates = candidates
        self.corpus = corpus
        self.evaluation = evaluation
        self.distill_cfg = distill_cfg
        self.workers = workers
        super().__init__()

    def select(self, method: str, budget: int) -> SelectorResult:
        self.set_logging_headers(f"Selector {method} (B={budget})")
        n_layers = self.spec.n_layers
        if method == "uniform":
            return SelectorResult(method=method, arch=uniform_alloc(n_layers, budget), budget=budget)
        if method not in SELECTOR_METHODS:
            raise AppError(ErrorType.VALIDATION_ERROR, f"unknown selector {method!r}, expected one of {SELECTOR_METHODS}")

        scorer = HeldoutKlScorer.build(self.spec, self.teacher, self.candidates, self.evaluation.windows)
        select_fn = greedy_add_select if method == "greedy_add" else greedy_remove_select
        with get_worker_pool(self.workers, n_layers) as map_fn:
            result = select_fn(n_layers, budget, scorer, map_fn=map_fn)
        for step in result.score_trace:
            log(f"{method} picked layer {step.layer}: scores {dict(zip(step.candidates, step.scores))}")
        log(f"{method} allocation: {result.arch.mnemonics()}")
        return result

    def controlled_comparison(self, archs: Dict[str, HybridArch]) -> List[EvalReport]:
        """Same Stage-3 configuration and held-out set for every allocation, in name order."""
        teacher_model = HybridModel.teacher(self.spec, self.teacher)
        reports = []
        for name in sorted(archs):
            arch = archs[name]
            student = distill_model(self.corpus, self.spec, self.distill_cfg, self.teacher, self.candidates, arch)
            reports.append(self.evaluation.evaluate(name, HybridModel(self.spec, student, arch), teacher_model))
        return reports
