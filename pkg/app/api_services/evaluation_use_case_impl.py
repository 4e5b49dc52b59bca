from typing import Sequence

import pandas as pd
from jinja2 import Environment, FileSystemLoader

from app.domain.corpus.generator import CorpusData, fixed_windows
from app.domain.entities.model_spec import OperatorKind
from app.domain.evaluation.metrics import eval_agreement, eval_heldout_kl, eval_recall_task
from app.domain.operators.model import HybridModel
from app.domain.ports.input_port.evaluation_service import IEvaluationUseCase
from app.domain.search.relaxation import realized_budget
from app.infrastructure.dto.config_schema import RecallTaskSpec
from app.infrastructure.dto.reports_schema import EvalReport
from app.utils.constants import EVAL_CSV_COLUMNS, TEMPLATES_DIR
from app.utils.logger import log


class EvaluationUseCaseImpl(IEvaluationUseCase):
    """
    Scores final models against the teacher on one fixed held-out set and one
    recall task, so reports of different models are directly comparable.
    """

    def __init__(self, corpus: CorpusData, heldout_batches: int, seq_len: int, task: RecallTaskSpec,
                 budget_seq_len: int):
        self.corpus = corpus
        self.windows = fixed_windows(corpus.heldout, heldout_batches, seq_len)
        self.task = task
        self.budget_seq_len = budget_seq_len
        self.env = Environment(loader=FileSystemLoader(TEMPLATES_DIR), keep_trailing_newline=True)
        super().__init__()

    def evaluate(self, name: str, model: HybridModel, teacher: HybridModel) -> EvalReport:
        self.set_logging_headers(f"Evaluation of {name}")
        counts = model.arch.counts()
        report = EvalReport(
            name=name,
            heldout_kl=max(eval_heldout_kl(model, teacher, self.windows), 0.0),
            next_token_agreement=eval_agreement(model, teacher, self.windows),
            recall_accuracy=eval_recall_task(model, self.corpus.layout, self.corpus.source, self.task.n_trials,
                                             self.task.n_pairs, self.task.gap, self.task.seed),
            realized_budget=realized_budget(model.arch, model.spec.window, self.budget_seq_len),
            n_full=counts[OperatorKind.FULL],
            n_window=counts[OperatorKind.WINDOW],
            n_linear=counts[OperatorKind.LINEAR],
            arch=model.arch.mnemonics(),
        )
        log(self.render(report).rstrip())
        return report

    def render(self, report: EvalReport) -> str:
        return self.env.get_template("eval_report.txt.j2").render(report=report)


def eval_table(reports: Sequence[EvalReport]) -> pd.DataFrame:
    return pd.DataFrame([r.csv_row() for r in reports], columns=EVAL_CSV_COLUMNS)
