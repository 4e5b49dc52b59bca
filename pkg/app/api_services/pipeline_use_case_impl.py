import os
from dataclasses import dataclass, field
from typing import List, Optional

from app.api_services.corpus_use_case_impl import CorpusUseCaseImpl
from app.api_services.evaluation_use_case_impl import EvaluationUseCaseImpl, eval_table
from app.api_services.report_use_case_impl import ARCH_TXT, SWEEP_CSV, ReportUseCaseImpl, arch_text
from app.api_services.search_use_case_impl import SearchUseCaseImpl, search_log_frame, select_operating_point
from app.api_services.selector_use_case_impl import SelectorUseCaseImpl
from app.api_services.sweep_use_case_impl import SweepUseCaseImpl
from app.api_services.training_use_case_impl import TrainingResult, TrainingUseCaseImpl
from app.domain.corpus.generator import CorpusData
from app.domain.entities.arch_state import ArchState, CandidateSpace, SearchResult
from app.domain.entities.checkpoint import Checkpoint, CheckpointMetadata
from app.domain.entities.model_spec import HybridArch
from app.domain.entities.parameters import Parameters, init_parameters
from app.domain.operators.model import HybridModel
from app.domain.ports.input_port.pipeline_service import IPipelineUseCase
from app.domain.ports.out_port.IArtifactRepository import IArtifactRepository
from app.domain.ports.out_port.ICheckpointRepository import ICheckpointRepository
from app.domain.search.relaxation import budget_matched_allocation
from app.infrastructure.dto.config_schema import RunConfig, SearchConfig
from app.infrastructure.dto.reports_schema import EvalReport, SweepRecord
from app.utils.errors import AppError, ErrorType
from app.utils.logger import log


@dataclass
class PipelineResult:
    arch: HybridArch
    reports: List[EvalReport]
    records: List[SweepRecord] = field(default_factory=list)


class PipelineUseCaseImpl(IPipelineUseCase):
    """
    The stages behind the CLI subcommands. Each stage reads what earlier stages
    wrote under the output directory, so the in-process pipeline and a chain
    of CLI calls see the same (32-bit stored) tensors.
    """

    def __init__(self, checkpoint_repository: ICheckpointRepository, artifact_repository: IArtifactRepository):
        self.checkpoint_repository = checkpoint_repository
        self.artifact_repository = artifact_repository
        self.corpus_use_case = CorpusUseCaseImpl(artifact_repository)
        self.training = TrainingUseCaseImpl()
        self.search_use_case = SearchUseCaseImpl()
        super().__init__()

    # loading helpers

    def load_checkpoint(self, cfg: RunConfig, path: str) -> Checkpoint:
        checkpoint = self.checkpoint_repository.load_checkpoint(path)
        if checkpoint.model_spec != cfg.model:
            raise AppError(ErrorType.CONFIG_ERROR,
                           f"{path} was written for {checkpoint.model_spec}, config has {cfg.model}")
        return checkpoint

    def load_params(self, cfg: RunConfig, path: str) -> Parameters:
        return self.load_checkpoint(cfg, path).parameters

    def load_search_arch(self, cfg: RunConfig) -> HybridArch:
        arch = self.load_checkpoint(cfg, cfg.paths.search).arch
        if arch is None:
            raise AppError(ErrorType.VALIDATION_ERROR, f"{cfg.paths.search} holds no discretized architecture")
        return arch

    def load_budget_matched_arch(self, cfg: RunConfig, budget: int) -> HybridArch:
        """Searched routing restricted to `budget` FULL layers, so DASH competes at the selectors' budget."""
        checkpoint = self.load_checkpoint(cfg, cfg.paths.search)
        if not checkpoint.alpha:
            raise AppError(ErrorType.VALIDATION_ERROR, f"{cfg.paths.search} holds no architecture logits")
        metadata = checkpoint.metadata
        state = ArchState(alpha=checkpoint.alpha, t_arch=metadata.t_arch or cfg.search.t_arch_final,
                          space=CandidateSpace(metadata.candidate_space or cfg.search.candidate_space),
                          n_layers=cfg.model.n_layers)
        arch = budget_matched_allocation(state, budget)
        if checkpoint.arch is not None and arch != checkpoint.arch:
            log(f"dash allocation {checkpoint.arch.mnemonics()} matched to B={budget}: {arch.mnemonics()}")
        return arch

    def save_params(self, cfg: RunConfig, params: Parameters, path: str, stage: str, steps: int,
                    arch: Optional[HybridArch] = None):
        metadata = CheckpointMetadata(stage=stage, step=steps, seed=cfg.seed)
        self.checkpoint_repository.save_checkpoint(
            Checkpoint(model_spec=cfg.model, parameters=params, metadata=metadata, arch=arch), path)

    def evaluation(self, cfg: RunConfig, corpus: CorpusData) -> EvaluationUseCaseImpl:
        return EvaluationUseCaseImpl(corpus, cfg.eval.heldout_batches, cfg.eval.seq_len,
                                     cfg.eval.recall_task(cfg.seed), budget_seq_len=cfg.search.seq_len)

    def report_use_case(self, cfg: RunConfig) -> ReportUseCaseImpl:
        return ReportUseCaseImpl(self.artifact_repository, cfg.model.window, cfg.search.seq_len)

    def _write_curve(self, result: TrainingResult, name: str):
        self.artifact_repository.write_csv(result.curve, name)

    # stages

    def gen_corpus(self, cfg: RunConfig) -> CorpusData:
        return self.corpus_use_case.generate(cfg)

    def train_teacher(self, cfg: RunConfig) -> Parameters:
        corpus = self.corpus_use_case.load_or_generate(cfg)
        result = self.training.train_teacher(corpus, cfg.model, cfg.teacher, init_parameters(cfg.model, cfg.seed))
        self._write_curve(result, "teacher_curve.csv")
        self.save_params(cfg, result.params, cfg.paths.teacher, "teacher", result.steps)
        return result.params

    def align(self, cfg: RunConfig) -> Parameters:
        corpus = self.corpus_use_case.load(cfg)
        teacher = self.load_params(cfg, cfg.paths.teacher)
        result = self.training.align(corpus, cfg.model, cfg.align, teacher)
        self._write_curve(result, "align_curve.csv")
        self.save_params(cfg, result.params, cfg.paths.aligned, "align", result.steps)
        return result.params

    def search(self, cfg: RunConfig, search_cfg: Optional[SearchConfig] = None) -> SearchResult:
        search_cfg = search_cfg or cfg.search
        corpus = self.corpus_use_case.load(cfg)
        teacher = self.load_params(cfg, cfg.paths.teacher)
        candidates = self.load_params(cfg, cfg.paths.aligned)
        result = self.search_use_case.run_search(search_cfg, cfg.model, teacher, candidates, corpus)
        self.artifact_repository.write_csv(search_log_frame(result.log), "search_log.csv")
        self.artifact_repository.write_text(arch_text(result.arch), ARCH_TXT)
        metadata = CheckpointMetadata(stage="search", step=search_cfg.steps, seed=search_cfg.seed,
                                      t_arch=result.state.t_arch, candidate_space=search_cfg.candidate_space.value)
        self.checkpoint_repository.save_checkpoint(
            Checkpoint(model_spec=cfg.model, parameters=Parameters({}), metadata=metadata, arch=result.arch,
                       alpha=result.state.alpha), cfg.paths.search)
        return result

    def sweep(self, cfg: RunConfig) -> List[SweepRecord]:
        corpus = self.corpus_use_case.load(cfg)
        teacher = self.load_params(cfg, cfg.paths.teacher)
        candidates = self.load_params(cfg, cfg.paths.aligned)
        records = SweepUseCaseImpl(cfg, teacher, candidates, corpus).run_sweep(cfg.sweep.lambdas, cfg.sweep.seeds)
        self.report_use_case(cfg).emit_report(records)
        return records

    def distill(self, cfg: RunConfig) -> Parameters:
        corpus = self.corpus_use_case.load(cfg)
        teacher = self.load_params(cfg, cfg.paths.teacher)
        candidates = self.load_params(cfg, cfg.paths.aligned)
        arch = self.load_search_arch(cfg)
        result = self.training.distill(corpus, cfg.model, cfg.distill, teacher, candidates, arch, tau=cfg.search.tau)
        self._write_curve(result, "distill_curve.csv")
        self.save_params(cfg, result.params, cfg.paths.student, "distill", result.steps, arch=arch)
        return result.params

    def evaluate(self, cfg: RunConfig) -> List[EvalReport]:
        corpus = self.corpus_use_case.load(cfg)
        teacher = HybridModel.teacher(cfg.model, self.load_params(cfg, cfg.paths.teacher))
        student = self.load_checkpoint(cfg, cfg.paths.student)
        if student.arch is None:
            raise AppError(ErrorType.VALIDATION_ERROR, f"{cfg.paths.student} holds no architecture")
        evaluation = self.evaluation(cfg, corpus)
        reports = [
            evaluation.evaluate("teacher", teacher, teacher),
            evaluation.evaluate("dash", HybridModel(cfg.model, student.parameters, student.arch), teacher),
        ]
        self.artifact_repository.write_csv(eval_table(reports), "eval.csv")
        self.artifact_repository.write_text("\n".join(evaluation.render(r) for r in reports), "eval.txt")
        return reports

    def compare(self, cfg: RunConfig) -> List[EvalReport]:
        """Selector baselines and the searched arch, distilled and evaluated under one configuration."""
        corpus = self.corpus_use_case.load(cfg)
        teacher = self.load_params(cfg, cfg.paths.teacher)
        candidates = self.load_params(cfg, cfg.paths.aligned)
        evaluation = self.evaluation(cfg, corpus)
        selectors = SelectorUseCaseImpl(cfg.model, teacher, candidates, corpus, evaluation, cfg.distill,
                                        workers=cfg.sweep.workers)
        budget = cfg.compare.budget if cfg.compare.budget is not None else cfg.model.n_layers // 4
        archs = {}
        for method in cfg.compare.methods:
            if method == "dash":
                archs[method] = self.load_budget_matched_arch(cfg, budget)
            else:
                archs[method] = selectors.select(method, budget).arch
        reports = selectors.controlled_comparison(archs)
        self.artifact_repository.write_csv(eval_table(reports), "compare.csv")
        self.artifact_repository.write_text("\n".join(evaluation.render(r) for r in reports), "compare.txt")
        return reports

    def report(self, cfg: RunConfig) -> List[str]:
        reports = self.report_use_case(cfg)
        records = reports.load_records() if self._exists(SWEEP_CSV) else []
        final_arch = reports.load_final_arch() if self._exists(ARCH_TXT) else None
        return reports.emit_report(records, final_arch)

    def _exists(self, name: str) -> bool:
        return os.path.exists(self.artifact_repository.resolve(name))

    def run_pipeline(self, cfg: RunConfig, with_sweep: bool = True) -> PipelineResult:
        self.set_logging_headers(f"Pipeline (seed={cfg.seed})")
        self.gen_corpus(cfg)
        self.train_teacher(cfg)
        self.align(cfg)
        records = []
        search_cfg = cfg.search
        if with_sweep:
            records = self.sweep(cfg)
            if cfg.sweep.target_budget is not None:
                point = select_operating_point(records, cfg.sweep.target_budget)
                log(f"Operating point for B={cfg.sweep.target_budget}: lambda={point.lam} seed={point.seed} "
                    f"(realized {point.budget})")
                search_cfg = cfg.search.model_copy(update={"lam": point.lam, "seed": point.seed})
        result = self.search(cfg, search_cfg)
        self.distill(cfg)
        reports = self.evaluate(cfg)
        self.report_use_case(cfg).emit_report(records, result.arch)
        return PipelineResult(arch=result.arch, reports=reports, records=records)
