from dataclasses import dataclass
from typing import List, Optional, Tuple

from app.adapters.worker_pool import get_worker_pool
from app.api_services.search_use_case_impl import SearchUseCaseImpl
from app.api_services.selector_use_case_impl import HeldoutKlScorer
from app.api_services.training_use_case_impl import distill_model
from app.domain.corpus.generator import CorpusData, fixed_windows
from app.domain.entities.arch_state import CostVector, SearchResult
from app.domain.entities.parameters import Parameters
from app.domain.ports.input_port.sweep_service import ISweepUseCase
from app.domain.search.relaxation import realized_budget, searchable_allocation
from app.infrastructure.dto.config_schema import RunConfig
from app.infrastructure.dto.reports_schema import SweepRecord
from app.utils.errors import AppError
from app.utils.logger import log


@dataclass
class SweepTask:
    """Everything one search run needs; shipped whole to a worker process."""

    cfg: RunConfig
    lam: float
    seed: int
    teacher: Parameters
    candidates: Parameters
    corpus: CorpusData


def search_record(task: SweepTask, result: SearchResult) -> SweepRecord:
    cfg, spec = task.cfg, task.cfg.model
    cost = CostVector.for_window(cfg.search.candidate_space, spec.window, cfg.search.seq_len)
    params = task.candidates
    if cfg.sweep.distill:
        params = distill_model(task.corpus, spec, cfg.distill, task.teacher, task.candidates, result.arch)
    windows = fixed_windows(task.corpus.heldout, cfg.eval.heldout_batches, cfg.eval.seq_len)
    heldout_kl = HeldoutKlScorer.build(spec, task.teacher, params, windows)(result.arch)
    diagnostics = result.diagnostics
    return SweepRecord(
        lam=task.lam,
        seed=task.seed,
        budget=realized_budget(result.arch, spec.window, cfg.search.seq_len),
        avg_entropy=diagnostics.avg_entropy,
        avg_top1=diagnostics.avg_top1,
        avg_margin=diagnostics.avg_margin,
        ambiguous=diagnostics.ambiguous_count,
        heldout_kl=max(heldout_kl, 0.0),
        arch=result.arch.mnemonics(),
        searchable=" ".join(kind.mnemonic for kind in searchable_allocation(result.state, cost)),
    )


def run_sweep_task(task: SweepTask) -> SweepRecord:
    """One Stage-2 run; a failure becomes an error record instead of stopping the sweep."""
    search_cfg = task.cfg.search.model_copy(update={"lam": task.lam, "seed": task.seed})
    try:
        result = SearchUseCaseImpl().run_search(search_cfg, task.cfg.model, task.teacher, task.candidates,
                                                task.corpus)
        return search_record(task, result)
    except AppError as err:
        log(f"Sweep run lambda={task.lam} seed={task.seed} failed: {err}", level="error")
        return SweepRecord(lam=task.lam, seed=task.seed, error=str(err))
    except Exception as err:
        log(f"Sweep run lambda={task.lam} seed={task.seed} crashed: {err!r}", level="error")
        return SweepRecord(lam=task.lam, seed=task.seed, error=repr(err))


class SweepUseCaseImpl(ISweepUseCase):

    def __init__(self, cfg: RunConfig, teacher: Parameters, candidates: Parameters, corpus: CorpusData,
                 workers: Optional[int] = None):
        self.cfg = cfg
        self.teacher = teacher
        self.candidates = candidates
        self.corpus = corpus
        self.workers = workers or cfg.sweep.workers
        super().__init__()

    def tasks(self, lambdas: List[float], seeds: List[int]) -> List[SweepTask]:
        grid: List[Tuple[float, int]] = [(lam, seed) for lam in lambdas for seed in seeds]
        return [SweepTask(cfg=self.cfg, lam=lam, seed=seed, teacher=self.teacher, candidates=self.candidates,
                          corpus=self.corpus) for lam, seed in grid]

    def run_sweep(self, lambdas: List[float], seeds: List[int]) -> List[SweepRecord]:
        self.set_logging_headers(f"Lambda sweep over {list(lambdas)} x seeds {list(seeds)}")
        tasks = self.tasks(lambdas, seeds)
        with get_worker_pool(self.workers, len(tasks)) as map_fn:
            records = map_fn(run_sweep_task, tasks)
        records = sorted(records, key=lambda r: (r.lam, r.seed))
        failed = sum(1 for r in records if r.failed)
        log(f"Sweep finished: {len(records)} runs, {failed} failed")
        return records
