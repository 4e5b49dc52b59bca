from typing import List, Optional

from app.api_services.graph_reports_use_case_impl import GraphReportsUseCaseImpl, budget_label
from app.api_services.tables_reports_use_case_impl import TablesReportsUseCaseImpl
from app.domain.entities.model_spec import HybridArch
from app.domain.ports.input_port.report_service import IReportUseCase
from app.domain.ports.out_port.IArtifactRepository import IArtifactRepository
from app.domain.search.relaxation import realized_budget
from app.infrastructure.dto.reports_schema import SweepRecord
from app.utils.logger import log

SWEEP_CSV = "sweep.csv"
SWEEP_ARCHS_CSV = "sweep_archs.csv"
SWEEP_SUMMARY_CSV = "sweep_summary.csv"
ARCH_TXT = "arch.txt"
ALLOCATION_SVG = "allocation_strip.svg"
FINAL_ARCH_SVG = "final_arch.svg"
BUDGET_SVG = "budget_kl.svg"
EMPTY_NOTICE = "report.txt"


def arch_text(arch: HybridArch) -> str:
    return arch.mnemonics() + "\n"


class ReportUseCaseImpl(IReportUseCase):
    def __init__(self, artifact_repository: IArtifactRepository, window: int, seq_len: int):
        self.artifact_repository = artifact_repository
        self.window = window
        self.seq_len = seq_len
        self.tables = TablesReportsUseCaseImpl()
        self.graphs = GraphReportsUseCaseImpl()
        super().__init__()

    def emit_report(self, records: List[SweepRecord], final_arch: Optional[HybridArch] = None) -> List[str]:
        """Writes every report artifact under the output directory and returns their paths."""
        self.set_logging_headers("Report emission")
        written = []
        if final_arch is not None:
            written.append(self.artifact_repository.write_text(arch_text(final_arch), ARCH_TXT))
            budget = realized_budget(final_arch, self.window, self.seq_len)
            strip = self.graphs.generate_allocation_strip(
                [(budget_label(budget), final_arch.ops, 0)], title="Final architecture")
            written.append(self.artifact_repository.write_text(strip, FINAL_ARCH_SVG))

        if not records:
            log("No sweep records to report", level="warning")
            written.append(self.artifact_repository.write_text(
                "empty report: no sweep records were supplied\n", EMPTY_NOTICE))
            return written

        records = sorted(records, key=lambda r: (r.lam, r.seed))
        written.append(self.artifact_repository.write_csv(self.tables.build_sweep_table(records), SWEEP_CSV))
        written.append(self.artifact_repository.write_csv(self.tables.build_sweep_arch_table(records), SWEEP_ARCHS_CSV))
        summary = self.tables.build_budget_by_lambda(records)
        written.append(self.artifact_repository.write_csv(summary, SWEEP_SUMMARY_CSV))

        strip = self.graphs.generate_allocation_strip(self.graphs.sweep_strip_rows(records),
                                                      title="Searchable-layer allocations by realized budget")
        chart = self.graphs.generate_budget_chart(summary)
        for svg, name in ((strip, ALLOCATION_SVG), (chart, BUDGET_SVG)):
            if svg is None:
                log(f"{name} skipped: every sweep run failed", level="warning")
                continue
            written.append(self.artifact_repository.write_text(svg, name))
        log(f"Report written: {written}")
        return written

    def load_records(self) -> List[SweepRecord]:
        sweep = self.artifact_repository.read_csv(SWEEP_CSV)
        archs = self.artifact_repository.read_csv(SWEEP_ARCHS_CSV)
        return self.tables.records_from_tables(sweep, archs)

    def load_final_arch(self) -> HybridArch:
        return HybridArch.from_mnemonics(self.artifact_repository.read_text(ARCH_TXT))
