# app/api_services/tables_reports_use_case_impl.py

import math
from typing import List, Optional

import pandas as pd

from app.infrastructure.dto.reports_schema import SweepRecord
from app.utils.constants import SWEEP_ARCH_COLUMNS, SWEEP_CSV_COLUMNS

SUMMARY_COLUMNS = ["lambda", "runs", "failed", "median_budget", "median_heldout_kl"]


def _none_if_nan(value):
    if value is None:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


class TablesReportsUseCaseImpl:
    def build_sweep_table(self, records: List[SweepRecord]) -> pd.DataFrame:
        return pd.DataFrame([r.csv_row() for r in records], columns=SWEEP_CSV_COLUMNS)

    def build_sweep_arch_table(self, records: List[SweepRecord]) -> pd.DataFrame:
        return pd.DataFrame([r.arch_row() for r in records], columns=SWEEP_ARCH_COLUMNS)

    def build_budget_by_lambda(self, records: List[SweepRecord]) -> Optional[pd.DataFrame]:
        """Median realized budget and held-out KL per lambda over the successful seeds."""
        if not records:
            return None
        df = self.build_sweep_table(records)
        df["failed"] = [r.failed for r in records]
        ok = df[~df["failed"]]
        summary = df.groupby("lambda").agg(runs=("seed", "size"), failed=("failed", "sum")).reset_index()
        medians = ok.groupby("lambda").agg(median_budget=("budget", "median"),
                                           median_heldout_kl=("heldout_kl", "median")).reset_index()
        summary = summary.merge(medians, on="lambda", how="left").sort_values("lambda")
        summary["failed"] = summary["failed"].astype(int)
        return summary[SUMMARY_COLUMNS].reset_index(drop=True)

    def records_from_tables(self, sweep: pd.DataFrame, archs: pd.DataFrame) -> List[SweepRecord]:
        """Inverse of the two sweep tables, joined on (lambda, seed)."""
        merged = sweep.merge(archs, on=["lambda", "seed"], how="left")
        records = []
        for row in merged.to_dict(orient="records"):
            values = {key: _none_if_nan(value) for key, value in row.items()}
            records.append(SweepRecord(
                lam=float(values["lambda"]),
                seed=int(values["seed"]),
                budget=values["budget"],
                avg_entropy=values["avg_entropy"],
                avg_top1=values["avg_top1"],
                avg_margin=values["avg_margin"],
                ambiguous=None if values["ambiguous"] is None else int(values["ambiguous"]),
                heldout_kl=values["heldout_kl"],
                arch=values.get("arch") or "",
                searchable=values.get("searchable") or "",
                error=values.get("error") or None,
            ))
        return sorted(records, key=lambda r: (r.lam, r.seed))
