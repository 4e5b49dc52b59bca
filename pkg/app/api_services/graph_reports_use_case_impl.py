# app/api_services/graph_reports_use_case_impl.py

from typing import List, Optional, Sequence, Tuple

import pandas as pd
from jinja2 import Environment, FileSystemLoader

from app.domain.entities.model_spec import OperatorKind
from app.infrastructure.dto.reports_schema import SweepRecord
from app.utils.constants import OPERATOR_COLORS, TEMPLATES_DIR

StripRow = Tuple[str, Sequence[OperatorKind], int]

CELL = 16
MARGIN = 8
LABEL_WIDTH = 260


def budget_label(budget: float) -> str:
    return f"B={round(budget, 6):g}"


def _fmt(value: float) -> str:
    return f"{value:.2f}"


class GraphReportsUseCaseImpl:
    """SVG charts rendered from Jinja2 templates; identical inputs give identical bytes."""

    def __init__(self):
        self.env = Environment(loader=FileSystemLoader(TEMPLATES_DIR), keep_trailing_newline=True)

    def sweep_strip_rows(self, records: List[SweepRecord]) -> List[StripRow]:
        """Searchable-layer allocations of successful runs, sorted by realized budget."""
        usable = [r for r in records if not r.failed and r.searchable]
        usable.sort(key=lambda r: (r.budget, r.lam, r.seed))
        return [(f"{budget_label(r.budget)} lambda={r.lam:g} seed={r.seed}",
                 [OperatorKind.from_mnemonic(m) for m in r.searchable.split()], 1) for r in usable]

    def generate_allocation_strip(self, rows: List[StripRow], title: str) -> Optional[str]:
        """
        One row per architecture, one colored cell per layer. The third entry
        of a row is the index of its first layer (1 for searchable-only strips).
        """
        if not rows:
            return None
        n_cells = max(len(ops) for _, ops, _ in rows)
        width = 2 * MARGIN + LABEL_WIDTH + n_cells * CELL
        strips = []
        for i, (label, ops, first_layer) in enumerate(rows):
            y = 28 + i * (CELL + 4)
            cells = [{"x": MARGIN + LABEL_WIDTH + j * CELL, "layer": first_layer + j, "kind": kind.value,
                      "color": OPERATOR_COLORS[kind.value]} for j, kind in enumerate(ops)]
            strips.append({"label": label, "y": y, "cells": cells})
        legend_y = 28 + len(rows) * (CELL + 4) + 6
        legend = [{"x": MARGIN + k * 90, "kind": kind.value, "color": OPERATOR_COLORS[kind.value]}
                  for k, kind in enumerate(OperatorKind)]
        return self.env.get_template("allocation_strip.svg.j2").render(
            title=title, width=width, height=legend_y + 20, margin=MARGIN, cell=CELL,
            rows=strips, legend=legend, legend_y=legend_y,
        )

    def generate_budget_chart(self, summary: Optional[pd.DataFrame], width: int = 480, height: int = 280
                              ) -> Optional[str]:
        """Median realized budget bars and a median held-out KL line against the lambda grid."""
        if summary is None:
            return None
        summary = summary.dropna(subset=["median_budget"]).reset_index(drop=True)
        if summary.empty:
            return None
        left, right, top, bottom = 50, width - 50, 30, height - 40
        slot = (right - left) / len(summary)
        budget_max = max(float(summary["median_budget"].max()), 1.0)
        kls = summary["median_heldout_kl"].dropna()
        kl_max = float(kls.max()) if not kls.empty and kls.max() > 0 else 1.0

        bars, points = [], []
        for i, row in summary.iterrows():
            x = left + i * slot
            bar_h = (bottom - top) * float(row["median_budget"]) / budget_max
            bars.append({"x": _fmt(x + 0.15 * slot), "y": _fmt(bottom - bar_h), "width": _fmt(0.7 * slot),
                         "height": _fmt(bar_h), "lam": f"{row['lambda']:g}",
                         "budget": f"{row['median_budget']:.6g}"})
            if pd.notna(row["median_heldout_kl"]):
                kl = float(row["median_heldout_kl"])
                points.append({"x": _fmt(x + 0.5 * slot), "y": _fmt(bottom - (bottom - top) * kl / kl_max),
                               "lam": f"{row['lambda']:g}", "kl": f"{kl:.6g}"})
        return self.env.get_template("budget_chart.svg.j2").render(
            title="Realized budget and held-out KL vs lambda", width=width, height=height,
            left=left, right=right, top=top, bottom=bottom, bars=bars, kl_points=points,
            budget_max=f"{budget_max:.4g}", kl_max=f"{kl_max:.4g}",
            bar_color=OPERATOR_COLORS["FULL"], line_color=OPERATOR_COLORS["WINDOW"],
        )
