from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class SweepRecord(BaseModel):
    lam:          float            = Field(alias="lambda")
    seed:         int
    budget:       Optional[float]  = None
    avg_entropy:  Optional[float]  = None
    avg_top1:     Optional[float]  = None
    avg_margin:   Optional[float]  = None
    ambiguous:    Optional[int]    = None
    heldout_kl:   Optional[float]  = None
    arch:         str              = ""
    searchable:   str              = ""
    error:        Optional[str]    = None

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @property
    def failed(self) -> bool:
        return self.error is not None

    def csv_row(self) -> dict:
        return {
            "lambda": self.lam, "seed": self.seed, "budget": self.budget, "avg_entropy": self.avg_entropy,
            "avg_top1": self.avg_top1, "avg_margin": self.avg_margin, "ambiguous": self.ambiguous,
            "heldout_kl": self.heldout_kl,
        }

    def arch_row(self) -> dict:
        return {"lambda": self.lam, "seed": self.seed, "arch": self.arch, "searchable": self.searchable,
                "error": self.error or ""}


class EvalReport(BaseModel):
    name:                  str
    heldout_kl:            float = Field(ge=0.0)
    next_token_agreement:  float = Field(ge=0.0, le=1.0)
    recall_accuracy:       float = Field(ge=0.0, le=1.0)
    realized_budget:       float = Field(ge=0.0)
    n_full:                int   = Field(ge=0)
    n_window:              int   = Field(ge=0)
    n_linear:              int   = Field(ge=0)
    arch:                  str   = ""

    model_config = ConfigDict(extra="forbid")

    def csv_row(self) -> dict:
        return {
            "name": self.name, "heldout_kl": self.heldout_kl, "next_token_agreement": self.next_token_agreement,
            "recall_accuracy": self.recall_accuracy, "realized_budget": self.realized_budget,
            "n_full": self.n_full, "n_window": self.n_window, "n_linear": self.n_linear,
        }
