from enum import Enum
from typing import Annotated, List, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, field_validator, model_validator

from app.domain.autodiff.optim import LrSchedule
from app.domain.entities.arch_state import CandidateSpace
from app.domain.entities.model_spec import ModelSpec


def split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FloatList = Annotated[List[float], BeforeValidator(split_list)]
IntList = Annotated[List[int], BeforeValidator(split_list)]
StrList = Annotated[List[str], BeforeValidator(split_list)]


class TrainStage(str, Enum):
    TEACHER = "teacher"
    ALIGN = "align"
    DISTILL = "distill"


class TrainConfig(BaseModel):
    stage: TrainStage = TrainStage.TEACHER
    steps: int = Field(default=300, ge=0)
    batch: int = Field(default=4, ge=1)
    seq_len: int = Field(default=64, ge=2)
    lr_main: float = 3e-3
    lr_attn_op: float = 3e-3
    weight_decay: float = Field(default=0.01, ge=0.0)
    lr_schedule: LrSchedule = LrSchedule.COSINE
    warmup_steps: int = Field(default=0, ge=0)
    grad_accum: int = Field(default=1, ge=1)
    clip_norm: float = Field(default=1.0, ge=0.0)
    log_every: int = Field(default=50, ge=1)
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def positive_learning_rates(self) -> "TrainConfig":
        if self.lr_main <= 0 or self.lr_attn_op <= 0:
            raise ValueError("learning rates must be positive")
        return self


def default_train_config(stage: TrainStage) -> TrainConfig:
    """Stage defaults: cosine alignment of linear modules, constant-LR distillation with short warmup."""
    if stage is TrainStage.ALIGN:
        return TrainConfig(stage=stage, steps=200, lr_main=1e-3, lr_attn_op=1e-3, lr_schedule=LrSchedule.COSINE)
    if stage is TrainStage.DISTILL:
        return TrainConfig(stage=stage, steps=200, lr_main=1e-4, lr_attn_op=1e-3,
                           lr_schedule=LrSchedule.CONSTANT, warmup_steps=3)
    return TrainConfig(stage=stage)


class SearchConfig(BaseModel):
    lam: float = Field(default=0.02, ge=0.0, alias="lambda")
    tau: float = Field(default=1.0, gt=0.0)
    steps: int = Field(default=1500, ge=0)
    grad_accum: int = Field(default=8, ge=1)
    micro_batch: int = Field(default=1, ge=1)
    seq_len: int = Field(default=128, ge=2)
    lr_alpha: float = Field(default=0.1, gt=0.0)
    t_arch_initial: float = Field(default=1.0, gt=0.0)
    t_arch_final: float = Field(default=0.1, gt=0.0)
    anneal_steps: int = Field(default=1500, ge=0)
    anneal: bool = True
    candidate_space: CandidateSpace = CandidateSpace.TRI
    log_every: int = Field(default=100, ge=1)
    seed: int = 0

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def check_temperatures(self) -> "SearchConfig":
        if self.t_arch_initial < self.t_arch_final:
            raise ValueError("t_arch_initial must be >= t_arch_final")
        return self


class CorpusConfig(BaseModel):
    n_tokens: int = Field(default=400_000, ge=1)
    n_keys: int = Field(default=8, ge=1)
    n_values: int = Field(default=8, ge=1)
    concentration: float = Field(default=0.1, gt=0.0)
    markov_run: int = Field(default=96, ge=1)
    recall_pairs: int = Field(default=4, ge=0)
    recall_gap: int = Field(default=24, ge=0)
    heldout_fraction: float = Field(default=0.05, gt=0.0, lt=1.0)

    model_config = ConfigDict(extra="forbid")


class RecallTaskSpec(BaseModel):
    n_trials: int = Field(default=200, ge=1)
    n_pairs: int = Field(default=4, ge=1)
    gap: int = Field(default=24, ge=0)
    seed: int = 0

    model_config = ConfigDict(extra="forbid")


class EvalConfig(BaseModel):
    heldout_batches: int = Field(default=16, ge=1)
    seq_len: int = Field(default=128, ge=2)
    recall_trials: int = Field(default=200, ge=1)
    recall_pairs: int = Field(default=4, ge=1)
    recall_gap: int = Field(default=24, ge=0)

    model_config = ConfigDict(extra="forbid")

    def recall_task(self, seed: int) -> RecallTaskSpec:
        return RecallTaskSpec(n_trials=self.recall_trials, n_pairs=self.recall_pairs, gap=self.recall_gap, seed=seed)


class SweepConfig(BaseModel):
    lambdas: FloatList = Field(default_factory=lambda: [0.001, 0.005, 0.02, 0.1])
    seeds: IntList = Field(default_factory=lambda: [0, 1, 2])
    target_budget: Optional[float] = None
    workers: Optional[int] = Field(default=None, ge=1)
    # distill every searched arch before measuring its held-out KL
    distill: bool = False

    model_config = ConfigDict(extra="forbid")

    @field_validator("lambdas", mode="after")
    @classmethod
    def non_negative(cls, v: List[float]) -> List[float]:
        if not v or any(lam < 0 for lam in v):
            raise ValueError("lambda grid must be non-empty and non-negative")
        return v


class CompareConfig(BaseModel):
    budget: Optional[int] = Field(default=None, ge=0)
    methods: StrList = Field(default_factory=lambda: ["uniform", "greedy_add", "greedy_remove", "dash"])

    model_config = ConfigDict(extra="forbid")


class PathsConfig(BaseModel):
    out_dir: str = "out"
    corpus: str = "corpus.npz"
    teacher: str = "teacher.ckpt.json"
    aligned: str = "aligned.ckpt.json"
    search: str = "search.ckpt.json"
    student: str = "student.ckpt.json"

    model_config = ConfigDict(extra="forbid")


class RunConfig(BaseModel):
    seed: int = 0
    model: ModelSpec = Field(default_factory=ModelSpec)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    teacher: TrainConfig = Field(default_factory=lambda: default_train_config(TrainStage.TEACHER))
    align: TrainConfig = Field(default_factory=lambda: default_train_config(TrainStage.ALIGN))
    search: SearchConfig = Field(default_factory=SearchConfig)
    distill: TrainConfig = Field(default_factory=lambda: default_train_config(TrainStage.DISTILL))
    eval: EvalConfig = Field(default_factory=EvalConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    compare: CompareConfig = Field(default_factory=CompareConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_lengths(self) -> "RunConfig":
        for name, seq_len in (("teacher", self.teacher.seq_len), ("align", self.align.seq_len),
                              ("distill", self.distill.seq_len), ("search", self.search.seq_len),
                              ("eval", self.eval.seq_len)):
            if seq_len > self.model.t_max:
                raise ValueError(f"[{name}] seq_len={seq_len} exceeds [model] t_max={self.model.t_max}")
        recall_len = 2 * self.eval.recall_pairs + self.eval.recall_gap + 3
        if recall_len > self.model.t_max:
            raise ValueError(f"recall prompts of {recall_len} tokens exceed t_max={self.model.t_max}")
        return self
