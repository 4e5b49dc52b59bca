import os
import tempfile
from dataclasses import dataclass

# settings are read lazily on the first log call; keep test logs out of the repo
os.environ.setdefault("LOG_FILE", os.path.join(tempfile.gettempdir(), "dash-tests.log"))
os.environ.setdefault("DASH_THREADS", "2")

import numpy as np
import pytest

from app.api_services.training_use_case_impl import TrainingUseCaseImpl
from app.domain.corpus.generator import CorpusData, TokenLayout, gen_corpus, split_heldout
from app.domain.entities.model_spec import ModelSpec
from app.domain.entities.parameters import Parameters, init_parameters
from app.infrastructure.dto.config_schema import RunConfig, TrainConfig, TrainStage


TINY_RUN = {
    "seed": 0,
    "model": {"n_layers": 4, "d_model": 16, "n_heads": 2, "vocab": 32, "t_max": 32, "window": 4, "ffn_mult": 2},
    "corpus": {"n_tokens": 3000, "n_keys": 4, "n_values": 4, "markov_run": 24, "recall_pairs": 2,
               "recall_gap": 4, "heldout_fraction": 0.1},
    "teacher": {"stage": "teacher", "steps": 6, "batch": 2, "seq_len": 16, "log_every": 2},
    "align": {"stage": "align", "steps": 4, "batch": 2, "seq_len": 16, "lr_main": 1e-3, "lr_attn_op": 1e-3},
    "search": {"lambda": 0.02, "steps": 4, "grad_accum": 2, "seq_len": 16, "anneal_steps": 4, "log_every": 2},
    "distill": {"stage": "distill", "steps": 4, "batch": 2, "seq_len": 16, "lr_main": 1e-4, "lr_attn_op": 1e-3,
                "lr_schedule": "constant", "warmup_steps": 1},
    "eval": {"heldout_batches": 2, "seq_len": 16, "recall_trials": 8, "recall_pairs": 2, "recall_gap": 4},
    "sweep": {"lambdas": [0.01, 1.0], "seeds": [0], "workers": 1},
    "compare": {"budget": 1, "methods": ["uniform", "greedy_add"]},
}

TINY_INI = """
[run]
seed = 0

[model]
n_layers = 4
d_model = 16
n_heads = 2
vocab = 32
t_max = 32
window = 4
ffn_mult = 2

[corpus]
n_tokens = 3000
n_keys = 4
n_values = 4
markov_run = 24
recall_pairs = 2
recall_gap = 4
heldout_fraction = 0.1

[teacher]
steps = 2
batch = 2
seq_len = 16

[align]
steps = 2
batch = 2
seq_len = 16

[search]
steps = 2
grad_accum = 1
seq_len = 16

[distill]
steps = 2
batch = 2
seq_len = 16

[eval]
heldout_batches = 2
seq_len = 16
recall_trials = 4
recall_pairs = 2
recall_gap = 4
"""


def tiny_run_config(out_dir: str, **sections) -> RunConfig:
    raw = {key: dict(value) if isinstance(value, dict) else value for key, value in TINY_RUN.items()}
    for section, values in sections.items():
        raw[section] = {**raw.get(section, {}), **values}
    raw["paths"] = {"out_dir": out_dir}
    return RunConfig.model_validate(raw)


@pytest.fixture
def tiny_spec() -> ModelSpec:
    return ModelSpec(**TINY_RUN["model"])


@pytest.fixture
def tiny_params(tiny_spec):
    return init_parameters(tiny_spec, seed=0)


@pytest.fixture
def tiny_layout() -> TokenLayout:
    return TokenLayout(vocab=32, n_keys=4, n_values=4)


@pytest.fixture
def tiny_corpus(tiny_layout) -> CorpusData:
    stream, source = gen_corpus(seed=0, n_tokens=3000, layout=tiny_layout, markov_run=24, recall_pairs=2,
                                recall_gap=4)
    train, heldout = split_heldout(stream, 0.1)
    return CorpusData(train=train, heldout=heldout, layout=tiny_layout, source=source)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def run_config(tmp_path) -> RunConfig:
    return tiny_run_config(str(tmp_path))


@dataclass(frozen=True)
class TrainedTiny:
    spec: ModelSpec
    corpus: CorpusData
    teacher: Parameters
    candidates: Parameters
    teacher_heldout_loss: float


@pytest.fixture(scope="session")
def trained_tiny():
    """Teacher trained on the tiny corpus plus its aligned linear candidates, shared by the slow experiments."""
    spec = ModelSpec(**TINY_RUN["model"])
    layout = TokenLayout(vocab=32, n_keys=4, n_values=4)
    stream, source = gen_corpus(seed=0, n_tokens=3000, layout=layout, markov_run=24, recall_pairs=2, recall_gap=4)
    train, heldout = split_heldout(stream, 0.1)
    corpus = CorpusData(train=train, heldout=heldout, layout=layout, source=source)

    training = TrainingUseCaseImpl()
    teacher = training.train_teacher(
        corpus, spec, TrainConfig(steps=300, batch=4, seq_len=32, lr_main=1e-2, lr_attn_op=1e-2, log_every=100),
        init_parameters(spec, seed=0),
    )
    aligned = training.align(
        corpus, spec, TrainConfig(stage=TrainStage.ALIGN, steps=150, batch=2, seq_len=32, lr_main=1e-2,
                                  lr_attn_op=1e-2, log_every=50),
        teacher.params,
    )
    return TrainedTiny(spec=spec, corpus=corpus, teacher=teacher.params, candidates=aligned.params,
                       teacher_heldout_loss=teacher.extras["heldout_loss"])
