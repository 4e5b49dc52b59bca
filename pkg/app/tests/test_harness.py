import json
import os
from pathlib import Path

import numpy as np
import pytest

import app.api_services.sweep_use_case_impl as sweep_module
from app.adapters.repositories.artifact_repository import ArtifactRepository
from app.adapters.repositories.checkpoint_repository import CheckpointRepository
from app.adapters.worker_pool import get_worker_pool, serial_map, worker_count
from app.api_services.corpus_use_case_impl import CorpusUseCaseImpl
from app.api_services.report_use_case_impl import (
    ALLOCATION_SVG, ARCH_TXT, BUDGET_SVG, EMPTY_NOTICE, FINAL_ARCH_SVG, SWEEP_ARCHS_CSV, SWEEP_CSV,
    SWEEP_SUMMARY_CSV, ReportUseCaseImpl,
)
from app.api_services.sweep_use_case_impl import SweepTask, SweepUseCaseImpl, run_sweep_task
from app.api_services.tables_reports_use_case_impl import TablesReportsUseCaseImpl
from app.conf.settings.dependencies import build_run_config, load_run_config, parse_config_text
from app.domain.corpus.generator import (
    MarkovSource, TokenLayout, empirical_unigram, gen_corpus, split_heldout,
)
from app.domain.entities.arch_state import CandidateSpace
from app.domain.entities.checkpoint import Checkpoint, CheckpointMetadata
from app.domain.entities.model_spec import HybridArch, OperatorKind
from app.infrastructure.dto.reports_schema import SweepRecord
from app.routers.v1.cli_router import COMMANDS, build_parser, dispatch
from app.tests.conftest import TINY_INI
from app.utils.constants import KV_OPEN_TOKEN, QUERY_TOKEN, SWEEP_CSV_COLUMNS
from app.utils.errors import AppError, CheckpointError, ErrorType

REPO_ROOT = Path(__file__).parents[2]


# checkpoints

@pytest.fixture
def checkpoints(tmp_path):
    return CheckpointRepository(root_dir=str(tmp_path))


def test_checkpoint_roundtrip_keeps_float32_values_and_metadata(checkpoints, tiny_spec, tiny_params):
    arch = HybridArch.from_mnemonics("L F W L")
    alpha = {1: np.array([0.5, -0.25, 0.0]), 2: np.array([1.0, 2.0, 3.0])}
    metadata = CheckpointMetadata(stage="search", step=4, seed=7, t_arch=0.1, candidate_space="tri")

    checkpoints.save_checkpoint(Checkpoint(tiny_spec, tiny_params, metadata, arch=arch, alpha=alpha), "a.json")
    loaded = checkpoints.load_checkpoint("a.json")

    assert loaded.model_spec == tiny_spec
    assert loaded.metadata == metadata
    assert loaded.arch == arch
    np.testing.assert_array_equal(loaded.alpha[1], alpha[1])
    assert sorted(loaded.parameters) == sorted(tiny_params)
    for name, value in tiny_params.items():
        np.testing.assert_array_equal(loaded.parameters[name], value.astype(np.float32).astype(np.float64))


def test_checkpoint_without_arch_or_alpha(checkpoints, tiny_spec, tiny_params):
    checkpoints.save_checkpoint(Checkpoint(tiny_spec, tiny_params, CheckpointMetadata(stage="teacher")), "t.json")

    loaded = checkpoints.load_checkpoint("t.json")

    assert loaded.arch is None
    assert loaded.alpha == {}


def write_payload(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload), encoding="utf-8")
    return str(path)


def saved_payload(checkpoints, tiny_spec, tiny_params, tmp_path):
    checkpoints.save_checkpoint(Checkpoint(tiny_spec, tiny_params, CheckpointMetadata(stage="teacher")), "ok.json")
    return json.loads((tmp_path / "ok.json").read_text(encoding="utf-8"))


def test_corrupt_checkpoints(checkpoints, tiny_spec, tiny_params, tmp_path):
    payload = saved_payload(checkpoints, tiny_spec, tiny_params, tmp_path)
    truncated = json.loads(json.dumps(payload))
    truncated["tensors"]["head.w"]["data"] = truncated["tensors"]["head.w"]["data"][:8]
    missing = {key: value for key, value in payload.items() if key != "tensors"}

    for path in (write_payload(tmp_path, "garbage.json", "{not json"),
                 write_payload(tmp_path, "list.json", [1, 2, 3]),
                 write_payload(tmp_path, "truncated.json", truncated),
                 write_payload(tmp_path, "missing.json", missing)):
        with pytest.raises(CheckpointError) as err:
            checkpoints.load_checkpoint(path)
        assert err.value.error_type is ErrorType.CHECKPOINT_CORRUPT


def test_checkpoint_version_mismatch(checkpoints, tiny_spec, tiny_params, tmp_path):
    payload = saved_payload(checkpoints, tiny_spec, tiny_params, tmp_path)
    payload["format_version"] = 99

    with pytest.raises(CheckpointError) as err:
        checkpoints.load_checkpoint(write_payload(tmp_path, "v99.json", payload))

    assert err.value.error_type is ErrorType.CHECKPOINT_VERSION


def test_missing_checkpoint_is_an_io_error(checkpoints):
    with pytest.raises(CheckpointError) as err:
        checkpoints.load_checkpoint("absent.json")

    assert err.value.error_type is ErrorType.CHECKPOINT_IO_ERROR


# configuration

def test_parse_ini_sections_and_defaults():
    cfg = build_run_config(parse_config_text(TINY_INI))

    assert cfg.model.n_layers == 4 and cfg.model.window == 4
    assert cfg.search.lam == 0.02
    assert cfg.search.candidate_space is CandidateSpace.TRI
    assert cfg.align.lr_main == 1e-3
    assert cfg.distill.lr_schedule.value == "constant" and cfg.distill.warmup_steps == 3
    assert cfg.sweep.lambdas == [0.001, 0.005, 0.02, 0.1]


def test_cli_overrides_reach_every_stage():
    overrides = {"seed": 5, "lambda": 0.3, "budget_space": "binary", "out_dir": "elsewhere"}

    cfg = build_run_config(parse_config_text(TINY_INI), overrides)

    assert cfg.seed == 5
    assert (cfg.teacher.seed, cfg.align.seed, cfg.distill.seed, cfg.search.seed) == (5, 5, 5, 5)
    assert cfg.search.lam == 0.3
    assert cfg.search.candidate_space is CandidateSpace.BINARY
    assert cfg.paths.out_dir == "elsewhere"


def test_run_seed_is_the_default_stage_seed():
    text = TINY_INI.replace("seed = 0", "seed = 7")
    text = text.replace("[distill]\n", "[distill]\nseed = 2\n")

    cfg = build_run_config(parse_config_text(text))

    assert cfg.seed == 7
    assert (cfg.teacher.seed, cfg.align.seed, cfg.search.seed) == (7, 7, 7)
    assert cfg.distill.seed == 2


def test_run_seed_without_train_sections():
    cfg = build_run_config(parse_config_text("[run]\nseed = 4\n"))

    assert (cfg.teacher.seed, cfg.align.seed, cfg.distill.seed, cfg.search.seed) == (4, 4, 4, 4)
    assert cfg.distill.warmup_steps == 3


@pytest.mark.parametrize("section,key", [("search", "temperature"), ("eval", "batches"), ("paths", "root")])
def test_unknown_keys_inside_sections_are_rejected(section, key):
    with pytest.raises(AppError) as err:
        build_run_config({section: {key: "1"}})

    assert err.value.error_type is ErrorType.CONFIG_ERROR
    assert key in str(err.value)


def test_records_accept_lambda_by_alias_and_by_name():
    by_alias = SweepRecord.model_validate({"lambda": 0.5, "seed": 1})

    assert by_alias == SweepRecord(lam=0.5, seed=1)
    assert SweepRecord.model_config["extra"] == "forbid"


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[run]\nseed = 0\ncolor = red\n",
    "[model]\nd_model = 10\nn_heads = 3\n",
    "[search]\nlambda = -1\n",
    "[search]\nsteps = many\n",
    "[sweep]\nlambdas =\n",
    "[model]\nt_max = 16\n",
    "no section header\n",
])
def test_invalid_configurations_are_config_errors(text):
    with pytest.raises(AppError) as err:
        build_run_config(parse_config_text(text))

    assert err.value.error_type is ErrorType.CONFIG_ERROR


def test_missing_config_file(tmp_path):
    with pytest.raises(AppError) as err:
        load_run_config(str(tmp_path / "absent.ini"))

    assert err.value.error_type is ErrorType.CONFIG_ERROR


def test_shipped_desk_config_loads():
    cfg = load_run_config(str(REPO_ROOT / "configs" / "desk.ini"))

    assert cfg.model.n_layers == 8 and cfg.model.d_model == 64
    assert cfg.search.steps == 1500 and cfg.search.grad_accum == 8
    assert cfg.sweep.seeds == [0, 1, 2]
    assert cfg.compare.methods == ["uniform", "greedy_add", "greedy_remove", "dash"]


# corpus

def test_corpus_is_deterministic_per_seed(tiny_layout):
    first, _ = gen_corpus(seed=3, n_tokens=2000, layout=tiny_layout, markov_run=24, recall_pairs=2, recall_gap=4)
    again, _ = gen_corpus(seed=3, n_tokens=2000, layout=tiny_layout, markov_run=24, recall_pairs=2, recall_gap=4)
    other, _ = gen_corpus(seed=4, n_tokens=2000, layout=tiny_layout, markov_run=24, recall_pairs=2, recall_gap=4)

    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)
    assert first.size == 2000 and first.min() >= 0 and first.max() < tiny_layout.vocab


def test_recall_segments_answer_their_queries(tiny_corpus, tiny_layout):
    stream = np.concatenate([tiny_corpus.train, tiny_corpus.heldout])
    opens = np.flatnonzero(stream == KV_OPEN_TOKEN)

    assert opens.size > 0
    for start in opens:
        segment = stream[start:start + 1 + 2 * 2 + 4 + 3]
        if segment.size < 12:
            continue
        pairs = dict(zip(segment[1:5:2], segment[2:5:2]))
        assert segment[9] == QUERY_TOKEN
        assert pairs[segment[10]] == segment[11]


def test_markov_stream_matches_its_stationary_distribution():
    layout = TokenLayout(vocab=32, n_keys=4, n_values=4)
    stream, source = gen_corpus(seed=0, n_tokens=1_000_000, layout=layout, concentration=1.0, recall_pairs=0)

    empirical = empirical_unigram(stream, layout.markov_offset, layout.n_markov)

    assert 0.5 * np.abs(empirical - source.stationary_unigram()).sum() < 0.02


def test_markov_rows_are_distributions(rng):
    source = MarkovSource.random(5, 0.1, rng)

    np.testing.assert_allclose(source.table.sum(axis=-1), 1.0)
    assert source.table.min() > 0
    assert 0 < source.entropy_rate() < np.log(5)


def test_corpus_layout_errors(tiny_layout):
    with pytest.raises(AppError):
        TokenLayout(vocab=10, n_keys=4, n_values=4)
    with pytest.raises(AppError):
        gen_corpus(seed=0, n_tokens=100, layout=tiny_layout, recall_pairs=5)


def test_heldout_split():
    train, heldout = split_heldout(np.arange(100), 0.1)

    assert train.size == 90 and heldout.size == 10
    assert heldout[0] == 90


def test_corpus_file_roundtrip_and_vocab_check(run_config, tmp_path):
    corpus_use_case = CorpusUseCaseImpl(ArtifactRepository(root_dir=str(tmp_path)))

    generated = corpus_use_case.generate(run_config)
    loaded = corpus_use_case.load(run_config)
    mismatched = run_config.model_copy(update={"model": run_config.model.model_copy(update={"vocab": 64})})

    np.testing.assert_array_equal(generated.train, loaded.train)
    np.testing.assert_array_equal(generated.source.table, loaded.source.table)
    assert loaded.layout == generated.layout
    with pytest.raises(AppError) as err:
        corpus_use_case.load(mismatched)
    assert err.value.error_type is ErrorType.CONFIG_ERROR


def test_load_or_generate_creates_a_missing_corpus(run_config, tmp_path):
    corpus_use_case = CorpusUseCaseImpl(ArtifactRepository(root_dir=str(tmp_path)))

    corpus = corpus_use_case.load_or_generate(run_config)

    assert os.path.exists(tmp_path / run_config.paths.corpus)
    assert corpus.train.size + corpus.heldout.size == run_config.corpus.n_tokens


# reports

def sample_records():
    return [
        SweepRecord(lam=1.0, seed=0, budget=1.25, avg_entropy=0.5, avg_top1=0.75, avg_margin=0.5, ambiguous=0,
                    heldout_kl=0.5, arch="L L W F", searchable="L W F"),
        SweepRecord(lam=0.01, seed=0, budget=4.875, avg_entropy=1.0, avg_top1=0.5, avg_margin=0.25, ambiguous=1,
                    heldout_kl=0.25, arch="L F F F", searchable="F F F"),
        SweepRecord(lam=0.01, seed=1, error="NUMERICAL_ERROR: diverged"),
    ]


@pytest.fixture
def reports(tmp_path):
    return ReportUseCaseImpl(ArtifactRepository(root_dir=str(tmp_path)), window=4, seq_len=16)


def test_emit_report_writes_tables_and_charts(reports, tmp_path):
    written = reports.emit_report(sample_records())
    strip = (tmp_path / ALLOCATION_SVG).read_text(encoding="utf-8")
    sweep = (tmp_path / SWEEP_CSV).read_text(encoding="utf-8")

    assert {os.path.basename(p) for p in written} == {SWEEP_CSV, SWEEP_ARCHS_CSV, SWEEP_SUMMARY_CSV,
                                                       ALLOCATION_SVG, BUDGET_SVG}
    assert sweep.splitlines()[0] == ",".join(SWEEP_CSV_COLUMNS)
    assert sweep.splitlines()[1].startswith("0.01,0,4.875,")
    assert strip.count('class="cell"') == 6
    assert strip.index("B=1.25 lambda=1 seed=0") < strip.index("B=4.875 lambda=0.01 seed=0")
    assert "layer 1: LINEAR" in strip
    assert 'class="bar"' in (tmp_path / BUDGET_SVG).read_text(encoding="utf-8")


def test_emit_report_is_byte_identical_across_runs(tmp_path):
    outputs = []
    for name in ("first", "second"):
        root = tmp_path / name
        ReportUseCaseImpl(ArtifactRepository(root_dir=str(root)), window=4, seq_len=16).emit_report(
            sample_records(), HybridArch.from_mnemonics("L F W L"))
        outputs.append({p.name: p.read_bytes() for p in sorted(root.iterdir())})

    assert outputs[0] == outputs[1]
    assert len(outputs[0]) == 7


def test_emit_report_with_no_records_writes_a_notice(reports, tmp_path):
    written = reports.emit_report([])

    assert [os.path.basename(p) for p in written] == [EMPTY_NOTICE]
    assert "empty report" in (tmp_path / EMPTY_NOTICE).read_text(encoding="utf-8")
    assert not (tmp_path / SWEEP_CSV).exists()


def test_final_arch_strip_includes_layer_zero(reports, tmp_path):
    reports.emit_report([], HybridArch.from_mnemonics("L F W L"))
    strip = (tmp_path / FINAL_ARCH_SVG).read_text(encoding="utf-8")

    assert (tmp_path / ARCH_TXT).read_text(encoding="utf-8") == "L F W L\n"
    assert strip.count('class="cell"') == 4
    assert "layer 0: LINEAR" in strip
    assert "B=1.25" in strip
    assert reports.load_final_arch() == HybridArch.from_mnemonics("L F W L")


def test_records_survive_the_csv_roundtrip(reports):
    records = sample_records()

    reports.emit_report(records)
    loaded = reports.load_records()

    assert loaded == sorted(records, key=lambda r: (r.lam, r.seed))
    assert loaded[1].failed and loaded[1].budget is None


def test_budget_summary_uses_successful_runs_only():
    summary = TablesReportsUseCaseImpl().build_budget_by_lambda(sample_records())

    assert summary["lambda"].tolist() == [0.01, 1.0]
    assert summary["runs"].tolist() == [2, 1]
    assert summary["failed"].tolist() == [1, 0]
    assert summary["median_budget"].tolist() == [4.875, 1.25]
    assert TablesReportsUseCaseImpl().build_budget_by_lambda([]) is None


def test_all_failed_sweep_still_writes_tables(reports, tmp_path):
    written = reports.emit_report([SweepRecord(lam=0.1, seed=0, error="boom")])

    assert {os.path.basename(p) for p in written} == {SWEEP_CSV, SWEEP_ARCHS_CSV, SWEEP_SUMMARY_CSV}


# sweep

def test_sweep_records_failures_instead_of_stopping(monkeypatch, run_config, tiny_params, tiny_corpus):
    class FailingSearch:
        def run_search(self, cfg, *args):
            if cfg.lam > 0.5:
                raise AppError(ErrorType.NUMERICAL_ERROR, "diverged")
            raise RuntimeError("worker crashed")

    monkeypatch.setattr(sweep_module, "SearchUseCaseImpl", FailingSearch)
    task = SweepTask(cfg=run_config, lam=1.0, seed=0, teacher=tiny_params, candidates=tiny_params,
                     corpus=tiny_corpus)

    numerical = run_sweep_task(task)
    crashed = run_sweep_task(SweepTask(**{**task.__dict__, "lam": 0.01}))

    assert numerical.failed and "NUMERICAL_ERROR" in numerical.error
    assert crashed.failed and "worker crashed" in crashed.error


def test_sweep_is_sorted_and_reproducible(run_config, tiny_params, tiny_corpus):
    sweep = SweepUseCaseImpl(run_config, tiny_params, tiny_params, tiny_corpus)

    first = sweep.run_sweep([1.0, 0.01], [0])
    second = sweep.run_sweep([0.01, 1.0], [0])

    assert [(r.lam, r.seed) for r in first] == [(0.01, 0), (1.0, 0)]
    assert first == second
    assert not any(r.failed for r in first)
    assert all(r.arch.split()[0] == "L" and len(r.searchable.split()) == 3 for r in first)
    assert all(r.heldout_kl >= 0 for r in first)


# worker pool

def test_worker_count_is_capped_by_threads_and_tasks():
    assert worker_count(8, 3) == 2
    assert worker_count(None, 1) == 1
    assert worker_count(1, 10) == 1


def test_worker_pool_preserves_order():
    with get_worker_pool(1) as map_fn:
        assert map_fn is serial_map
    with get_worker_pool(2, 5) as map_fn:
        assert map_fn(abs, [-3, 2, -1, 0, -5]) == [3, 2, 1, 0, 5]


# command line

def tiny_ini_file(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI, encoding="utf-8")
    return str(path)


def test_parser_knows_every_command():
    parser = build_parser()

    for command in COMMANDS:
        args = parser.parse_args([command, "--seed", "3"])
        assert args.seed == 3 and callable(args.handler)
    assert set(COMMANDS) == {"gen-corpus", "train-teacher", "align", "search", "sweep", "distill", "eval",
                             "report", "compare", "pipeline"}


def test_cli_exit_codes(tmp_path):
    config = tiny_ini_file(tmp_path)
    out = str(tmp_path / "out")

    assert dispatch(["search", "--config", str(tmp_path / "absent.ini")]) == ErrorType.CONFIG_ERROR.value
    assert dispatch(["search", "--config", config, "--lambda", "-1", "--out", out]) == ErrorType.CONFIG_ERROR.value
    assert dispatch(["eval", "--config", config, "--out", out]) == ErrorType.VALIDATION_ERROR.value
    assert dispatch(["gen-corpus", "--config", config, "--out", out]) == 0
    assert os.path.exists(os.path.join(out, "corpus.npz"))
    assert dispatch(["align", "--config", config, "--out", out]) == ErrorType.CHECKPOINT_IO_ERROR.value


def test_cli_rejects_unknown_budget_space():
    with pytest.raises(SystemExit) as exit_info:
        dispatch(["search", "--budget-space", "quad"])

    assert exit_info.value.code == 2
