from argparse import Namespace

from app.conf.settings.dependencies import run_config_from_args
from app.container_instance.instances import pipeline_use_case
from app.utils.errors import handle_cli_error
from app.utils.logger import log


@handle_cli_error
def gen_corpus(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    corpus = pipeline_use_case(cfg).gen_corpus(cfg)
    log(f"gen-corpus done: {corpus.train.size + corpus.heldout.size} tokens")
    return 0


@handle_cli_error
def train_teacher(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    pipeline_use_case(cfg).train_teacher(cfg)
    return 0


@handle_cli_error
def align(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    pipeline_use_case(cfg).align(cfg)
    return 0


@handle_cli_error
def distill(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    pipeline_use_case(cfg).distill(cfg)
    return 0
