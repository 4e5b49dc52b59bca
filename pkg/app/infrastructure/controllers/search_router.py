from argparse import Namespace

from app.conf.settings.dependencies import run_config_from_args
from app.container_instance.instances import pipeline_use_case
from app.utils.errors import handle_cli_error
from app.utils.logger import log


@handle_cli_error
def search(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    result = pipeline_use_case(cfg).search(cfg)
    log(f"search done: {result.arch.mnemonics()}")
    return 0


@handle_cli_error
def sweep(args: Namespace) -> int:
    """Exit code 0 only when every (lambda, seed) run succeeded."""
    cfg = run_config_from_args(args)
    records = pipeline_use_case(cfg).sweep(cfg)
    failed = [(r.lam, r.seed) for r in records if r.failed]
    if failed:
        log(f"sweep finished with failed runs: {failed}", level="error")
        return 1
    return 0


@handle_cli_error
def compare(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    pipeline_use_case(cfg).compare(cfg)
    return 0
