from argparse import Namespace

from app.conf.settings.dependencies import run_config_from_args
from app.container_instance.instances import pipeline_use_case
from app.utils.errors import handle_cli_error
from app.utils.logger import log


@handle_cli_error
def evaluate(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    pipeline_use_case(cfg).evaluate(cfg)
    return 0


@handle_cli_error
def report(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    written = pipeline_use_case(cfg).report(cfg)
    log(f"report done: {len(written)} files")
    return 0


@handle_cli_error
def pipeline(args: Namespace) -> int:
    cfg = run_config_from_args(args)
    pipeline_use_case(cfg).run_pipeline(cfg, with_sweep=not args.no_sweep)
    return 0
