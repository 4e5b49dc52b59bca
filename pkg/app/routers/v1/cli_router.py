import argparse
from typing import List, Optional

from app.infrastructure.controllers import reports_router, search_router, training_router

COMMANDS = {
    "gen-corpus": (training_router.gen_corpus, "generate and split the synthetic corpus"),
    "train-teacher": (training_router.train_teacher, "train the all-FULL teacher"),
    "align": (training_router.align, "Stage 1: align the linear candidates to the teacher"),
    "search": (search_router.search, "Stage 2: architecture-only differentiable search"),
    "sweep": (search_router.sweep, "one search per (lambda, seed) of the sweep grid"),
    "distill": (training_router.distill, "Stage 3: distill the searched architecture"),
    "eval": (reports_router.evaluate, "held-out KL, agreement and recall of the final student"),
    "report": (reports_router.report, "CSV tables and SVG charts from the written artifacts"),
    "compare": (search_router.compare, "selector baselines vs the searched arch at a matched budget"),
    "pipeline": (reports_router.pipeline, "gen-corpus through eval and report in one run"),
}


def add_common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", metavar="PATH", help="INI run configuration")
    parser.add_argument("--seed", type=int, help="override [run] seed and every stage seed")
    parser.add_argument("--lambda", dest="lam", type=float, help="override [search] lambda")
    parser.add_argument("--budget-space", dest="budget_space", choices=["binary", "tri"],
                        help="override [search] candidate_space")
    parser.add_argument("--out", metavar="DIR", help="override [paths] out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dash", description="Hybrid-attention architecture search at desk scale")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (handler, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        add_common_flags(sub)
        if name == "pipeline":
            sub.add_argument("--no-sweep", action="store_true", help="skip the lambda sweep")
        sub.set_defaults(handler=handler)
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)
