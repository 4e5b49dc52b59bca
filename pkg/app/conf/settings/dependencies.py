import configparser
from typing import Any, Dict, Optional

from pydantic import ValidationError

from app.infrastructure.dto.config_schema import RunConfig, TrainStage, default_train_config
from app.utils.errors import AppError, ErrorType
from app.utils.logger import log

TRAIN_SECTIONS = {"teacher": TrainStage.TEACHER, "align": TrainStage.ALIGN, "distill": TrainStage.DISTILL}
SEEDED_SECTIONS = ("teacher", "align", "distill", "search")
SECTIONS = ("run", "model", "corpus", "teacher", "align", "search", "distill", "eval", "sweep", "compare", "paths")


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise AppError(ErrorType.CONFIG_ERROR, f"{source}: {err}")

    raw: Dict[str, Any] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise AppError(ErrorType.CONFIG_ERROR, f"{source}: unknown section [{section}]")
        values = dict(parser.items(section))
        if section == "run":
            unknown = set(values) - {"seed"}
            if unknown:
                raise AppError(ErrorType.CONFIG_ERROR, f"{source}: unknown key(s) in [run]: {sorted(unknown)}")
            raw.update(values)
        elif section in TRAIN_SECTIONS:
            stage = TRAIN_SECTIONS[section]
            raw[section] = {**default_train_config(stage).model_dump(mode="json", exclude={"seed"}), **values,
                            "stage": stage.value}
        else:
            raw[section] = values
    return raw


def build_run_config(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Validate the parsed sections and apply CLI overrides: seed, lambda,
    budget_space and out_dir. Unknown keys are configuration errors.
    """
    raw = {key: dict(value) if isinstance(value, dict) else value for key, value in raw.items()}
    for stage in TRAIN_SECTIONS.values():
        raw.setdefault(stage.value, default_train_config(stage).model_dump(mode="json", exclude={"seed"}))
    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}
    if "seed" in overrides:
        raw["seed"] = overrides["seed"]
        for section in SEEDED_SECTIONS:
            raw.setdefault(section, {})["seed"] = overrides["seed"]
    elif "seed" in raw:
        # [run] seed is the default of every stage that does not set its own
        for section in SEEDED_SECTIONS:
            raw.setdefault(section, {}).setdefault("seed", raw["seed"])
    if "lambda" in overrides:
        raw.setdefault("search", {})["lambda"] = overrides["lambda"]
    if "budget_space" in overrides:
        raw.setdefault("search", {})["candidate_space"] = overrides["budget_space"]
    if "out_dir" in overrides:
        raw.setdefault("paths", {})["out_dir"] = overrides["out_dir"]
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as err:
        first = err.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        log(f"Invalid run configuration: {err}", level="error")
        raise AppError(ErrorType.CONFIG_ERROR, f"{location}: {first['msg']}")


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    if path is None:
        return build_run_config({}, overrides)
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as err:
        raise AppError(ErrorType.CONFIG_ERROR, f"cannot read config {path}: {err}")
    log(f"Loading run configuration from {path}")
    return build_run_config(parse_config_text(text, source=path), overrides)


def run_config_from_args(args) -> RunConfig:
    """RunConfig of a CLI invocation: --config file plus the override flags."""
    overrides = {
        "seed": getattr(args, "seed", None),
        "lambda": getattr(args, "lam", None),
        "budget_space": getattr(args, "budget_space", None),
        "out_dir": getattr(args, "out", None),
    }
    return load_run_config(getattr(args, "config", None), overrides)
