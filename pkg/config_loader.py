# config_loader.py
# Loads run configurations and fit problems from flat TOML or JSON documents.
# Explicit files and flags only: nothing is read from the environment.
import json
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from config import RUN_CONFIG_KEYS, RunConfig, get_preset, require_valid
from errors import ConfigError, InvalidInputError
from validation_utils import (
    validate_bounds,
    validate_choice,
    validate_finite,
    validate_positive_int,
    validate_required,
)

logger = logging.getLogger(__name__)

SUPPORTED_SUFFIXES = (".toml", ".json")
FIT_PROBLEM_KEYS = ("model", "trajectories", "free", "fixed", "max_evals")

_KEY_LINE = re.compile(r'^\s*"?([A-Za-z_]\w*)"?\s*[=:]')


def _key_lines(text: str) -> Dict[str, int]:
    """First line on which each top-level-looking key is assigned"""
    lines: Dict[str, int] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        match = _KEY_LINE.match(line)
        if match:
            lines.setdefault(match.group(1), number)
    return lines


def read_document(path: Path) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """
    Parse a TOML or JSON document chosen by file extension

    Returns:
        (data, line number of each key)

    Raises:
        ConfigError: Missing file, unsupported extension or a syntax error
            (the diagnostic carries the line)
    """
    path = Path(path)
    source = str(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ConfigError(f"unsupported config format '{path.suffix}' (use .toml or .json)",
                          source=source)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError("file not found", source=source) from None
    except OSError as e:
        raise ConfigError(f"cannot read file: {e.strerror}", source=source) from None

    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML syntax error: {e}", source=source) from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"JSON syntax error at line {e.lineno}, column {e.colno}: {e.msg}",
                          source=source) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a key-value table", source=source)
    return data, _key_lines(text)


def parse_override(item: str) -> Tuple[str, Any]:
    """
    Parse one ``key=value`` override. The value is read as a TOML value
    (numbers, booleans, arrays, quoted strings); anything else is a bare string.
    """
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override '{item}' is not of the form key=value", source="--set")
    raw = raw.strip()
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def _reject_unknown(data: Dict[str, Any], allowed: Iterable[str], source: str,
                    lines: Optional[Dict[str, int]] = None) -> None:
    allowed = set(allowed)
    unknown = {k: "unknown key" for k in data if k not in allowed}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", unknown, source, lines)


def load_run_config(path: Optional[Path] = None, preset: Optional[str] = None,
                    overrides: Iterable[str] = ()) -> RunConfig:
    """
    Build and validate a RunConfig. Layers apply in order: defaults, the
    config file, the named preset, then ``key=value`` overrides.

    Raises:
        ConfigError: On parse failure, unknown keys or any violated invariant
    """
    values = asdict(RunConfig())
    source = None
    lines: Dict[str, int] = {}

    if path is not None:
        source = str(path)
        data, lines = read_document(Path(path))
        _reject_unknown(data, RUN_CONFIG_KEYS, source, lines)
        values.update(data)
        logger.info(f"✅ Loaded {len(data)} setting(s) from {source}")

    if preset:
        values.update(get_preset(preset))
        logger.info(f"✅ Applied preset '{preset}'")

    parsed = dict(parse_override(item) for item in overrides)
    if parsed:
        _reject_unknown(parsed, RUN_CONFIG_KEYS, "--set")
        values.update(parsed)
        # an override is reported against the flag, not a file line
        lines = {k: v for k, v in lines.items() if k not in parsed}

    config = RunConfig(**values)
    try:
        return require_valid(config, source)
    except ConfigError as e:
        raise ConfigError(str(e), e.field_errors, source, lines) from None


# ============================================================================
# FIT PROBLEMS
# ============================================================================

def load_fit_problem(path: Path):
    """
    Read a fit problem document and the trajectories it points to

    Trajectory entries are CSV paths relative to the problem file, or tables
    ``{path = "...", protocol = {kind = "ticvf", e_clamp = 15.0, n_trials = 50}}``
    when the protocol should not be inferred from the data.

    Returns:
        (FitProblem, max_evals or None)
    """
    from fitting import DEFAULT_BOUNDS, PARAMETER_NAMES, FitModelKind, FitProblem
    from paradigms import Protocol
    from report_utils import read_trajectory_csv

    path = Path(path)
    source = str(path)
    data, lines = read_document(path)
    _reject_unknown(data, FIT_PROBLEM_KEYS, source, lines)

    errors: Dict[str, str] = validate_required({
        "model": data.get("model"),
        "trajectories": data.get("trajectories"),
    })
    if "model" not in errors:
        errors.update(validate_choice("model", data["model"], [k.value for k in FitModelKind]))
    trajectories = data.get("trajectories")
    if "trajectories" not in errors and (not isinstance(trajectories, list) or not trajectories):
        errors["trajectories"] = "must be a non-empty list of trajectory files"
    free = data.get("free")
    fixed = data.get("fixed", {})
    if free is not None and not isinstance(free, dict):
        errors["free"] = "must be a table of name = [lower, upper]"
    if not isinstance(fixed, dict):
        errors["fixed"] = "must be a table of name = value"
    if "max_evals" in data:
        errors.update(validate_positive_int("max_evals", data["max_evals"]))
    if errors:
        raise ConfigError("invalid fit problem", errors, source, lines)

    kind = FitModelKind(data["model"])
    names = PARAMETER_NAMES[kind]
    if free is None:
        free = {n: list(DEFAULT_BOUNDS[n]) for n in names if n not in fixed}
    for name, bounds in free.items():
        errors.update(validate_bounds(f"free.{name}", bounds))
    for name, value in fixed.items():
        errors.update(validate_finite(f"fixed.{name}", value))
    if errors:
        raise ConfigError("invalid fit problem", errors, source, lines)

    observed: List = []
    for i, entry in enumerate(trajectories):
        protocol = None
        if isinstance(entry, dict):
            if "protocol" in entry:
                try:
                    protocol = Protocol.from_dict(entry["protocol"])
                except (KeyError, TypeError, ValueError) as e:
                    raise ConfigError("invalid fit problem",
                                      {f"trajectories[{i}].protocol": str(e)}, source, lines) from None
            entry = entry.get("path")
        if not isinstance(entry, str):
            raise ConfigError("invalid fit problem",
                              {f"trajectories[{i}]": "must be a path or {path, protocol} table"},
                              source, lines)
        observed.append(read_trajectory_csv(path.parent / entry, protocol))

    try:
        problem = FitProblem(
            observed=tuple(observed),
            model_kind=kind,
            bounds={n: tuple(b) for n, b in free.items()},
            fixed=fixed,
        )
    except InvalidInputError as e:
        raise ConfigError("invalid fit problem", {"problem": str(e)}, source, lines) from None
    logger.info(f"✅ Loaded fit problem with {len(observed)} trajectory file(s)")
    return problem, data.get("max_evals")
