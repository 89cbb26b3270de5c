# validation_utils.py
# Field validation helpers shared by the run config and fit problem loaders.
# Each helper returns a dict of errors keyed by field name (empty when valid).
import math
from typing import Dict, Iterable


def is_number(value: object) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_required(fields: Dict[str, object]) -> Dict[str, str]:
    """
    fields: {"field_name": value}
    returns dict of errors keyed by field_name
    """
    errors = {}
    for k, v in fields.items():
        if v is None or (isinstance(v, str) and v.strip() == ""):
            errors[k] = "This field is required"
    return errors


def validate_finite(name: str, value: object, positive: bool = False) -> Dict[str, str]:
    if not is_number(value) or not math.isfinite(value):
        return {name: f"must be a finite number (got {value!r})"}
    if positive and value <= 0:
        return {name: f"must be > 0 (got {value!r})"}
    return {}


def validate_positive_int(name: str, value: object) -> Dict[str, str]:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        return {name: f"must be an integer >= 1 (got {value!r})"}
    return {}


def validate_choice(name: str, value: object, choices: Iterable[str]) -> Dict[str, str]:
    choices = list(choices)
    if value not in choices:
        return {name: f"must be one of {choices} (got {value!r})"}
    return {}


def validate_bounds(name: str, value: object) -> Dict[str, str]:
    """A [lower, upper] pair of finite numbers with lower < upper"""
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(is_number(v) and math.isfinite(v) for v in value)):
        return {name: f"must be [lower, upper] with finite numbers (got {value!r})"}
    if not value[0] < value[1]:
        return {name: f"lower < upper violated (got {list(value)!r})"}
    return {}


def validate_optional_text(name: str, value: object) -> Dict[str, str]:
    """None, or a non-blank string"""
    if value is None:
        return {}
    if not isinstance(value, str) or not value.strip():
        return {name: f"must be a non-empty path string (got {value!r})"}
    return {}
