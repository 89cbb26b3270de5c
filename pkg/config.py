"""
adaptsim - Configuration Module
Run configuration, global numeric settings and named model presets.

A run is described by one flat key-value document (TOML or JSON). Every key
maps onto a field of RunConfig; unknown keys are rejected so that a typo in a
model parameter can never pass silently.
"""

from dataclasses import dataclass, fields
from enum import Enum
from typing import Any, Dict, List, Optional

from errors import ConfigError
from models import (
    DEFAULT_A,
    DEFAULT_B,
    DEFAULT_E_SAT,
    DEFAULT_K,
    DEFAULT_P_MAX,
    CoupledModelParams,
    Model,
    ModelKind,
    RampRate,
    RateVariant,
    SigmoidRate,
    StandardSsmParams,
)
from validation_utils import (
    validate_choice,
    validate_finite,
    validate_optional_text,
    validate_positive_int,
)


class ProtocolKind(Enum):
    """Experiment paradigms"""
    TICVF = "ticvf"
    VMR = "vmr"
    WASHOUT = "washout"


class OutputFormat(Enum):
    CSV = "csv"
    KV_TREE = "kv-tree"


# ============================================================================
# GLOBAL SYSTEM CONFIGURATION
# ============================================================================

class SystemConfig:
    """Global numeric settings shared by every command"""

    # Convergence: |X[n+1] - X[n]| < CONV_TOL or N_MAX trials, whichever first
    CONV_TOL: float = 1e-9
    N_MAX: int = 10_000

    # |x| beyond this signals a divergent parameterization
    OVERFLOW_LIMIT: float = 1e12

    # Analysis tolerances
    ASYMPTOTE_TOL: float = 1e-6  # degrees, absolute
    UNIQUENESS_TOL: float = 1e-9  # dimensionless

    # Fitting
    SENTINEL_OBJECTIVE: float = 1e30
    DEFAULT_STARTS: int = 16
    DEFAULT_MAX_EVALS: int = 2000
    DEFAULT_SEED: int = 0

    # Logging
    LOG_LEVEL: str = "WARNING"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Output
    DEFAULT_N_TRIALS: int = 50


# ============================================================================
# RUN CONFIGURATION
# ============================================================================

@dataclass
class RunConfig:
    """Complete description of one CLI run"""

    # === MODEL ===
    model: str = ModelKind.COUPLED.value  # "standard" | "coupled"
    A: float = DEFAULT_A
    B: float = DEFAULT_B
    k: float = DEFAULT_K
    rate: str = RateVariant.RAMP.value  # "ramp" | "sigmoid"
    p_max: Optional[float] = DEFAULT_P_MAX
    e_sat: float = DEFAULT_E_SAT
    a: float = 1.0
    b: float = 1.0
    c: float = 0.5

    # === PROTOCOL ===
    protocol: str = ProtocolKind.TICVF.value  # "ticvf" | "vmr" | "washout"
    e_clamp: float = 15.0
    target: float = 10.0
    n_trials: int = SystemConfig.DEFAULT_N_TRIALS
    x0: float = 0.0

    # === ANALYSIS ===
    conv_tol: float = SystemConfig.CONV_TOL
    n_max: int = SystemConfig.N_MAX
    asymptote_tol: float = SystemConfig.ASYMPTOTE_TOL
    uniqueness_tol: float = SystemConfig.UNIQUENESS_TOL
    error_sizes: List[float] = None

    # === OUTPUT ===
    out: Optional[str] = None
    format: str = OutputFormat.CSV.value

    def __post_init__(self):
        if self.error_sizes is None:
            self.error_sizes = [7.5, 15.0, 30.0, 45.0]


RUN_CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))


# ============================================================================
# MODEL PRESETS - ADD NEW NAMED PARAMETER SETS HERE
# ============================================================================

MODEL_PRESETS: Dict[str, Dict[str, Any]] = {
    "coupled-default": {
        "model": "coupled",
        "k": DEFAULT_K,
        "rate": "ramp",
        "p_max": DEFAULT_P_MAX,
        "e_sat": DEFAULT_E_SAT,
    },
    "coupled-sigmoid": {
        "model": "coupled",
        "k": DEFAULT_K,
        "rate": "sigmoid",
        "a": 1.0,
        "b": 1.0,
        "c": 0.5,
        "p_max": DEFAULT_P_MAX,
    },
    "standard-default": {
        "model": "standard",
        "A": DEFAULT_A,
        "B": DEFAULT_B,
    },
}


def get_preset(name: str) -> Dict[str, Any]:
    """
    Retrieve the settings of a named model preset

    Args:
        name: Preset identifier (e.g., "coupled-default")

    Returns:
        Copy of the preset's key-value settings

    Raises:
        ConfigError: If preset not found
    """
    if name not in MODEL_PRESETS:
        raise ConfigError(
            f"Preset '{name}' not configured. Available: {list_presets()}",
            {"preset": f"unknown preset '{name}'"},
        )
    return dict(MODEL_PRESETS[name])


def list_presets() -> List[str]:
    """Get list of all configured presets"""
    return list(MODEL_PRESETS.keys())


# ============================================================================
# VALIDATION AND CONSTRUCTION
# ============================================================================

def validate_run_config(config: RunConfig) -> Dict[str, Any]:
    """
    Check every field against the invariants of the domain type it populates

    Returns:
        Dictionary with validation results; errors are keyed by field name
    """
    errors: Dict[str, str] = {}
    warnings: List[str] = []

    errors.update(validate_choice("model", config.model, [m.value for m in ModelKind]))
    errors.update(validate_choice("rate", config.rate, [r.value for r in RateVariant]))
    errors.update(validate_choice("protocol", config.protocol, [p.value for p in ProtocolKind]))
    errors.update(validate_choice("format", config.format, [f.value for f in OutputFormat]))
    errors.update(validate_positive_int("n_trials", config.n_trials))
    errors.update(validate_positive_int("n_max", config.n_max))
    for name in ("e_clamp", "target", "x0"):
        errors.update(validate_finite(name, getattr(config, name)))
    for name in ("conv_tol", "asymptote_tol", "uniqueness_tol"):
        errors.update(validate_finite(name, getattr(config, name), positive=True))

    if not isinstance(config.error_sizes, list):
        errors["error_sizes"] = "must be a list of numbers"
    else:
        for i, size in enumerate(config.error_sizes):
            errors.update(validate_finite(f"error_sizes[{i}]", size))

    # Domain invariants, checked on the exact constructors the run will use
    for name, build in (
        ("A", lambda: StandardSsmParams(A=config.A, B=DEFAULT_B)),
        ("B", lambda: StandardSsmParams(A=DEFAULT_A, B=config.B)),
        ("k", lambda: CoupledModelParams(k=config.k)),
    ):
        errors.update(_check_constructor(name, build))
    if config.rate == RateVariant.RAMP.value:
        if config.p_max is None:
            errors["p_max"] = "required for the ramp rate"
        else:
            errors.update(_check_constructor("p_max", lambda: RampRate(p_max=config.p_max)))
        errors.update(_check_constructor("e_sat", lambda: RampRate(e_sat=config.e_sat)))
    elif config.rate == RateVariant.SIGMOID.value:
        errors.update(_check_constructor(
            "rate", lambda: SigmoidRate(a=config.a, b=config.b, c=config.c, p_max=config.p_max)
        ))
    # parameters of the unused rate variant still have to be numbers
    inactive = ("a", "b", "c") if config.rate == RateVariant.RAMP.value else ("e_sat",)
    for name in inactive:
        errors.update(validate_finite(name, getattr(config, name)))
    errors.update(validate_optional_text("out", config.out))

    if (config.model == ModelKind.COUPLED.value and config.protocol == ProtocolKind.VMR.value
            and not errors and abs(config.target) >= config.k):
        warnings.append(
            f"|target| = {abs(config.target)} >= k = {config.k}: the coupled model "
            "cannot fully adapt to this rotation"
        )

    return {
        "is_valid": len(errors) == 0,
        "errors": errors,
        "warnings": warnings,
    }


def _check_constructor(name: str, build) -> Dict[str, str]:
    try:
        build()
    except (ValueError, TypeError) as e:
        return {name: str(e)}
    return {}


def build_model(config: RunConfig) -> Model:
    """Instantiate the model parameters a validated config describes"""
    if config.model == ModelKind.STANDARD.value:
        return StandardSsmParams(A=config.A, B=config.B)
    if config.rate == RateVariant.SIGMOID.value:
        rate = SigmoidRate(a=config.a, b=config.b, c=config.c, p_max=config.p_max)
    else:
        rate = RampRate(p_max=config.p_max, e_sat=config.e_sat)
    return CoupledModelParams(k=config.k, rate=rate)


def build_protocol(config: RunConfig):
    """Instantiate the protocol a validated config describes"""
    from paradigms import Protocol

    kind = ProtocolKind(config.protocol)
    if kind is ProtocolKind.TICVF:
        return Protocol.ticvf(config.e_clamp, n_trials=config.n_trials, x0=config.x0)
    if kind is ProtocolKind.VMR:
        return Protocol.vmr(config.target, n_trials=config.n_trials, x0=config.x0)
    return Protocol.washout(n_trials=config.n_trials, x0=config.x0)


def require_valid(config: RunConfig, source: Optional[str] = None) -> RunConfig:
    """Raise ConfigError carrying every field diagnostic if the config is invalid"""
    validation = validate_run_config(config)
    if not validation["is_valid"]:
        raise ConfigError("invalid run configuration", validation["errors"], source)
    return config

