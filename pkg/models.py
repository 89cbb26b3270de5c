"""
Model Core for adaptsim
Trial-by-trial motor adaptation models: the standard state-space model and the
error-dependent coupled learning/forgetting model.

Standard SSM:   X[n+1] = A*X[n] + B*E[n]
Coupled model:  X[n+1] = (1 - P(E[n]))*X[n] + P(E[n])*K,  K = sign(E[n])*k

All values are immutable after construction and every operation is a pure
function of its inputs.
"""

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional, Union

from errors import InvalidParametersError, UndefinedFixedPointError


# ══════════════════════════════════════════════════════════════════════════════
# DEFAULTS
# ══════════════════════════════════════════════════════════════════════════════

DEFAULT_P_MAX = 0.2
DEFAULT_E_SAT = 7.5  # degrees
DEFAULT_K = 20.0  # degrees
DEFAULT_A = 0.9
DEFAULT_B = 0.05


class ModelKind(Enum):
    STANDARD = "standard"
    COUPLED = "coupled"


class RateVariant(Enum):
    RAMP = "ramp"
    SIGMOID = "sigmoid"


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParametersError(f"{name} must be finite (got {value!r})")
    return value


# ══════════════════════════════════════════════════════════════════════════════
# RATE FUNCTIONS
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class RampRate:
    """
    Piecewise-linear learning rate: rises linearly from 0 at E=0 to p_max at
    |E| = e_sat and stays at p_max beyond it.
    """

    p_max: float = DEFAULT_P_MAX
    e_sat: float = DEFAULT_E_SAT  # degrees

    def __post_init__(self):
        p_max = _require_finite("p_max", self.p_max)
        e_sat = _require_finite("e_sat", self.e_sat)
        if not 0.0 < p_max < 1.0:
            raise InvalidParametersError(f"0 < p_max < 1 violated (got p_max={p_max!r})")
        if e_sat <= 0.0:
            raise InvalidParametersError(f"e_sat > 0 violated (got e_sat={e_sat!r})")
        object.__setattr__(self, "p_max", p_max)
        object.__setattr__(self, "e_sat", e_sat)

    @property
    def variant(self) -> RateVariant:
        return RateVariant.RAMP

    @property
    def supremum(self) -> float:
        return self.p_max

    def __call__(self, e: float) -> float:
        return self.p_max * min(abs(e) / self.e_sat, 1.0)

    def to_dict(self) -> dict:
        return {"variant": self.variant.value, **asdict(self)}


@dataclass(frozen=True)
class SigmoidRate:
    """
    Shifted sigmoid learning rate on |E|:

        P(E) = s * (a / (b + exp(-c|E|)) - a / (b + 1))

    The shift makes P(0) = 0. When p_max is given, s rescales the supremum
    a/(b(b+1)) to p_max; otherwise s = 1 and the raw supremum must stay below 1.
    Saturation is asymptotic.
    """

    a: float = 1.0
    b: float = 1.0
    c: float = 0.5
    p_max: Optional[float] = DEFAULT_P_MAX

    def __post_init__(self):
        for name in ("a", "b", "c"):
            value = _require_finite(name, getattr(self, name))
            if value <= 0.0:
                raise InvalidParametersError(f"{name} > 0 violated (got {name}={value!r})")
            object.__setattr__(self, name, value)
        if self.p_max is not None:
            p_max = _require_finite("p_max", self.p_max)
            if not 0.0 < p_max < 1.0:
                raise InvalidParametersError(f"0 < p_max < 1 violated (got p_max={p_max!r})")
            object.__setattr__(self, "p_max", p_max)
        elif self.raw_supremum >= 1.0:
            raise InvalidParametersError(
                f"sup P = a/(b(b+1)) must be < 1 (got {self.raw_supremum!r})"
            )

    @property
    def variant(self) -> RateVariant:
        return RateVariant.SIGMOID

    @property
    def raw_supremum(self) -> float:
        return self.a / (self.b * (self.b + 1.0))

    @property
    def supremum(self) -> float:
        return self.p_max if self.p_max is not None else self.raw_supremum

    def __call__(self, e: float) -> float:
        raw = self.a / (self.b + math.exp(-self.c * abs(e))) - self.a / (self.b + 1.0)
        if self.p_max is None:
            return raw
        return raw * (self.p_max / self.raw_supremum)

    def to_dict(self) -> dict:
        return {"variant": self.variant.value, **asdict(self)}


RateFunction = Union[RampRate, SigmoidRate]


def rate_from_dict(data: dict) -> RateFunction:
    """Rebuild a rate function from its ``to_dict`` form"""
    data = dict(data)
    variant = RateVariant(data.pop("variant", RateVariant.RAMP.value))
    if variant is RateVariant.RAMP:
        return RampRate(**data)
    return SigmoidRate(**data)


# ══════════════════════════════════════════════════════════════════════════════
# PARAMETERS AND STATE
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class StandardSsmParams:
    """Retention A and error gain B of the standard state-space model"""

    A: float = DEFAULT_A
    B: float = DEFAULT_B

    def __post_init__(self):
        A = _require_finite("A", self.A)
        B = _require_finite("B", self.B)
        if not 0.0 < A < 1.0:
            raise InvalidParametersError(f"0 < A < 1 violated (got A={A!r})")
        if B <= 0.0:
            raise InvalidParametersError(f"B > 0 violated (got B={B!r})")
        if not math.isfinite(B / (1.0 - A)):
            raise InvalidParametersError("B/(1-A) must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def kind(self) -> ModelKind:
        return ModelKind.STANDARD

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "A": self.A, "B": self.B}


@dataclass(frozen=True)
class CoupledModelParams:
    """Drive-target magnitude k and the learning-rate function P(E)"""

    k: float = DEFAULT_K  # degrees
    rate: RateFunction = field(default_factory=RampRate)

    def __post_init__(self):
        k = _require_finite("k", self.k)
        if k <= 0.0:
            raise InvalidParametersError(f"k > 0 violated (got k={k!r})")
        if not isinstance(self.rate, (RampRate, SigmoidRate)):
            raise InvalidParametersError(f"unsupported rate function {self.rate!r}")
        object.__setattr__(self, "k", k)

    @property
    def kind(self) -> ModelKind:
        return ModelKind.COUPLED

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "k": self.k, "rate": self.rate.to_dict()}


Model = Union[StandardSsmParams, CoupledModelParams]


def model_from_dict(data: dict) -> Model:
    """Rebuild model parameters from their ``to_dict`` form"""
    kind = ModelKind(data.get("kind"))
    if kind is ModelKind.STANDARD:
        return StandardSsmParams(A=data["A"], B=data["B"])
    return CoupledModelParams(k=data["k"], rate=rate_from_dict(data["rate"]))


@dataclass(frozen=True)
class TrialState:
    n: int
    x: float  # degrees

    def __post_init__(self):
        if self.n < 0:
            raise InvalidParametersError(f"trial index must be non-negative (got {self.n})")
        if not math.isfinite(self.x):
            raise InvalidParametersError(f"state must be finite (got {self.x!r})")


@dataclass(frozen=True)
class ErrorSignal:
    e: float  # degrees

    def __post_init__(self):
        if not math.isfinite(self.e):
            raise InvalidParametersError(f"error must be finite (got {self.e!r})")


ErrorLike = Union[ErrorSignal, float]


def _value(e: ErrorLike) -> float:
    return e.e if isinstance(e, ErrorSignal) else float(e)


# ══════════════════════════════════════════════════════════════════════════════
# OPERATIONS
# ══════════════════════════════════════════════════════════════════════════════

def learning_rate(rate: RateFunction, e: ErrorLike) -> float:
    """
    Evaluate P(|e|). Even in e, non-decreasing in |e|, in [0, 1).
    """
    return rate(_value(e))


def rate_supremum(rate: RateFunction) -> float:
    return rate.supremum


def drive_target(params: CoupledModelParams, e: ErrorLike) -> float:
    """+k, -k or 0 by the sign of e (exact zero test)"""
    e = _value(e)
    if e > 0.0:
        return params.k
    if e < 0.0:
        return -params.k
    return 0.0


def forgetting_rate(params: CoupledModelParams, e: ErrorLike) -> float:
    """Retention factor 1 - P(e) applied to the previous state"""
    return 1.0 - params.rate(_value(e))


def learning_term(params: CoupledModelParams, e: ErrorLike) -> float:
    """Additive drive P(e)*K of the coupled update"""
    e = _value(e)
    return params.rate(e) * drive_target(params, e)


def advance_standard(params: StandardSsmParams, x: float, e: float) -> float:
    return params.A * x + params.B * e


def advance_coupled(params: CoupledModelParams, x: float, e: float) -> float:
    if e == 0.0:
        # P(0) = 0: the state is carried over untouched
        return x
    p = params.rate(e)
    return (1.0 - p) * x + p * drive_target(params, e)


def step_standard(params: StandardSsmParams, s: TrialState, e: ErrorLike) -> TrialState:
    return TrialState(s.n + 1, advance_standard(params, s.x, _value(e)))


def step_coupled(params: CoupledModelParams, s: TrialState, e: ErrorLike) -> TrialState:
    return TrialState(s.n + 1, advance_coupled(params, s.x, _value(e)))


def step(model: Model, s: TrialState, e: ErrorLike) -> TrialState:
    """Apply one trial of whichever model ``model`` parameterizes"""
    if isinstance(model, StandardSsmParams):
        return step_standard(model, s, e)
    return step_coupled(model, s, e)


def fixed_point_standard(params: StandardSsmParams, e_clamped: ErrorLike) -> float:
    """Clamped-error asymptote B*E/(1-A); proportional to E"""
    return params.B * _value(e_clamped) / (1.0 - params.A)


def fixed_point_standard_vmr(params: StandardSsmParams, target: float) -> float:
    """
    Closed-loop asymptote of the standard model under E = T - X:
    X = A*X + B*(T - X)  =>  X = B*T / (1 - A + B)
    """
    return params.B * float(target) / (1.0 - params.A + params.B)


def fixed_point_coupled(params: CoupledModelParams, e_clamped: ErrorLike) -> float:
    """
    Clamped-error asymptote of the coupled model: the drive target K,
    independent of the error size.

    Raises:
        UndefinedFixedPointError: when P(e) = 0 (e = 0), every state is fixed
    """
    e = _value(e_clamped)
    if e == 0.0 or params.rate(e) == 0.0:
        raise UndefinedFixedPointError(
            f"P({e!r}) = 0: every state is a fixed point under a zero-rate clamp"
        )
    return drive_target(params, e)
