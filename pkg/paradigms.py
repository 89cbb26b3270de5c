"""
Paradigms Module for adaptsim
Experiment protocols (how the error is generated each trial) and the
multi-trial simulations that turn a model plus a protocol into a Trajectory.

  TICVF   - error clamped to a constant, irrelevant to the state
  VMR     - closed loop, E[n] = T - X[n] for a constant target T
  Washout - zero error on every trial
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import ProtocolKind, SystemConfig
from errors import InvalidInputError, NumericOverflowError
from models import (
    CoupledModelParams,
    ErrorSignal,
    Model,
    StandardSsmParams,
    TrialState,
    advance_coupled,
    advance_standard,
    model_from_dict,
)

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["trial", "x", "error", "p"]


# ══════════════════════════════════════════════════════════════════════════════
# PROTOCOLS
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class Protocol:
    """
    Experiment definition. Only the magnitude belonging to ``kind`` is used:
    e_clamp for TICVF, target for VMR, neither for washout.
    """

    kind: ProtocolKind
    n_trials: int
    x0: float = 0.0  # degrees
    e_clamp: float = 0.0  # degrees
    target: float = 0.0  # degrees

    def __post_init__(self):
        if not isinstance(self.kind, ProtocolKind):
            object.__setattr__(self, "kind", ProtocolKind(self.kind))
        if not isinstance(self.n_trials, (int, np.integer)) or self.n_trials < 1:
            raise InvalidInputError(f"n_trials >= 1 violated (got {self.n_trials!r})")
        for name in ("x0", "e_clamp", "target"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidInputError(f"{name} must be finite (got {value!r})")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "n_trials", int(self.n_trials))

    @classmethod
    def ticvf(cls, e_clamp: float, n_trials: int = SystemConfig.DEFAULT_N_TRIALS,
              x0: float = 0.0) -> "Protocol":
        return cls(ProtocolKind.TICVF, n_trials, x0=x0, e_clamp=e_clamp)

    @classmethod
    def vmr(cls, target: float, n_trials: int = SystemConfig.DEFAULT_N_TRIALS,
            x0: float = 0.0) -> "Protocol":
        return cls(ProtocolKind.VMR, n_trials, x0=x0, target=target)

    @classmethod
    def washout(cls, n_trials: int = SystemConfig.DEFAULT_N_TRIALS, x0: float = 0.0) -> "Protocol":
        return cls(ProtocolKind.WASHOUT, n_trials, x0=x0)

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value, "n_trials": self.n_trials, "x0": self.x0}
        if self.kind is ProtocolKind.TICVF:
            data["e_clamp"] = self.e_clamp
        elif self.kind is ProtocolKind.VMR:
            data["target"] = self.target
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Protocol":
        return cls(
            ProtocolKind(data["kind"]),
            int(data["n_trials"]),
            x0=data.get("x0", 0.0),
            e_clamp=data.get("e_clamp", 0.0),
            target=data.get("target", 0.0),
        )


def _error(protocol: Protocol, x: float) -> float:
    if protocol.kind is ProtocolKind.TICVF:
        return protocol.e_clamp
    if protocol.kind is ProtocolKind.VMR:
        return protocol.target - x
    return 0.0


def error_for_trial(protocol: Protocol, s: TrialState) -> ErrorSignal:
    """Error presented on trial s.n given the current state"""
    return ErrorSignal(_error(protocol, s.x))


# ══════════════════════════════════════════════════════════════════════════════
# TRAJECTORIES
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Per-trial records (n, X[n], E[n], P(E[n])) from trial 0 to n_trials.
    The last record carries the error and rate the next trial would see.
    """

    trial: np.ndarray
    x: np.ndarray
    error: np.ndarray
    p: np.ndarray
    protocol: Protocol
    model: Optional[Model] = None
    converged: Optional[bool] = None

    def __post_init__(self):
        lengths = {len(self.trial), len(self.x), len(self.error), len(self.p)}
        if len(lengths) != 1:
            raise InvalidInputError("trajectory columns must have equal length")
        if len(self.trial) != self.protocol.n_trials + 1:
            raise InvalidInputError(
                f"record count {len(self.trial)} != n_trials + 1 = {self.protocol.n_trials + 1}"
            )
        if np.any(np.diff(self.trial) <= 0) or (len(self.trial) and self.trial[0] != 0):
            raise InvalidInputError("trial indices must increase strictly from 0")
        for name in ("trial", "x", "error", "p"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return len(self.trial)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            all(getattr(self, c).tobytes() == getattr(other, c).tobytes() for c in TRAJECTORY_COLUMNS)
            and self.protocol == other.protocol
            and self.model == other.model
            and self.converged == other.converged
        )

    __hash__ = None

    @property
    def n_trials(self) -> int:
        return self.protocol.n_trials

    @property
    def final_x(self) -> float:
        return float(self.x[-1])

    @property
    def final_error(self) -> float:
        return float(self.error[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "trial": self.trial.astype(np.int64),
            "x": self.x,
            "error": self.error,
            "p": self.p,
        }, columns=TRAJECTORY_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, protocol: Optional[Protocol] = None,
                   model: Optional[Model] = None) -> "Trajectory":
        """
        Rebuild a trajectory from its flat table

        Args:
            frame: Table with columns trial, x, error, p
            protocol: Known protocol; inferred from the table when omitted
            model: Model echo for provenance, if known
        """
        missing = [c for c in TRAJECTORY_COLUMNS if c not in frame.columns]
        if missing:
            raise InvalidInputError(f"trajectory table missing columns {missing}")
        if len(frame) < 2:
            raise InvalidInputError("trajectory table needs at least 2 records")
        protocol = protocol or infer_protocol(frame)
        return cls(
            trial=frame["trial"].to_numpy(dtype=np.int64, copy=True),
            x=frame["x"].to_numpy(dtype=float, copy=True),
            error=frame["error"].to_numpy(dtype=float, copy=True),
            p=frame["p"].to_numpy(dtype=float, copy=True),
            protocol=protocol,
            model=model,
        )

    def provenance(self) -> dict:
        return {
            "protocol": self.protocol.to_dict(),
            "model": self.model.to_dict() if self.model is not None else None,
            "converged": self.converged,
        }


def infer_protocol(frame: pd.DataFrame) -> Protocol:
    """
    Recover the protocol behind an observed trajectory table: constant non-zero
    error is a clamp, all-zero error is washout, anything else is a closed-loop
    rotation with target x0 + e0.
    """
    errors = frame["error"].to_numpy(dtype=float)
    x = frame["x"].to_numpy(dtype=float)
    n_trials = len(frame) - 1
    x0 = float(x[0])
    if np.all(errors == 0.0):
        return Protocol.washout(n_trials=n_trials, x0=x0)
    if np.all(errors == errors[0]):
        # a rotation already at its fixed point is indistinguishable from a clamp
        return Protocol.ticvf(float(errors[0]), n_trials=n_trials, x0=x0)
    return Protocol.vmr(x0 + float(errors[0]), n_trials=n_trials, x0=x0)


# ══════════════════════════════════════════════════════════════════════════════
# SIMULATION
# ══════════════════════════════════════════════════════════════════════════════

def _rate_applied(model: Model, e: float) -> float:
    """
    Rate recorded in the p column: P(E) for the coupled model, the
    error-independent forgetting rate 1 - A for the standard model
    """
    if isinstance(model, CoupledModelParams):
        return model.rate(e)
    return 1.0 - model.A


def _advance(model: Model, x: float, e: float) -> float:
    if isinstance(model, StandardSsmParams):
        return advance_standard(model, x, e)
    return advance_coupled(model, x, e)


def _check_finite(x: float, n: int) -> None:
    if not math.isfinite(x) or abs(x) > SystemConfig.OVERFLOW_LIMIT:
        raise NumericOverflowError(
            f"|x| exceeded {SystemConfig.OVERFLOW_LIMIT:g} on trial {n} (x={x!r}); "
            "the parameterization diverges",
            trial=n,
        )


def _build(model: Model, protocol: Protocol, xs: List[float], es: List[float],
           ps: List[float], converged: Optional[bool]) -> Trajectory:
    return Trajectory(
        trial=np.arange(len(xs), dtype=np.int64),
        x=np.array(xs, dtype=float),
        error=np.array(es, dtype=float),
        p=np.array(ps, dtype=float),
        protocol=protocol,
        model=model,
        converged=converged,
    )


def run_trials(model: Model, protocol: Protocol) -> Tuple[List[float], List[float], List[float]]:
    """Raw (x, error, p) columns of a fixed-length run"""
    x = protocol.x0
    xs, es, ps = [], [], []
    for n in range(protocol.n_trials):
        e = _error(protocol, x)
        xs.append(x)
        es.append(e)
        ps.append(_rate_applied(model, e))
        x = _advance(model, x, e)
        _check_finite(x, n + 1)
    e = _error(protocol, x)
    xs.append(x)
    es.append(e)
    ps.append(_rate_applied(model, e))
    return xs, es, ps


def simulate(model: Model, protocol: Protocol) -> Trajectory:
    """
    Run ``protocol.n_trials`` trials of ``model`` from ``protocol.x0``

    Raises:
        NumericOverflowError: If |x| exceeds the overflow limit
    """
    xs, es, ps = run_trials(model, protocol)
    return _build(model, protocol, xs, es, ps, converged=None)


def simulate_until_converged(model: Model, protocol: Protocol,
                             tol: float = SystemConfig.CONV_TOL,
                             n_max: int = SystemConfig.N_MAX) -> Trajectory:
    """
    Run until |X[n+1] - X[n]| < tol or n_max trials, ignoring protocol.n_trials.
    The returned trajectory's protocol echo records the trials actually run and
    ``converged`` tells which stopping rule fired.
    """
    if not tol > 0.0:
        raise InvalidInputError(f"tol > 0 violated (got {tol!r})")
    if n_max < 1:
        raise InvalidInputError(f"n_max >= 1 violated (got {n_max!r})")
    x = protocol.x0
    xs, es, ps = [], [], []
    converged = False
    for n in range(n_max):
        e = _error(protocol, x)
        xs.append(x)
        es.append(e)
        ps.append(_rate_applied(model, e))
        x_next = _advance(model, x, e)
        _check_finite(x_next, n + 1)
        step = abs(x_next - x)
        x = x_next
        if step < tol:
            converged = True
            break
    e = _error(protocol, x)
    xs.append(x)
    es.append(e)
    ps.append(_rate_applied(model, e))
    if not converged:
        logger.warning(f"⚠️ No convergence within {n_max} trials (tol={tol:g})")
    return _build(model, replace(protocol, n_trials=len(xs) - 1), xs, es, ps, converged)


def run_protocols(model: Model, protocols: Sequence[Protocol]) -> List[Trajectory]:
    """Simulate one trajectory per protocol, in order"""
    return [simulate(model, protocol) for protocol in protocols]


def trajectory_from_dict(data: dict) -> Trajectory:
    """Inverse of the kv-tree form written for ``--format kv-tree``"""
    frame = pd.DataFrame(data["records"], columns=TRAJECTORY_COLUMNS)
    model = model_from_dict(data["model"]) if data.get("model") else None
    trajectory = Trajectory.from_frame(frame, Protocol.from_dict(data["protocol"]), model)
    return replace(trajectory, converged=data.get("converged"))
