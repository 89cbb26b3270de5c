"""
Analysis Module for adaptsim
Extracts the three clamped-error features from trajectories, builds the
standard-model falsification report and numerically checks that the coupled
update is the only linear rule whose clamped asymptote is error independent.

Clamped-error features:
  1. The saturation level is independent of the error size
  2. The initial rate depends on the error size below ~7.5 degrees
  3. The initial rate is independent of the error size above ~7.5 degrees
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import ProtocolKind, SystemConfig
from errors import InvalidInputError, NonContractiveFamilyError
from models import (
    DEFAULT_E_SAT,
    CoupledModelParams,
    Model,
    RampRate,
    RateFunction,
    StandardSsmParams,
    fixed_point_standard,
    fixed_point_standard_vmr,
    forgetting_rate,
    learning_term,
)
from paradigms import Protocol, Trajectory, simulate, simulate_until_converged

logger = logging.getLogger(__name__)


class CheckStatus(Enum):
    PASS = "pass"
    FAIL = "fail"
    UNTESTED = "untested"


@dataclass(frozen=True)
class FeatureCheck:
    feature: str
    status: CheckStatus
    detail: str

    def to_dict(self) -> dict:
        return {"feature": self.feature, "status": self.status.value, "detail": self.detail}


FEATURE_SATURATION = "saturation_independent_of_error"
FEATURE_SLOPE_SMALL = "slope_depends_on_error_below_boundary"
FEATURE_SLOPE_LARGE = "slope_independent_of_error_above_boundary"


# ══════════════════════════════════════════════════════════════════════════════
# FEATURE EXTRACTION
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class FeatureReport:
    """Asymptote and initial slope (X1 - X0) of one trajectory"""

    asymptote: Optional[float]  # degrees; None when not converged
    initial_slope: float  # degrees/trial
    converged: bool
    error: Optional[float] = None  # clamped error, set by sweeps

    def to_dict(self) -> dict:
        return {
            "error": self.error,
            "asymptote": self.asymptote,
            "slope": self.initial_slope,
            "converged": self.converged,
        }


def extract_features(traj: Trajectory, conv_tol: float = SystemConfig.CONV_TOL) -> FeatureReport:
    """
    Args:
        traj: Source trajectory, at least 2 records
        conv_tol: Largest final |X[n] - X[n-1]| still counted as converged

    Returns:
        FeatureReport; non-convergence is reported in the flag, not raised
    """
    if len(traj) < 2:
        raise InvalidInputError("feature extraction needs at least 2 records")
    last_step = abs(float(traj.x[-1]) - float(traj.x[-2]))
    converged = bool(traj.converged) or last_step < conv_tol
    error = traj.protocol.e_clamp if traj.protocol.kind is ProtocolKind.TICVF else None
    return FeatureReport(
        asymptote=float(traj.x[-1]) if converged else None,
        initial_slope=float(traj.x[1]) - float(traj.x[0]),
        converged=converged,
        error=error,
    )


@dataclass(frozen=True)
class FeatureSweep:
    """Per-error-size feature table plus the feature checks it supports"""

    rows: List[FeatureReport]
    checks: List[FeatureCheck]
    model: Model

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"error": r.error, "asymptote": r.asymptote, "slope": r.initial_slope,
              "converged": r.converged} for r in self.rows],
            columns=["error", "asymptote", "slope", "converged"],
        )

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
            "checks": [c.to_dict() for c in self.checks],
        }


def _check_positive_sizes(error_sizes: Sequence[float]) -> List[float]:
    sizes = [float(e) for e in error_sizes]
    if not sizes:
        raise InvalidInputError("at least one error size is required")
    bad = [e for e in sizes if not (math.isfinite(e) and e > 0.0)]
    if bad:
        raise InvalidInputError(f"error sizes must be positive and finite (got {bad})")
    return sizes


def feature_sweep(model: Model, error_sizes: Sequence[float],
                  conv_tol: float = SystemConfig.CONV_TOL,
                  asymptote_tol: float = SystemConfig.ASYMPTOTE_TOL,
                  n_max: int = SystemConfig.N_MAX) -> FeatureSweep:
    """
    Simulate a clamp at every error size to convergence and tabulate features.
    Rows keep the order of ``error_sizes``.
    """
    sizes = _check_positive_sizes(error_sizes)
    rows = []
    for e in sizes:
        traj = simulate_until_converged(model, Protocol.ticvf(e, n_trials=1), conv_tol, n_max)
        rows.append(extract_features(traj, conv_tol))
    logger.info(f"✅ Swept {len(rows)} error sizes")
    return FeatureSweep(rows=rows, checks=_sweep_checks(model, rows, asymptote_tol), model=model)


def _boundary(model: Model) -> Optional[float]:
    if isinstance(model, CoupledModelParams):
        return model.rate.e_sat if isinstance(model.rate, RampRate) else None
    return DEFAULT_E_SAT


def _sweep_checks(model: Model, rows: List[FeatureReport], tol: float) -> List[FeatureCheck]:
    checks = []
    asymptotes = [r.asymptote for r in rows]
    if any(a is None for a in asymptotes):
        checks.append(FeatureCheck(FEATURE_SATURATION, CheckStatus.UNTESTED,
                                   "not every error size converged"))
    else:
        spread = max(asymptotes) - min(asymptotes)
        ok = spread < tol
        detail = f"asymptote spread {spread!r}"
        if isinstance(model, CoupledModelParams):
            deviation = max(abs(a - model.k) for a in asymptotes)
            ok = ok and deviation < tol
            detail += f"; max |asymptote - k| {deviation!r}"
        status = CheckStatus.PASS if ok else CheckStatus.FAIL
        checks.append(FeatureCheck(FEATURE_SATURATION, status, detail))

    boundary = _boundary(model)
    if boundary is None:
        detail = "rate saturates asymptotically; no sharp boundary"
        checks.append(FeatureCheck(FEATURE_SLOPE_SMALL, CheckStatus.UNTESTED, detail))
        checks.append(FeatureCheck(FEATURE_SLOPE_LARGE, CheckStatus.UNTESTED, detail))
        return checks

    small = sorted((r.error, r.initial_slope) for r in rows if r.error < boundary)
    if len(small) < 2:
        checks.append(FeatureCheck(FEATURE_SLOPE_SMALL, CheckStatus.UNTESTED,
                                   f"fewer than 2 sizes below {boundary!r}"))
    else:
        increasing = all(b[1] > a[1] for a, b in zip(small, small[1:]))
        checks.append(FeatureCheck(
            FEATURE_SLOPE_SMALL, CheckStatus.PASS if increasing else CheckStatus.FAIL,
            "slopes increase with error" if increasing else "slopes do not increase with error",
        ))

    large = [r.initial_slope for r in rows if r.error >= boundary]
    if len(large) < 2:
        checks.append(FeatureCheck(FEATURE_SLOPE_LARGE, CheckStatus.UNTESTED,
                                   f"fewer than 2 sizes at or above {boundary!r}"))
    else:
        spread = max(large) - min(large)
        checks.append(FeatureCheck(
            FEATURE_SLOPE_LARGE, CheckStatus.PASS if spread == 0.0 else CheckStatus.FAIL,
            f"slope spread {spread!r}",
        ))
    return checks


# ══════════════════════════════════════════════════════════════════════════════
# STANDARD MODEL FALSIFICATION
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class FalsificationRow:
    error: float
    asymptote: float  # closed form B*E/(1-A)
    empirical_asymptote: float
    slope: float  # B*E from x0 = 0

    def to_dict(self) -> dict:
        return {
            "error": self.error,
            "asymptote": self.asymptote,
            "empirical_asymptote": self.empirical_asymptote,
            "slope": self.slope,
        }


@dataclass(frozen=True)
class FalsificationReport:
    """
    Standard-model predictions across clamped error sizes. A feature check
    with status FAIL means the standard model contradicts that feature.
    """

    params: StandardSsmParams
    rows: List[FalsificationRow]
    asymptote_ratios: List[float]  # relative to the first error size
    slope_ratios: List[float]
    error_ratios: List[float]
    asymptote_gain_residual: float  # max |X/E - B/(1-A)|
    slope_gain_residual: float  # max |slope/E - B|
    checks: List[FeatureCheck]
    boundary: float

    @property
    def violated(self) -> List[str]:
        return [c.feature for c in self.checks if c.status is CheckStatus.FAIL]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.rows],
                            columns=["error", "asymptote", "empirical_asymptote", "slope"])

    def to_dict(self) -> dict:
        return {
            "model": self.params.to_dict(),
            "boundary": self.boundary,
            "rows": [r.to_dict() for r in self.rows],
            "error_ratios": self.error_ratios,
            "asymptote_ratios": self.asymptote_ratios,
            "slope_ratios": self.slope_ratios,
            "asymptote_gain_residual": self.asymptote_gain_residual,
            "slope_gain_residual": self.slope_gain_residual,
            "checks": [c.to_dict() for c in self.checks],
            "violated": self.violated,
        }


def falsification_report(params: StandardSsmParams, error_sizes: Sequence[float],
                         boundary: float = DEFAULT_E_SAT,
                         conv_tol: float = 1e-12,
                         n_max: int = SystemConfig.N_MAX) -> FalsificationReport:
    """
    Args:
        params: Standard model under test
        error_sizes: At least 2 distinct positive clamped errors
        boundary: Error size separating the small- and large-error slope regimes
        conv_tol: Stopping tolerance for the empirical asymptotes

    Raises:
        InvalidInputError: On fewer than 2 distinct or any non-positive sizes
    """
    sizes = _check_positive_sizes(error_sizes)
    if len(set(sizes)) < 2 or len(set(sizes)) != len(sizes):
        raise InvalidInputError(f"error sizes must be at least 2 distinct values (got {sizes})")

    rows = []
    for e in sizes:
        traj = simulate_until_converged(params, Protocol.ticvf(e, n_trials=1), conv_tol, n_max)
        rows.append(FalsificationRow(
            error=e,
            asymptote=fixed_point_standard(params, e),
            empirical_asymptote=traj.final_x,
            slope=float(traj.x[1]) - float(traj.x[0]),
        ))

    first = rows[0]
    gain = params.B / (1.0 - params.A)
    report_checks = []

    asym = [r.asymptote for r in rows]
    spread = max(asym) - min(asym)
    report_checks.append(FeatureCheck(
        FEATURE_SATURATION, CheckStatus.FAIL if spread > 0.0 else CheckStatus.PASS,
        f"asymptote scales with error (gain B/(1-A) = {gain!r}); spread {spread!r}",
    ))

    small = sorted((r.error, r.slope) for r in rows if r.error < boundary)
    if len(small) < 2:
        report_checks.append(FeatureCheck(FEATURE_SLOPE_SMALL, CheckStatus.UNTESTED,
                                          f"fewer than 2 sizes below {boundary!r}"))
    else:
        increasing = all(b[1] > a[1] for a, b in zip(small, small[1:]))
        report_checks.append(FeatureCheck(
            FEATURE_SLOPE_SMALL, CheckStatus.PASS if increasing else CheckStatus.FAIL,
            "slope B*E increases with error below the boundary",
        ))

    large = [r.slope for r in rows if r.error >= boundary]
    if len(large) < 2:
        report_checks.append(FeatureCheck(FEATURE_SLOPE_LARGE, CheckStatus.UNTESTED,
                                          f"fewer than 2 sizes at or above {boundary!r}"))
    else:
        slope_spread = max(large) - min(large)
        report_checks.append(FeatureCheck(
            FEATURE_SLOPE_LARGE, CheckStatus.FAIL if slope_spread > 0.0 else CheckStatus.PASS,
            f"slope B*E stays proportional to error above the boundary; spread {slope_spread!r}",
        ))

    report = FalsificationReport(
        params=params,
        rows=rows,
        asymptote_ratios=[r.asymptote / first.asymptote for r in rows],
        slope_ratios=[r.slope / first.slope for r in rows],
        error_ratios=[r.error / first.error for r in rows],
        asymptote_gain_residual=max(abs(r.empirical_asymptote / r.error - gain) for r in rows),
        slope_gain_residual=max(abs(r.slope / r.error - params.B) for r in rows),
        checks=report_checks,
        boundary=boundary,
    )
    logger.info(f"📊 Standard model violates: {report.violated or 'nothing'}")
    return report


# ══════════════════════════════════════════════════════════════════════════════
# UNIQUENESS OF THE COUPLED UPDATE
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class GeneralLinearFamily:
    """
    X[n+1] = f(E)*X[n] + g(E), tabulated on a shared error grid and tested
    against the reference asymptote k_ref.
    """

    errors: np.ndarray
    f: np.ndarray
    g: np.ndarray
    k_ref: float

    def __post_init__(self):
        errors = np.asarray(self.errors, dtype=float)
        f = np.asarray(self.f, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if not (errors.ndim == f.ndim == g.ndim == 1) or not (len(errors) == len(f) == len(g)):
            raise InvalidInputError("errors, f and g must be 1-D arrays on the same grid")
        if len(errors) == 0:
            raise InvalidInputError("the error grid is empty")
        if not (np.all(np.isfinite(errors)) and np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise InvalidInputError("family values must be finite")
        if np.any(f <= 0.0):
            raise InvalidInputError(f"f must be > 0 (bad at E={errors[f <= 0.0].tolist()})")
        k_ref = float(self.k_ref)
        if not math.isfinite(k_ref) or k_ref == 0.0:
            raise InvalidInputError(f"k_ref must be finite and non-zero (got {k_ref!r})")
        object.__setattr__(self, "errors", errors)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "k_ref", k_ref)

    @classmethod
    def from_rate(cls, rate: RateFunction, k_ref: float,
                  errors: Sequence[float]) -> "GeneralLinearFamily":
        """The coupled rule itself: f = 1 - P, g = P*k_ref"""
        p = np.array([rate(float(e)) for e in errors], dtype=float)
        return cls(np.asarray(errors, dtype=float), 1.0 - p, p * float(k_ref), k_ref)

    @classmethod
    def from_functions(cls, f: Callable[[float], float], g: Callable[[float], float],
                       k_ref: float, errors: Sequence[float]) -> "GeneralLinearFamily":
        return cls(
            np.asarray(errors, dtype=float),
            np.array([f(float(e)) for e in errors], dtype=float),
            np.array([g(float(e)) for e in errors], dtype=float),
            k_ref,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"e": self.errors, "f": self.f, "g": self.g}, columns=["e", "f", "g"])


@dataclass(frozen=True)
class UniquenessPoint:
    error: float
    f: float
    g: float
    residual: float
    asymptote: float
    converged: bool
    relation_holds: bool
    asymptote_matches: bool

    @property
    def consistent(self) -> bool:
        return self.relation_holds == self.asymptote_matches

    def to_dict(self) -> dict:
        return {
            "e": self.error,
            "f": self.f,
            "g": self.g,
            "residual": self.residual,
            "asymptote": self.asymptote,
            "converged": self.converged,
            "relation_holds": self.relation_holds,
            "asymptote_matches": self.asymptote_matches,
        }


@dataclass(frozen=True)
class UniquenessVerdict:
    points: List[UniquenessPoint]
    max_residual: float
    tolerance: float
    k_ref: float
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "passed", self.max_residual < self.tolerance and not self.inconsistent_errors
        )

    @property
    def violating_errors(self) -> List[float]:
        return [p.error for p in self.points if not p.residual < self.tolerance]

    @property
    def inconsistent_errors(self) -> List[float]:
        return [p.error for p in self.points if not p.consistent]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([p.to_dict() for p in self.points],
                            columns=["e", "f", "g", "residual", "asymptote", "converged",
                                     "relation_holds", "asymptote_matches"])

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "k_ref": self.k_ref,
            "tolerance": self.tolerance,
            "max_residual": self.max_residual,
            "violating_errors": self.violating_errors,
            "inconsistent_errors": self.inconsistent_errors,
        }


def _iterate_to_fixed_point(f: float, g: float, x0: float, conv_tol: float,
                            n_max: int) -> Tuple[float, bool]:
    x = x0
    for _ in range(n_max):
        x_next = f * x + g
        if abs(x_next - x) < conv_tol:
            return x_next, True
        x = x_next
    return x, False


def verify_uniqueness(family: GeneralLinearFamily, tol: float = SystemConfig.UNIQUENESS_TOL,
                      x0: float = 0.0, conv_tol: float = 1e-12,
                      n_max: int = SystemConfig.N_MAX) -> UniquenessVerdict:
    """
    Check f(E) = 1 - g(E)/k_ref at every grid error, and independently simulate
    the clamped iteration to see whether it settles at k_ref.

    At identity points (f = 1, g = 0) the relation holds vacuously but the
    state never leaves x0, so the residual there is the relative asymptote
    mismatch |x0 - k_ref| / |k_ref|. A contraction too slow to settle within
    n_max trials is scored at its exact fixed point g / (1 - f).

    The family passes only when every residual is below tol and the relation
    agrees with the asymptote at every point.

    Raises:
        NonContractiveFamilyError: f(E) >= 1 with g(E) != k_ref*(1 - f(E))
    """
    k = family.k_ref
    diverging = [
        float(e) for e, f, g in zip(family.errors, family.f, family.g)
        if f >= 1.0 and not (f == 1.0 and g == 0.0)
        and abs(g - k * (1.0 - f)) > tol * abs(k)
    ]
    if diverging:
        raise NonContractiveFamilyError(
            f"f(E) >= 1 without a fixed point at E = {diverging}", errors=diverging
        )

    points = []
    for e, f, g in zip(family.errors, family.f, family.g):
        e, f, g = float(e), float(f), float(g)
        residual = abs(f - (1.0 - g / k))
        if f == 1.0 and g == 0.0:
            asymptote, converged = x0, True
            residual = abs(x0 - k) / abs(k)
        elif f >= 1.0:
            # unstable; the check above leaves only fixed points equal to k_ref
            asymptote, converged = k, False
        else:
            asymptote, converged = _iterate_to_fixed_point(f, g, x0, conv_tol, n_max)
            if not converged:
                asymptote = g / (1.0 - f)
        points.append(UniquenessPoint(
            error=e, f=f, g=g, residual=residual, asymptote=asymptote, converged=converged,
            relation_holds=residual < tol,
            asymptote_matches=abs(asymptote - k) <= tol * abs(k),
        ))

    verdict = UniquenessVerdict(
        points=points,
        max_residual=max(p.residual for p in points),
        tolerance=tol,
        k_ref=k,
    )
    if verdict.inconsistent_errors:
        logger.warning(
            f"⚠️ Relation and simulated asymptote disagree at E = {verdict.inconsistent_errors}"
        )
    return verdict


# ══════════════════════════════════════════════════════════════════════════════
# CLOSED-LOOP ROTATION, WASHOUT AND COUPLING
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class VmrRow:
    target: float
    final_x: float
    final_error: float
    expected_error: float
    converged: bool
    monotone: bool  # |error| strictly decreased on every trial

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "final_x": self.final_x,
            "final_error": self.final_error,
            "expected_error": self.expected_error,
            "converged": self.converged,
            "monotone": self.monotone,
        }


def _expected_vmr_error(model: Model, target: float) -> float:
    if isinstance(model, StandardSsmParams):
        return target - fixed_point_standard_vmr(model, target)
    if abs(target) < model.k:
        return 0.0
    return target - math.copysign(model.k, target)


def vmr_report(model: Model, targets: Sequence[float],
               conv_tol: float = SystemConfig.CONV_TOL,
               n_max: int = SystemConfig.N_MAX) -> List[VmrRow]:
    """
    Run a closed-loop rotation to convergence for each target. The coupled
    model adapts fully while |T| < k; beyond it the state settles at +/-k.
    """
    rows = []
    for target in targets:
        traj = simulate_until_converged(model, Protocol.vmr(float(target), n_trials=1),
                                        conv_tol, n_max)
        magnitudes = np.abs(traj.error)
        rows.append(VmrRow(
            target=float(target),
            final_x=traj.final_x,
            final_error=traj.final_error,
            expected_error=_expected_vmr_error(model, float(target)),
            converged=bool(traj.converged),
            monotone=bool(np.all(np.diff(magnitudes) < 0.0)),
        ))
    return rows


def vmr_frame(rows: Sequence[VmrRow]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in rows],
                        columns=["target", "final_x", "final_error", "expected_error",
                                 "converged", "monotone"])


def washout_contrast(standard: StandardSsmParams, coupled: CoupledModelParams,
                     x0: float, n_trials: int) -> Dict[str, float]:
    """
    Zero-error trials from a non-zero state: the standard model decays as
    x0*A^n while the coupled model holds x0 because P(0) = 0.
    """
    protocol = Protocol.washout(n_trials=n_trials, x0=x0)
    return {
        "x0": float(x0),
        "n_trials": n_trials,
        "standard_final": simulate(standard, protocol).final_x,
        "standard_expected": float(x0) * standard.A ** n_trials,
        "coupled_final": simulate(coupled, protocol).final_x,
    }


def coupling_table(model: CoupledModelParams, error_sizes: Sequence[float]) -> pd.DataFrame:
    """Forgetting rate 1 - P(E) against learning term P(E)*K per error size"""
    return pd.DataFrame(
        [{
            "error": float(e),
            "p": model.rate(float(e)),
            "forgetting_rate": forgetting_rate(model, float(e)),
            "learning_term": learning_term(model, float(e)),
        } for e in error_sizes],
        columns=["error", "p", "forgetting_rate", "learning_term"],
    )
