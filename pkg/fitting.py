"""
Fitting Module for adaptsim
Recovers model parameters from observed (or synthetic) trajectories by
least-squares trajectory matching with a bounded, multi-start simplex search.

The objective is the sum over trajectories and trials of (x_sim - x_obs)^2.
Start points come from an unscrambled Halton sequence over the bounds,
fast-forwarded by the seed, so a run is reproducible bit for bit and the
start list for ``starts=n`` is a prefix of the one for ``starts=n+1``.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from config import ProtocolKind, SystemConfig
from errors import AdaptsimError, InvalidInputError
from models import (
    CoupledModelParams,
    Model,
    RampRate,
    SigmoidRate,
    StandardSsmParams,
)
from paradigms import Trajectory, run_trials

logger = logging.getLogger(__name__)


class FitModelKind(Enum):
    STANDARD = "standard"
    COUPLED_RAMP = "coupled-ramp"
    COUPLED_SIGMOID = "coupled-sigmoid"


PARAMETER_NAMES: Dict[FitModelKind, Tuple[str, ...]] = {
    FitModelKind.STANDARD: ("A", "B"),
    FitModelKind.COUPLED_RAMP: ("k", "p_max", "e_sat"),
    FitModelKind.COUPLED_SIGMOID: ("k", "b", "c", "p_max"),
}

# Rescaling to p_max divides a out of the sigmoid, so fits pin it
SIGMOID_A = 1.0

DEFAULT_BOUNDS: Dict[str, Tuple[float, float]] = {
    "A": (0.01, 0.999),
    "B": (1e-4, 1.0),
    "k": (1.0, 60.0),
    "p_max": (0.01, 0.95),
    "e_sat": (0.5, 30.0),
    "b": (0.1, 5.0),
    "c": (0.01, 5.0),
}

# Simplex stopping thresholds; the evaluation budget is max_evals
XATOL = 1e-10
FATOL = 1e-20


def build_fit_model(kind: FitModelKind, values: Dict[str, float]) -> Model:
    """Instantiate model parameters of ``kind`` from a complete name -> value map"""
    if kind is FitModelKind.STANDARD:
        return StandardSsmParams(A=values["A"], B=values["B"])
    if kind is FitModelKind.COUPLED_RAMP:
        return CoupledModelParams(k=values["k"], rate=RampRate(p_max=values["p_max"],
                                                               e_sat=values["e_sat"]))
    return CoupledModelParams(k=values["k"], rate=SigmoidRate(
        a=SIGMOID_A, b=values["b"], c=values["c"], p_max=values["p_max"]))


# ══════════════════════════════════════════════════════════════════════════════
# PROBLEM AND RESULT TYPES
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class FitProblem:
    """
    Observed trajectories, the model family to fit, box bounds for the free
    parameters and values for the fixed ones.
    """

    observed: Tuple[Trajectory, ...]
    model_kind: FitModelKind
    bounds: Dict[str, Tuple[float, float]]
    fixed: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(self.observed))
        if not isinstance(self.model_kind, FitModelKind):
            object.__setattr__(self, "model_kind", FitModelKind(self.model_kind))
        if not self.observed:
            raise InvalidInputError("a fit problem needs at least one observed trajectory")
        kinds = {t.protocol.kind for t in self.observed}
        if len(kinds) != 1:
            raise InvalidInputError(
                f"observed trajectories must share one protocol family (got {sorted(k.value for k in kinds)})"
            )

        names = PARAMETER_NAMES[self.model_kind]
        unknown = sorted((set(self.bounds) | set(self.fixed)) - set(names))
        if unknown:
            raise InvalidInputError(
                f"unknown parameters for {self.model_kind.value}: {unknown} (expected {list(names)})"
            )
        both = sorted(set(self.bounds) & set(self.fixed))
        if both:
            raise InvalidInputError(f"parameters both free and fixed: {both}")
        missing = [n for n in names if n not in self.bounds and n not in self.fixed]
        if missing:
            raise InvalidInputError(f"parameters neither free nor fixed: {missing}")
        if not self.bounds:
            raise InvalidInputError("at least one parameter must be free")
        bounds = {}
        for name in names:
            if name not in self.bounds:
                continue
            lo, hi = (float(v) for v in self.bounds[name])
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidInputError(f"bounds for {name} must be finite with lower < upper")
            bounds[name] = (lo, hi)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "fixed", {k: float(v) for k, v in self.fixed.items()})

    @property
    def free_names(self) -> Tuple[str, ...]:
        return tuple(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[n][0] for n in self.free_names], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[n][1] for n in self.free_names], dtype=float)

    @property
    def error_sizes(self) -> List[float]:
        """Distinct clamped errors in the data (empty for non-clamp protocols)"""
        return sorted({t.protocol.e_clamp for t in self.observed
                       if t.protocol.kind is ProtocolKind.TICVF})

    def values(self, candidate: Sequence[float]) -> Dict[str, float]:
        values = dict(self.fixed)
        values.update({n: float(v) for n, v in zip(self.free_names, candidate)})
        return {n: values[n] for n in PARAMETER_NAMES[self.model_kind]}

    def to_dict(self) -> dict:
        return {
            "model": self.model_kind.value,
            "free": {n: list(b) for n, b in self.bounds.items()},
            "fixed": dict(self.fixed),
            "observed": [t.protocol.to_dict() for t in self.observed],
        }


@dataclass(frozen=True)
class ObjectiveEvaluation:
    value: float  # degrees^2
    diverged: bool = False
    reason: Optional[str] = None


@dataclass(frozen=True)
class LocalOptimum:
    start_index: int
    start: Tuple[float, ...]
    x: Tuple[float, ...]
    objective: float
    evaluations: int
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "start_index": self.start_index,
            "start": list(self.start),
            "x": list(self.x),
            "objective": self.objective,
            "evaluations": self.evaluations,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class FitResult:
    problem: FitProblem
    params: Dict[str, float]
    objective: float
    iterations: int
    evaluations: int
    converged: bool
    no_improvement: bool
    optima: List[LocalOptimum]
    seed: int
    warnings: List[str] = field(default_factory=list)

    @property
    def model(self) -> Model:
        return build_fit_model(self.problem.model_kind, self.params)

    def to_dict(self) -> dict:
        return {
            "model": self.problem.model_kind.value,
            "params": dict(self.params),
            "free": list(self.problem.free_names),
            "objective": self.objective,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "no_improvement": self.no_improvement,
            "seed": self.seed,
            "starts": [o.to_dict() for o in self.optima],
            "warnings": list(self.warnings),
        }


# ══════════════════════════════════════════════════════════════════════════════
# OBJECTIVE
# ══════════════════════════════════════════════════════════════════════════════

def evaluate(problem: FitProblem, candidate: Sequence[float]) -> ObjectiveEvaluation:
    """
    Score a candidate. Invalid or divergent parameterizations score the
    sentinel with ``diverged`` set instead of raising.

    Raises:
        InvalidInputError: If the candidate lies outside the bounds
    """
    candidate = np.asarray(candidate, dtype=float)
    if candidate.shape != (len(problem.free_names),):
        raise InvalidInputError(
            f"candidate needs {len(problem.free_names)} values for {list(problem.free_names)}"
        )
    if np.any(candidate < problem.lower) or np.any(candidate > problem.upper):
        raise InvalidInputError(f"candidate {candidate.tolist()} outside the bounds")
    try:
        model = build_fit_model(problem.model_kind, problem.values(candidate))
        squares = []
        for traj in problem.observed:
            xs, _, _ = run_trials(model, traj.protocol)
            squares.extend((a - b) ** 2 for a, b in zip(xs, traj.x.tolist()))
    except AdaptsimError as e:
        return ObjectiveEvaluation(SystemConfig.SENTINEL_OBJECTIVE, diverged=True, reason=str(e))
    # fsum is exactly rounded, so the total does not depend on trajectory order
    value = math.fsum(squares)
    if not math.isfinite(value):
        return ObjectiveEvaluation(SystemConfig.SENTINEL_OBJECTIVE, diverged=True,
                                   reason="non-finite residuals")
    return ObjectiveEvaluation(min(value, SystemConfig.SENTINEL_OBJECTIVE))


def objective(problem: FitProblem, candidate: Sequence[float]) -> float:
    return evaluate(problem, candidate).value


# ══════════════════════════════════════════════════════════════════════════════
# MULTI-START SIMPLEX SEARCH
# ══════════════════════════════════════════════════════════════════════════════

def start_points(problem: FitProblem, starts: int, seed: int) -> np.ndarray:
    """First ``starts`` Halton points after skipping ``seed + 1``, scaled to the bounds"""
    sampler = qmc.Halton(d=len(problem.free_names), scramble=False)
    sampler.fast_forward(seed + 1)
    return qmc.scale(sampler.random(starts), problem.lower, problem.upper)


def _descend(problem: FitProblem, index: int, start: np.ndarray, max_evals: int) -> LocalOptimum:
    lower, upper = problem.lower, problem.upper

    def fun(v: np.ndarray) -> float:
        return objective(problem, np.clip(v, lower, upper))

    res = minimize(
        fun,
        start,
        method="Nelder-Mead",
        bounds=list(zip(lower, upper)),
        options={"maxfev": max_evals, "xatol": XATOL, "fatol": FATOL, "adaptive": False},
    )
    x = np.clip(res.x, lower, upper)
    return LocalOptimum(
        start_index=index,
        start=tuple(float(v) for v in start),
        x=tuple(float(v) for v in x),
        objective=float(res.fun),
        evaluations=int(res.nfev),
        iterations=int(res.nit),
        converged=bool(res.success),
    )


def _better(a: LocalOptimum, b: LocalOptimum) -> LocalOptimum:
    """Best objective wins; ties go to the lower start index"""
    return min(a, b, key=lambda o: (o.objective, o.start_index))


def fit(problem: FitProblem, starts: int = SystemConfig.DEFAULT_STARTS,
        seed: int = SystemConfig.DEFAULT_SEED,
        max_evals: int = SystemConfig.DEFAULT_MAX_EVALS,
        initial: Optional[Sequence[Sequence[float]]] = None,
        workers: int = 1) -> FitResult:
    """
    Run a bounded simplex descent from each start point and keep the best

    Args:
        problem: What to fit
        starts: Number of start points drawn from the seeded sequence
        seed: Offset into the start sequence
        max_evals: Objective evaluations allowed per start
        initial: Explicit start points used instead of the sequence
        workers: Starts evaluated concurrently

    Returns:
        FitResult; reproducible bit for bit given (seed, starts, max_evals)
    """
    if initial is None and starts < 1:
        raise InvalidInputError(f"starts >= 1 violated (got {starts})")
    if max_evals < 100:
        raise InvalidInputError(f"max_evals >= 100 violated (got {max_evals})")
    if seed < 0:
        raise InvalidInputError(f"seed must be non-negative (got {seed})")

    if initial is not None:
        points = np.clip(np.asarray(initial, dtype=float), problem.lower, problem.upper)
        if points.ndim != 2 or points.shape[1] != len(problem.free_names) or len(points) == 0:
            raise InvalidInputError("initial start points do not match the free parameters")
    else:
        points = start_points(problem, starts, seed)

    logger.info(f"🚀 Fitting {problem.model_kind.value} from {len(points)} start(s)")
    jobs = list(enumerate(points))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            optima = list(pool.map(lambda job: _descend(problem, job[0], job[1], max_evals), jobs))
    else:
        optima = [_descend(problem, i, p, max_evals) for i, p in jobs]

    best = reduce(_better, optima)
    no_improvement = all(o.objective >= SystemConfig.SENTINEL_OBJECTIVE for o in optima)
    warnings = identifiability_warnings(problem)
    if no_improvement:
        warnings.append("every start ended at the divergence sentinel")
        logger.warning("❌ No start improved on the divergence sentinel")
    for w in warnings:
        logger.warning(f"⚠️ {w}")

    return FitResult(
        problem=problem,
        params=problem.values(best.x),
        objective=best.objective,
        iterations=best.iterations,
        evaluations=sum(o.evaluations for o in optima),
        converged=best.converged,
        no_improvement=no_improvement,
        optima=optima,
        seed=seed,
        warnings=warnings,
    )


def identifiability_warnings(problem: FitProblem) -> List[str]:
    warnings = []
    if problem.model_kind is not FitModelKind.STANDARD and len(problem.error_sizes) == 1:
        warnings.append(
            "data span a single clamped error: only P(E) and k at that error are "
            "identifiable, not the shape of the rate function"
        )
    return warnings


# ══════════════════════════════════════════════════════════════════════════════
# MODEL COMPARISON
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class ComparisonReport:
    standard: FitResult
    coupled: FitResult

    @property
    def ratio(self) -> float:
        """Standard objective over coupled objective (inf when coupled fits exactly)"""
        if self.coupled.objective == 0.0:
            return math.inf if self.standard.objective > 0.0 else 1.0
        return self.standard.objective / self.coupled.objective

    def to_dict(self) -> dict:
        return {
            "standard_objective": self.standard.objective,
            "coupled_objective": self.coupled.objective,
            "ratio": self.ratio if math.isfinite(self.ratio) else "inf",
            "standard": self.standard.to_dict(),
            "coupled": self.coupled.to_dict(),
        }


def cross_model_comparison(data: Sequence[Trajectory], seed: int = SystemConfig.DEFAULT_SEED,
                           starts: int = SystemConfig.DEFAULT_STARTS,
                           max_evals: int = SystemConfig.DEFAULT_MAX_EVALS) -> ComparisonReport:
    """
    Fit the standard model and the coupled ramp model to the same data with
    every parameter free inside the default bounds.
    """
    data = tuple(data)
    if not data:
        raise InvalidInputError("model comparison needs at least one trajectory")
    results = {}
    for kind in (FitModelKind.STANDARD, FitModelKind.COUPLED_RAMP):
        problem = FitProblem(
            observed=data,
            model_kind=kind,
            bounds={n: DEFAULT_BOUNDS[n] for n in PARAMETER_NAMES[kind]},
        )
        results[kind] = fit(problem, starts=starts, seed=seed, max_evals=max_evals)
    report = ComparisonReport(results[FitModelKind.STANDARD], results[FitModelKind.COUPLED_RAMP])
    if len(results[FitModelKind.STANDARD].problem.error_sizes) < 2:
        logger.warning("⚠️ Fewer than 2 clamped error sizes: the comparison cannot separate the models")
    logger.info(
        f"📊 standard={report.standard.objective:.6g} coupled={report.coupled.objective:.6g}"
    )
    return report
