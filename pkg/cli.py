"""
adaptsim - Command Line Interface
simulate | sweep | falsify | uniqueness | fit | compare | vmr

Exit codes: 0 success or pass, 2 input validation, 3 numeric failure,
4 uniqueness fail. Summaries go to standard output, logs to standard error.
"""

import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional

import typer

import analysis
import fitting
from config import OutputFormat, RunConfig, SystemConfig, build_model, build_protocol
from config_loader import load_fit_problem, load_run_config
from errors import (
    ConfigError,
    InvalidInputError,
    InvalidParametersError,
    NonContractiveFamilyError,
    NumericOverflowError,
    UndefinedFixedPointError,
)
from models import StandardSsmParams
from paradigms import simulate
from report_utils import read_family, write_kv_tree, write_table, write_trajectory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_UNIQUENESS_FAIL = 4

app = typer.Typer(
    name="adaptsim",
    help="Simulate, analyze and fit error-dependent motor adaptation models.",
    add_completion=False,
    no_args_is_help=True,
)


@dataclass
class CliState:
    config_path: Optional[Path] = None
    out: Optional[Path] = None
    format: Optional[OutputFormat] = None
    seed: int = SystemConfig.DEFAULT_SEED
    preset: Optional[str] = None
    overrides: List[str] = field(default_factory=list)

    def load(self) -> RunConfig:
        return load_run_config(self.config_path, self.preset, self.overrides)

    def output_format(self, config: RunConfig) -> OutputFormat:
        return self.format or OutputFormat(config.format)

    def output_path(self, config: RunConfig, stem: str, fmt: OutputFormat) -> Path:
        if self.out is not None:
            return self.out
        if config.out:
            return Path(config.out)
        return Path(f"{stem}.json" if fmt is OutputFormat.KV_TREE else f"{stem}.csv")


def _echo_error(message: str) -> None:
    typer.echo(f"error: {message}", err=True)


@contextmanager
def handle_errors() -> Iterator[None]:
    """Map domain failures onto the exit-code contract"""
    try:
        yield
    except ConfigError as e:
        for line in e.diagnostics():
            _echo_error(line)
        raise typer.Exit(EXIT_INPUT)
    except (InvalidInputError, InvalidParametersError) as e:
        _echo_error(str(e))
        raise typer.Exit(EXIT_INPUT)
    except (NumericOverflowError, NonContractiveFamilyError, UndefinedFixedPointError) as e:
        _echo_error(str(e))
        raise typer.Exit(EXIT_NUMERIC)
    except OSError as e:
        _echo_error(f"{e.filename}: {e.strerror}" if e.filename else str(e))
        raise typer.Exit(EXIT_INPUT)


def _parse_sizes(raw: Optional[str], fallback: List[float], name: str = "--errors") -> List[float]:
    if raw is None:
        return list(fallback)
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"{name} must be a comma-separated list of numbers (got {raw!r})") from None


def _summary(**values) -> None:
    for key, value in values.items():
        typer.echo(f"{key}={value}")


@app.callback()
def main(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", help="Run configuration (.toml or .json)"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output file path"),
    fmt: Optional[OutputFormat] = typer.Option(None, "--format", help="Table output format"),
    seed: int = typer.Option(SystemConfig.DEFAULT_SEED, "--seed", min=0, help="Fit start-sequence seed"),
    preset: Optional[str] = typer.Option(None, "--preset", help="Named model preset"),
    overrides: Optional[List[str]] = typer.Option(None, "--set", help="Override a config key (key=value)"),
    log_level: str = typer.Option(SystemConfig.LOG_LEVEL, "--log-level", help="DEBUG, INFO, WARNING or ERROR"),
) -> None:
    level = getattr(logging, log_level.upper(), None)
    if not isinstance(level, int):
        _echo_error(f"unknown log level '{log_level}'")
        raise typer.Exit(EXIT_INPUT)
    logging.basicConfig(level=level, format=SystemConfig.LOG_FORMAT, stream=sys.stderr, force=True)
    ctx.obj = CliState(
        config_path=config, out=out, format=fmt, seed=seed, preset=preset,
        overrides=list(overrides or []),
    )


@app.command("simulate")
def cmd_simulate(ctx: typer.Context) -> None:
    """Run one protocol and write the per-trial trajectory table."""
    state: CliState = ctx.obj
    with handle_errors():
        config = state.load()
        model = build_model(config)
        traj = simulate(model, build_protocol(config))
        fmt = state.output_format(config)
        path = write_trajectory(traj, state.output_path(config, "trajectory", fmt), fmt.value)
        features = analysis.extract_features(traj, config.conv_tol)
    _summary(
        model=model.kind.value,
        protocol=traj.protocol.kind.value,
        trials=traj.n_trials,
        final_x=repr(traj.final_x),
        asymptote=repr(features.asymptote) if features.asymptote is not None else "none",
        slope=repr(features.initial_slope),
        converged=str(features.converged).lower(),
        output=path,
    )


@app.command("sweep")
def cmd_sweep(
    ctx: typer.Context,
    errors: Optional[str] = typer.Option(None, "--errors", help="Comma-separated clamped error sizes"),
) -> None:
    """Clamp each error size to convergence and tabulate asymptote and slope."""
    state: CliState = ctx.obj
    with handle_errors():
        config = state.load()
        sweep = analysis.feature_sweep(
            build_model(config),
            _parse_sizes(errors, config.error_sizes),
            conv_tol=config.conv_tol,
            asymptote_tol=config.asymptote_tol,
            n_max=config.n_max,
        )
        fmt = state.output_format(config)
        path = state.output_path(config, "sweep", fmt)
        if fmt is OutputFormat.KV_TREE:
            write_kv_tree(sweep.to_dict(), path)
        else:
            write_table(sweep.to_frame(), path)
    for check in sweep.checks:
        typer.echo(f"{check.feature}={check.status.value}")
    _summary(output=path)


@app.command("falsify")
def cmd_falsify(
    ctx: typer.Context,
    errors: Optional[str] = typer.Option(None, "--errors", help="Comma-separated clamped error sizes"),
) -> None:
    """Test the standard model's predictions against the adaptation features."""
    state: CliState = ctx.obj
    with handle_errors():
        config = state.load()
        report = analysis.falsification_report(
            StandardSsmParams(A=config.A, B=config.B),
            _parse_sizes(errors, config.error_sizes),
            boundary=config.e_sat,
            n_max=config.n_max,
        )
        path = state.output_path(config, "falsification", OutputFormat.KV_TREE)
        write_kv_tree(report.to_dict(), path)
    _summary(
        asymptote_ratios=",".join(repr(r) for r in report.asymptote_ratios),
        slope_ratios=",".join(repr(r) for r in report.slope_ratios),
        violated=",".join(report.violated) or "none",
        output=path,
    )


@app.command("uniqueness")
def cmd_uniqueness(
    ctx: typer.Context,
    family_file: Path = typer.Argument(..., help="Family grid: k_ref line, then e,f,g table"),
) -> None:
    """Check a general linear family against the coupled rule f = 1 - g/k_ref."""
    state: CliState = ctx.obj
    with handle_errors():
        config = state.load()
        verdict = analysis.verify_uniqueness(read_family(family_file), tol=config.uniqueness_tol,
                                             n_max=config.n_max)
        fmt = state.output_format(config)
        path = state.output_path(config, "residuals", fmt)
        if fmt is OutputFormat.KV_TREE:
            write_kv_tree({**verdict.to_dict(), "points": [p.to_dict() for p in verdict.points]}, path)
        else:
            write_table(verdict.to_frame(), path)
    _summary(
        verdict="pass" if verdict.passed else "fail",
        max_residual=repr(verdict.max_residual),
        violating_errors=",".join(repr(e) for e in verdict.violating_errors) or "none",
        inconsistent_errors=",".join(repr(e) for e in verdict.inconsistent_errors) or "none",
        output=path,
    )
    if not verdict.passed:
        raise typer.Exit(EXIT_UNIQUENESS_FAIL)


@app.command("fit")
def cmd_fit(
    ctx: typer.Context,
    problem_file: Path = typer.Argument(..., help="Fit problem (.toml or .json)"),
    starts: int = typer.Option(SystemConfig.DEFAULT_STARTS, "--starts", min=1, help="Number of start points"),
    max_evals: Optional[int] = typer.Option(None, "--max-evals", help="Evaluations per start"),
) -> None:
    """Recover model parameters from trajectory files by least squares."""
    state: CliState = ctx.obj
    with handle_errors():
        problem, file_max_evals = load_fit_problem(problem_file)
        result = fitting.fit(
            problem,
            starts=starts,
            seed=state.seed,
            max_evals=max_evals or file_max_evals or SystemConfig.DEFAULT_MAX_EVALS,
        )
        path = state.out or Path("fit_result.json")
        write_kv_tree(result.to_dict(), path)
    _summary(
        **{name: repr(value) for name, value in result.params.items()},
        objective=repr(result.objective),
        converged=str(result.converged).lower(),
        no_improvement=str(result.no_improvement).lower(),
        output=path,
    )


@app.command("compare")
def cmd_compare(
    ctx: typer.Context,
    problem_file: Path = typer.Argument(..., help="Fit problem whose trajectories are compared"),
    starts: int = typer.Option(SystemConfig.DEFAULT_STARTS, "--starts", min=1, help="Number of start points"),
) -> None:
    """Fit the standard and coupled models to the same data and compare objectives."""
    state: CliState = ctx.obj
    with handle_errors():
        problem, file_max_evals = load_fit_problem(problem_file)
        report = fitting.cross_model_comparison(
            problem.observed, seed=state.seed, starts=starts,
            max_evals=file_max_evals or SystemConfig.DEFAULT_MAX_EVALS,
        )
        path = state.out or Path("comparison.json")
        write_kv_tree(report.to_dict(), path)
    _summary(
        standard_objective=repr(report.standard.objective),
        coupled_objective=repr(report.coupled.objective),
        ratio=repr(report.ratio),
        output=path,
    )


@app.command("vmr")
def cmd_vmr(
    ctx: typer.Context,
    targets: Optional[str] = typer.Option(None, "--targets", help="Comma-separated rotation targets"),
) -> None:
    """Run closed-loop rotations to convergence and report the residual error."""
    state: CliState = ctx.obj
    with handle_errors():
        config = state.load()
        rows = analysis.vmr_report(
            build_model(config),
            _parse_sizes(targets, [config.target], "--targets"),
            conv_tol=config.conv_tol,
            n_max=config.n_max,
        )
        if not rows:
            raise InvalidInputError("at least one target is required")
        fmt = state.output_format(config)
        path = state.output_path(config, "vmr", fmt)
        if fmt is OutputFormat.KV_TREE:
            write_kv_tree({"rows": [r.to_dict() for r in rows]}, path)
        else:
            write_table(analysis.vmr_frame(rows), path)
    for row in rows:
        typer.echo(f"target={row.target!r} final_error={row.final_error!r} "
                   f"converged={str(row.converged).lower()} monotone={str(row.monotone).lower()}")
    _summary(output=path)


if __name__ == "__main__":
    app()
