import shutil
from pathlib import Path

import pytest
from typer.testing import CliRunner

from models import CoupledModelParams, RampRate, StandardSsmParams

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def coupled():
    return CoupledModelParams(k=20.0, rate=RampRate(p_max=0.2, e_sat=7.5))


@pytest.fixture
def standard():
    return StandardSsmParams(A=0.9, B=0.05)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def fixture_copy(tmp_path):
    """Writable copy of the bundled fixture configs"""
    target = tmp_path / "fixtures"
    shutil.copytree(FIXTURES, target)
    return target


@pytest.fixture
def seeded_fixtures(fixture_copy, runner):
    """Fixture copy with every trajectory CSV generated through `simulate`"""
    from cli import app

    for config in sorted(fixture_copy.glob("coupled_ticvf_*.toml")):
        result = runner.invoke(app, ["--config", str(config), "--out", str(config.with_suffix(".csv")),
                                     "simulate"])
        assert result.exit_code == 0, result.output
    return fixture_copy
