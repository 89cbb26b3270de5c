import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from analysis import (
    FEATURE_SATURATION,
    FEATURE_SLOPE_LARGE,
    FEATURE_SLOPE_SMALL,
    CheckStatus,
    GeneralLinearFamily,
    coupling_table,
    extract_features,
    falsification_report,
    feature_sweep,
    verify_uniqueness,
    vmr_report,
    washout_contrast,
)
from errors import InvalidInputError, NonContractiveFamilyError
from models import CoupledModelParams, RampRate, SigmoidRate, StandardSsmParams
from paradigms import Protocol, simulate, simulate_until_converged

COUPLED = CoupledModelParams(k=20.0, rate=RampRate(p_max=0.2, e_sat=7.5))
STANDARD = StandardSsmParams(A=0.9, B=0.05)
GRID = np.linspace(0.5, 45.0, 50)


def _status(checks, feature):
    return next(c.status for c in checks if c.feature == feature)


class TestFeatures:
    def test_extract_from_converged_run(self):
        report = extract_features(simulate_until_converged(COUPLED, Protocol.ticvf(15.0, n_trials=1)))
        assert report.converged is True
        assert report.asymptote == pytest.approx(20.0, abs=1e-6)
        assert report.initial_slope == 4.0
        assert report.error == 15.0

    def test_unconverged_run_has_no_asymptote(self):
        report = extract_features(simulate(COUPLED, Protocol.ticvf(15.0, n_trials=10)))
        assert report.converged is False
        assert report.asymptote is None

    def test_coupled_asymptote_invariance(self):
        sweep = feature_sweep(COUPLED, [1.875, 3.75, 7.5, 15.0, 30.0, 45.0])
        asymptotes = [r.asymptote for r in sweep.rows]
        assert all(abs(a - 20.0) < 1e-6 for a in asymptotes)
        assert max(asymptotes) - min(asymptotes) < 1e-6
        assert _status(sweep.checks, FEATURE_SATURATION) is CheckStatus.PASS

    def test_slope_regimes(self):
        large = feature_sweep(COUPLED, [7.5, 15.0, 30.0, 45.0])
        assert len({r.initial_slope for r in large.rows}) == 1
        assert _status(large.checks, FEATURE_SLOPE_LARGE) is CheckStatus.PASS

        small = feature_sweep(COUPLED, [1.875, 3.75, 7.5])
        slopes = [r.initial_slope for r in small.rows]
        assert slopes[1] / slopes[0] == 2.0
        assert slopes[2] / slopes[0] == 4.0
        assert _status(small.checks, FEATURE_SLOPE_SMALL) is CheckStatus.PASS

    def test_sigmoid_boundary_checks_are_untested(self):
        model = CoupledModelParams(k=20.0, rate=SigmoidRate())
        sweep = feature_sweep(model, [5.0, 15.0])
        assert _status(sweep.checks, FEATURE_SLOPE_LARGE) is CheckStatus.UNTESTED
        assert _status(sweep.checks, FEATURE_SATURATION) is CheckStatus.PASS

    def test_sweep_table_columns(self):
        frame = feature_sweep(COUPLED, [15.0, 45.0]).to_frame()
        assert list(frame.columns) == ["error", "asymptote", "slope", "converged"]
        assert frame["error"].tolist() == [15.0, 45.0]

    @pytest.mark.parametrize("sizes", [[], [0.0, 15.0], [-3.0]])
    def test_sweep_rejects_bad_sizes(self, sizes):
        with pytest.raises(InvalidInputError):
            feature_sweep(COUPLED, sizes)


class TestFalsification:
    def test_asymptote_doubles_with_error(self):
        report = falsification_report(STANDARD, [10.0, 20.0])
        assert report.asymptote_ratios[1] == pytest.approx(2.0, abs=1e-9)
        empirical = report.rows[1].empirical_asymptote / report.rows[0].empirical_asymptote
        assert empirical == pytest.approx(2.0, abs=1e-9)
        assert report.rows[0].empirical_asymptote == pytest.approx(report.rows[0].asymptote, abs=1e-9)

    def test_slope_stays_proportional_above_boundary(self):
        report = falsification_report(STANDARD, [15.0, 45.0])
        assert report.slope_ratios[1] == pytest.approx(3.0, abs=1e-12)
        assert sorted(report.violated) == sorted([FEATURE_SATURATION, FEATURE_SLOPE_LARGE])
        assert _status(report.checks, FEATURE_SLOPE_SMALL) is CheckStatus.UNTESTED

    def test_small_error_feature_is_reproduced(self):
        report = falsification_report(STANDARD, [1.875, 3.75, 15.0, 45.0])
        assert _status(report.checks, FEATURE_SLOPE_SMALL) is CheckStatus.PASS
        assert FEATURE_SLOPE_SMALL not in report.violated

    @pytest.mark.parametrize("sizes", [[15.0], [15.0, 15.0], []])
    def test_needs_two_distinct_sizes(self, sizes):
        with pytest.raises(InvalidInputError):
            falsification_report(STANDARD, sizes)

    def test_report_dict_lists_verdict(self):
        data = falsification_report(STANDARD, [15.0, 45.0]).to_dict()
        assert data["model"] == {"kind": "standard", "A": 0.9, "B": 0.05}
        assert set(data["violated"]) == {FEATURE_SATURATION, FEATURE_SLOPE_LARGE}


class TestUniqueness:
    def test_compliant_family_passes(self):
        verdict = verify_uniqueness(GeneralLinearFamily.from_rate(RampRate(), 20.0, GRID))
        assert verdict.passed
        assert verdict.max_residual < 1e-12
        assert all(p.asymptote_matches for p in verdict.points)

    def test_sigmoid_family_passes(self):
        verdict = verify_uniqueness(GeneralLinearFamily.from_rate(SigmoidRate(), 15.0, GRID))
        assert verdict.passed

    @pytest.mark.parametrize("seed", range(100))
    def test_perturbed_family_fails_at_the_perturbed_error(self, seed):
        rng = np.random.default_rng(seed)
        family = GeneralLinearFamily.from_rate(RampRate(), 20.0, GRID)
        i = int(rng.integers(len(GRID)))
        f = family.f.copy()
        f[i] -= rng.uniform(1e-6, 0.5)
        verdict = verify_uniqueness(GeneralLinearFamily(family.errors, f, family.g, 20.0))
        assert not verdict.passed
        assert verdict.violating_errors == [GRID[i]]
        assert not verdict.inconsistent_errors

    def test_non_contractive_family_raises(self):
        family = GeneralLinearFamily.from_rate(RampRate(), 20.0, [5.0, 15.0])
        f = family.f.copy()
        f[1] = 1.05
        with pytest.raises(NonContractiveFamilyError) as info:
            verify_uniqueness(GeneralLinearFamily(family.errors, f, family.g, 20.0))
        assert info.value.errors == [15.0]

    def test_identity_point_is_measured_by_asymptote(self):
        family = GeneralLinearFamily([0.0, 15.0], [1.0, 0.8], [0.0, 4.0], 20.0)
        verdict = verify_uniqueness(family, x0=0.0)
        assert verdict.points[0].residual == 1.0
        assert verdict.violating_errors == [0.0]

    def test_near_zero_error_is_scored_at_its_fixed_point(self):
        verdict = verify_uniqueness(GeneralLinearFamily.from_rate(RampRate(), 20.0, [0.001, 15.0]))
        slow = verdict.points[0]
        assert not slow.converged
        assert slow.asymptote == pytest.approx(20.0, rel=1e-9)
        assert slow.asymptote_matches
        assert not verdict.inconsistent_errors
        assert verdict.passed

    def test_asymptote_disagreement_fails_within_residual_tolerance(self):
        # relation off by 5e-10 where 1 - f = 1e-3, so the asymptote misses k_ref by 5e-7
        family = GeneralLinearFamily([1.0], [0.999 + 5e-10], [0.02], 20.0)
        verdict = verify_uniqueness(family)
        assert verdict.max_residual < verdict.tolerance
        assert verdict.inconsistent_errors == [1.0]
        assert not verdict.passed

    def test_family_validation(self):
        with pytest.raises(InvalidInputError):
            GeneralLinearFamily([1.0, 2.0], [0.5], [1.0, 1.0], 20.0)
        with pytest.raises(InvalidInputError):
            GeneralLinearFamily([1.0], [0.5], [1.0], 0.0)
        with pytest.raises(InvalidInputError):
            GeneralLinearFamily([1.0], [-0.5], [1.0], 20.0)

    @settings(max_examples=10, deadline=None)
    @given(p_max=st.floats(min_value=0.01, max_value=0.95),
           e_sat=st.floats(min_value=0.5, max_value=30.0),
           k=st.floats(min_value=1.0, max_value=60.0))
    def test_any_ramp_family_passes(self, p_max, e_sat, k):
        family = GeneralLinearFamily.from_rate(RampRate(p_max=p_max, e_sat=e_sat), k, GRID)
        assert verify_uniqueness(family).passed


class TestClosedLoopAndWashout:
    def test_coupled_vmr_adapts_fully_below_k(self):
        (row,) = vmr_report(COUPLED, [10.0])
        assert row.converged and row.monotone
        assert abs(row.final_error) < 1e-6
        assert row.expected_error == 0.0

    def test_coupled_vmr_beyond_k_settles_at_k(self):
        (row,) = vmr_report(COUPLED, [30.0])
        assert row.final_x == pytest.approx(20.0, abs=1e-6)
        assert row.final_error == pytest.approx(10.0, abs=1e-6)

    def test_standard_vmr_keeps_residual_error(self):
        (row,) = vmr_report(STANDARD, [10.0])
        assert row.final_error == pytest.approx(10.0 * 0.1 / 0.15, abs=1e-6)
        assert row.final_error == pytest.approx(row.expected_error, abs=1e-6)

    def test_washout_contrast(self):
        result = washout_contrast(STANDARD, COUPLED, x0=8.0, n_trials=20)
        assert result["coupled_final"] == 8.0
        assert result["standard_final"] == pytest.approx(result["standard_expected"], rel=1e-12)
        assert result["standard_final"] < 8.0

    def test_coupling_table(self):
        table = coupling_table(COUPLED, [3.75, 45.0])
        assert table["forgetting_rate"].tolist() == pytest.approx([0.9, 0.8])
        assert table["learning_term"].tolist() == pytest.approx([2.0, 4.0])
        assert not math.isnan(table["p"].sum())
