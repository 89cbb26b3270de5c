import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import InvalidParametersError, UndefinedFixedPointError
from models import (
    CoupledModelParams,
    ErrorSignal,
    RampRate,
    SigmoidRate,
    StandardSsmParams,
    TrialState,
    drive_target,
    fixed_point_coupled,
    fixed_point_standard,
    fixed_point_standard_vmr,
    forgetting_rate,
    learning_rate,
    learning_term,
    model_from_dict,
    rate_supremum,
    step,
    step_coupled,
    step_standard,
)

COUPLED = CoupledModelParams(k=20.0, rate=RampRate(p_max=0.2, e_sat=7.5))

errors_deg = st.floats(min_value=-90.0, max_value=90.0, allow_nan=False)
states = st.floats(min_value=-60.0, max_value=60.0, allow_nan=False)
rates = st.one_of(
    st.builds(RampRate,
              p_max=st.floats(min_value=0.01, max_value=0.95),
              e_sat=st.floats(min_value=0.5, max_value=30.0)),
    st.builds(SigmoidRate,
              a=st.floats(min_value=0.05, max_value=3.0),
              b=st.floats(min_value=0.2, max_value=3.0),
              c=st.floats(min_value=0.05, max_value=3.0),
              p_max=st.floats(min_value=0.01, max_value=0.95)),
)


class TestRateFunctions:
    def test_ramp_values(self):
        rate = RampRate(p_max=0.2, e_sat=7.5)
        assert learning_rate(rate, 0.0) == 0.0
        assert learning_rate(rate, 3.75) == 0.1
        assert learning_rate(rate, 7.5) == 0.2
        assert learning_rate(rate, 15.0) == 0.2
        assert learning_rate(rate, ErrorSignal(-45.0)) == 0.2

    def test_sigmoid_is_zero_at_zero_and_rescaled(self):
        rate = SigmoidRate(a=1.0, b=1.0, c=0.5, p_max=0.2)
        assert rate(0.0) == 0.0
        assert rate(200.0) == pytest.approx(0.2, rel=1e-12)
        assert rate_supremum(rate) == 0.2

    def test_sigmoid_without_rescaling_uses_raw_supremum(self):
        rate = SigmoidRate(a=1.0, b=1.0, c=0.5, p_max=None)
        assert rate_supremum(rate) == 0.5
        assert rate(500.0) == pytest.approx(0.5)

    def test_sigmoid_raw_supremum_must_stay_below_one(self):
        with pytest.raises(InvalidParametersError, match="a/\\(b\\(b\\+1\\)\\)"):
            SigmoidRate(a=3.0, b=1.0, c=0.5, p_max=None)

    @pytest.mark.parametrize("kwargs", [
        {"p_max": 0.0}, {"p_max": 1.0}, {"p_max": -0.2}, {"e_sat": 0.0}, {"e_sat": math.nan},
    ])
    def test_invalid_ramp_parameters(self, kwargs):
        with pytest.raises(InvalidParametersError):
            RampRate(**kwargs)

    @given(rate=rates, e=errors_deg)
    def test_rate_is_even_and_bounded(self, rate, e):
        p = learning_rate(rate, e)
        assert p == learning_rate(rate, -e)
        assert 0.0 <= p < 1.0
        assert p <= rate_supremum(rate) * (1.0 + 1e-12)

    @given(rate=rates, e1=errors_deg, e2=errors_deg)
    def test_rate_is_non_decreasing_in_magnitude(self, rate, e1, e2):
        lo, hi = sorted((abs(e1), abs(e2)))
        assert learning_rate(rate, lo) <= learning_rate(rate, hi)


class TestParameters:
    @pytest.mark.parametrize("A, B", [(0.0, 0.05), (1.0, 0.05), (1.2, 0.05), (0.9, 0.0), (0.9, -1.0)])
    def test_standard_invariants(self, A, B):
        with pytest.raises(InvalidParametersError):
            StandardSsmParams(A=A, B=B)

    def test_standard_message_names_invariant(self):
        with pytest.raises(InvalidParametersError, match="0 < A < 1"):
            StandardSsmParams(A=1.2, B=0.05)

    def test_coupled_requires_positive_k(self):
        with pytest.raises(InvalidParametersError, match="k > 0"):
            CoupledModelParams(k=0.0)

    def test_model_dict_round_trip(self, coupled, standard):
        sigmoid = CoupledModelParams(k=15.0, rate=SigmoidRate(a=1.0, b=2.0, c=0.3, p_max=None))
        for model in (coupled, standard, sigmoid):
            assert model_from_dict(model.to_dict()) == model

    def test_state_and_error_must_be_finite(self):
        with pytest.raises(InvalidParametersError):
            TrialState(0, math.inf)
        with pytest.raises(InvalidParametersError):
            ErrorSignal(math.nan)


class TestUpdateRules:
    def test_hand_iterated_coupled_clamp(self, coupled):
        s = TrialState(0, 0.0)
        xs = [s.x]
        for _ in range(3):
            s = step_coupled(coupled, s, 15.0)
            xs.append(s.x)
        assert xs == pytest.approx([0.0, 4.0, 7.2, 9.76], rel=1e-12, abs=1e-12)
        assert s.n == 3

    def test_standard_step(self, standard):
        s = step_standard(standard, TrialState(0, 0.0), ErrorSignal(10.0))
        assert s == TrialState(1, 0.5)

    def test_dispatcher_matches_specific_rules(self, coupled, standard):
        s = TrialState(4, 3.0)
        assert step(coupled, s, 5.0) == step_coupled(coupled, s, 5.0)
        assert step(standard, s, 5.0) == step_standard(standard, s, 5.0)

    def test_negative_error_drives_towards_minus_k(self, coupled):
        assert drive_target(coupled, -3.0) == -20.0
        assert drive_target(coupled, 0.0) == 0.0
        assert step_coupled(coupled, TrialState(0, 0.0), -15.0).x == pytest.approx(-4.0)

    @given(x=states)
    def test_zero_error_leaves_coupled_state_untouched(self, x):
        assert step_coupled(COUPLED, TrialState(0, x), 0.0).x == x

    @given(rate=rates, e=errors_deg, x=states)
    def test_coupled_update_splits_into_forgetting_and_learning(self, rate, e, x):
        params = CoupledModelParams(k=20.0, rate=rate)
        expected = forgetting_rate(params, e) * x + learning_term(params, e)
        assert step_coupled(params, TrialState(0, x), e).x == pytest.approx(expected, rel=1e-12, abs=1e-12)

    @settings(max_examples=50)
    @given(x0=states, n=st.integers(min_value=1, max_value=50),
           e=st.floats(min_value=7.5, max_value=90.0))
    def test_geometric_contraction_above_saturation(self, x0, n, e):
        s = TrialState(0, x0)
        for _ in range(n):
            s = step_coupled(COUPLED, s, e)
        assert abs(s.x - 20.0) == pytest.approx((1.0 - 0.2) ** n * abs(x0 - 20.0), abs=1e-12)


class TestFixedPoints:
    def test_standard_clamp_asymptote_is_proportional(self, standard):
        assert fixed_point_standard(standard, 10.0) == pytest.approx(5.0)
        assert fixed_point_standard(standard, 20.0) / fixed_point_standard(standard, 10.0) == pytest.approx(2.0, rel=1e-12)

    def test_standard_vmr_asymptote_leaves_residual_error(self, standard):
        x = fixed_point_standard_vmr(standard, 10.0)
        assert x == pytest.approx(10.0 * 0.05 / 0.15)
        assert 10.0 - x > 0.0

    @settings(max_examples=100, deadline=None)
    @given(A=st.floats(min_value=0.05, max_value=0.98),
           B=st.floats(min_value=1e-3, max_value=1.0),
           e=st.floats(min_value=-45.0, max_value=45.0))
    def test_iterated_standard_rule_settles_at_its_fixed_point(self, A, B, e):
        params = StandardSsmParams(A=A, B=B)
        expected = fixed_point_standard(params, e)
        n = math.ceil(math.log(1e-13 / (abs(expected) + 1.0)) / math.log(A))
        s = TrialState(0, 0.0)
        for _ in range(n):
            s = step_standard(params, s, e)
        assert abs(s.x - expected) <= 1e-9

    @pytest.mark.parametrize("e", [1.875, 3.75, 7.5, 15.0, 30.0, 45.0])
    def test_coupled_asymptote_is_error_independent(self, coupled, e):
        assert fixed_point_coupled(coupled, e) == 20.0
        assert fixed_point_coupled(coupled, -e) == -20.0

    def test_coupled_fixed_point_undefined_at_zero_error(self, coupled):
        with pytest.raises(UndefinedFixedPointError):
            fixed_point_coupled(coupled, 0.0)
