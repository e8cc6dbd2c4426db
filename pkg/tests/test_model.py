import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdefit import (DerivedParams, EigenPair, SpdeParams, ValidationError,
                     derived_params, eigenfunction_eval, eigenvalue,
                     ou_transition, ou_transition_arrays, ou_variance_scale)

# Frozen oracle values, computed independently at 30 significant digits.
LAMBDA1_A = 1.6119604401089359      # theta = (0, 0.5, 0.1, .): 0.25/0.4 + pi^2/10
LAMBDA1_B = 2.0239208802178717      # theta = (0, 0.2, 0.2, .): 0.04/0.8 + pi^2/5
EIGFUN_ETA5_HALF = 0.40517896940462938  # sqrt(2) * exp(-1.25)


class TestSpdeParams:
    def test_rejects_nonpositive_theta2(self):
        with pytest.raises(ValidationError, match="theta2.*> 0"):
            SpdeParams(0.0, 0.0, -1.0, 1.0)
        with pytest.raises(ValidationError, match="theta2"):
            SpdeParams(0.0, 0.0, 0.0, 1.0)

    def test_rejects_negative_sigma_and_nonfinite(self):
        with pytest.raises(ValidationError, match="sigma"):
            SpdeParams(0.0, 0.0, 1.0, -0.5)
        with pytest.raises(ValidationError, match="finite"):
            SpdeParams(math.nan, 0.0, 1.0, 1.0)
        with pytest.raises(ValidationError, match="finite"):
            SpdeParams(0.0, math.inf, 1.0, 1.0)

    def test_degenerate_sigma_zero_is_allowed(self):
        assert SpdeParams(0.0, 0.0, 1.0, 0.0).sigma == 0.0


class TestEigenvalue:
    def test_pure_second_order(self):
        # theta0 = theta1 = 0 leaves only the pi^2 k^2 theta2 term.
        p = SpdeParams(0.0, 0.0, 0.1, 1.0)
        assert eigenvalue(1, p) == pytest.approx(math.pi ** 2 * 0.1, rel=1e-15)

    @pytest.mark.parametrize("params, expected", [
        (SpdeParams(0.0, 0.5, 0.1, 1.0), LAMBDA1_A),
        (SpdeParams(0.0, 0.2, 0.2, 1.0), LAMBDA1_B),
    ])
    def test_frozen_values(self, params, expected):
        assert eigenvalue(1, params) == pytest.approx(expected, rel=1e-14)

    def test_vectorized_matches_scalar(self):
        p = SpdeParams(-0.3, 0.7, 0.25, 1.0)
        ks = np.arange(1, 40)
        vec = eigenvalue(ks, p)
        assert vec.shape == (39,)
        for k in (1, 7, 39):
            assert vec[k - 1] == eigenvalue(k, p)

    def test_successive_differences(self):
        # lambda_k - lambda_{k-1} = pi^2 (2k - 1) theta2
        p = SpdeParams(1.3, -0.4, 0.37, 2.0)
        lams = eigenvalue(np.arange(1, 2001), p)
        ks = np.arange(2, 2001)
        expected = math.pi ** 2 * (2 * ks - 1) * p.theta2
        np.testing.assert_allclose(np.diff(lams), expected, rtol=1e-12)

    def test_strictly_increasing_in_k(self):
        p = SpdeParams(5.0, 0.0, 0.01, 1.0)
        lams = eigenvalue(np.arange(1, 500), p)
        assert np.all(np.diff(lams) > 0)

    def test_rejects_k_below_one(self):
        with pytest.raises(ValidationError):
            eigenvalue(0, SpdeParams(0.0, 0.0, 1.0, 1.0))


class TestEigenfunction:
    @pytest.mark.parametrize("k", [1, 2, 7])
    @pytest.mark.parametrize("params", [
        SpdeParams(0.0, 0.0, 1.0, 1.0),
        SpdeParams(0.0, 0.5, 0.1, 1.0),
    ])
    def test_boundary_zeros_exact(self, k, params):
        assert eigenfunction_eval(k, params, 0.0) == 0.0
        assert eigenfunction_eval(k, params, 1.0) == 0.0

    def test_midpoint_without_tilt(self):
        p = SpdeParams(0.0, 0.0, 0.1, 1.0)
        assert eigenfunction_eval(1, p, 0.5) == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_midpoint_with_tilt_frozen(self):
        p = SpdeParams(0.0, 0.5, 0.1, 1.0)  # eta = 5
        assert eigenfunction_eval(1, p, 0.5) == pytest.approx(EIGFUN_ETA5_HALF, rel=1e-14)

    def test_rejects_y_outside_unit_interval(self):
        p = SpdeParams(0.0, 0.0, 1.0, 1.0)
        with pytest.raises(ValidationError):
            eigenfunction_eval(1, p, -0.1)
        with pytest.raises(ValidationError):
            eigenfunction_eval(1, p, 1.1)


class TestDerivedParams:
    def test_unit_case(self):
        d = derived_params(SpdeParams(0.0, 0.0, 1.0, 1.0))
        assert d == DerivedParams(sigma0_sq=1.0, eta=0.0, lambda1=math.pi ** 2)

    @pytest.mark.parametrize("params, expected", [
        (SpdeParams(0.0, 0.5, 0.1, 1.0), (3.1622776601683793, 5.0, LAMBDA1_A)),
        (SpdeParams(0.0, 0.2, 0.2, 1.0), (2.2360679774997897, 1.0, LAMBDA1_B)),
    ])
    def test_frozen_values(self, params, expected):
        d = derived_params(params)
        assert d.sigma0_sq == pytest.approx(expected[0], rel=1e-14)
        assert d.eta == pytest.approx(expected[1], rel=1e-14)
        assert d.lambda1 == pytest.approx(expected[2], rel=1e-14)

    @given(theta1=st.floats(-3, 3), theta2=st.floats(0.01, 10),
           sigma=st.floats(0.1, 10))
    @settings(max_examples=60, deadline=None)
    def test_inverse_map_roundtrip(self, theta1, theta2, sigma):
        d = derived_params(SpdeParams(0.0, theta1, theta2, sigma))
        theta2_back = (sigma ** 2 / d.sigma0_sq) ** 2
        theta1_back = d.eta * theta2_back
        assert theta2_back == pytest.approx(theta2, rel=1e-12)
        assert theta1_back == pytest.approx(theta1, rel=1e-12, abs=1e-12)


class TestOuTransition:
    def test_continuity_at_small_dt(self):
        tr = ou_transition(1.0, 1.0, 1e-12)
        assert tr.a == pytest.approx(1.0, abs=1e-11)
        assert tr.s_sq == pytest.approx(0.0, abs=1e-11)

    def test_lambda_zero_limit(self):
        tr = ou_transition(0.0, 2.0, 0.5)
        assert tr.a == 1.0
        assert tr.s_sq == 2.0

    def test_frozen_values(self):
        tr = ou_transition(LAMBDA1_A, 1.0, 1e-4)
        assert tr.a == pytest.approx(0.99983881694737335, rel=1e-14)
        assert tr.s_sq == pytest.approx(9.9983882127736942e-5, rel=1e-13)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValidationError):
            ou_transition(1.0, 1.0, 0.0)
        with pytest.raises(ValidationError):
            ou_transition(1.0, 1.0, -0.1)

    def test_explosive_lambda_is_exact(self):
        tr = ou_transition(-0.5, 1.0, 0.1)
        assert tr.a == pytest.approx(math.exp(0.05), rel=1e-15)
        assert tr.s_sq > 0.1  # exceeds the lambda = 0 value sigma^2 dt

    def test_series_branch_matches_exact_formula(self):
        # Just below the |lambda dt| = 1e-8 threshold the series branch is
        # active; it must agree with the exact ratio at the same lambda.
        lam = 0.999e-8
        exact = -np.expm1(-2.0 * lam) / (2.0 * lam)
        assert ou_variance_scale(lam, 1.0) == pytest.approx(exact, rel=1e-12)

    @given(lam=st.floats(-2.0, 50.0), dt1=st.floats(1e-6, 2.0),
           dt2=st.floats(1e-6, 2.0))
    @settings(max_examples=120, deadline=None)
    def test_composition_identity(self, lam, dt1, dt2):
        # Two steps equal one combined step in distribution.
        t1 = ou_transition(lam, 1.3, dt1)
        t2 = ou_transition(lam, 1.3, dt2)
        t12 = ou_transition(lam, 1.3, dt1 + dt2)
        assert t1.a * t2.a == pytest.approx(t12.a, rel=1e-12)
        assert t2.s_sq + t2.a ** 2 * t1.s_sq == pytest.approx(t12.s_sq, rel=1e-12)

    @given(lam=st.floats(1e-2, 80.0), dt=st.floats(1e-1, 5.0),
           sigma=st.floats(0.1, 5.0))
    @settings(max_examples=120, deadline=None)
    def test_stationary_variance_identity(self, lam, dt, sigma):
        # s_sq / (1 - a^2) = sigma^2 / (2 lambda); the quotient form loses
        # precision below lambda*dt ~ 1e-3, hence the bounded domain.
        tr = ou_transition(lam, sigma, dt)
        assert tr.s_sq / (1.0 - tr.a ** 2) == pytest.approx(
            sigma ** 2 / (2.0 * lam), rel=1e-12)

    def test_array_variant_matches_scalar(self):
        lams = np.array([-0.5, 0.0, 1e-10, 0.3, 40.0])
        a, s_sq = ou_transition_arrays(lams, 1.7, 0.05)
        for i, lam in enumerate(lams):
            tr = ou_transition(float(lam), 1.7, 0.05)
            assert a[i] == tr.a
            assert s_sq[i] == tr.s_sq


class TestEigenPair:
    def test_factory_and_monotonicity(self):
        p = SpdeParams(0.0, 0.5, 0.1, 1.0)
        pairs = [EigenPair.for_mode(k, p) for k in range(1, 10)]
        assert pairs[0].lambda_k == pytest.approx(LAMBDA1_A, rel=1e-14)
        assert all(a.lambda_k < b.lambda_k for a, b in zip(pairs, pairs[1:]))
