import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasmkt.equilibrium import (
    capital_curve,
    ce_approx,
    ce_rho,
    ce_weights,
    ce_weights_from_rho,
)
from atlasmkt.model import atlas, generalized_atlas

# high-precision references computed with 40-digit arithmetic
CE3_WEIGHTS = (0.48102426325336966, 0.29175596372884975, 0.22721977301778058)
N_M_N_POWER_LAW_A05_N1000 = 0.511687062  # n * m_n for the pure power law


class TestCeRho:
    def test_two_stock_gap_mean_is_alpha(self):
        for g, s in ((1.0, 1.0), (0.044, 0.274)):
            rho = ce_rho(atlas(2, g, s))
            assert rho[0] == pytest.approx(s * s / (2 * g))

    def test_atlas3(self):
        np.testing.assert_allclose(ce_rho(atlas(3, 1.0, 1.0)), [0.5, 0.25])

    def test_generalized_closed_form(self):
        n, g, sigma2, s2 = 10, 0.044, 0.075, 6.0e-5
        alpha, beta = sigma2 / (2 * g), s2 / (4 * g)
        rho = ce_rho(generalized_atlas(n, g, sigma2, s2))
        k = np.arange(1, n)
        np.testing.assert_allclose(rho, 2 * beta + (alpha + beta) / k, rtol=1e-12)


class TestCeWeights:
    def test_two_rank_log_two(self):
        w = ce_weights_from_rho([math.log(2.0)])
        np.testing.assert_allclose(w.m, [2.0 / 3.0, 1.0 / 3.0], rtol=1e-15)

    def test_zero_gaps_give_uniform(self):
        w = ce_weights_from_rho(np.zeros(4))
        np.testing.assert_allclose(w.m, np.full(5, 0.2), rtol=1e-15)

    def test_frozen_three_stock_values(self):
        w = ce_weights_from_rho([0.5, 0.25])
        np.testing.assert_allclose(w.m, CE3_WEIGHTS, rtol=1e-14)
        via_params = ce_weights(atlas(3, 1.0, 1.0))
        np.testing.assert_allclose(via_params.m, CE3_WEIGHTS, rtol=1e-14)

    def test_simplex_invariants(self):
        w = ce_weights(atlas(50, 0.1, 0.5))
        assert np.all(w.m > 0)
        assert abs(w.m.sum() - 1.0) < 1e-12
        assert np.all(np.diff(w.m) < 0)

    def test_huge_exponents_stay_finite(self):
        # suffix sums beyond 1e3 overflow any direct exponentiation
        w = ce_weights_from_rho(np.full(4999, 0.5))
        assert np.isfinite(w.log_m).all()
        assert abs(w.m.sum() - 1.0) < 1e-9

    @given(
        st.lists(
            st.floats(min_value=1e-6, max_value=5.0), min_size=1, max_size=30
        )
    )
    @settings(max_examples=100)
    def test_log_ratio_identity(self, rho):
        w = ce_weights_from_rho(rho)
        ratios = w.log_m[:-1] - w.log_m[1:]
        np.testing.assert_allclose(ratios, rho, rtol=0, atol=1e-12)

    @given(
        st.integers(min_value=2, max_value=40),
        st.floats(min_value=0.05, max_value=3.0),
        st.floats(min_value=0.0, max_value=0.5),
    )
    @settings(max_examples=60)
    def test_strictly_decreasing_for_positive_gaps(self, n, g, s2):
        w = ce_weights(generalized_atlas(n, g, 1.0, s2))
        assert np.all(np.diff(w.m) < 0)


class TestCeApprox:
    def test_tiny_alpha_is_uniform(self):
        w = ce_approx(7, 1e-9)
        np.testing.assert_allclose(w.m, np.full(7, 1.0 / 7.0), atol=1e-6)

    def test_harmonic_weights(self):
        w = ce_approx(3, 1.0)
        np.testing.assert_allclose(w.m, [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0], rtol=1e-15)

    def test_smallest_weight_limit(self):
        w = ce_approx(1000, 0.5)
        assert 1000 * w.m[-1] == pytest.approx(N_M_N_POWER_LAW_A05_N1000, rel=1e-6)
        assert abs(1000 * w.m[-1] - 0.5) < 0.02

    def test_damped_matches_power_law_at_zero_beta(self):
        a = ce_approx(20, 0.8, 0.0)
        b = ce_approx(20, 0.8, 1e-300)
        np.testing.assert_allclose(a.m, b.m, rtol=1e-9)

    def test_alpha_domain(self):
        with pytest.raises(ValueError):
            ce_approx(5, 0.0)
        with pytest.raises(ValueError):
            ce_approx(5, -1.0)
        with pytest.raises(ValueError):
            ce_approx(5, 1.0, beta=-0.1)

    def test_agreement_band_with_exact_weights(self):
        # direct pre-build comparison put the worst weight ratio at 1.707
        # over this grid, so the band is 1.75
        for n in (2, 3, 10, 50, 200):
            for alpha in (0.5, 0.75, 1.0, 1.25, 1.5):
                g = 0.3
                exact = ce_weights(atlas(n, g, math.sqrt(2 * alpha * g))).m
                approx = ce_approx(n, alpha).m
                ratio = np.maximum(exact / approx, approx / exact)
                assert ratio.max() < 1.75, (n, alpha, ratio.max())


class TestCapitalCurve:
    def test_power_law_is_affine_in_loglog(self):
        curve = capital_curve(ce_approx(100, 1.0))
        slope, intercept = np.polyfit(curve[:, 0], curve[:, 1], 1)
        fitted = slope * curve[:, 0] + intercept
        assert slope == pytest.approx(-1.0, abs=1e-12)
        assert np.max(np.abs(curve[:, 1] - fitted)) < 1e-12

    def test_damped_curve_is_concave_at_calibrated_parameters(self):
        alpha = 0.075 / (2 * 0.044)
        beta = 6.0e-5 / (4 * 0.044)
        curve = capital_curve(ce_approx(5000, alpha, beta))
        logk, logm = curve[:, 0], curve[:, 1]
        # second differences of log m against log k turn negative in the tail
        slopes = np.diff(logm) / np.diff(logk)
        tail = slopes[len(slopes) // 2 :]
        assert np.all(np.diff(tail) < 0)

    def test_two_point_curve_reproduces_gap(self):
        w = ce_weights_from_rho([0.7])
        curve = capital_curve(w)
        assert curve[0, 1] - curve[1, 1] == pytest.approx(0.7, abs=1e-12)

    def test_positive_input_required(self):
        with pytest.raises(ValueError):
            capital_curve(np.array([0.5, 0.0, 0.5]))

    def test_accepts_plain_ranked_weights(self):
        curve = capital_curve(np.array([0.5, 0.3, 0.2]))
        np.testing.assert_allclose(curve[:, 0], np.log([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(curve[:, 1], np.log([0.5, 0.3, 0.2]))
