import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasmkt.engine import MarketState, Registrations, SimConfig, simulate, step
from atlasmkt.model import ModelParams, atlas, generalized_atlas, rank
from atlasmkt.portfolio import (
    NoClosedFormError,
    PortfolioRule,
    analytic_growth,
    asymptotic_growth,
    build_growth_report,
    efficient_frontier_weights,
    growth_rates_at,
    master_identity_residual,
    optimal_growth_bound_check,
    parse_rule,
    wealth_step,
    weights,
    weights_from_mu,
)

# 40-digit reference: mu^0.5 / sum for mu = (0.64, 0.32, 0.04)
DIVERSITY_HALF_WEIGHTS = (0.51095832358913174, 0.36130209551358532, 0.12773958089728294)


def state_from_mu(mu):
    return MarketState(t=0.0, y=np.log(np.asarray(mu)))


class TestRuleConstruction:
    def test_diversity_exponent_domain(self):
        for bad in (None, 0.0, 1.0, 1.5, -0.2):
            with pytest.raises(ValueError):
                PortfolioRule("diversity", p=bad)
            with pytest.raises(ValueError):
                PortfolioRule("restricted_diversity", p=bad)

    def test_efficient_lambda_domain(self):
        for bad in (None, -0.1, 1.1):
            with pytest.raises(ValueError):
                PortfolioRule("efficient", lam=bad)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            PortfolioRule("momentum")

    def test_parse_round_trip(self):
        assert parse_rule("market") == PortfolioRule("market")
        assert parse_rule("diversity:0.5") == PortfolioRule("diversity", p=0.5)
        assert parse_rule("efficient:0.25") == PortfolioRule("efficient", lam=0.25)
        with pytest.raises(ValueError):
            parse_rule("diversity")
        with pytest.raises(ValueError):
            parse_rule("market:0.3")


class TestWeights:
    def test_market_is_identity(self, atlas3):
        mu = np.array([0.5, 0.3, 0.2])
        w = weights(PortfolioRule("market"), state_from_mu(mu), atlas3)
        np.testing.assert_allclose(w, mu, rtol=1e-12)

    def test_diversity_half(self, atlas3):
        w = weights(
            PortfolioRule("diversity", p=0.5), state_from_mu([0.64, 0.32, 0.04]), atlas3
        )
        np.testing.assert_allclose(w, DIVERSITY_HALF_WEIGHTS, rtol=1e-14)

    def test_restricted_market(self, atlas3):
        w = weights(
            PortfolioRule("restricted_market"), state_from_mu([0.5, 0.3, 0.2]), atlas3
        )
        np.testing.assert_allclose(w, [0.625, 0.375, 0.0], rtol=1e-12)

    def test_restricted_equal(self, atlas3):
        w = weights(
            PortfolioRule("restricted_equal"), state_from_mu([0.5, 0.3, 0.2]), atlas3
        )
        np.testing.assert_allclose(w, [0.5, 0.5, 0.0])

    def test_atlas_star_holds_smallest(self, atlas3):
        w = weights(PortfolioRule("atlas_star"), state_from_mu([0.5, 0.3, 0.2]), atlas3)
        np.testing.assert_array_equal(w, [0.0, 0.0, 1.0])

    def test_tie_for_last_excludes_higher_index(self, atlas3):
        # stocks 2 and 3 tie for smallest; the tie rule ranks stock 2 ahead,
        # so stock 3 is the one shunned
        state = MarketState(t=0.0, y=np.log([0.5, 0.25, 0.25]))
        w = weights(PortfolioRule("restricted_equal"), state, atlas3)
        np.testing.assert_allclose(w, [0.5, 0.5, 0.0])

    def test_efficient_uniform_for_constant_vol(self, atlas3):
        state = state_from_mu([0.7, 0.2, 0.1])
        for lam in (0.0, 0.5, 1.0):
            w = weights(PortfolioRule("efficient", lam=lam), state, atlas3)
            np.testing.assert_array_equal(w, np.full(3, 1.0 / 3.0))

    def test_efficient_min_variance_by_rank(self):
        params = ModelParams(
            n=3, gamma=1.0, g=[-1.0, -1.0, 2.0], sigma=np.sqrt([1.0, 2.0, 4.0])
        )
        ranked = efficient_frontier_weights(params.sigma2, 0.0)
        np.testing.assert_allclose(ranked, [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0], rtol=1e-12)
        # assigned to stocks by current rank
        w = weights(PortfolioRule("efficient", lam=0.0), state_from_mu([0.2, 0.5, 0.3]), params)
        np.testing.assert_allclose(w, [1.0 / 7.0, 4.0 / 7.0, 2.0 / 7.0], rtol=1e-12)

    @given(
        st.lists(st.floats(min_value=-3.0, max_value=3.0), min_size=2, max_size=9),
        st.sampled_from(
            ["market", "equal", "diversity", "restricted_market", "restricted_equal",
             "restricted_diversity", "atlas_star", "efficient"]
        ),
        st.floats(min_value=0.05, max_value=0.95),
    )
    @settings(max_examples=150)
    def test_simplex_invariants(self, ys, kind, x):
        n = len(ys)
        params = atlas(n, 1.0, 1.0)
        rule = PortfolioRule(
            kind,
            p=x if kind in ("diversity", "restricted_diversity") else None,
            lam=x if kind == "efficient" else None,
        )
        state = MarketState(t=0.0, y=np.array(ys))
        w = weights(rule, state, params)
        assert np.all(w >= 0.0)
        assert abs(w.sum() - 1.0) < 1e-12
        if kind.startswith("restricted"):
            assert w[rank(state.y).perm[n - 1]] == 0.0
        if kind == "atlas_star":
            assert w[rank(state.y).perm[n - 1]] == 1.0


class TestWealthStep:
    def test_single_stock_increment_equals_its_return(self, atlas3):
        state = MarketState(t=0.0, y=np.array([0.4, 0.1, -0.2]))
        noise = np.array([0.3, -1.2, 0.7])
        nxt = step(state, atlas3, 0.01, noise)
        inc = wealth_step(PortfolioRule("atlas_star"), state, nxt, atlas3, 0.01, noise)
        assert inc.dlog_wealth == pytest.approx(nxt.y[2] - state.y[2], abs=1e-15)
        assert inc.dexcess_integral == pytest.approx(0.0, abs=1e-18)

    def test_equal_weight_excess_growth_exact(self):
        for n in (2, 3, 10):
            params = atlas(n, 0.7, 1.3)
            state = MarketState(t=0.0, y=np.arange(n, dtype=float))
            noise = np.zeros(n)
            nxt = step(state, params, 0.01, noise)
            inc = wealth_step(PortfolioRule("equal"), state, nxt, params, 0.01, noise)
            expected = (n - 1) / (2.0 * n) * 1.3**2
            assert inc.dexcess_integral / 0.01 == pytest.approx(expected, rel=1e-12)

    def test_decomposition_identity(self, atlas3):
        # gamma_pi - gamma_star = sum_i pi_i gamma_i at every state
        rng = np.random.default_rng(1)
        for _ in range(20):
            y = rng.normal(size=3)
            mu = np.exp(y - y.max())
            mu /= mu.sum()
            ranking = rank(y)
            for kind, x in (("market", None), ("diversity", 0.3), ("restricted_market", None)):
                rule = PortfolioRule(kind, p=x)
                gpi, gstar = growth_rates_at(rule, mu, ranking, atlas3)
                w = weights_from_mu(rule, mu, ranking, atlas3)
                drift = atlas3.gamma + atlas3.g[ranking.rank_of]
                assert gpi - gstar == pytest.approx(float(np.dot(w, drift)), abs=1e-12)

    def test_excess_growth_positivity(self, atlas3):
        rng = np.random.default_rng(7)
        for _ in range(20):
            y = rng.normal(size=3)
            mu = np.exp(y - y.max())
            mu /= mu.sum()
            ranking = rank(y)
            _, gstar = growth_rates_at(PortfolioRule("equal"), mu, ranking, atlas3)
            assert gstar > 0.0
            _, gstar_unit = growth_rates_at(PortfolioRule("atlas_star"), mu, ranking, atlas3)
            assert gstar_unit == pytest.approx(0.0, abs=1e-15)

    def test_mismatched_noise_rejected(self, atlas3):
        state = MarketState(t=0.0, y=np.array([0.4, 0.1, -0.2]))
        noise = np.array([0.3, -1.2, 0.7])
        nxt = step(state, atlas3, 0.01, noise)
        with pytest.raises(ValueError, match="noise"):
            wealth_step(PortfolioRule("market"), state, nxt, atlas3, 0.01, noise + 1.0)

    def test_market_wealth_tracks_total_capitalization(self, atlas3_path):
        # log Z for the market rule stays glued to log sum_i X_i;
        # only float rounding accumulates, well under 1e-9 per 1e5 steps
        idx = atlas3_path.rules.index(PortfolioRule("market"))
        logz = atlas3_path.logz_series[-1, idx]

        def logsum(y):
            m = y.max()
            return m + math.log(np.exp(y - m).sum())

        drift = logsum(atlas3_path.y_final) - logsum(atlas3_path.y_initial)
        steps = atlas3_path.meta["steps"]
        assert abs(logz - drift) < 1e-9 * (steps / 1e5) * 10


class TestDiversityAtPOne:
    def test_diversity_weights_approach_market(self, atlas3):
        state = state_from_mu([0.6, 0.3, 0.1])
        w = weights(PortfolioRule("diversity", p=1.0 - 1e-12), state, atlas3)
        np.testing.assert_allclose(w, state.weights(), rtol=1e-9)

    def test_restricted_diversity_approach_restricted_market(self, atlas3):
        state = state_from_mu([0.6, 0.3, 0.1])
        a = weights(PortfolioRule("restricted_diversity", p=1.0 - 1e-12), state, atlas3)
        b = weights(PortfolioRule("restricted_market"), state, atlas3)
        np.testing.assert_allclose(a, b, rtol=1e-9)


class TestAnalyticGrowth:
    def test_market_growth_is_common_rate(self, atlas3):
        m = np.array([0.5, 0.3, 0.2])
        g, _ = analytic_growth(PortfolioRule("market"), atlas3, m)
        assert g == atlas3.gamma

    def test_market_excess_two_forms_agree(self, atlas3):
        # -sum g_k m_k equals g (1 - n m_n) for Atlas offsets
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = rng.dirichlet(np.ones(3))[::-1]
            m = np.sort(m)[::-1]
            _, gstar = analytic_growth(PortfolioRule("market"), atlas3, m)
            assert gstar == pytest.approx(1.0 * (1.0 - 3 * m[-1]), rel=1e-10)

    def test_equal_weight_atlas3(self, atlas3):
        m = np.full(3, 1.0 / 3.0)
        g, gstar = analytic_growth(PortfolioRule("equal"), atlas3, m)
        assert gstar == pytest.approx(1.0 / 3.0)
        assert g == pytest.approx(4.0 / 3.0)

    def test_equal_weight_linear_variances(self):
        # (n-1)/(2n) (sigma^2 + s^2 (n+1)/2) for the linear profile
        n, gr, sigma2, s2 = 6, 0.3, 0.8, 0.2
        params = generalized_atlas(n, gr, sigma2, s2)
        m = np.full(n, 1.0 / n)
        g, gstar = analytic_growth(PortfolioRule("equal"), params, m)
        expected = (n - 1) / (2.0 * n) * (sigma2 + s2 * (n + 1) / 2.0)
        assert gstar == pytest.approx(expected, rel=1e-12)
        assert g == pytest.approx(gr + expected, rel=1e-12)

    def test_diversity_linking_identity(self, atlas3):
        m = np.array([0.5, 0.3, 0.2])
        for p in (0.2, 0.5, 0.8):
            g, gstar = analytic_growth(PortfolioRule("diversity", p=p), atlas3, m)
            assert g == pytest.approx(atlas3.gamma + (1 - p) * gstar, rel=1e-12)

    def test_restricted_kinds_growth_equals_excess_on_atlas(self, atlas3):
        m = np.array([0.5, 0.3, 0.2])
        for rule in (
            PortfolioRule("restricted_market"),
            PortfolioRule("restricted_equal"),
            PortfolioRule("restricted_diversity", p=0.4),
        ):
            g, gstar = analytic_growth(rule, atlas3, m)
            assert g == pytest.approx(gstar, rel=1e-12)

    def test_restricted_diversity_reduces_to_restricted_market(self):
        params = ModelParams(
            n=4, gamma=0.7, g=[-1.0, -0.5, -0.25, 1.75], sigma=[1.0, 1.1, 1.2, 1.3]
        )
        m = np.array([0.4, 0.3, 0.2, 0.1])
        a = analytic_growth(PortfolioRule("restricted_diversity", p=1 - 1e-10), params, m)
        b = analytic_growth(PortfolioRule("restricted_market"), params, m)
        assert a[0] == pytest.approx(b[0], rel=1e-6)
        assert a[1] == pytest.approx(b[1], rel=1e-6)

    def test_restricted_equal_empirical_agreement(self, atlas3_ensemble, atlas3):
        # long-run growth of equal-weights-without-the-smallest:
        # (n-2)/(2(n-1)^2) * sum of the top n-1 rank variances = 1/4 here
        idx = atlas3_ensemble.aggregate.rules.index(PortfolioRule("restricted_equal"))
        emp = atlas3_ensemble.aggregate.empirical_growth(idx)
        m = np.full(3, 1.0 / 3.0)
        g, gstar = analytic_growth(PortfolioRule("restricted_equal"), atlas3, m)
        assert g == pytest.approx(0.25, rel=1e-12)
        assert emp == pytest.approx(g, rel=0.05)

    def test_no_closed_form_kinds(self, atlas3):
        m = np.full(3, 1.0 / 3.0)
        for rule in (PortfolioRule("atlas_star"), PortfolioRule("efficient", lam=0.5)):
            with pytest.raises(NoClosedFormError):
                analytic_growth(rule, atlas3, m)


class TestAsymptoticGrowth:
    def test_equal_weight_closed_form(self):
        for alpha, g in ((0.5, 1.0), (1.5, 0.044)):
            gam, gam_s = asymptotic_growth(PortfolioRule("equal"), alpha, 0.0, g=g)
            assert gam == pytest.approx(g * (1 + alpha))
            assert gam_s == pytest.approx(alpha * g)

    def test_equal_weight_diverges_with_growing_variances(self):
        gam, gam_s = asymptotic_growth(PortfolioRule("equal"), 1.0, 0.1)
        assert math.isinf(gam) and math.isinf(gam_s)
        gam, gam_s = asymptotic_growth(PortfolioRule("restricted_equal"), 1.0, 0.1)
        assert math.isinf(gam) and math.isinf(gam_s)

    def test_diversity_supercritical(self):
        gam, gam_s = asymptotic_growth(PortfolioRule("diversity", p=0.8), 1.5, 0.0, g=2.0)
        assert gam == pytest.approx(2.0 / 0.8)
        assert gam_s == pytest.approx(2.0 / 0.8)

    def test_diversity_subcritical(self):
        gam, gam_s = asymptotic_growth(PortfolioRule("diversity", p=0.5), 1.5, 0.0, g=1.0)
        assert gam_s == pytest.approx(1.5)
        assert gam == pytest.approx(1.0 + 0.5 * 1.5)

    def test_boundary_folded_into_subcritical_branch(self):
        # alpha p = 1 uses the <= branch, as does alpha = 1 for the market
        gam, gam_s = asymptotic_growth(PortfolioRule("diversity", p=0.5), 2.0, 0.0)
        assert gam_s == pytest.approx(2.0)
        gam, gam_s = asymptotic_growth(PortfolioRule("market"), 1.0, 0.0)
        assert gam_s == pytest.approx(1.0)

    def test_growing_variance_family(self):
        for rule, expected in (
            (PortfolioRule("market"), (1.0, 1.0)),
            (PortfolioRule("restricted_market"), (1.0, 1.0)),
            (PortfolioRule("diversity", p=0.25), (4.0, 4.0)),
            (PortfolioRule("restricted_diversity", p=0.25), (4.0, 4.0)),
        ):
            gam, gam_s = asymptotic_growth(rule, 0.9, 0.05, g=1.0)
            assert gam == pytest.approx(expected[0])
            assert gam_s == pytest.approx(expected[1])

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            asymptotic_growth(PortfolioRule("market"), 0.0, 0.0)
        with pytest.raises(ValueError):
            asymptotic_growth(PortfolioRule("market"), 1.0, -0.1)
        with pytest.raises(NoClosedFormError):
            asymptotic_growth(PortfolioRule("atlas_star"), 1.0, 0.0)


class TestGrowthReport:
    def test_report_shape_and_market_column(self, atlas3_ensemble, atlas3):
        report = build_growth_report(atlas3_ensemble.aggregate, atlas3)
        assert set(report) == {r.label for r in atlas3_ensemble.aggregate.rules}
        market = report["market"]
        assert market.analytic_G == atlas3.gamma
        assert market.asymptotic_Gamma == pytest.approx(1.0)
        assert market.empirical_G == pytest.approx(1.0, rel=0.05)
        star = report["atlas_star"]
        assert star.analytic_G is None
        assert star.empirical_G == pytest.approx(3.0, rel=0.05)

    def test_empirical_m_source(self, atlas3_ensemble, atlas3):
        report = build_growth_report(
            atlas3_ensemble.aggregate, atlas3, m_source="empirical"
        )
        assert report["market"].m_source == "empirical"
        assert report["market"].analytic_Gstar == pytest.approx(
            1.0 - 3 * atlas3_ensemble.aggregate.ranked_weight_means()[-1], rel=1e-9
        )


class TestMasterIdentity:
    def test_requires_both_rules(self, atlas3):
        stats = simulate(
            atlas3,
            SimConfig(T=1.0, dt=0.1, burn_in=0.0),
            Registrations(portfolios=(PortfolioRule("market"),)),
        )
        with pytest.raises(ValueError, match="not registered"):
            master_identity_residual(stats, 0.5, atlas3)

    def test_zero_at_time_zero(self, atlas3_path, atlas3):
        res = master_identity_residual(atlas3_path, 0.5, atlas3)
        assert res.residual[0] == 0.0
        assert res.times[0] == 0.0

    def test_residual_is_first_order_small(self, atlas3_path, atlas3):
        res = master_identity_residual(atlas3_path, 0.5, atlas3)
        assert abs(res.terminal) / res.times[-1] < 0.01


class TestOptimalityCheck:
    def test_dominance_on_atlas3(self, atlas3_ensemble, atlas3):
        rep = optimal_growth_bound_check(atlas3_ensemble.aggregate, atlas3)
        assert rep.applicable
        assert rep.target_growth == pytest.approx(3.0)
        assert rep.star_empirical == pytest.approx(3.0, rel=0.05)
        assert rep.dominates

    def test_inapplicable_when_growth_too_small(self, atlas3):
        weak = atlas(2, 0.1, 1.0)  # n g = 0.2 < sigma^2 / 2
        stats = simulate(
            weak,
            SimConfig(T=1.0, dt=0.1, burn_in=0.0),
            Registrations(portfolios=(PortfolioRule("atlas_star"),)),
        )
        rep = optimal_growth_bound_check(stats, weak)
        assert not rep.applicable
        assert "sigma^2/2" in rep.reason

    def test_inapplicable_without_star_rule(self, atlas3):
        stats = simulate(
            atlas3,
            SimConfig(T=1.0, dt=0.1, burn_in=0.0),
            Registrations(portfolios=(PortfolioRule("market"),)),
        )
        rep = optimal_growth_bound_check(stats, atlas3)
        assert not rep.applicable
