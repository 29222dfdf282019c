from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from repvis.posterior import (
    ConsistencyError,
    DomainError,
    LikelihoodPair,
    OutcomeTech,
    RawArm,
    Tolerances,
    boundary_limits,
    dilate,
    dilate_tech,
    from_odds,
    informativeness_partials,
    jumps,
    log_odds,
    odds,
    posterior_derivatives,
    posterior_gap,
    posterior_variance,
    split,
    unity_residual,
    update_failure,
    update_success,
)

BASE = OutcomeTech(0.8, 0.4)
LR = BASE.likelihoods

beliefs = st.floats(0.001, 0.999)


@st.composite
def techs(draw):
    p_low = draw(st.floats(0.02, 0.97))
    p_high = draw(st.floats(p_low, 0.98))
    return OutcomeTech(p_high, p_low)


class TestConstruction:
    def test_likelihoods_of_base_tech(self):
        np.testing.assert_allclose([LR.lam, LR.phi], [2.0, 1.0 / 3.0], rtol=1e-15)

    def test_spread_and_mixture(self):
        assert BASE.spread == pytest.approx(0.4)
        assert BASE.mixture(0.5) == pytest.approx(0.6)

    @pytest.mark.parametrize("p_high,p_low", [(0.4, 0.8), (1.0, 0.5), (0.5, 0.0), (0.5, -0.1)])
    def test_invalid_tech(self, p_high, p_low):
        with pytest.raises(DomainError):
            OutcomeTech(p_high, p_low)

    @pytest.mark.parametrize("lam,phi", [(0.5, 0.5), (2.0, 1.5), (2.0, 0.0)])
    def test_invalid_ratios(self, lam, phi):
        with pytest.raises(DomainError):
            LikelihoodPair(lam, phi)

    def test_uninformative(self):
        assert OutcomeTech(0.5, 0.5).likelihoods.uninformative
        assert BASE.informative is True

    def test_raw_arm_keeps_ratios(self):
        arm = RawArm(LikelihoodPair(1.0, 0.1), 0.5, 0.5)
        assert arm.likelihoods.phi == 0.1
        assert arm.informative
        assert arm.spread == 0.0


class TestOdds:
    def test_round_trip(self):
        pi = np.linspace(0.01, 0.99, 50)
        np.testing.assert_allclose(from_odds(odds(pi)), pi, rtol=1e-14)

    def test_log_odds_at_half(self):
        assert log_odds(0.5) == 0.0

    def test_from_odds_infinite(self):
        assert from_odds(np.inf) == 1.0


class TestUpdates:
    def test_base_posteriors(self):
        assert update_success(0.5, LR) == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert update_failure(0.5, LR) == pytest.approx(0.25, abs=1e-15)

    def test_boundary_fixed_points(self):
        for pi in (0.0, 1.0):
            assert update_success(pi, LR) == pi
            assert update_failure(pi, LR) == pi

    def test_uninformative_arm_has_no_jumps(self):
        up, down = jumps(0.3, OutcomeTech(0.6, 0.6).likelihoods)
        assert up == 0.0 and down == 0.0

    def test_split_martingale(self):
        s = split(0.5, BASE)
        assert s.p_success == pytest.approx(0.6)
        assert s.martingale_residual == pytest.approx(0.0, abs=1e-15)
        assert s.jump_up == pytest.approx(1.0 / 6.0)
        assert s.jump_down == pytest.approx(0.25)

    def test_gap_closed_form(self):
        assert posterior_gap(0.5, LR) == pytest.approx(5.0 / 12.0, abs=1e-15)

    def test_derivatives(self):
        d = posterior_derivatives(0.5, LR)
        assert d.dpi_plus == pytest.approx(8.0 / 9.0, abs=1e-15)
        assert d.dpi_minus == pytest.approx(0.75, abs=1e-15)

    def test_derivatives_reject_boundary(self):
        with pytest.raises(DomainError):
            posterior_derivatives(0.0, LR)

    def test_variance(self):
        assert posterior_variance(0.5, BASE) == pytest.approx(1.0 / 24.0, abs=1e-15)

    def test_variance_inconsistency_raises(self):
        with pytest.raises(ConsistencyError):
            posterior_variance(0.5, BASE, Tolerances(identity=-1.0))

    def test_informativeness_partials(self):
        part = informativeness_partials(0.5, LR)
        assert part.dpiplus_dlambda == pytest.approx(1.0 / 9.0, abs=1e-15)
        assert part.dpiminus_dphi == pytest.approx(0.5625, abs=1e-15)

    def test_informativeness_partials_vanish_at_boundary(self):
        part = informativeness_partials(0.0, LR)
        assert part.dpiplus_dlambda == 0.0 and part.dpiminus_dphi == 0.0

    def test_vectorized(self):
        pi = np.array([0.2, 0.5, 0.8])
        np.testing.assert_allclose(update_success(pi, LR), [update_success(p, LR) for p in pi])


class TestBoundaryLimits:
    def test_slopes(self):
        lim = boundary_limits(LR)
        np.testing.assert_allclose(
            [lim.dpi_plus_at_0, lim.dpi_minus_at_0, lim.dpi_plus_at_1, lim.dpi_minus_at_1], [2.0, 1.0 / 3.0, 0.5, 3.0]
        )

    def test_approach_near_zero(self):
        d = posterior_derivatives(1e-4, LR)
        assert abs(d.dpi_plus - 2.0) < 1e-3
        assert abs(d.dpi_minus - 1.0 / 3.0) < 1e-3

    def test_approach_near_one_needs_moderate_ratios(self):
        # the failure slope error at distance h from 1 is about 2 (1 - phi) h / phi^2
        d = posterior_derivatives(1.0 - 1e-4, LR)
        assert abs(d.dpi_plus - 0.5) < 1e-3
        assert abs(d.dpi_minus - 3.0) == pytest.approx(2.0 * (2.0 / 3.0) * 1e-4 * 9.0, rel=1e-3)


class TestDilation:
    def test_dilate_ratios(self):
        half = dilate(LR, 0.5)
        assert half.lam == pytest.approx(1.5)
        assert half.phi == pytest.approx(2.0 / 3.0)

    def test_dilate_tech_keeps_low_type(self):
        tech = dilate_tech(BASE, 0.25)
        assert tech.p_low == BASE.p_low
        assert tech.p_high == pytest.approx(0.5)

    def test_zero_dilation_is_uninformative(self):
        assert dilate_tech(BASE, 0.0).likelihoods.uninformative

    @pytest.mark.parametrize("tau", [-0.1, 1.5])
    def test_invalid_tau(self, tau):
        with pytest.raises(DomainError):
            dilate(LR, tau)


class TestProperties:
    @given(beliefs, techs())
    def test_unity_identity(self, pi, tech):
        assert abs(unity_residual(pi, tech)) < 1e-12

    @given(beliefs, techs())
    def test_martingale(self, pi, tech):
        assert abs(split(pi, tech).martingale_residual) < 1e-12

    @given(beliefs, techs())
    def test_posteriors_bracket_prior(self, pi, tech):
        s = split(pi, tech)
        assert s.pi_minus <= pi <= s.pi_plus

    @given(beliefs, techs())
    def test_variance_forms_agree(self, pi, tech):
        posterior_variance(pi, tech)

    @given(beliefs, techs())
    def test_gap_matches_difference(self, pi, tech):
        lr = tech.likelihoods
        assert posterior_gap(pi, lr) == pytest.approx(update_success(pi, lr) - update_failure(pi, lr), abs=1e-12)

    @given(beliefs, techs())
    def test_derivatives_match_finite_difference(self, pi, tech):
        lr = tech.likelihoods
        h = 1e-6 * min(pi, 1 - pi)
        d = posterior_derivatives(pi, lr)
        fd_up = (update_success(pi + h, lr) - update_success(pi - h, lr)) / (2 * h)
        fd_down = (update_failure(pi + h, lr) - update_failure(pi - h, lr)) / (2 * h)
        assert d.dpi_plus == pytest.approx(fd_up, rel=1e-5, abs=1e-7)
        assert d.dpi_minus == pytest.approx(fd_down, rel=1e-5, abs=1e-7)

    @given(beliefs, techs(), st.floats(0.0, 1.0))
    def test_dilation_shrinks_gap(self, pi, tech, tau):
        lr = tech.likelihoods
        assert posterior_gap(pi, dilate(lr, tau)) <= posterior_gap(pi, lr) + 1e-15

    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_odds_additivity(self, pi, other):
        combined = from_odds(odds(pi) * odds(other))
        assert log_odds(combined) == pytest.approx(log_odds(pi) + log_odds(other), abs=1e-9)
