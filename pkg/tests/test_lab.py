from __future__ import annotations

import json

import numpy as np
import pytest

from repvis import lab, scenarios
from repvis.posterior import OutcomeTech

HOLDING = [
    "band",
    "consistency",
    "curvature",
    "dominance-failure-safe",
    "dominance-failure-safe-mixed",
    "dominance-informative-safe",
    "benchmark",
    "benchmark-level",
    "unity",
    "variance",
]


class TestRegistry:
    @pytest.mark.parametrize("claim", HOLDING)
    def test_claim_holds(self, claim):
        (report,) = lab.verify(claim)
        assert report.passed, report.summary()

    def test_selector_list_is_sorted(self):
        ids = [r.claim_id for r in lab.verify("variance,unity")]
        assert ids == ["unity", "variance"]

    def test_unknown_claim(self):
        with pytest.raises(KeyError, match="nope"):
            lab.verify("nope")

    def test_report_serializes(self):
        (report,) = lab.verify("benchmark")
        payload = json.loads(json.dumps(report.to_dict()))
        assert payload["claim_id"] == "benchmark" and payload["passed"] is True


class TestCounterexamples:
    """Claims that do not hold as stated; each test pins the witness."""

    def test_curvature_sign_of_gap_slope(self):
        (report,) = lab.verify("benchmark-curvature")
        assert not report.passed
        # the gap is a scaled posterior variance, which peaks near the middle,
        # so its slope changes sign even for convex value
        assert report.worst["value"] == "x**2"
        assert report.worst["delta_prime"] < 0

    def test_band_limits_near_zero(self):
        (report,) = lab.verify("band-limits")
        assert not report.passed
        # both partials are flat: 1 - p_high and p_high everywhere
        assert report.worst["pi"] == pytest.approx(1e-4)
        assert report.worst["effect"] == pytest.approx(0.8, abs=1e-9)

    def test_boundary_tolerance_needs_moderate_ratios(self):
        (report,) = lab.verify("boundaries")
        assert not report.passed
        assert report.worst["pi"] == pytest.approx(1 - 1e-4)
        assert report.max_abs_violation == pytest.approx(1.2e-3, rel=1e-3)

    def test_boundaries_hold_for_moderate_tech(self):
        assert lab.verify_boundaries((OutcomeTech(0.6, 0.3), OutcomeTech(0.7, 0.5))).passed


class TestHelpers:
    def test_reform_effect_in_band(self):
        s = scenarios.reform()[0]
        effect = lab.reform_effect(np.array([0.1, 0.5, 0.9]), s)
        np.testing.assert_allclose(effect, 0.2, atol=1e-9)

    def test_success_side_effect(self):
        s = scenarios.reform()[0]
        assert lab.reform_effect(0.5, s, side="success") == pytest.approx(0.8, abs=1e-9)

    def test_partials_are_flat(self):
        assert lab.partial_monotonicity(OutcomeTech(0.8, 0.4)) == "constant"

    def test_random_techs_seeded(self):
        a, b = lab.random_techs(5, 1), lab.random_techs(5, 1)
        np.testing.assert_array_equal(a[0], b[0])

    def test_curvature_report_records_threshold(self):
        report = lab.verify_curvature()
        assert "1.772505" in report.note

    def test_curvature_near_local_threshold(self):
        report = lab.verify_curvature(v_curv_values=(2.0,), grid=np.array([0.5]))
        assert report.passed
        rows = report.details
        assert all(r["tested"] for r in rows)
        # effect is B - v K for the osculating quadratic
        effects = sorted(r["effect"] for r in rows)
        np.testing.assert_allclose(effects, [0.2 - 2 * 0.0875, 0.2 + 2 * 0.0875], atol=1e-8)
