from __future__ import annotations


import numpy as np
import pandas as pd
import pytest
from scipy import stats

from repvis.panel import (
    MissingColumnError,
    RankDeficiencyError,
    RegressionSpec,
    cluster_vcov,
    event_term,
    fit_2sls,
    fit_event_study,
    fit_first_stage,
    fit_pooled,
    fit_stacked,
    iv_term,
    not_yet_treated,
    ols,
    pooled_term,
    stack_cohorts,
    within_transform,
)


def null_panel(rng, n_authors=200, n_fields=20, periods=10, effect=0.0, noise=1.0):
    """Author, field-period effects plus noise; optional post x rep effect."""
    author = np.repeat(np.arange(n_authors), periods)
    field = author * n_fields // n_authors
    period = np.tile(np.arange(periods), n_authors)
    adopt = rng.integers(3, 8, n_fields)
    rep = rng.random(n_authors)
    event = period - adopt[field]
    post = event >= 0
    y = (
        rng.normal(0, 1, n_authors)[author]
        + rng.normal(0, 1, (n_fields, periods))[field, period]
        + effect * post * rep[author]
        + rng.normal(0, noise, len(author))
    )
    return pd.DataFrame(
        {
            "author_id": author,
            "field_id": field,
            "period": period,
            "event_time": event,
            "post": post,
            "rep_pre": rep[author],
            "y": y,
        }
    )


def dummies(codes):
    return pd.get_dummies(codes).to_numpy(dtype=float)


class TestWithin:
    def test_single_fe_one_pass(self):
        df = pd.DataFrame({"g": [0, 0, 1, 1, 1], "y": [1.0, 3.0, 2.0, 4.0, 6.0]})
        w = within_transform(df, ["y"], ["g"])
        np.testing.assert_allclose(w.data["y"], [-1.0, 1.0, -2.0, 0.0, 2.0])
        assert w.iterations == 1 and w.converged

    def test_balanced_two_way_converges_fast(self):
        rng = np.random.default_rng(0)
        df = pd.DataFrame({"a": np.repeat(np.arange(6), 5), "b": np.tile(np.arange(5), 6), "y": rng.normal(size=30)})
        w = within_transform(df, ["y"], ["a", "b"])
        assert w.converged and w.iterations <= 2

    def test_matches_dummy_regression(self):
        rng = np.random.default_rng(1)
        df = null_panel(rng, n_authors=50, n_fields=10, periods=10)
        df["x"] = rng.normal(size=len(df))
        df["y"] = df["y"] + 0.3 * df["x"]
        w = within_transform(df, ["y", "x"], ["author_id", ("field_id", "period")])
        within = np.linalg.lstsq(w.data[["x"]].to_numpy(), w.data["y"].to_numpy(), rcond=None)[0]
        fp = df.groupby(["field_id", "period"]).ngroup()
        X = np.column_stack([df["x"], dummies(df["author_id"]), dummies(fp)[:, 1:]])
        full = np.linalg.lstsq(X, df["y"].to_numpy(), rcond=None)[0]
        assert within[0] == pytest.approx(full[0], abs=1e-8)
        resid_full = df["y"].to_numpy() - X @ full
        resid_within = w.data["y"].to_numpy() - w.data["x"].to_numpy() * within[0]
        np.testing.assert_allclose(resid_within, resid_full, atol=1e-8)

    def test_unconverged_is_reported(self):
        rng = np.random.default_rng(2)
        df = null_panel(rng, n_authors=40, n_fields=8, periods=6).sample(frac=0.7, random_state=1)
        w = within_transform(df, ["y"], ["author_id", "period"], max_iter=1)
        assert not w.converged and w.max_group_mean > 1e-10

    def test_needs_two_groups(self):
        with pytest.raises(ValueError):
            within_transform(pd.DataFrame({"g": [0, 0], "y": [1.0, 2.0]}), ["y"], ["g"])


class TestOLS:
    def test_one_observation_per_cluster_is_hc1(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 3))
        e = rng.normal(size=40) * (1 + np.abs(X[:, 0]))
        bread = np.linalg.inv(X.T @ X)
        hc1 = 40 / 37 * bread @ (X.T * e**2) @ X @ bread
        np.testing.assert_allclose(cluster_vcov(X, e, np.arange(40)), hc1, rtol=1e-12)

    def test_rank_deficiency_names_column(self):
        X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0), np.ones(5)])
        with pytest.raises(RankDeficiencyError) as err:
            ols(np.arange(5.0), X, ["a", "twice_a", "one"], np.arange(5) % 2)
        assert len(err.value.columns) == 1 and err.value.columns[0] in ("a", "twice_a")

    def test_exact_fit(self):
        X = np.column_stack([np.ones(6), np.arange(6.0)])
        fit = ols(1.0 + 2.0 * np.arange(6.0), X, ["c", "x"], np.arange(6) % 3)
        np.testing.assert_allclose(fit.coef, [1.0, 2.0], atol=1e-12)

    def test_table_columns(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(30, 2))
        fit = ols(rng.normal(size=30), X, ["a", "b"], np.arange(30) % 6)
        assert list(fit.table().columns) == ["term", "estimate", "se", "t", "p", "n_obs", "n_clusters"]
        assert fit.n_clusters == 6

    def test_wald_variants(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(200, 3))
        fit = ols(X @ [0.0, 0.0, 0.5] + rng.normal(size=200), X, ["a", "b", "c"], np.arange(200) % 20)
        F_h, p_h, q = fit.wald(["a", "b"])
        F_f, p_f, _ = fit.wald(["a", "b"], joint_test="f")
        W = 2 * F_f
        assert q == 2
        assert F_h == pytest.approx(W * 18 / (2 * 19))
        assert p_h == pytest.approx(stats.f.sf(F_h, 2, 18))
        assert p_f == pytest.approx(stats.f.sf(F_f, 2, 19))
        with pytest.raises(ValueError):
            fit.wald(["a"], joint_test="chi2")


class TestEventStudy:
    def test_no_coefficient_for_omitted(self):
        res = fit_event_study(null_panel(np.random.default_rng(6)), RegressionSpec("y"))
        assert event_term(-1, "rep_pre") not in res.table["term"].tolist()
        assert res.coefficients["event_time"].tolist() == [-5, -4, -3, -2, 0, 1, 2, 3, 4, 5]
        assert res.pretrend_df == 4

    def test_recovers_pooled_effect(self):
        rng = np.random.default_rng(7)
        df = null_panel(rng, n_authors=500, effect=0.10, noise=0.05)
        res = fit_pooled(df, RegressionSpec("y"))
        assert res.coef(pooled_term(RegressionSpec("y"))) == pytest.approx(0.10, abs=0.02)

    def test_recovers_dynamic_effect(self):
        rng = np.random.default_rng(8)
        df = null_panel(rng, n_authors=500, effect=0.10, noise=0.05)
        res = fit_event_study(df, RegressionSpec("y"))
        assert res.post_avg == pytest.approx(0.10, abs=0.02)
        assert res.post_avg_early == pytest.approx(0.10, abs=0.03)

    def test_omitted_category_invariance(self):
        df = null_panel(np.random.default_rng(9))
        a = fit_event_study(df, RegressionSpec("y", omitted_event_time=-1))
        b = fit_event_study(df, RegressionSpec("y", omitted_event_time=-2))
        shift = a.coef(event_term(-2, "rep_pre"))
        for k in (-5, -3, 0, 3, 5):
            assert b.coef(event_term(k, "rep_pre")) == pytest.approx(a.coef(event_term(k, "rep_pre")) - shift, abs=1e-9)

    def test_null_pretrend_p_is_uniform(self):
        rng = np.random.default_rng(1)
        spec = RegressionSpec("y")
        ps = [fit_event_study(null_panel(rng, n_authors=400, n_fields=40), spec).pretrend_p for _ in range(1000)]
        assert stats.kstest(ps, "uniform").statistic < 0.05

    def test_few_clusters_flag(self):
        res = fit_event_study(null_panel(np.random.default_rng(10), n_authors=40, n_fields=4), RegressionSpec("y"))
        assert res.few_clusters

    def test_binning_keeps_rows(self):
        df = null_panel(np.random.default_rng(11))
        dropped = fit_event_study(df, RegressionSpec("y", window=(-2, 2)))
        binned = fit_event_study(df, RegressionSpec("y", window=(-2, 2), bin_endpoints=True))
        assert binned.n_obs == len(df) > dropped.n_obs

    def test_missing_column(self):
        with pytest.raises(MissingColumnError) as err:
            fit_event_study(null_panel(np.random.default_rng(12)).drop(columns="rep_pre"), RegressionSpec("y"))
        assert err.value.column == "rep_pre"

    def test_invalid_omitted(self):
        with pytest.raises(ValueError):
            RegressionSpec("y", window=(-2, 2), omitted_event_time=-3)


class TestTimingRobust:
    def test_stacked_blocks_have_clean_controls(self):
        df = null_panel(np.random.default_rng(13), n_fields=20)
        spec = RegressionSpec("y", window=(-2, 2))
        stacked = stack_cohorts(df, spec)
        ctrl = stacked.loc[stacked["event_time"].isna()]
        adopt = (df["period"] - df["event_time"]).groupby(df["field_id"]).first()
        assert (adopt[ctrl["field_id"]].to_numpy() > ctrl["stack"].to_numpy() + 2).all()

    def test_wrappers_recover_effect(self):
        df = null_panel(np.random.default_rng(14), n_authors=500, effect=0.10, noise=0.05)
        spec = RegressionSpec("y", window=(-2, 2))
        assert fit_stacked(df, spec).post_avg == pytest.approx(0.10, abs=0.03)
        assert not_yet_treated(df, spec).post_avg == pytest.approx(0.10, abs=0.03)


def iv_panel(rng, slope=0.5, first=0.8, n_fields=30, periods=8, authors_per_field=10):
    ft = pd.DataFrame(
        {"field_id": np.repeat(np.arange(n_fields), periods), "period": np.tile(np.arange(periods), n_fields)}
    )
    adopt = rng.integers(2, 7, n_fields)
    ft["post"] = ft["period"] >= adopt[ft["field_id"]]
    ft["rr_intensity"] = ft["post"].astype(float)
    ft["null_survive"] = 0.3 + first * ft["rr_intensity"] + rng.normal(0, 0.05, len(ft))
    n = n_fields * authors_per_field
    authors = pd.DataFrame({"author_id": np.arange(n), "field_id": np.arange(n) // authors_per_field, "rep_pre": rng.random(n)})
    cells = authors.merge(ft, on="field_id")
    cells["event_time"] = cells["period"] - adopt[cells["field_id"]]
    u = rng.normal(0, 0.05, len(cells))
    cells["y"] = (
        rng.normal(size=n)[cells["author_id"]] + slope * cells["null_survive"] * cells["rep_pre"] + u
    )
    return cells, ft


class TestIV:
    def test_first_stage_exact_slope(self):
        ft = pd.DataFrame(
            {
                "field_id": [0, 0, 0, 1, 1, 1, 2, 2, 2],
                "period": [0, 1, 2, 0, 1, 2, 0, 1, 2],
                "rr_intensity": [0, 1, 1, 0, 0, 1, 0, 0, 0],
            }
        )
        ft["null_survive"] = 0.2 + 0.7 * ft["rr_intensity"] + 0.1 * ft["field_id"] + 0.05 * ft["period"]
        res = fit_first_stage(ft)
        assert res.first_stage_coef == pytest.approx(0.7, abs=1e-10)

    def test_2sls_recovers_structural_slope(self):
        cells, ft = iv_panel(np.random.default_rng(15))
        spec = RegressionSpec("y", fixed_effects=("author_id", "period"))
        res = fit_2sls(cells, spec, ft)
        row = res.second_stage.set_index("term").loc[iv_term("null_survive", "rep_pre")]
        assert abs(row["estimate"] - 0.5) < 3 * row["se"]
        assert not res.weak_instrument

    def test_irrelevant_instrument_warns(self):
        cells, ft = iv_panel(np.random.default_rng(16), first=0.0)
        rng = np.random.default_rng(17)
        ft["null_survive"] = 0.3 + rng.normal(0, 0.05, len(ft))
        cells = cells.drop(columns="null_survive").merge(ft[["field_id", "period", "null_survive"]], on=["field_id", "period"])
        with pytest.warns(RuntimeWarning, match="weak instrument"):
            res = fit_2sls(cells, RegressionSpec("y", fixed_effects=("author_id", "period")), ft)
        assert res.weak_instrument and res.warnings

    def test_no_reform_no_first_stage(self):
        _, ft = iv_panel(np.random.default_rng(18), first=0.0)
        res = fit_first_stage(ft)
        assert abs(res.first_stage_coef) < 3 * res.first_stage_se
