from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest

from repvis import cli
from repvis.sim import PANEL_COLUMNS

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMALL = ["--set", "simulation.n_authors=120", "--set", "simulation.n_fields=6", "--set", "simulation.periods=8"]


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestCalc:
    def test_benchmark(self, capsys):
        assert run("calc", CONFIGS / "benchmark.ini", "--pi", "0.5") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["delta_prime_exact"] == 0.0
        assert report["consistent"] is False

    def test_more_informative_safe(self, capsys):
        assert run("calc", CONFIGS / "more_informative_safe.ini", "--pi", "0.5") == 0
        assert json.loads(capsys.readouterr().out)["conservatism_holds"] is True

    def test_set_overrides(self, capsys):
        run("calc", CONFIGS / "benchmark.ini", "--pi", "0.5", "--set", "vis_risky.sigma_failure=0.0")
        assert json.loads(capsys.readouterr().out)["delta_prime_exact"] != 0.0

    def test_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[risky]\np_high = 0.8\np_low = oops\n")
        assert run("calc", bad, "--pi", "0.5") == 2
        assert "bad.ini:3" in capsys.readouterr().err

    def test_missing_file(self, capsys):
        assert run("calc", "nowhere.ini", "--pi", "0.5") == 2

    def test_belief_out_of_range(self):
        assert run("calc", CONFIGS / "benchmark.ini", "--pi", "1.0") == 2


class TestSweep:
    def test_rows_and_manifest(self, out):
        assert run("sweep", CONFIGS / "reform.ini") == 0
        table = pd.read_csv(out / "sweep.csv")
        assert len(table) == 99
        assert table["d_dsigma0"].between(0.3 - 1e-12, 0.6 + 1e-12).all()
        manifest = json.loads((out / "sweep-manifest.json").read_text())
        assert [o["path"] for o in manifest["outputs"]] == ["sweep.csv"]
        assert manifest["command"] == "sweep" and len(manifest["config_hash"]) == 64

    def test_byte_identical_rerun(self, out):
        run("sweep", CONFIGS / "security.ini", "--out", "a.csv")
        run("sweep", CONFIGS / "security.ini", "--out", "b.csv")
        assert (out / "a.csv").read_bytes() == (out / "b.csv").read_bytes()

    def test_dialect(self, out):
        run("sweep", CONFIGS / "benchmark.ini", "--grid", "0.1,0.5,0.9")
        raw = (out / "sweep.csv").read_bytes()
        assert b"\r" not in raw and raw.count(b"\n") == 4
        assert raw.startswith(b"pi,psi,phi,")

    @pytest.mark.parametrize("grid", ["0:1:5", "0.5:0.1:3", "a:b:c", "0.2,0.1"])
    def test_invalid_grid(self, out, grid):
        assert run("sweep", CONFIGS / "benchmark.ini", "--grid", grid) == 2


class TestVerify:
    def test_passing_selection(self, out, capsys):
        assert run("verify", "unity,benchmark") == 0
        assert (out / "verify-unity.json").exists()
        assert "PASS benchmark" in capsys.readouterr().out

    def test_failing_claim_exits_one(self, out):
        assert run("verify", "band-limits") == 1
        report = json.loads((out / "verify-band-limits.json").read_text())
        assert report["passed"] is False

    def test_unknown_claim(self, out):
        assert run("verify", "nope") == 2


class TestPipeline:
    def test_simulate_estimate(self, out):
        assert run("simulate", CONFIGS / "reform.ini", *SMALL) == 0
        panel = pd.read_csv(out / "panel.csv")
        assert list(panel.columns) == PANEL_COLUMNS
        assert run("estimate", out / "panel.csv", "--config", CONFIGS / "reform.ini") == 0
        table = pd.read_csv(out / "coef_event_risky.csv")
        assert list(table.columns) == ["term", "estimate", "se", "t", "p", "n_obs", "n_clusters"]
        series = pd.read_csv(out / "event_study_risky.csv")
        assert list(series.columns) == ["event_time", "coef", "se"]
        summary = json.loads((out / "estimates.json").read_text())["summary"]
        assert summary["event_risky"]["post_avg"] > 0
        manifest = json.loads((out / "estimate-manifest.json").read_text())
        listed = {o["path"] for o in manifest["outputs"]}
        written = {p.name for p in out.iterdir()} - {"panel.csv"} - {p.name for p in out.glob("*-manifest.json")}
        assert listed == written

    def test_missing_column(self, out, capsys):
        run("simulate", CONFIGS / "reform.ini", *SMALL)
        panel = pd.read_csv(out / "panel.csv").drop(columns="survived")
        panel.to_csv(out / "cut.csv", index=False)
        assert run("estimate", out / "cut.csv") == 2
        assert "survived" in capsys.readouterr().err

    def test_rank_failure_exits_three(self, out):
        run("simulate", CONFIGS / "reform.ini", *SMALL)
        panel = pd.read_csv(out / "panel.csv")
        panel["rep_pre"] = 0.5
        panel.to_csv(out / "flat.csv", index=False)
        assert run("estimate", out / "flat.csv") == 3


class TestReport:
    def test_bundle(self, tmp_path):
        target = tmp_path / "bundle"
        code = run("report", CONFIGS / "benchmark.ini", "--selector", "benchmark,unity", "--out-dir", target)
        assert code == 0
        manifest = json.loads((target / "report-manifest.json").read_text())
        assert [o["path"] for o in manifest["outputs"]] == ["sweep.csv", "verify-benchmark.json", "verify-unity.json"]
