"""Command-line front end.

Exit codes: 0 success, 1 a verification claim failed, 2 bad input (config,
grid, panel columns), 3 numerical failure (non-convergence, rank deficiency,
inconsistent identities).
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from . import __version__, config, lab
from .model import ConstructionError
from .panel import (
    ConvergenceError,
    MissingColumnError,
    RankDeficiencyError,
    fit_2sls,
    fit_event_study,
    fit_first_stage,
    fit_pooled,
)
from .posterior import ConsistencyError, DomainError
from .signtest import cutoff_slope_sign, sweep, visibility_partials
from .sim import PANEL_COLUMNS, aggregate, simulate

OUTPUT_ENV = "REPVIS_OUTPUT_DIR"
EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config_hash: str | None
    seed: int | None
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    def add(self, path: Path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.outputs.append({"path": path.name, "sha256": digest})

    def write(self, directory: Path) -> Path:
        path = directory / f"{self.command}-manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8", newline="\n")
        return path


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def write_csv(frame: pd.DataFrame, path: Path):
    frame = frame.copy()
    for col in frame.columns:
        if frame[col].dtype == bool:
            frame[col] = frame[col].astype(int)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def write_json(obj, path: Path):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def output_dir(args) -> Path:
    directory = Path(args.out_dir or os.environ.get(OUTPUT_ENV) or ".")
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def parse_grid(spec: str) -> np.ndarray:
    """``start:stop:count`` (inclusive) or a comma list of beliefs in (0, 1)."""
    try:
        if ":" in spec:
            start, stop, count = spec.split(":")
            grid = np.linspace(float(start), float(stop), int(count))
        else:
            grid = np.array([float(x) for x in spec.split(",") if x.strip()])
    except ValueError:
        raise InputError(f"invalid grid {spec!r}: use start:stop:count or a comma list") from None
    if grid.size == 0 or not np.all((grid > 0) & (grid < 1)) or np.any(np.diff(grid) <= 0):
        raise InputError(f"invalid grid {spec!r}: need increasing beliefs strictly inside (0, 1)")
    return np.round(grid, 12)


# commands -------------------------------------------------------------------------


def cmd_calc(args) -> int:
    doc = config.load(args.config, args.set)
    scenario = config.scenario_from(doc)
    if not 0.0 < args.pi < 1.0:
        raise InputError(f"--pi must lie in (0, 1), got {args.pi}")
    report = cutoff_slope_sign(args.pi, scenario).to_dict()
    partials = visibility_partials(args.pi, scenario)
    report["d_dsigma0"] = partials.d_dsigma0
    report["d_dsigma1"] = partials.d_dsigma1
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return EXIT_OK


def _sweep_to(doc, grid, directory: Path, manifest: RunManifest, name="sweep.csv"):
    table = sweep(config.scenario_from(doc), grid)
    path = directory / name
    write_csv(table, path)
    manifest.add(path)
    return table


def cmd_sweep(args) -> int:
    doc = config.load(args.config, args.set)
    grid = parse_grid(args.grid)
    directory = output_dir(args)
    manifest = RunManifest("sweep", doc.digest(), None, started=_now())
    _sweep_to(doc, grid, directory, manifest, args.out)
    manifest.finished = _now()
    manifest.write(directory)
    return EXIT_OK


def _verify_to(selector, directory: Path | None, manifest: RunManifest | None, threads: int):
    names = sorted(lab.CLAIMS) if selector == "all" else None
    try:
        if names is None:
            reports = lab.verify(selector)
        else:
            with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
                reports = list(pool.map(lambda n: lab.verify(n)[0], names))
    except KeyError as err:
        raise InputError(err.args[0]) from None
    for report in reports:
        print(report.summary())
        if directory is not None:
            path = directory / f"verify-{report.claim_id}.json"
            write_json(report.to_dict(), path)
            manifest.add(path)
    return all(r.passed for r in reports)


def cmd_verify(args) -> int:
    directory = output_dir(args) if (args.out_dir or os.environ.get(OUTPUT_ENV)) else None
    manifest = RunManifest("verify", None, None, started=_now())
    passed = _verify_to(args.selector, directory, manifest, args.threads)
    if directory is not None:
        manifest.finished = _now()
        manifest.write(directory)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_simulate(args) -> int:
    doc = config.load(args.config, args.set)
    sim_config = config.sim_config_from(doc)
    directory = output_dir(args)
    manifest = RunManifest("simulate", doc.digest(), sim_config.seed, started=_now())
    rows = simulate(sim_config)
    path = directory / args.out
    write_csv(rows[PANEL_COLUMNS], path)
    manifest.add(path)
    manifest.finished = _now()
    manifest.write(directory)
    return EXIT_OK


def read_panel(path) -> pd.DataFrame:
    try:
        rows = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise InputError(f"cannot read panel {path}: {err}") from None
    missing = [c for c in PANEL_COLUMNS if c not in rows.columns]
    if missing:
        raise MissingColumnError(missing[0])
    return rows


def cmd_estimate(args) -> int:
    doc = config.load(args.config, args.set) if args.config else None
    settings = config.estimation_from(doc)
    rows = read_panel(args.panel)
    directory = output_dir(args)
    manifest = RunManifest(
        "estimate",
        doc.digest() if doc else None,
        config.sim_config_from(doc).seed if doc and doc.has("simulation") else None,
        started=_now(),
    )
    risky_spec, success_spec = settings.specs()
    cells = aggregate(rows, min_projects=settings.min_projects)
    field_time = aggregate(rows, level="field")
    summary = {}
    tables = {}
    for label, spec in (("risky", risky_spec), ("success", success_spec)):
        es = fit_event_study(cells, spec)
        tables[f"event_{label}"] = es.table
        tables[f"pooled_{label}"] = fit_pooled(cells, spec).table
        iv = fit_2sls(cells, spec, field_time)
        tables[f"iv_{label}"] = iv.second_stage
        series = es.coefficients
        path = directory / f"event_study_{label}.csv"
        write_csv(series, path)
        manifest.add(path)
        summary[f"event_{label}"] = {
            "post_avg": es.post_avg,
            "post_avg_se": es.post_avg_se,
            "pretrend_stat": es.pretrend_stat,
            "pretrend_p": es.pretrend_p,
            "pretrend_df": es.pretrend_df,
        }
        summary[f"iv_{label}"] = {"first_stage_F": iv.first_stage_F, "weak_instrument": iv.weak_instrument, "warnings": iv.warnings}
    first = fit_first_stage(field_time)
    tables["first_stage"] = pd.DataFrame(
        [{
            "term": "rr_intensity",
            "estimate": first.first_stage_coef,
            "se": first.first_stage_se,
            "t": first.first_stage_coef / first.first_stage_se,
            "p": float(2.0 * stats.t.sf(abs(first.first_stage_coef / first.first_stage_se), first.n_clusters - 1)),
            "n_obs": first.n_obs,
            "n_clusters": first.n_clusters,
        }]
    )
    summary["first_stage"] = {"coef": first.first_stage_coef, "se": first.first_stage_se, "F": first.first_stage_F}
    for name, table in tables.items():
        path = directory / f"coef_{name}.csv"
        write_csv(table, path)
        manifest.add(path)
    path = directory / "estimates.json"
    write_json({"summary": summary, "tables": {k: v.to_dict(orient="records") for k, v in tables.items()}}, path)
    manifest.add(path)
    manifest.finished = _now()
    manifest.write(directory)
    return EXIT_OK


def cmd_report(args) -> int:
    doc = config.load(args.config, args.set)
    grid = parse_grid(args.grid)
    directory = output_dir(args)
    manifest = RunManifest("report", doc.digest(), None, started=_now())
    _sweep_to(doc, grid, directory, manifest)
    passed = _verify_to(args.selector, directory, manifest, args.threads)
    manifest.finished = _now()
    manifest.write(directory)
    return EXIT_OK if passed else EXIT_FAILED


# parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")
    common.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ENV} or the working directory)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap")

    parser = argparse.ArgumentParser(prog="repvis", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calc", parents=[common], help="sign-test report at one belief, as JSON")
    p.add_argument("config")
    p.add_argument("--pi", type=float, required=True)
    p.set_defaults(func=cmd_calc)

    p = sub.add_parser("sweep", parents=[common], help="sign-test table over a belief grid")
    p.add_argument("config")
    p.add_argument("--grid", default="0.01:0.99:99")
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="run verification claims")
    p.add_argument("selector", nargs="?", default="all", help=f"'all' or comma list of: {', '.join(sorted(lab.CLAIMS))}")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", parents=[common], help="simulate a career panel")
    p.add_argument("config")
    p.add_argument("--out", default="panel.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="event studies, pooled and IV estimates from a panel")
    p.add_argument("panel")
    p.add_argument("--config", help="document whose [estimation] section sets the specification")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", parents=[common], help="sweep and verification outputs in one directory")
    p.add_argument("config")
    p.add_argument("--grid", default="0.01:0.99:99")
    p.add_argument("--selector", default="all")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MissingColumnError as err:
        print(f"error: panel is missing required column '{err.column}'", file=sys.stderr)
        return EXIT_INPUT
    except (config.ConfigError, InputError, ConstructionError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (RankDeficiencyError, ConvergenceError, ConsistencyError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
