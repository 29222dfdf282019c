"""Fixed-effects regressions with cluster-robust inference.

Fixed effects are absorbed by alternating projections; coefficients come
from a pivoted QR factorization that names any collinear column.  Standard
errors use the cluster sandwich with the small-sample factor
``G/(G-1) * (N-1)/(N-k)``, where ``k`` counts the explicit regressors, and
t and F reference distributions use ``G - 1`` denominator degrees of freedom.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import linalg, stats

FixedEffect = "str | tuple[str, ...]"


class RankDeficiencyError(np.linalg.LinAlgError):
    """Regressors are collinear after absorbing fixed effects."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"collinear regressors: {', '.join(self.columns)}")


class ConvergenceError(ArithmeticError):
    """Alternating projections did not reach the tolerance."""


class MissingColumnError(KeyError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing column: {column}")


def _require(data: pd.DataFrame, columns):
    for c in columns:
        if c not in data.columns:
            raise MissingColumnError(c)


def _fe_columns(fe) -> tuple[str, ...]:
    return (fe,) if isinstance(fe, str) else tuple(fe)


def fe_name(fe) -> str:
    return ":".join(_fe_columns(fe))


def group_codes(data: pd.DataFrame, fe) -> np.ndarray:
    """Integer codes of the (possibly interacted) grouping ``fe``."""
    cols = list(_fe_columns(fe))
    _require(data, cols)
    if len(cols) == 1:
        return pd.factorize(data[cols[0]], sort=True)[0]
    return data.groupby(cols, sort=True).ngroup().to_numpy()


@dataclass
class WithinResult:
    data: pd.DataFrame
    iterations: int
    max_group_mean: float
    converged: bool


def within_transform(
    data: pd.DataFrame, columns, fixed_effects, tol: float = 1e-10, max_iter: int = 1000
) -> WithinResult:
    """Remove group means of ``columns`` for every grouping in ``fixed_effects``.

    Sweeps over the groupings until the largest remaining group mean is below
    ``tol`` or ``max_iter`` sweeps have run.
    """
    columns = list(columns)
    _require(data, columns)
    values = data[columns].to_numpy(dtype=float).copy()
    groups = []
    for fe in fixed_effects:
        codes = group_codes(data, fe)
        n_groups = codes.max() + 1 if codes.size else 0
        if n_groups < 2:
            raise ValueError(f"fixed effect {fe_name(fe)} needs at least two groups")
        groups.append((codes, n_groups, np.bincount(codes, minlength=n_groups).astype(float)))

    def group_means(codes, n_groups, counts):
        return np.column_stack(
            [np.bincount(codes, weights=values[:, j], minlength=n_groups) for j in range(values.shape[1])]
        ) / counts[:, None]

    worst = 0.0
    it = 0
    if not groups or values.size == 0:
        return WithinResult(pd.DataFrame(values, columns=columns, index=data.index), 0, 0.0, True)
    for it in range(1, max_iter + 1):
        for codes, n_groups, counts in groups:
            values -= group_means(codes, n_groups, counts)[codes]
        worst = max(float(np.max(np.abs(group_means(*g)))) for g in groups)
        if worst < tol:
            break
    out = pd.DataFrame(values, columns=columns, index=data.index)
    return WithinResult(out, it, worst, worst < tol)


@dataclass
class OLSFit:
    names: list
    coef: np.ndarray
    vcov: np.ndarray
    resid: np.ndarray
    n_obs: int
    n_clusters: int

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov))

    def table(self) -> pd.DataFrame:
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.coef / se
        p = 2.0 * stats.t.sf(np.abs(t), max(self.n_clusters - 1, 1))
        return pd.DataFrame(
            {
                "term": self.names,
                "estimate": self.coef,
                "se": se,
                "t": t,
                "p": p,
                "n_obs": self.n_obs,
                "n_clusters": self.n_clusters,
            }
        )

    def wald(self, names, joint_test: str = "hotelling") -> tuple[float, float, int]:
        """Joint F statistic, p-value and numerator df for ``names`` all zero."""
        idx = [self.names.index(n) for n in names]
        b = self.coef[idx]
        V = self.vcov[np.ix_(idx, idx)]
        q = len(idx)
        W = float(b @ np.linalg.solve(V, b))
        G = self.n_clusters
        if joint_test == "f":
            F = W / q
            return F, float(stats.f.sf(F, q, max(G - 1, 1))), q
        if joint_test != "hotelling":
            raise ValueError(f"unknown joint test {joint_test!r}")
        if G <= q:
            return np.nan, np.nan, q
        F = W * (G - q) / (q * (G - 1))
        return F, float(stats.f.sf(F, q, G - q)), q

    def combination(self, weights: dict) -> tuple[float, float]:
        """Estimate and standard error of a linear combination of coefficients."""
        a = np.zeros(len(self.names))
        for name, w in weights.items():
            a[self.names.index(name)] = w
        return float(a @ self.coef), float(np.sqrt(a @ self.vcov @ a))


def _qr_solve(X: np.ndarray, names):
    Q, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        raise RankDeficiencyError(names)
    tol = diag[0] * max(X.shape) * np.finfo(float).eps
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        raise RankDeficiencyError([names[i] for i in piv[rank:]])
    return Q, R, piv


def cluster_vcov(X: np.ndarray, resid: np.ndarray, clusters: np.ndarray, bread: np.ndarray | None = None) -> np.ndarray:
    """Cluster sandwich with the ``G/(G-1) * (N-1)/(N-k)`` small-sample factor."""
    n, k = X.shape
    codes, uniq = pd.factorize(clusters, sort=True)
    G = len(uniq)
    if bread is None:
        bread = np.linalg.inv(X.T @ X)
    scores = X * resid[:, None]
    S = np.column_stack([np.bincount(codes, weights=scores[:, j], minlength=G) for j in range(k)])
    meat = S.T @ S
    scale = G / (G - 1) * (n - 1) / (n - k) if G > 1 and n > k else 1.0
    return scale * bread @ meat @ bread


def ols(y: np.ndarray, X: np.ndarray, names, clusters) -> OLSFit:
    """Least squares with cluster-robust covariance."""
    names = list(names)
    Q, R, piv = _qr_solve(X, names)
    z = linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty_like(z)
    coef[piv] = z
    resid = y - X @ coef
    Rinv = linalg.solve_triangular(R, np.eye(R.shape[0]))
    bread_p = Rinv @ Rinv.T
    bread = np.empty_like(bread_p)
    bread[np.ix_(piv, piv)] = bread_p
    vcov = cluster_vcov(X, resid, clusters, bread)
    return OLSFit(names, coef, vcov, resid, len(y), len(np.unique(clusters)))


@dataclass(frozen=True)
class RegressionSpec:
    """Reputation-interacted event-study or pooled regression.

    ``fixed_effects`` entries are column names or tuples of names for
    interacted groupings.  Rows with event time outside ``window`` are
    dropped, or assigned to the nearest endpoint when ``bin_endpoints`` is
    set; rows with a missing event time stay in the sample as pure controls.
    ``slope_groups`` names a grouping column; when set, the reputation level
    enters with a separate slope for each of its groups.
    """

    outcome: str
    rep: str = "rep_pre"
    fixed_effects: tuple = ("author_id", ("field_id", "period"))
    cluster: str = "field_id"
    controls: tuple = ()
    slope_groups: str | None = None
    window: tuple = (-5, 5)
    omitted_event_time: int = -1
    bin_endpoints: bool = False
    event_column: str = "event_time"
    post_column: str = "post"
    joint_test: str = "hotelling"

    def __post_init__(self):
        lo, hi = self.window
        if not lo <= self.omitted_event_time <= hi:
            raise ValueError("omitted event time must lie inside the window")

    def event_times(self):
        lo, hi = self.window
        return [k for k in range(lo, hi + 1) if k != self.omitted_event_time]


def event_term(k: int, rep: str) -> str:
    return f"event[{k}]:{rep}"


@dataclass
class RegressionResult:
    fit: OLSFit
    iterations: int
    few_clusters: bool

    @property
    def table(self) -> pd.DataFrame:
        return self.fit.table()

    def coef(self, term: str) -> float:
        return float(self.fit.coef[self.fit.names.index(term)])

    def se(self, term: str) -> float:
        return float(self.fit.se[self.fit.names.index(term)])


@dataclass
class EventStudyResult(RegressionResult):
    spec: RegressionSpec = None
    pretrend_stat: float = np.nan
    pretrend_p: float = np.nan
    pretrend_df: int = 0
    post_avg: float = np.nan
    post_avg_se: float = np.nan
    post_avg_early: float = np.nan
    post_avg_late: float = np.nan
    n_obs: int = 0
    n_clusters: int = 0

    @property
    def coefficients(self) -> pd.DataFrame:
        """Plot-ready series: one row per estimated event time."""
        rows = []
        for k in self.spec.event_times():
            term = event_term(k, self.spec.rep)
            rows.append({"event_time": k, "coef": self.coef(term), "se": self.se(term)})
        return pd.DataFrame(rows, columns=["event_time", "coef", "se"])


def _controls(frame: pd.DataFrame, spec: RegressionSpec) -> dict:
    out = {c: frame[c].astype(float).to_numpy() for c in spec.controls}
    if spec.slope_groups is not None:
        rep = frame[spec.rep].astype(float).to_numpy()
        g = frame[spec.slope_groups].to_numpy()
        for level in np.unique(g):
            out[f"{spec.rep}:{spec.slope_groups}[{level}]"] = rep * (g == level)
    return out


def _prepare(data: pd.DataFrame, spec: RegressionSpec, extra=()):
    needed = [spec.outcome, spec.rep, spec.cluster, *spec.controls, *extra]
    if spec.slope_groups is not None:
        needed.append(spec.slope_groups)
    for fe in spec.fixed_effects:
        needed.extend(_fe_columns(fe))
    _require(data, list(dict.fromkeys(needed)))
    keep = data[spec.outcome].notna() & data[spec.rep].notna()
    return data.loc[keep]


def _absorb_and_fit(frame: pd.DataFrame, y: str, regressors: pd.DataFrame, spec: RegressionSpec):
    cols = pd.concat([frame[[y]], regressors], axis=1)
    if spec.fixed_effects:
        w = within_transform(cols.assign(**{c: frame[c] for c in _fe_cols(spec)}), list(cols.columns), spec.fixed_effects)
        if not w.converged:
            raise ConvergenceError(f"within transform stopped at group mean {w.max_group_mean:.3e}")
        cols, iterations = w.data, w.iterations
    else:
        iterations = 0
    fit = ols(
        cols[y].to_numpy(), cols[list(regressors.columns)].to_numpy(), list(regressors.columns),
        frame[spec.cluster].to_numpy(),
    )
    return fit, iterations


def _fe_cols(spec):
    out = []
    for fe in spec.fixed_effects:
        out.extend(_fe_columns(fe))
    return list(dict.fromkeys(out))


def _windowed(data: pd.DataFrame, spec: RegressionSpec) -> pd.DataFrame:
    lo, hi = spec.window
    k = data[spec.event_column]
    if spec.bin_endpoints:
        return data.assign(**{spec.event_column: k.clip(lo, hi)})
    return data.loc[k.isna() | k.between(lo, hi)]


def fit_event_study(data: pd.DataFrame, spec: RegressionSpec) -> EventStudyResult:
    """Event-time dummies interacted with reputation, fixed effects absorbed.

    Leads strictly before the omitted period enter the joint pretrend test;
    the post averages are plain means of the lag coefficients over
    ``[0, hi]``, ``[0, 2]`` and ``[3, hi]``.
    """
    frame = _windowed(_prepare(data, spec, [spec.event_column]), spec)
    k = frame[spec.event_column]
    rep = frame[spec.rep].astype(float)
    regs = {}
    for e in spec.event_times():
        regs[event_term(e, spec.rep)] = ((k == e).astype(float) * rep).to_numpy()
    regs.update(_controls(frame, spec))
    X = pd.DataFrame(regs, index=frame.index)
    fit, iterations = _absorb_and_fit(frame, spec.outcome, X, spec)

    leads = [event_term(e, spec.rep) for e in spec.event_times() if e < spec.omitted_event_time]
    stat, p, q = fit.wald(leads, spec.joint_test) if leads else (np.nan, np.nan, 0)
    lags = [e for e in spec.event_times() if e >= 0]

    def avg(ks):
        ks = [e for e in ks if e in lags]
        if not ks:
            return np.nan, np.nan
        return fit.combination({event_term(e, spec.rep): 1.0 / len(ks) for e in ks})

    post, post_se = avg(lags)
    early, _ = avg(range(0, 3))
    late, _ = avg(range(3, spec.window[1] + 1))
    return EventStudyResult(
        fit=fit,
        iterations=iterations,
        few_clusters=fit.n_clusters < 5,
        spec=spec,
        pretrend_stat=stat,
        pretrend_p=p,
        pretrend_df=q,
        post_avg=post,
        post_avg_se=post_se,
        post_avg_early=early,
        post_avg_late=late,
        n_obs=fit.n_obs,
        n_clusters=fit.n_clusters,
    )


def pooled_term(spec: RegressionSpec) -> str:
    return f"{spec.post_column}:{spec.rep}"


def fit_pooled(data: pd.DataFrame, spec: RegressionSpec) -> RegressionResult:
    """Single ``post x reputation`` interaction with the spec's fixed effects."""
    frame = _prepare(data, spec, [spec.post_column])
    regs = {pooled_term(spec): (frame[spec.post_column].astype(float) * frame[spec.rep].astype(float)).to_numpy()}
    regs.update(_controls(frame, spec))
    fit, iterations = _absorb_and_fit(frame, spec.outcome, pd.DataFrame(regs, index=frame.index), spec)
    return RegressionResult(fit, iterations, fit.n_clusters < 5)


# instrumental variables ---------------------------------------------------------


@dataclass
class IVResult:
    """First stage and, when estimated, second stage of an IV regression.

    ``first_stage_F`` is the cluster-robust Wald statistic on the excluded
    instrument alone.
    """

    first_stage_coef: float
    first_stage_se: float
    first_stage_F: float
    second_stage: pd.DataFrame | None = None
    n_obs: int = 0
    n_clusters: int = 0
    weak_instrument: bool = False
    warnings: list = field(default_factory=list)

    def estimate(self, term: str) -> float:
        row = self.second_stage.loc[self.second_stage["term"] == term]
        return float(row["estimate"].iloc[0])


WEAK_F = 10.0


def fit_first_stage(
    field_time: pd.DataFrame,
    outcome: str = "null_survive",
    instrument: str = "rr_intensity",
    fixed_effects=("field_id", "period"),
    cluster: str = "field_id",
) -> IVResult:
    """Reform intensity to failure survival at the field-period level."""
    spec = RegressionSpec(outcome=outcome, rep=instrument, fixed_effects=tuple(fixed_effects), cluster=cluster)
    frame = _prepare(field_time, spec)
    X = pd.DataFrame({instrument: frame[instrument].astype(float)}, index=frame.index)
    fit, _ = _absorb_and_fit(frame, outcome, X, spec)
    b, se = float(fit.coef[0]), float(fit.se[0])
    F = (b / se) ** 2 if se > 0 else np.inf
    return IVResult(b, se, F, None, fit.n_obs, fit.n_clusters, bool(F < WEAK_F))


def iv_term(endogenous: str, rep: str) -> str:
    return f"{endogenous}:{rep}"


def fit_2sls(
    cells: pd.DataFrame,
    spec: RegressionSpec,
    field_time: pd.DataFrame | None = None,
    endogenous: str = "null_survive",
    instrument: str = "rr_intensity",
) -> IVResult:
    """Two-stage least squares for the reputation-interacted visibility effect.

    The endogenous regressor is field-period failure survival times
    reputation, instrumented by reform intensity times reputation.  When
    ``field_time`` is given both field-period columns are taken from it.
    Second-stage standard errors use residuals built from the actual, not
    fitted, endogenous regressor.
    """
    data = cells
    if field_time is not None:
        _require(field_time, ["field_id", "period", endogenous, instrument])
        data = cells.drop(columns=[c for c in (endogenous, instrument) if c in cells.columns]).merge(
            field_time[["field_id", "period", endogenous, instrument]], on=["field_id", "period"], how="left"
        )
    frame = _prepare(data, spec, [endogenous, instrument])
    frame = frame.loc[frame[endogenous].notna() & frame[instrument].notna()]
    rep = frame[spec.rep].astype(float)
    x_name, z_name = iv_term(endogenous, spec.rep), iv_term(instrument, spec.rep)
    cols = {spec.outcome: frame[spec.outcome].astype(float), x_name: frame[endogenous] * rep, z_name: frame[instrument] * rep}
    controls = _controls(frame, spec)
    cols.update(controls)
    raw = pd.DataFrame(cols, index=frame.index)
    if spec.fixed_effects:
        w = within_transform(raw.join(frame[_fe_cols(spec)]), list(raw.columns), spec.fixed_effects)
        if not w.converged:
            raise ConvergenceError(f"within transform stopped at group mean {w.max_group_mean:.3e}")
        dem = w.data
    else:
        dem = raw
    clusters = frame[spec.cluster].to_numpy()
    exog = list(controls)
    Z = dem[[z_name, *exog]].to_numpy()
    first = ols(dem[x_name].to_numpy(), Z, [z_name, *exog], clusters)
    pi_hat, pi_se = float(first.coef[0]), float(first.se[0])
    F = (pi_hat / pi_se) ** 2 if pi_se > 0 else np.inf

    x_hat = Z @ first.coef
    Xh = np.column_stack([x_hat, dem[exog].to_numpy()]) if exog else x_hat[:, None]
    X = np.column_stack([dem[x_name].to_numpy(), dem[exog].to_numpy()]) if exog else dem[[x_name]].to_numpy()
    names = [x_name, *exog]
    y = dem[spec.outcome].to_numpy()
    Q, R, piv = _qr_solve(Xh, names)
    z = linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty_like(z)
    coef[piv] = z
    resid = y - X @ coef
    bread = np.linalg.inv(Xh.T @ Xh)
    vcov = cluster_vcov(Xh, resid, clusters, bread)
    second = OLSFit(names, coef, vcov, resid, len(y), len(np.unique(clusters))).table()
    notes = []
    weak = bool(F < WEAK_F)
    if weak:
        msg = f"weak instrument: first-stage F = {F:.2f} < {WEAK_F:g}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    return IVResult(pi_hat, pi_se, F, second, len(y), len(np.unique(clusters)), weak, notes)


# timing-robust wrappers ------------------------------------------------------


def _adoption(data: pd.DataFrame, spec: RegressionSpec) -> pd.Series:
    return data["period"] - data[spec.event_column]


def not_yet_treated(data: pd.DataFrame, spec: RegressionSpec) -> EventStudyResult:
    """Event study whose controls are only observations not yet treated.

    Observations more than ``window[1]`` periods after adoption are removed
    so that long-treated cells never serve as comparisons.
    """
    _require(data, ["period", spec.event_column])
    frame = data.loc[data[spec.event_column] <= spec.window[1]]
    return fit_event_study(frame, spec)


def stack_cohorts(data: pd.DataFrame, spec: RegressionSpec) -> pd.DataFrame:
    """Stacked data set: one block per adoption cohort with clean controls.

    Each block holds the cohort's fields and the fields adopting after the
    block's window closes, restricted to the cohort's event window.  Control
    rows get a missing event time.  A ``stack`` column identifies blocks.
    """
    _require(data, ["period", "field_id", spec.event_column])
    lo, hi = spec.window
    adopt = _adoption(data, spec)
    blocks = []
    for c in sorted(adopt.unique()):
        rel = data["period"] - c
        in_window = rel.between(lo, hi)
        treated = (adopt == c) & in_window
        control = (adopt > c + hi) & in_window
        if not treated.any() or not control.any():
            continue
        block = data.loc[treated | control].copy()
        block.loc[control[treated | control].to_numpy(), spec.event_column] = np.nan
        block["stack"] = int(c)
        blocks.append(block)
    if not blocks:
        raise ValueError("no cohort has clean controls inside the window")
    return pd.concat(blocks, ignore_index=True)


def fit_stacked(data: pd.DataFrame, spec: RegressionSpec) -> EventStudyResult:
    """Event study on :func:`stack_cohorts` with fixed effects interacted with the block."""
    stacked = stack_cohorts(data, spec)
    fes = tuple(("stack", *_fe_columns(fe)) for fe in spec.fixed_effects)
    return fit_event_study(stacked, replace(spec, fixed_effects=fes, bin_endpoints=False))
