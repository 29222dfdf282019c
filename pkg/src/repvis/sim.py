"""Monte Carlo careers under a staggered visibility reform.

Authors are independent.  Each period an author runs a fixed number of
projects; for each project the author sees a private signal, chooses an arm
by the signal-contingent rule at the current public belief, realizes an
outcome, and the outcome survives on the record with the kernel
probability.  Only surviving outcomes move the public belief.

Random numbers come from a counter-based generator keyed by
``(seed, author)``; every author draws one type uniform followed by an array
of shape ``(periods, projects, 3)`` holding the signal, outcome and survival
uniforms, so results do not depend on how authors are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .model import ReformShift, Scenario, apply_reform, risky_choice
from .posterior import DomainError, update_failure, update_success

PANEL_COLUMNS = [
    "author_id", "field_id", "period", "event_time", "post", "rep_pre", "high_rep", "risky", "success", "survived",
]
# spawn-key tags separating independent streams under one seed
_AUTHOR_STREAM = 0
_LABEL_STREAM = 1
_SITES = 3


def staggered_adoption(n_fields: int, periods: int, earliest: int | None = None, latest: int | None = None):
    """Adoption periods spread evenly from ``earliest`` to ``latest`` across fields."""
    earliest = max(1, periods // 4) if earliest is None else earliest
    latest = periods - periods // 4 if latest is None else latest
    return tuple(int(x) for x in np.round(np.linspace(earliest, latest, n_fields)))


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``adoption_times[f]`` is the first reform period of field ``f``; a value
    equal to ``periods`` means the field never adopts within the sample.
    ``type_prior`` is both the probability of the high type and the initial
    public belief unless ``initial_belief`` is given.
    """

    scenario_pre: Scenario
    reform: ReformShift
    n_authors: int = 500
    n_fields: int = 20
    periods: int = 12
    adoption_times: tuple | None = None
    type_prior: float = 0.5
    initial_belief: float | None = None
    projects_per_period: int = 4
    misclassification_rate: float = 0.0
    seed: int = 0
    scenario_post: Scenario = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_authors < self.n_fields or self.n_fields < 1:
            raise DomainError("need at least one author per field")
        if self.periods < 2 or self.projects_per_period < 1:
            raise DomainError("need at least two periods and one project per period")
        times = self.adoption_times
        if times is None:
            times = staggered_adoption(self.n_fields, self.periods)
            object.__setattr__(self, "adoption_times", times)
        if len(times) != self.n_fields or any(not 1 <= t <= self.periods for t in times):
            raise DomainError("adoption times must give one period in [1, periods] per field")
        if not 0.0 < self.type_prior < 1.0:
            raise DomainError("type prior must lie in (0, 1)")
        if self.initial_belief is not None and not 0.0 < self.initial_belief < 1.0:
            raise DomainError("initial belief must lie in (0, 1)")
        if not 0.0 <= self.misclassification_rate < 0.5:
            raise DomainError("misclassification rate must lie in [0, 0.5)")
        post = self.scenario_pre.replace(vis_risky=apply_reform(self.scenario_pre.vis_risky, self.reform))
        object.__setattr__(self, "scenario_post", post)

    @property
    def field_of_author(self) -> np.ndarray:
        return np.arange(self.n_authors) * self.n_fields // self.n_authors


def author_uniforms(seed: int, author: int, periods: int, projects: int):
    """Type uniform and ``(periods, projects, 3)`` uniforms for one author."""
    ss = np.random.SeedSequence(seed, spawn_key=(_AUTHOR_STREAM, author))
    rng = np.random.Generator(np.random.Philox(ss))
    return rng.random(), rng.random((periods, projects, _SITES))


def _step(belief, start, risky, good_type, u_out, u_surv, post, pre: Scenario, after: Scenario):
    """Outcome, survival and updated belief for one project of every author.

    Visibility is evaluated at the period-start belief ``start``; the update
    applies to the running belief ``belief``.
    """
    r, s = pre.risky, pre.safe
    p = np.where(risky, np.where(good_type, r.p_high, r.p_low), np.where(good_type, s.p_high, s.p_low))
    success = u_out < p
    sigma = {}
    for name, scenario in (("pre", pre), ("post", after)):
        kr, ks = scenario.vis_risky(start), scenario.vis_safe(start)
        sigma[name] = np.where(
            risky, np.where(success, kr.success, kr.failure), np.where(success, ks.success, ks.failure)
        )
    survived = u_surv < np.where(post, sigma["post"], sigma["pre"])
    lr_r, lr_s = r.likelihoods, s.likelihoods
    up = np.where(risky, update_success(belief, lr_r), update_success(belief, lr_s))
    down = np.where(risky, update_failure(belief, lr_r), update_failure(belief, lr_s))
    return success, survived, np.where(survived, np.where(success, up, down), belief)


def simulate(config: SimConfig) -> pd.DataFrame:
    """Project-level panel, sorted by author, period and project.

    Besides :data:`PANEL_COLUMNS` the frame carries ``project``,
    ``risky_true`` (action before any label noise), ``high_type`` and
    ``belief`` (public belief at the start of the period, which drives
    every choice in it).
    """
    n, P, J = config.n_authors, config.periods, config.projects_per_period
    type_u = np.empty(n)
    draws = np.empty((n, P, J, _SITES))
    for a in range(n):
        type_u[a], draws[a] = author_uniforms(config.seed, a, P, J)
    good_type = type_u < config.type_prior
    fields = config.field_of_author
    adopt = np.asarray(config.adoption_times)[fields]
    start = config.type_prior if config.initial_belief is None else config.initial_belief
    belief = np.full(n, start)
    rep_pre = np.full(n, np.nan)
    sig = config.scenario_pre.signal
    q = np.where(good_type, sig.q_high, sig.q_low)

    shape = (n, P, J)
    out = {k: np.empty(shape, dtype=bool) for k in ("risky", "success", "survived")}
    beliefs = np.empty(shape)
    for t in range(P):
        rep_pre = np.where(adopt == t, belief, rep_pre)
        post = t >= adopt
        # every project of the period is chosen at the period-start belief;
        # updates then apply in project order
        start = belief.copy()
        beliefs[:, t, :] = start[:, None]
        for j in range(J):
            u = draws[:, t, j]
            good = u[:, 0] < q
            choice = np.where(
                post,
                risky_choice(start, good, config.scenario_post),
                risky_choice(start, good, config.scenario_pre),
            )
            success, survived, belief = _step(
                belief, start, choice, good_type, u[:, 1], u[:, 2], post, config.scenario_pre, config.scenario_post
            )
            out["risky"][:, t, j] = choice
            out["success"][:, t, j] = success
            out["survived"][:, t, j] = survived
    rep_pre = np.where(adopt == P, belief, rep_pre)

    author = np.repeat(np.arange(n), P * J)
    period = np.tile(np.repeat(np.arange(P), J), n)
    field_id = fields[author]
    event_time = period - adopt[author]
    frame = pd.DataFrame(
        {
            "author_id": author,
            "field_id": field_id,
            "period": period,
            "project": np.tile(np.arange(J), n * P),
            "event_time": event_time,
            "post": event_time >= 0,
            "rep_pre": rep_pre[author],
            "high_rep": _median_split(rep_pre, fields)[author],
            "risky": out["risky"].ravel(),
            "success": out["success"].ravel(),
            "survived": out["survived"].ravel(),
            "risky_true": out["risky"].ravel(),
            "high_type": good_type[author],
            "belief": beliefs.ravel(),
        }
    )
    if config.misclassification_rate > 0:
        frame = inject_misclassification(frame, config.misclassification_rate, config.seed)
    return frame


def _median_split(rep, fields):
    """Reputation strictly above the median of the author's field."""
    med = pd.Series(rep).groupby(fields).transform("median").to_numpy()
    return rep > med


def inject_misclassification(rows: pd.DataFrame, eta: float, seed: int) -> pd.DataFrame:
    """Flip each ``risky`` label independently with probability ``eta``.

    One uniform per row is drawn in row order from a stream keyed by
    ``seed``; ``risky_true`` keeps the unflipped label.
    """
    if not 0.0 <= eta < 0.5:
        raise DomainError("misclassification rate must lie in [0, 0.5)")
    out = rows.copy()
    if "risky_true" not in out:
        out["risky_true"] = out["risky"].astype(bool)
    if eta == 0.0:
        return out
    ss = np.random.SeedSequence(seed, spawn_key=(_LABEL_STREAM,))
    flip = np.random.Generator(np.random.Philox(ss)).random(len(out)) < eta
    out["risky"] = out["risky_true"].to_numpy(dtype=bool) ^ flip
    return out


def aggregate(rows: pd.DataFrame, level: str = "author", min_projects: int = 3) -> pd.DataFrame:
    """Cell-level outcome shares.

    Parameters
    ----------
    level : {"author", "field"}
        Author-field-period cells or field-period cells.
    min_projects : int
        Cells with fewer projects are dropped.

    Returns
    -------
    DataFrame
        ``risky_share``, ``succ_risky`` (missing without risky projects),
        ``null_survive`` (survival among risky failures, missing without
        any), ``rr_intensity`` (share of the field-period under the reform)
        and ``cell_count``, plus the key and author-level columns.
    """
    if len(rows) == 0:
        raise DomainError("no rows to aggregate")
    if level == "author":
        keys = ["author_id", "field_id", "period"]
    elif level == "field":
        keys = ["field_id", "period"]
    else:
        raise DomainError(f"level must be 'author' or 'field', got {level!r}")
    risky = rows["risky"].to_numpy(dtype=bool)
    success = rows["success"].to_numpy(dtype=bool)
    survived = rows["survived"].to_numpy(dtype=bool)
    failed_risky = risky & ~success
    codes, first_idx = _factorize(rows, keys)
    G = first_idx.size

    def total(x):
        return np.bincount(codes, weights=x.astype(float), minlength=G)

    n = total(np.ones(len(rows)))
    n_risky = total(risky)
    n_fail = total(failed_risky)
    with np.errstate(invalid="ignore", divide="ignore"):
        cells = rows.iloc[first_idx][keys].reset_index(drop=True)
        cells["risky_share"] = n_risky / n
        cells["succ_risky"] = np.where(n_risky > 0, total(risky & success) / n_risky, np.nan)
        cells["null_survive"] = np.where(n_fail > 0, total(failed_risky & survived) / n_fail, np.nan)
    cells["cell_count"] = n.astype(int)
    # reform intensity is a field-period quantity in both layouts
    ft_codes, ft_first = _factorize(rows, ["field_id", "period"])
    post = rows["post"].to_numpy(dtype=float)
    intensity = np.bincount(ft_codes, weights=post) / np.bincount(ft_codes)
    cells["rr_intensity"] = intensity[ft_codes[first_idx]]
    extra = ["event_time", "post"] + (["rep_pre", "high_rep"] if level == "author" else [])
    for c in extra:
        cells[c] = rows[c].to_numpy()[first_idx]
    cells = cells[cells["cell_count"] >= min_projects].reset_index(drop=True)
    return cells


def _factorize(rows: pd.DataFrame, keys):
    """Group codes in sorted key order and the first row index of each group."""
    codes = rows.groupby(keys, sort=True).ngroup().to_numpy()
    first = np.full(codes.max() + 1, len(rows), dtype=np.int64)
    np.minimum.at(first, codes, np.arange(len(rows)))
    return codes, first
