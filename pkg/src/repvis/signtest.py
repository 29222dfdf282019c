"""Local sign test of the value-gap slope and its diagnostics.

The core approximation compares visibility-weighted jump values of the two
arms, with kernels held fixed at the evaluation belief, plus a direct term
from kernels that vary with reputation.  The exact derivative from
:mod:`repvis.model` is always reported next to it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .model import ConstantKernel, Scenario, SecurityFloorKernel, delta_prime_exact
from .posterior import (
    DEFAULT_TOLERANCES,
    DomainError,
    Tolerances,
    _as_belief,
    _out,
    posterior_derivatives,
    update_failure,
    update_success,
)

DEFAULT_GRID = np.round(np.arange(1, 100) / 100.0, 2)


def classify_sign(x, zero_band: float = DEFAULT_TOLERANCES.zero_band):
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < zero_band, 0, np.sign(x)).astype(int)
    return int(out) if out.ndim == 0 else out


def _jump_value(pi, tech, kernel, V):
    lr = tech.likelihoods
    up = update_success(pi, lr) - pi
    down = pi - update_failure(pi, lr)
    k = kernel(pi)
    v1, v2 = V.d1(pi), V.d2(pi)
    return k.success * (v1 * up + 0.5 * v2 * up**2) - k.failure * (v1 * down + 0.5 * v2 * down**2)


def psi(pi, scenario: Scenario):
    """Visibility-weighted local jump value of the risky arm."""
    pi = _as_belief(pi)
    return _out(np.asarray(_jump_value(pi, scenario.risky, scenario.vis_risky, scenario.value)))


def phi_safe(pi, scenario: Scenario):
    """Visibility-weighted local jump value of the safe arm."""
    pi = _as_belief(pi)
    return _out(np.asarray(_jump_value(pi, scenario.safe, scenario.vis_safe, scenario.value)))


def _direct(pi, tech, kernel, V):
    lr = tech.likelihoods
    p = np.asarray(tech.mixture(pi))
    k = kernel(pi)
    return k.dsuccess * p * V(update_success(pi, lr)) + k.dfailure * (1.0 - p) * V(update_failure(pi, lr))


def gamma_direct(pi, scenario: Scenario):
    """Contribution of reputation-dependent visibility to the gap slope."""
    pi = _as_belief(pi)
    V = scenario.value
    return _out(
        np.asarray(
            _direct(pi, scenario.risky, scenario.vis_risky, V) - _direct(pi, scenario.safe, scenario.vis_safe, V)
        )
    )


def delta_prime_core(pi, scenario: Scenario):
    """Approximation ``(pH - pL) psi - (rH - rL) phi + gamma``."""
    pi = _as_belief(pi)
    return _out(
        np.asarray(
            scenario.risky.spread * np.asarray(psi(pi, scenario))
            - scenario.safe.spread * np.asarray(phi_safe(pi, scenario))
            + np.asarray(gamma_direct(pi, scenario))
        )
    )


@dataclass(frozen=True)
class VisibilityPartials:
    """Sensitivity of the gap slope to constant visibility levels of the risky arm.

    The ``*_linear`` fields are the same objects for ``V(x) = x`` and the
    ``*_correction`` fields the difference due to the actual value function.
    Limits are those of the reported partials as the belief tends to 0 or 1.
    """

    d_dsigma0: float
    d_dsigma1: float
    d_dsigma0_linear: float
    d_dsigma1_linear: float
    d_dsigma0_correction: float
    d_dsigma1_correction: float
    limit_pi0_sigma0: float
    limit_pi1_sigma0: float
    limit_pi0_sigma1: float
    limit_pi1_sigma1: float


def _partials(pi, tech, V):
    lr = tech.likelihoods
    up, down = update_success(pi, lr), update_failure(pi, lr)
    der = posterior_derivatives(pi, lr)
    p = np.asarray(tech.mixture(pi))
    d0 = -tech.spread * V(down) + (1.0 - p) * V.d1(down) * der.dpi_minus
    d1 = tech.spread * V(up) + p * V.d1(up) * der.dpi_plus
    return d0, d1


class _Identity:
    def __call__(self, x):
        return np.asarray(x, dtype=float)

    def d1(self, x):
        return np.ones_like(np.asarray(x, dtype=float))


def visibility_partials(pi, scenario: Scenario) -> VisibilityPartials:
    pi = _as_belief(pi)
    tech, V = scenario.risky, scenario.value
    lr = tech.likelihoods
    d0, d1 = _partials(pi, tech, V)
    l0, l1 = _partials(pi, tech, _Identity())
    s = tech.spread
    # at pi -> 0 both posteriors -> 0 with slopes lam, phi; at pi -> 1 they -> 1 with slopes 1/lam, 1/phi
    lim00 = -s * V(0.0) + (1.0 - tech.p_low) * lr.phi * V.d1(0.0)
    lim10 = -s * V(1.0) + (1.0 - tech.p_high) / lr.phi * V.d1(1.0)
    lim01 = s * V(0.0) + tech.p_low * lr.lam * V.d1(0.0)
    lim11 = s * V(1.0) + tech.p_high / lr.lam * V.d1(1.0)
    return VisibilityPartials(
        *(
            _out(np.asarray(x, dtype=float))
            for x in (d0, d1, l0, l1, d0 - l0, d1 - l1, lim00, lim10, lim01, lim11)
        )
    )


@dataclass(frozen=True)
class CurvatureBound:
    """Linear benchmark ``b_val`` and curvature loading ``k_val`` of the failure-visibility effect.

    For a value function with slope 1 and value ``pi`` at the evaluation point
    and constant curvature ``v``, the effect equals ``b_val - v * k_val``.
    """

    b_val: float
    k_val: float
    threshold: float
    global_threshold: float
    verdict: bool
    vacuous: bool


def _curvature_terms(pi, tech):
    lr = tech.likelihoods
    down = pi - update_failure(pi, lr)
    slope = posterior_derivatives(pi, lr).dpi_minus
    q = 1.0 - np.asarray(tech.mixture(pi))
    s = tech.spread
    b = -s * pi + s * down + q * slope
    k = 0.5 * s * down**2 + q * down * slope
    return b, k


def global_curvature_threshold(scenario: Scenario, grid=DEFAULT_GRID) -> float:
    """``inf B / sup K`` over ``grid``."""
    b, k = _curvature_terms(_as_belief(grid), scenario.risky)
    return float(np.min(b) / np.max(k))


def _require_curvature_setting(scenario):
    if scenario.safe.informative:
        raise DomainError("curvature bound assumes an uninformative safe arm")
    if not isinstance(scenario.vis_safe, (ConstantKernel, SecurityFloorKernel)):
        raise DomainError("curvature bound assumes a constant safe kernel")


def curvature_bound(pi: float, scenario: Scenario, v_curv_sup: float, grid=DEFAULT_GRID) -> CurvatureBound:
    """Curvature below ``b_val / k_val`` keeps the failure-visibility effect positive."""
    if v_curv_sup < 0:
        raise DomainError("curvature bound must be nonnegative")
    _require_curvature_setting(scenario)
    pi = float(_as_belief(pi))
    b, k = (float(x) for x in _curvature_terms(pi, scenario.risky))
    threshold = b / k if k > 0 else np.inf
    return CurvatureBound(
        b_val=b,
        k_val=k,
        threshold=threshold,
        global_threshold=global_curvature_threshold(scenario, grid),
        verdict=bool(v_curv_sup < threshold),
        vacuous=b <= 0,
    )


@dataclass(frozen=True)
class DominanceWeights:
    a: float
    b: float
    a_s: float
    b_s: float


@dataclass(frozen=True)
class DominanceResult:
    weights: DominanceWeights
    linear_condition_holds: bool
    boundary_sufficient_holds: bool


def dominance_weights(pi, scenario: Scenario) -> DominanceWeights:
    """Per-unit jump weights ``(lam - 1)/D_lam`` and ``(1 - phi)/D_phi`` for both arms."""
    pi = _as_belief(pi)
    r, s = scenario.risky.likelihoods, scenario.safe.likelihoods
    return DominanceWeights(
        _out((r.lam - 1.0) / r.success_denominator(pi)),
        _out((1.0 - r.phi) / r.failure_denominator(pi)),
        _out((s.lam - 1.0) / s.success_denominator(pi)),
        _out((1.0 - s.phi) / s.failure_denominator(pi)),
    )


def dominance_map(pi: float, scenario: Scenario) -> DominanceResult:
    """Linear-value dominance condition of the safe arm and its high-reputation limit."""
    pi = float(_as_belief(pi))
    w = dominance_weights(pi, scenario)
    kr, ks = scenario.vis_risky(pi), scenario.vis_safe(pi)
    risky_side = kr.success * w.a - kr.failure * w.b
    safe_side = ks.success * w.a_s - ks.failure * w.b_s
    r, s = scenario.risky.likelihoods, scenario.safe.likelihoods
    risky_limit = kr.success * (r.lam - 1.0) / r.lam - kr.failure * (1.0 - r.phi) / r.phi
    safe_limit = ks.success * (s.lam - 1.0) / s.lam - ks.failure * (1.0 - s.phi) / s.phi
    return DominanceResult(w, bool(safe_side >= risky_side), bool(safe_limit >= risky_limit))


@dataclass(frozen=True)
class SignTestReport:
    """Exact and approximate gap slopes at one belief.

    ``cutoff_slope_sign`` is the sign of the cutoff movement implied by the
    exact slope; ``core_slope_sign`` the one implied by the approximation.
    ``consistent`` is false when the two disagree.
    """

    pi: float
    psi: float
    phi: float
    gamma: float
    delta_prime_exact: float
    delta_prime_core: float
    residual: float
    cutoff_slope_sign: int
    core_slope_sign: int
    conservatism_holds: bool
    consistent: bool

    def to_dict(self) -> dict:
        return asdict(self)


def cutoff_slope_sign(pi: float, scenario: Scenario, tol: Tolerances = DEFAULT_TOLERANCES) -> SignTestReport:
    pi = float(_as_belief(pi))
    p, f, g = float(psi(pi, scenario)), float(phi_safe(pi, scenario)), float(gamma_direct(pi, scenario))
    exact = float(delta_prime_exact(pi, scenario, tol=tol))
    core = scenario.risky.spread * p - scenario.safe.spread * f + g
    s_exact = -classify_sign(exact, tol.zero_band)
    s_core = -classify_sign(core, tol.zero_band)
    return SignTestReport(
        pi=pi,
        psi=p,
        phi=f,
        gamma=g,
        delta_prime_exact=exact,
        delta_prime_core=core,
        residual=exact - core,
        cutoff_slope_sign=s_exact,
        core_slope_sign=s_core,
        conservatism_holds=bool(f >= p),
        consistent=s_exact == s_core,
    )


SWEEP_COLUMNS = [
    "pi", "psi", "phi", "gamma", "delta_prime_exact", "delta_prime_core", "residual",
    "sign_exact", "sign_core", "conservatism", "B", "K", "d_dsigma0", "d_dsigma1",
]


def sweep(scenario: Scenario, grid=DEFAULT_GRID, tol: Tolerances = DEFAULT_TOLERANCES) -> pd.DataFrame:
    """Sign-test quantities over a belief grid, one row per belief in grid order.

    ``B`` and ``K`` refer to the risky arm alone.
    """
    grid = _as_belief(np.atleast_1d(np.asarray(grid, dtype=float)))
    p = np.asarray(psi(grid, scenario))
    f = np.asarray(phi_safe(grid, scenario))
    g = np.asarray(gamma_direct(grid, scenario))
    exact = np.asarray(delta_prime_exact(grid, scenario, tol=tol))
    core = scenario.risky.spread * p - scenario.safe.spread * f + g
    b, k = _curvature_terms(grid, scenario.risky)
    d0, d1 = _partials(grid, scenario.risky, scenario.value)
    return pd.DataFrame(
        {
            "pi": grid,
            "psi": p,
            "phi": f,
            "gamma": g,
            "delta_prime_exact": exact,
            "delta_prime_core": core,
            "residual": exact - core,
            "sign_exact": -classify_sign(exact, tol.zero_band),
            "sign_core": -classify_sign(core, tol.zero_band),
            "conservatism": f >= p,
            "B": b,
            "K": k,
            "d_dsigma0": np.asarray(d0, dtype=float),
            "d_dsigma1": np.asarray(d1, dtype=float),
        },
        columns=SWEEP_COLUMNS,
    )
