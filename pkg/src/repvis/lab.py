"""Executable checks of the model's analytic claims on belief grids.

Each check returns a :class:`VerificationReport`; ``passed`` is true exactly
when the largest violation is within the claim's registered tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import scenarios
from .model import ConstantKernel, LinearValue, QuadraticValue, Scenario, delta, delta_prime_exact
from .posterior import (
    DEFAULT_TOLERANCES,
    DomainError,
    OutcomeTech,
    dilate_tech,
    posterior_derivatives,
    posterior_gap,
    split,
    unity_residual,
)
from .signtest import (
    DEFAULT_GRID,
    _curvature_terms,
    cutoff_slope_sign,
    delta_prime_core,
    dominance_map,
    phi_safe,
    psi,
    visibility_partials,
)

BOUNDARY_PROBES = (1e-4, 1.0 - 1e-4)
DILATION_STEPS = (0.2, 0.1, 0.05)


@dataclass
class VerificationReport:
    claim_id: str
    grid: list
    max_abs_violation: float
    tolerance: float
    details: list = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_violation <= self.tolerance)

    @property
    def worst(self) -> dict | None:
        """Detail row with the largest violation."""
        if not self.details:
            return None
        return max(self.details, key=lambda row: row.get("violation", 0.0))

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status} {self.claim_id}: max violation {self.max_abs_violation:.3e} (tol {self.tolerance:.1e})"
        if not self.passed and self.worst is not None:
            line += f"; worst probe {self.worst}"
        return line

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "passed": self.passed,
            "max_abs_violation": self.max_abs_violation,
            "tolerance": self.tolerance,
            "grid": [float(x) for x in self.grid],
            "note": self.note,
            "details": self.details,
        }


def _report(claim_id, grid, rows, tolerance, note=""):
    worst = max((row["violation"] for row in rows), default=0.0)
    return VerificationReport(claim_id, list(np.asarray(grid, dtype=float)), float(worst), tolerance, rows, note)


def _check_benchmark_family(scenario: Scenario):
    kr, ks = scenario.vis_risky, scenario.vis_safe
    if scenario.safe.informative:
        raise DomainError("no-conservatism check needs an uninformative safe arm")
    if not (isinstance(kr, ConstantKernel) and isinstance(ks, ConstantKernel)):
        raise DomainError("no-conservatism check needs constant kernels")
    levels = {kr.sigma_success, kr.sigma_failure, ks.sigma_success, ks.sigma_failure}
    if len(levels) != 1:
        raise DomainError("no-conservatism check needs one common visibility level")


def verify_benchmark(scenario: Scenario | None = None, grid=DEFAULT_GRID) -> VerificationReport:
    """Gap and gap slope vanish under linear value and symmetric visibility."""
    scenario = scenario or scenarios.symmetric()
    _check_benchmark_family(scenario)
    scenario = scenario.replace(value=LinearValue())
    gap = np.asarray(delta(grid, scenario))
    slope = np.asarray(delta_prime_exact(grid, scenario))
    rows = [
        {"pi": float(p), "delta": float(d), "delta_prime": float(s), "violation": float(max(abs(d), abs(s)))}
        for p, d, s in zip(grid, gap, slope)
    ]
    return _report("benchmark", grid, rows, DEFAULT_TOLERANCES.identity)


def verify_benchmark_curvature(scenario: Scenario | None = None, grid=DEFAULT_GRID) -> VerificationReport:
    """Gap slope takes the sign of the value curvature for convex and concave quadratics.

    A probe violates the claim by the amount its signed slope falls short of
    the zero band.
    """
    scenario = scenario or scenarios.symmetric()
    _check_benchmark_family(scenario)
    band = DEFAULT_TOLERANCES.zero_band
    rows = []
    for name, value, sign in (
        ("x**2", QuadraticValue(1.0, 0.0, 0.0), 1),
        ("-(1-x)**2", QuadraticValue(-1.0, 2.0, -1.0), -1),
    ):
        slope = np.asarray(delta_prime_exact(grid, scenario.replace(value=value)))
        for p, s in zip(grid, slope):
            rows.append(
                {"pi": float(p), "value": name, "delta_prime": float(s), "violation": float(max(0.0, band - sign * s))}
            )
    return _report("benchmark-curvature", grid, rows, 0.0)


def verify_benchmark_level(scenario: Scenario | None = None, grid=DEFAULT_GRID) -> VerificationReport:
    """The gap itself takes the sign of the value curvature for convex and concave quadratics."""
    scenario = scenario or scenarios.symmetric()
    _check_benchmark_family(scenario)
    band = DEFAULT_TOLERANCES.zero_band
    rows = []
    for name, value, sign in (
        ("x**2", QuadraticValue(1.0, 0.0, 0.0), 1),
        ("-(1-x)**2", QuadraticValue(-1.0, 2.0, -1.0), -1),
    ):
        gap = np.asarray(delta(grid, scenario.replace(value=value)))
        for p, d in zip(grid, gap):
            rows.append({"pi": float(p), "value": name, "delta": float(d), "violation": float(max(0.0, band - sign * d))})
    return _report("benchmark-level", grid, rows, 0.0)


def random_techs(draws: int, seed: int):
    """Seeded draws of ``(p_high, p_low, pi)`` with ``0 < p_low < p_high < 1``."""
    rng = np.random.default_rng(seed)
    u = np.sort(rng.uniform(size=(draws, 2)), axis=1)
    keep = u[:, 0] < u[:, 1]
    return u[keep, 1], u[keep, 0], rng.uniform(size=draws)[keep]


def verify_unity_identity(random_draws: int = 10_000, seed: int = 0) -> VerificationReport:
    """Mixture-weighted posterior slopes plus the scaled gap sum to one."""
    p_high, p_low, pi = random_techs(random_draws, seed)
    spread = p_high - p_low
    lam, phi = p_high / p_low, (1.0 - p_high) / (1.0 - p_low)
    d_lam, d_phi = 1.0 - pi + lam * pi, 1.0 - pi + phi * pi
    p = p_low + spread * pi
    gap = lam * pi / d_lam - phi * pi / d_phi
    resid = np.abs(spread * gap + p * lam / d_lam**2 + (1.0 - p) * phi / d_phi**2 - 1.0)
    i = int(np.argmax(resid))
    rows = [{"p_high": float(p_high[i]), "p_low": float(p_low[i]), "pi": float(pi[i]), "violation": float(resid[i])}]
    return _report("unity", [], rows, DEFAULT_TOLERANCES.identity, note=f"{resid.size} draws, seed {seed}")


def verify_variance_identities(random_draws: int = 10_000, seed: int = 0) -> VerificationReport:
    """Three forms of the posterior variance and the closed-form gap agree."""
    p_high, p_low, pi = random_techs(random_draws, seed)
    worst = {"violation": -1.0}
    # one pass with the library functions on each draw, vectorized per draw set
    lam, phi = p_high / p_low, (1.0 - p_high) / (1.0 - p_low)
    up = lam * pi / (1.0 - pi + lam * pi)
    down = phi * pi / (1.0 - pi + phi * pi)
    p = p_low + (p_high - p_low) * pi
    forms = np.stack([
        p * (1.0 - p) * (up - down) ** 2,
        p * (up - pi) ** 2 + (1.0 - p) * (pi - down) ** 2,
        (up - pi) * (pi - down),
    ])
    closed_gap = (lam - phi) * pi * (1.0 - pi) / ((1.0 - pi + lam * pi) * (1.0 - pi + phi * pi))
    viol = np.maximum(forms.max(axis=0) - forms.min(axis=0), np.abs(closed_gap - (up - down)))
    i = int(np.argmax(viol))
    worst = {"p_high": float(p_high[i]), "p_low": float(p_low[i]), "pi": float(pi[i]), "violation": float(viol[i])}
    # spot-check the library path against the vectorized oracle
    tech = OutcomeTech(float(p_high[i]), float(p_low[i]))
    s = split(float(pi[i]), tech)
    worst["library_gap_error"] = float(abs(posterior_gap(float(pi[i]), tech.likelihoods) - (s.pi_plus - s.pi_minus)))
    return _report("variance", [], [worst], DEFAULT_TOLERANCES.identity, note=f"{viol.size} draws, seed {seed}")


def verify_boundaries(techs=(scenarios.BASE_RISKY, OutcomeTech(0.6, 0.3), OutcomeTech(0.7, 0.5))) -> VerificationReport:
    """Posterior slopes approach ``lam, phi`` near 0 and ``1/lam, 1/phi`` near 1.

    The error at distance ``h`` from a boundary is about ``2 lam |lam - 1| h``,
    so the default probes use moderate likelihood ratios.
    """
    rows = []
    lo, hi = BOUNDARY_PROBES
    for tech in techs:
        lr = tech.likelihoods
        for pi, targets in ((lo, (lr.lam, lr.phi)), (hi, (1.0 / lr.lam, 1.0 / lr.phi))):
            der = posterior_derivatives(pi, lr)
            viol = max(abs(der.dpi_plus - targets[0]), abs(der.dpi_minus - targets[1]))
            rows.append({"p_high": tech.p_high, "p_low": tech.p_low, "pi": pi, "violation": float(viol)})
    return _report("boundaries", BOUNDARY_PROBES, rows, DEFAULT_TOLERANCES.boundary)


def reform_effect(pi, scenario: Scenario, step: float = 1e-5, side: str = "failure"):
    """Two-sided difference of the exact gap slope in a constant risky visibility level."""
    k = scenario.vis_risky
    if not isinstance(k, ConstantKernel):
        raise DomainError("reform effect needs a constant risky kernel")

    def at(level):
        kernel = ConstantKernel(k.sigma_success, level) if side == "failure" else ConstantKernel(level, k.sigma_failure)
        return np.asarray(delta_prime_exact(pi, scenario.replace(vis_risky=kernel), check=False))

    base = k.sigma_failure if side == "failure" else k.sigma_success
    return (at(base + step) - at(base - step)) / (2.0 * step)


def _band_scenario(tech: OutcomeTech) -> Scenario:
    if not tech.informative:
        raise DomainError("risky arm must be informative")
    before, _ = scenarios.reform(tech, 0.5, 0.5, 0.5, delta_failure=0.0)
    return before


def verify_reform_band(tech: OutcomeTech = scenarios.BASE_RISKY, grid=DEFAULT_GRID) -> VerificationReport:
    """Failure-visibility effect lies in ``[1 - p_high, 1 - p_low]`` at every grid belief."""
    scenario = _band_scenario(tech)
    effect = reform_effect(grid, scenario)
    lo, hi = 1.0 - tech.p_high, 1.0 - tech.p_low
    rows = [
        {"pi": float(p), "effect": float(e), "band": [lo, hi], "violation": float(max(0.0, lo - e, e - hi))}
        for p, e in zip(grid, effect)
    ]
    return _report("band", grid, rows, 1e-6, note=f"effect is {partial_monotonicity(tech, grid)} in the belief")


def verify_band_limits(tech: OutcomeTech = scenarios.BASE_RISKY) -> VerificationReport:
    """Visibility effects near the boundary against the stated limits.

    Failure side: ``1 - p_low`` near 0 and ``1 - p_high`` near 1.
    Success side: ``p_low`` near 0 and ``p_high`` near 1.
    """
    scenario = _band_scenario(tech)
    lo, hi = BOUNDARY_PROBES
    rows = []
    for side, targets in (("failure", (1.0 - tech.p_low, 1.0 - tech.p_high)), ("success", (tech.p_low, tech.p_high))):
        for pi, target in zip((lo, hi), targets):
            effect = float(reform_effect(pi, scenario, side=side))
            rows.append(
                {"pi": pi, "side": side, "effect": effect, "target": target, "violation": abs(effect - target)}
            )
    return _report("band-limits", BOUNDARY_PROBES, rows, DEFAULT_TOLERANCES.boundary)


def partial_monotonicity(tech: OutcomeTech, grid=DEFAULT_GRID, tol: float = 1e-12) -> str:
    """Direction of the linear-value failure-visibility effect across ``grid``."""
    d = np.diff(np.asarray(visibility_partials(grid, scenarios.symmetric(tech)).d_dsigma0))
    if np.all(np.abs(d) <= tol):
        return "constant"
    if np.all(d >= -tol):
        return "increasing"
    if np.all(d <= tol):
        return "decreasing"
    return "non-monotone"


def verify_curvature(
    tech: OutcomeTech = scenarios.BASE_RISKY, v_curv_values=(0.0, 1.0), grid=DEFAULT_GRID
) -> VerificationReport:
    """Curvature under the local bound keeps the failure-visibility effect positive.

    At each probe the value function is the quadratic with value ``pi`` and
    slope 1 there and curvature ``+v`` or ``-v``.  Probes where ``v`` reaches
    the local threshold are recorded but not tested.
    """
    grid = np.asarray(grid, dtype=float)
    base = _band_scenario(tech)
    b, k = _curvature_terms(grid, tech)
    global_threshold = float(np.min(b) / np.max(k))
    rows = []
    for v in v_curv_values:
        for pi, bi, ki in zip(grid, b, k):
            threshold = bi / ki if ki > 0 else np.inf
            for curvature in sorted({v, -v}):
                scenario = base.replace(value=QuadraticValue.osculating(pi, curvature))
                effect = float(reform_effect(pi, scenario))
                tested = v < threshold
                rows.append(
                    {
                        "pi": float(pi),
                        "curvature": curvature,
                        "threshold": float(threshold),
                        "global": bool(v < global_threshold),
                        "effect": effect,
                        "tested": bool(tested),
                        "violation": float(max(0.0, -effect)) if tested else 0.0,
                    }
                )
                # strict positivity: a zero effect is a violation too
                if tested and effect <= 0.0:
                    rows[-1]["violation"] = max(rows[-1]["violation"], np.finfo(float).tiny)
    note = f"global threshold inf B / sup K = {global_threshold:.6f}"
    return _report("curvature", grid, rows, 0.0, note=note)


def verify_dominance(scenario: Scenario, grid=DEFAULT_GRID, claim_id: str = "dominance") -> VerificationReport:
    """The linear weight condition holds exactly where the safe jump value dominates."""
    rows = []
    for pi in grid:
        holds = dominance_map(pi, scenario).linear_condition_holds
        gap = float(phi_safe(pi, scenario) - psi(pi, scenario))
        agree = holds == (gap >= 0.0)
        rows.append(
            {"pi": float(pi), "condition": holds, "phi_minus_psi": gap, "violation": 0.0 if agree else abs(gap)}
        )
    return _report(claim_id, grid, rows, DEFAULT_TOLERANCES.identity)


def verify_sign_consistency(grid=DEFAULT_GRID) -> VerificationReport:
    """Record the gap between the exact slope and its core approximation.

    Under symmetric visibility and linear value the exact slope is zero while
    the core approximation is not; the report must flag that.  Along a
    dilation toward an uninformative risky arm both must shrink toward zero,
    checked for the symmetric family and for one with asymmetric visibility
    whose safe level matches the uninformative limit of the risky arm.
    A probe violates the claim if the discrepancy goes unflagged or if either
    magnitude grows as the arm is dilated further.
    """
    tol = DEFAULT_TOLERANCES.identity
    rows = []
    base = scenarios.symmetric()
    for pi in grid:
        r = cutoff_slope_sign(pi, base)
        discrepancy = abs(r.delta_prime_exact) <= tol and abs(r.delta_prime_core) > tol
        flagged = not r.consistent and r.cutoff_slope_sign == 0
        rows.append(
            {
                "pi": float(pi),
                "kind": "symmetric",
                "exact": r.delta_prime_exact,
                "core": r.delta_prime_core,
                "residual": r.residual,
                "flagged": flagged,
                "violation": 0.0 if (not discrepancy or flagged) else abs(r.residual),
            }
        )
    families = {
        "symmetric": base,
        "asymmetric": base.replace(
            vis_risky=ConstantKernel(1.0, 0.5),
            vis_safe=ConstantKernel(*(2 * (base.risky.p_low + 0.5 * (1.0 - base.risky.p_low),))),
        ),
    }
    for kind, scenario in families.items():
        for pi in (0.25, 0.5, 0.75):
            prev = None
            for tau in DILATION_STEPS:
                s = scenario.replace(risky=dilate_tech(scenario.risky, tau))
                exact = abs(float(delta_prime_exact(pi, s)))
                core = abs(float(delta_prime_core(pi, s)))
                growth = 0.0 if prev is None else max(0.0, exact - prev[0] - tol, core - prev[1] - tol)
                rows.append(
                    {"pi": pi, "kind": f"dilation-{kind}", "tau": tau, "exact": exact, "core": core, "violation": growth}
                )
                prev = (exact, core)
    return _report("consistency", grid, rows, 0.0, note="exact and core slopes disagree under linear value")


def failure_safe_scenarios():
    """Safe arm informative only on failures; the second instance flips the condition mid-grid."""
    return {
        "dominance-failure-safe": scenarios.failure_informative_safe(),
        "dominance-failure-safe-mixed": scenarios.failure_informative_safe(safe_phi=0.5, sigma=1.0, sigma_safe=0.1),
    }


CLAIMS: dict[str, Callable[[], VerificationReport]] = {
    "benchmark": verify_benchmark,
    "benchmark-curvature": verify_benchmark_curvature,
    "benchmark-level": verify_benchmark_level,
    "unity": verify_unity_identity,
    "variance": verify_variance_identities,
    "boundaries": verify_boundaries,
    "band": verify_reform_band,
    "band-limits": verify_band_limits,
    "curvature": verify_curvature,
    "dominance-failure-safe": lambda: verify_dominance(failure_safe_scenarios()["dominance-failure-safe"], claim_id="dominance-failure-safe"),
    "dominance-failure-safe-mixed": lambda: verify_dominance(failure_safe_scenarios()["dominance-failure-safe-mixed"], claim_id="dominance-failure-safe-mixed"),
    "dominance-informative-safe": lambda: verify_dominance(scenarios.more_informative_safe(), claim_id="dominance-informative-safe"),
    "consistency": verify_sign_consistency,
}


def verify(selector: str = "all") -> list[VerificationReport]:
    """Run one claim, a comma-separated list, or ``all``; results ordered by claim id."""
    if selector == "all":
        names = sorted(CLAIMS)
    else:
        names = sorted({name.strip() for name in selector.split(",") if name.strip()})
        unknown = [n for n in names if n not in CLAIMS]
        if unknown:
            raise KeyError(f"unknown claim(s): {', '.join(unknown)}; known: {', '.join(sorted(CLAIMS))}")
    return [CLAIMS[name]() for name in names]
