"""Canonical scenario families used by the verification suite and the CLI."""

from __future__ import annotations

from .model import (
    ConstantKernel,
    LinearValue,
    ReformShift,
    Scenario,
    SecurityFloorKernel,
    SignalTech,
    apply_reform,
)
from .posterior import LikelihoodPair, OutcomeTech, RawArm

BASE_RISKY = OutcomeTech(0.8, 0.4)
UNINFORMATIVE = OutcomeTech(0.5, 0.5)
BASE_SIGNAL = SignalTech(0.7, 0.3)


def symmetric(
    risky: OutcomeTech = BASE_RISKY,
    sigma: float = 1.0,
    value=None,
    signal: SignalTech = BASE_SIGNAL,
) -> Scenario:
    """Uninformative safe arm and one constant visibility level for every outcome."""
    kernel = ConstantKernel(sigma, sigma)
    return Scenario(risky, UNINFORMATIVE, signal, kernel, kernel, value or LinearValue())


def reform(
    risky: OutcomeTech = BASE_RISKY,
    sigma_success: float = 0.5,
    sigma_failure: float = 0.5,
    sigma_safe: float = 0.5,
    delta_failure: float = 0.5,
    delta_success: float = 0.0,
    value=None,
    signal: SignalTech = BASE_SIGNAL,
):
    """Return ``(before, after)`` scenarios around a failure-visibility reform."""
    before = Scenario(
        risky,
        UNINFORMATIVE,
        signal,
        ConstantKernel(sigma_success, sigma_failure),
        ConstantKernel(sigma_safe, sigma_safe),
        value or LinearValue(),
    )
    shift = ReformShift(delta_failure, delta_success)
    return before, before.replace(vis_risky=apply_reform(before.vis_risky, shift))


def failure_informative_safe(
    risky_lr: LikelihoodPair = LikelihoodPair(2.0, 1.0 / 3.0),
    safe_phi: float = 0.1,
    sigma: float = 1.0,
    sigma_safe: float = 1.0,
) -> Scenario:
    """Safe arm that moves beliefs only on failure, risky arm given by ratios.

    No pair of success probabilities has a success ratio of one and a failure
    ratio below one, so the safe arm carries its ratios directly with an equal
    mixture for both types.
    """
    safe = RawArm(LikelihoodPair(1.0, safe_phi), 0.5, 0.5)
    lam, phi = risky_lr.lam, risky_lr.phi
    # success probabilities consistent with the risky ratios
    p_low = (1.0 - phi) / (lam - phi)
    risky = OutcomeTech(lam * p_low, p_low)
    return Scenario(
        risky,
        safe,
        BASE_SIGNAL,
        ConstantKernel(sigma, sigma),
        ConstantKernel(sigma_safe, sigma_safe),
        LinearValue(),
    )


def more_informative_safe(
    risky: OutcomeTech = BASE_RISKY,
    safe: OutcomeTech = OutcomeTech(0.75, 0.25),
    sigma_success: float = 1.0,
    sigma_failure: float = 1.0,
    sigma_safe_failure: float | None = None,
) -> Scenario:
    """Safe arm at least as informative as risky, with kernels matched on success."""
    safe_failure = sigma_failure if sigma_safe_failure is None else sigma_safe_failure
    return Scenario(
        risky,
        safe,
        BASE_SIGNAL,
        ConstantKernel(sigma_success, sigma_failure),
        ConstantKernel(sigma_success, safe_failure),
        LinearValue(),
    )


def security(
    risky: OutcomeTech = BASE_RISKY,
    kappa: float = 0.0,
    detection: float = 0.2,
    sigma_success: float = 1.0,
    sigma_safe: float = 1.0,
    value=None,
) -> Scenario:
    """Disclosure-floor visibility on failures of the risky arm."""
    return Scenario(
        risky,
        UNINFORMATIVE,
        BASE_SIGNAL,
        SecurityFloorKernel(kappa, detection, sigma_success),
        ConstantKernel(sigma_safe, sigma_safe),
        value or LinearValue(),
    )
