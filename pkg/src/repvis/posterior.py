"""Closed-form odds algebra for two-type, two-outcome Bayesian updating.

All functions accept scalars or numpy arrays and broadcast.  Interior
operations require beliefs in the open unit interval; the posterior maps
themselves also accept the fixed points 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ConsistencyError(ArithmeticError):
    """Two algebraically equivalent computations disagree beyond tolerance."""


@dataclass(frozen=True)
class Tolerances:
    """Numeric settings shared across the library.

    Attributes
    ----------
    identity : float
        Absolute tolerance for exact algebraic identities.
    fd_step : float
        Step for central finite differences in the belief.
    fd_rel : float
        Relative tolerance when comparing analytic and numeric derivatives.
    fd_abs : float
        Absolute floor for the same comparison, absorbing round-off when the
        derivative is close to zero.
    zero_band : float
        Magnitudes below this are classified as sign 0.
    tie : float
        Slack used when a decision compares a value gap with zero.
    boundary : float
        Tolerance for limits probed at beliefs near 0 or 1.
    """

    identity: float = 1e-12
    fd_step: float = 1e-6
    fd_rel: float = 1e-6
    fd_abs: float = 1e-8
    zero_band: float = 1e-10
    tie: float = 1e-12
    boundary: float = 1e-3


DEFAULT_TOLERANCES = Tolerances()


def _as_belief(pi, *, closed: bool = False) -> np.ndarray:
    arr = np.asarray(pi, dtype=float)
    if closed:
        bad = ~((arr >= 0.0) & (arr <= 1.0))
    else:
        bad = ~((arr > 0.0) & (arr < 1.0))
    if np.any(bad):
        bounds = "[0, 1]" if closed else "(0, 1)"
        raise DomainError(f"belief must lie in {bounds}, got {pi!r}")
    return arr


def _out(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True)
class LikelihoodPair:
    """Likelihood ratios of success (``lam``) and failure (``phi``), H over L."""

    lam: float
    phi: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 1.0 and 0.0 < self.phi <= 1.0):
            raise DomainError(f"need finite lam >= 1 and 0 < phi <= 1, got {self}")

    @property
    def uninformative(self) -> bool:
        return self.lam == 1.0 and self.phi == 1.0

    def success_denominator(self, pi):
        pi = np.asarray(pi, dtype=float)
        return _out(1.0 - pi + self.lam * pi)

    def failure_denominator(self, pi):
        pi = np.asarray(pi, dtype=float)
        return _out(1.0 - pi + self.phi * pi)


@dataclass(frozen=True)
class OutcomeTech:
    """Success probabilities of an arm for the high and low type."""

    p_high: float
    p_low: float

    def __post_init__(self):
        if not (0.0 < self.p_low <= self.p_high < 1.0):
            raise DomainError(f"need 0 < p_low <= p_high < 1, got {self}")

    @property
    def likelihoods(self) -> LikelihoodPair:
        return LikelihoodPair(self.p_high / self.p_low, (1.0 - self.p_high) / (1.0 - self.p_low))

    @property
    def informative(self) -> bool:
        return self.p_high > self.p_low

    @property
    def spread(self) -> float:
        return self.p_high - self.p_low

    def mixture(self, pi):
        """Success probability under belief ``pi``."""
        pi = np.asarray(pi, dtype=float)
        return _out(self.p_low + (self.p_high - self.p_low) * pi)


@dataclass(frozen=True)
class RawArm:
    """An arm given directly by likelihood ratios plus a separate mixture.

    Used when the ratios do not come from a single pair of success
    probabilities, e.g. along a dilation path or for an arm that is
    informative only on failures.  ``p_high`` and ``p_low`` define the
    success probability used for averaging; nothing ties them to ``lr``.
    """

    lr: LikelihoodPair
    p_high: float
    p_low: float

    def __post_init__(self):
        if not (0.0 <= self.p_low <= 1.0 and 0.0 <= self.p_high <= 1.0):
            raise DomainError(f"mixture probabilities must lie in [0, 1], got {self}")

    @property
    def likelihoods(self) -> LikelihoodPair:
        return self.lr

    @property
    def informative(self) -> bool:
        return not self.lr.uninformative

    @property
    def spread(self) -> float:
        return self.p_high - self.p_low

    def mixture(self, pi):
        pi = np.asarray(pi, dtype=float)
        return _out(self.p_low + (self.p_high - self.p_low) * pi)


def odds(pi):
    pi = _as_belief(pi)
    return _out(pi / (1.0 - pi))


def log_odds(pi):
    pi = _as_belief(pi)
    return _out(np.log(pi) - np.log1p(-pi))


def from_odds(o):
    o = np.asarray(o, dtype=float)
    return _out(np.where(np.isinf(o), 1.0, o / (1.0 + np.where(np.isinf(o), 0.0, o))))


def _update(pi, ratio):
    pi = _as_belief(pi, closed=True)
    return _out(ratio * pi / (1.0 - pi + ratio * pi))


def update_success(pi, lr: LikelihoodPair):
    """Posterior after a recorded success: ``lam*pi / (1 - pi + lam*pi)``."""
    return _update(pi, lr.lam)


def update_failure(pi, lr: LikelihoodPair):
    """Posterior after a recorded failure: ``phi*pi / (1 - pi + phi*pi)``."""
    return _update(pi, lr.phi)


@dataclass(frozen=True)
class PosteriorSplit:
    prior: float | np.ndarray
    pi_plus: float | np.ndarray
    pi_minus: float | np.ndarray
    p_success: float | np.ndarray

    @property
    def jump_up(self):
        """Upward move on success, ``pi_plus - prior``."""
        return self.pi_plus - self.prior

    @property
    def jump_down(self):
        """Downward move on failure as a magnitude, ``prior - pi_minus``."""
        return self.prior - self.pi_minus

    @property
    def martingale_residual(self):
        return self.p_success * self.jump_up - (1.0 - self.p_success) * self.jump_down


def split(pi, arm) -> PosteriorSplit:
    """Both posteriors of ``arm`` at ``pi`` and the success probability."""
    lr = arm.likelihoods
    return PosteriorSplit(
        prior=_out(_as_belief(pi, closed=True)),
        pi_plus=update_success(pi, lr),
        pi_minus=update_failure(pi, lr),
        p_success=arm.mixture(pi),
    )


def jumps(pi, lr: LikelihoodPair):
    """Return ``(jump_up, jump_down)``, both as nonnegative magnitudes when lam >= 1 >= phi."""
    p = np.asarray(pi, dtype=float)
    return _out(update_success(pi, lr) - p), _out(p - update_failure(pi, lr))


def posterior_gap(pi, lr: LikelihoodPair):
    """Closed form of ``pi_plus - pi_minus``."""
    pi = _as_belief(pi, closed=True)
    d_lam = 1.0 - pi + lr.lam * pi
    d_phi = 1.0 - pi + lr.phi * pi
    return _out((lr.lam - lr.phi) * pi * (1.0 - pi) / (d_lam * d_phi))


@dataclass(frozen=True)
class PosteriorDerivatives:
    dpi_plus: float | np.ndarray
    dpi_minus: float | np.ndarray
    d2pi_plus: float | np.ndarray
    d2pi_minus: float | np.ndarray


def posterior_derivatives(pi, lr: LikelihoodPair) -> PosteriorDerivatives:
    """First and second belief derivatives of both posterior maps.

    ``d pi_plus / d pi = lam / D**2`` and ``d2 = -2 lam (lam - 1) / D**3``
    with ``D = 1 - pi + lam pi``; likewise for ``phi``.
    """
    pi = _as_belief(pi)
    d_lam = 1.0 - pi + lr.lam * pi
    d_phi = 1.0 - pi + lr.phi * pi
    return PosteriorDerivatives(
        dpi_plus=_out(lr.lam / d_lam**2),
        dpi_minus=_out(lr.phi / d_phi**2),
        d2pi_plus=_out(-2.0 * lr.lam * (lr.lam - 1.0) / d_lam**3),
        d2pi_minus=_out(-2.0 * lr.phi * (lr.phi - 1.0) / d_phi**3),
    )


def posterior_variance(pi, tech, tol: Tolerances = DEFAULT_TOLERANCES):
    """Variance of the posterior, computed three ways and cross-checked.

    Raises
    ------
    ConsistencyError
        If the three forms disagree by more than ``tol.identity``; this
        happens for arms whose mixture is not Bayes-consistent with their
        likelihood ratios.
    """
    _as_belief(pi)
    s = split(pi, tech)
    p = s.p_success
    gap_form = p * (1.0 - p) * (s.pi_plus - s.pi_minus) ** 2
    jump_form = p * s.jump_up**2 + (1.0 - p) * s.jump_down**2
    product_form = s.jump_up * s.jump_down
    forms = np.stack(np.broadcast_arrays(gap_form, jump_form, product_form))
    spread = np.max(forms, axis=0) - np.min(forms, axis=0)
    worst = float(np.max(spread))
    if worst > tol.identity:
        raise ConsistencyError(f"posterior variance forms disagree by {worst:.3e}")
    return _out(np.asarray(gap_form))


@dataclass(frozen=True)
class InformativenessPartials:
    dpiplus_dlambda: float | np.ndarray
    dpiminus_dphi: float | np.ndarray
    djumpplus_dlambda: float | np.ndarray
    djumpminus_dphi: float | np.ndarray


def informativeness_partials(pi, lr: LikelihoodPair) -> InformativenessPartials:
    """Sensitivity of the posteriors to the likelihood ratios, ``pi(1-pi)/D**2``.

    The jump derivatives equal the posterior derivatives since the prior
    does not move with the ratio.  Defined on the closed interval; the
    partials vanish at the fixed points.
    """
    pi = _as_belief(pi, closed=True)
    base = pi * (1.0 - pi)
    up = _out(base / (1.0 - pi + lr.lam * pi) ** 2)
    down = _out(base / (1.0 - pi + lr.phi * pi) ** 2)
    return InformativenessPartials(up, down, up, down)


def dilate(lr: LikelihoodPair, tau: float) -> LikelihoodPair:
    """Shrink ``lr`` linearly toward the uninformative pair ``(1, 1)``."""
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    return LikelihoodPair(1.0 + tau * (lr.lam - 1.0), 1.0 - tau * (1.0 - lr.phi))


def dilate_tech(tech: OutcomeTech, tau: float) -> OutcomeTech:
    """The technology whose ratios are ``dilate(tech.likelihoods, tau)``.

    Holding ``p_low`` fixed and moving ``p_high`` to
    ``p_low + tau (p_high - p_low)`` reproduces the linear path exactly.
    At ``tau = 0`` the result is uninformative.
    """
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1], got {tau}")
    return OutcomeTech(tech.p_low + tau * (tech.p_high - tech.p_low), tech.p_low)


def unity_residual(pi, tech: OutcomeTech):
    """``(pH - pL)(pi+ - pi-) + p dpi+/dpi + (1 - p) dpi-/dpi - 1``; zero for any tech."""
    lr = tech.likelihoods
    der = posterior_derivatives(pi, lr)
    p = tech.mixture(pi)
    return _out(
        np.asarray(
            tech.spread * posterior_gap(pi, lr) + p * der.dpi_plus + (1.0 - p) * der.dpi_minus - 1.0
        )
    )


@dataclass(frozen=True)
class BoundaryLimits:
    """Limits of the posterior slopes as the belief tends to 0 or 1."""

    dpi_plus_at_0: float
    dpi_minus_at_0: float
    dpi_plus_at_1: float
    dpi_minus_at_1: float


def boundary_limits(lr: LikelihoodPair) -> BoundaryLimits:
    """Slopes at the fixed points: ``lam``, ``phi`` near 0 and ``1/lam``, ``1/phi`` near 1."""
    return BoundaryLimits(lr.lam, lr.phi, 1.0 / lr.lam, 1.0 / lr.phi)
