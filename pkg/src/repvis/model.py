"""Decision model: arms, visibility kernels, value functions and value gaps."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .posterior import (
    DEFAULT_TOLERANCES,
    ConsistencyError,
    DomainError,
    LikelihoodPair,
    OutcomeTech,
    RawArm,
    Tolerances,
    _as_belief,
    _out,
    posterior_derivatives,
    update_failure,
    update_success,
)

Arm = Union[OutcomeTech, RawArm]

# probes used to validate kernels and value functions on the unit interval
VALIDATION_GRID = np.linspace(0.0, 1.0, 1001)


class ConstructionError(ValueError):
    """A model object was built from invalid parameters."""


@dataclass(frozen=True)
class SignalTech:
    """Probability of a good private signal for the high and low type."""

    q_high: float
    q_low: float

    def __post_init__(self):
        if not (0.0 < self.q_low <= self.q_high < 1.0):
            raise ConstructionError(f"need 0 < q_low <= q_high < 1, got {self}")

    @property
    def informative(self) -> bool:
        return self.q_high > self.q_low

    def private_belief(self, pi, good):
        """Expert's belief after observing the signal, on top of public ``pi``."""
        pi = np.asarray(pi, dtype=float)
        good = np.asarray(good, dtype=bool)
        ratio = np.where(good, self.q_high / self.q_low, (1.0 - self.q_high) / (1.0 - self.q_low))
        return _out(ratio * pi / (1.0 - pi + ratio * pi))


# visibility kernels -----------------------------------------------------------


@dataclass(frozen=True)
class KernelValues:
    """Survival probabilities of a success and a failure plus their belief slopes."""

    success: float | np.ndarray
    failure: float | np.ndarray
    dsuccess: float | np.ndarray
    dfailure: float | np.ndarray


def _check_unit(name, values):
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise ConstructionError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class ConstantKernel:
    sigma_success: float
    sigma_failure: float

    def __post_init__(self):
        _check_unit("sigma_success", self.sigma_success)
        _check_unit("sigma_failure", self.sigma_failure)

    def __call__(self, pi) -> KernelValues:
        pi = np.asarray(pi, dtype=float)
        one = np.ones_like(pi)
        return KernelValues(
            _out(self.sigma_success * one),
            _out(self.sigma_failure * one),
            _out(0.0 * one),
            _out(0.0 * one),
        )


@dataclass(frozen=True)
class SecurityFloorKernel:
    """Failure visibility split into a mandated floor and residual detection.

    ``sigma_failure = kappa + (1 - kappa) * detection``.
    """

    kappa: float
    detection: float
    sigma_success: float

    def __post_init__(self):
        for name in ("kappa", "detection", "sigma_success"):
            _check_unit(name, getattr(self, name))

    @property
    def sigma_failure(self) -> float:
        return self.kappa + (1.0 - self.kappa) * self.detection

    def __call__(self, pi) -> KernelValues:
        return ConstantKernel(self.sigma_success, self.sigma_failure)(pi)


@dataclass(frozen=True)
class TabulatedKernel:
    """Kernel interpolated from a belief grid covering [0, 1].

    Nodal slopes are central differences on the grid; a cubic Hermite
    spline through values and slopes gives a continuously differentiable
    kernel whose derivative is exact for the interpolant.
    """

    grid: tuple
    success: tuple
    failure: tuple
    _splines: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.grid, dtype=float)
        if x.ndim != 1 or x.size < 3 or np.any(np.diff(x) <= 0):
            raise ConstructionError("kernel grid must be strictly increasing with at least 3 points")
        if x[0] > 0.0 or x[-1] < 1.0:
            raise ConstructionError("kernel grid must cover [0, 1]")
        splines = []
        for name in ("success", "failure"):
            y = np.asarray(getattr(self, name), dtype=float)
            if y.shape != x.shape:
                raise ConstructionError(f"{name} values must match the grid length")
            _check_unit(name, y)
            spline = CubicHermiteSpline(x, y, np.gradient(y, x))
            _check_unit(f"interpolated {name}", spline(VALIDATION_GRID))
            splines.append(spline)
        object.__setattr__(self, "_splines", tuple(splines))

    def __call__(self, pi) -> KernelValues:
        pi = np.asarray(pi, dtype=float)
        s, f = self._splines
        return KernelValues(
            _out(s(pi)), _out(f(pi)), _out(s.derivative()(pi)), _out(f.derivative()(pi))
        )


def _profile(value, slope, step=1e-6):
    """Evaluate a shift component and its belief slope."""
    if callable(value):
        def evaluate(pi):
            pi = np.asarray(pi, dtype=float)
            level = np.asarray(value(pi), dtype=float) * np.ones_like(pi)
            if slope is not None:
                d = np.asarray(slope(pi), dtype=float) * np.ones_like(pi)
            else:
                d = (np.asarray(value(pi + step)) - np.asarray(value(pi - step))) / (2.0 * step)
            return level, d
    else:
        def evaluate(pi):
            pi = np.asarray(pi, dtype=float)
            return float(value) * np.ones_like(pi), np.zeros_like(pi)
    return evaluate


@dataclass(frozen=True)
class ReformShift:
    """Belief-dependent increments to failure and success visibility.

    Each component is a float or a callable of the belief.  Slopes of
    callables come from the optional ``*_slope`` callables, otherwise from
    a central difference.
    """

    delta_failure: float | Callable = 0.0
    delta_success: float | Callable = 0.0
    delta_failure_slope: Callable | None = None
    delta_success_slope: Callable | None = None

    @property
    def constant(self) -> bool:
        return not callable(self.delta_failure) and not callable(self.delta_success)

    def __call__(self, pi):
        """Return ``(d_fail, d_succ, slope_fail, slope_succ)`` at ``pi``."""
        d0, s0 = _profile(self.delta_failure, self.delta_failure_slope)(pi)
        d1, s1 = _profile(self.delta_success, self.delta_success_slope)(pi)
        return d0, d1, s0, s1


@dataclass(frozen=True)
class ShiftedKernel:
    base: object
    shift: ReformShift

    def __call__(self, pi) -> KernelValues:
        k = self.base(pi)
        d0, d1, s0, s1 = self.shift(pi)
        return KernelValues(
            _out(k.success + d1), _out(k.failure + d0), _out(k.dsuccess + s1), _out(k.dfailure + s0)
        )


def apply_reform(kernel, shift: ReformShift, grid=VALIDATION_GRID):
    """Add the reform increments to a kernel.

    Raises
    ------
    ConstructionError
        If an increment is negative, the failure increment falls below the
        success increment, or a shifted survival probability exceeds 1
        anywhere on ``grid``.
    """
    d0, d1, _, _ = shift(grid)
    if np.any(d1 < 0.0) or np.any(d0 < d1):
        raise ConstructionError("reform needs delta_failure >= delta_success >= 0")
    base = kernel(grid)
    if np.any(base.failure + d0 > 1.0) or np.any(base.success + d1 > 1.0):
        raise ConstructionError("reform pushes a survival probability above 1")
    if shift.constant and isinstance(kernel, (ConstantKernel, SecurityFloorKernel)):
        return ConstantKernel(
            kernel.sigma_success + float(shift.delta_success),
            kernel.sigma_failure + float(shift.delta_failure),
        )
    return ShiftedKernel(kernel, shift)


# value functions ----------------------------------------------------------------


@dataclass(frozen=True)
class LinearValue:
    """``V(x) = slope * x + intercept``."""

    slope: float = 1.0
    intercept: float = 0.0
    smooth = True

    def __post_init__(self):
        if not self.slope > 0:
            raise ConstructionError("value function must be increasing")

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept

    def d1(self, x):
        return self.slope * np.ones_like(np.asarray(x, dtype=float))

    def d2(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def curvature_sup(self) -> float:
        return 0.0


@dataclass(frozen=True)
class QuadraticValue:
    """``V(x) = a x**2 + b x + c``, increasing on (0, 1)."""

    a: float
    b: float
    c: float = 0.0
    smooth = True

    def __post_init__(self):
        if self.b < 0 or 2 * self.a + self.b < 0 or (self.a == 0 and self.b == 0):
            raise ConstructionError("value function must be increasing on (0, 1)")

    @classmethod
    def osculating(cls, center: float, curvature: float) -> "QuadraticValue":
        """``x + curvature/2 * (x - center)**2``: value ``center`` and slope 1 at ``center``."""
        return cls(0.5 * curvature, 1.0 - curvature * center, 0.5 * curvature * center**2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (self.a * x + self.b) * x + self.c

    def d1(self, x):
        return 2.0 * self.a * np.asarray(x, dtype=float) + self.b

    def d2(self, x):
        return 2.0 * self.a * np.ones_like(np.asarray(x, dtype=float))

    @property
    def curvature_sup(self) -> float:
        return abs(2.0 * self.a)


@dataclass(frozen=True)
class TabulatedValue:
    """Piecewise-linear value through knots; zero curvature within segments."""

    knots: tuple
    values: tuple
    smooth = False

    def __post_init__(self):
        x = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.size < 2 or x.shape != v.shape:
            raise ConstructionError("knots and values must be 1-d of equal length >= 2")
        if np.any(np.diff(x) <= 0) or x[0] > 0.0 or x[-1] < 1.0:
            raise ConstructionError("knots must be increasing and cover [0, 1]")
        if np.any(np.diff(v) <= 0):
            raise ConstructionError("value function must be increasing")

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.knots, self.values)

    def d1(self, x):
        k = np.asarray(self.knots, dtype=float)
        slopes = np.diff(np.asarray(self.values, dtype=float)) / np.diff(k)
        idx = np.clip(np.searchsorted(k, np.asarray(x, dtype=float), side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]

    def d2(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def curvature_sup(self) -> float:
        return 0.0


# scenario and value gaps --------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    risky: Arm
    safe: Arm
    signal: SignalTech
    vis_risky: object
    vis_safe: object
    value: object

    def __post_init__(self):
        if not self.risky.informative:
            raise ConstructionError("risky arm must be informative")

    def arm(self, which: str):
        if which == "risky":
            return self.risky, self.vis_risky
        if which == "safe":
            return self.safe, self.vis_safe
        raise DomainError(f"arm must be 'risky' or 'safe', got {which!r}")

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)


def continuation_value(pi, arm: str, scenario: Scenario, private_success_prob=None):
    """Expected continuation value of choosing ``arm`` at public belief ``pi``.

    ``private_success_prob`` replaces the public success probability; the
    posteriors always use the arm's public likelihood ratios.
    """
    pi = _as_belief(pi)
    tech, kernel = scenario.arm(arm)
    lr = tech.likelihoods
    if private_success_prob is None:
        p = np.asarray(tech.mixture(pi))
    else:
        p = np.asarray(private_success_prob, dtype=float)
        if np.any((p < 0.0) | (p > 1.0)):
            raise DomainError("private success probability must lie in [0, 1]")
    k = kernel(pi)
    V = scenario.value
    return _out(
        p * k.success * V(update_success(pi, lr)) + (1.0 - p) * k.failure * V(update_failure(pi, lr))
    )


def delta(pi, scenario: Scenario):
    """Value gap ``U(risky) - U(safe)`` at public mixtures."""
    return _out(
        np.asarray(continuation_value(pi, "risky", scenario))
        - np.asarray(continuation_value(pi, "safe", scenario))
    )


def _arm_slope(pi, tech, kernel, V, *, with_kernel_slopes=True):
    lr = tech.likelihoods
    up, down = update_success(pi, lr), update_failure(pi, lr)
    der = posterior_derivatives(pi, lr)
    p = np.asarray(tech.mixture(pi))
    k = kernel(pi)
    slope = (
        tech.spread * (k.success * V(up) - k.failure * V(down))
        + p * k.success * V.d1(up) * der.dpi_plus
        + (1.0 - p) * k.failure * V.d1(down) * der.dpi_minus
    )
    if with_kernel_slopes:
        slope = slope + p * k.dsuccess * V(up) + (1.0 - p) * k.dfailure * V(down)
    return slope


def delta_prime_exact(pi, scenario: Scenario, *, check: bool | None = None, tol: Tolerances = DEFAULT_TOLERANCES):
    """Analytic belief derivative of :func:`delta`, kernel slopes included.

    Parameters
    ----------
    check : bool, optional
        Compare against a central finite difference of ``delta``.  Defaults
        to on for smooth value functions; piecewise-linear values have kinks
        where a difference quotient is meaningless.

    Raises
    ------
    ConsistencyError
        If the analytic and numeric derivatives disagree.
    """
    pi = _as_belief(pi)
    V = scenario.value
    value = _arm_slope(pi, scenario.risky, scenario.vis_risky, V) - _arm_slope(
        pi, scenario.safe, scenario.vis_safe, V
    )
    if check is None:
        check = V.smooth
    if check:
        h = np.minimum(tol.fd_step, 0.5 * np.minimum(pi, 1.0 - pi))
        numeric = (np.asarray(delta(pi + h, scenario)) - np.asarray(delta(pi - h, scenario))) / (2.0 * h)
        err = np.abs(value - numeric)
        allowed = tol.fd_rel * np.maximum(np.abs(value), np.abs(numeric)) + tol.fd_abs
        if np.any(err > allowed):
            worst = float(np.max(err - allowed))
            raise ConsistencyError(f"analytic derivative disagrees with finite difference by {worst:.3e}")
    return _out(np.asarray(value))


def delta_prime_fixed_kernels(pi, scenario: Scenario):
    """Derivative of ``delta`` with kernel slopes set to zero."""
    pi = _as_belief(pi)
    V = scenario.value
    return _out(
        np.asarray(
            _arm_slope(pi, scenario.risky, scenario.vis_risky, V, with_kernel_slopes=False)
            - _arm_slope(pi, scenario.safe, scenario.vis_safe, V, with_kernel_slopes=False)
        )
    )


class Policy(enum.Enum):
    ALWAYS_RISKY = "always_risky"
    RISKY_IFF_GOOD = "risky_iff_good"
    RISKY_IFF_BAD = "risky_iff_bad"
    NEVER_RISKY = "never_risky"


def signal_deltas(pi, scenario: Scenario):
    """Value gap after a good and after a bad private signal.

    The expert's private posterior sets the success probability of each arm;
    the public posteriors, and so the continuation values, do not see the
    signal.
    """
    pi = _as_belief(pi)
    out = []
    for good in (True, False):
        belief = scenario.signal.private_belief(pi, good)
        risky = continuation_value(pi, "risky", scenario, scenario.risky.mixture(belief))
        safe = continuation_value(pi, "safe", scenario, scenario.safe.mixture(belief))
        out.append(_out(np.asarray(risky) - np.asarray(safe)))
    return tuple(out)


def risky_choice(pi, good, scenario: Scenario, tol: Tolerances = DEFAULT_TOLERANCES):
    """Whether risky is chosen for each (belief, signal) pair; ties go to risky."""
    d_good, d_bad = signal_deltas(pi, scenario)
    return np.where(np.asarray(good, dtype=bool), np.asarray(d_good), np.asarray(d_bad)) >= -tol.tie


def cutoff_policy(pi: float, scenario: Scenario, tol: Tolerances = DEFAULT_TOLERANCES) -> Policy:
    """Signal-contingent action at public belief ``pi``; ties resolve to risky.

    ``RISKY_IFF_BAD`` is possible when the failure branch carries more
    visible value than the success branch, since then a higher private
    success probability lowers the risky payoff.
    """
    d_good, d_bad = signal_deltas(float(pi), scenario)
    good, bad = d_good >= -tol.tie, d_bad >= -tol.tie
    if good and bad:
        return Policy.ALWAYS_RISKY
    if good:
        return Policy.RISKY_IFF_GOOD
    if bad:
        return Policy.RISKY_IFF_BAD
    return Policy.NEVER_RISKY
