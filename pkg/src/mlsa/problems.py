"""Reference root-finding problems on geometric Brownian motion:
quantile (Value-at-Risk) estimation and call-price level inversion,
with the lognormal closed forms needed to predict targets and variances.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .estimators import RootProblem
from .sde import GbmModel

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT2PI


# Acklam's rational approximation of the inverse normal CDF (relative
# error below 1.2e-9), refined by one Newton step against the erfc-based
# CDF, which brings the absolute error to well under 1e-12.
_ACKLAM_A = (-3.969683028665376e+01, 2.209460984245205e+02,
             -2.759285104469687e+02, 1.383577518672690e+02,
             -3.066479806614716e+01, 2.506628277459239e+00)
_ACKLAM_B = (-5.447609879822406e+01, 1.615858368580409e+02,
             -1.556989798598866e+02, 6.680131188771972e+01,
             -1.328068155288572e+01)
_ACKLAM_C = (-7.784894002430293e-03, -3.223964580411365e-01,
             -2.400758277161838e+00, -2.549732539343734e+00,
             4.374664141464968e+00, 2.938163982698783e+00)
_ACKLAM_D = (7.784695709041462e-03, 3.224671290700398e-01,
             2.445134137142996e+00, 3.754408661907416e+00)
_ACKLAM_LOW = 0.02425


def normal_inv_cdf(p: float) -> float:
    """Inverse standard normal CDF, absolute error far below 1e-8."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    if p < _ACKLAM_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif p <= 1.0 - _ACKLAM_LOW:
        q = p - 0.5
        s = q * q
        x = (((((a[0] * s + a[1]) * s + a[2]) * s + a[3]) * s + a[4]) * s + a[5]) * q / \
            (((((b[0] * s + b[1]) * s + b[2]) * s + b[3]) * s + b[4]) * s + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    # one Newton step: x <- x - (Phi(x) - p) / phi(x)
    return x - (normal_cdf(x) - p) / normal_pdf(x)


def lognormal_pdf_at(model: GbmModel, x: float) -> float:
    """Density of the exact terminal value X_T at x."""
    if not x > 0.0:
        raise ValueError(f"density argument must be positive, got {x}")
    if model.sigma == 0.0:
        raise ValueError("terminal law is degenerate for sigma = 0")
    m = math.log(model.x0) + model.log_mean
    s = model.log_sd
    z = (math.log(x) - m) / s
    return math.exp(-0.5 * z * z) / (x * s * _SQRT2PI)


def lognormal_cdf_at(model: GbmModel, x: float) -> float:
    """P(X_T <= x) for the exact terminal value."""
    if not x > 0.0:
        raise ValueError(f"cdf argument must be positive, got {x}")
    if model.sigma == 0.0:
        det = model.x0 * math.exp(model.r * model.horizon_T)
        return 1.0 if x >= det else 0.0
    m = math.log(model.x0) + model.log_mean
    return normal_cdf((math.log(x) - m) / model.log_sd)


def bs_quantile(model: GbmModel, l: float) -> float:
    """Closed-form level-l quantile of the terminal value."""
    if not 0.0 < l < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {l}")
    if model.sigma == 0.0:
        return model.x0 * math.exp(model.r * model.horizon_T)
    return model.x0 * math.exp(model.log_mean + model.log_sd * normal_inv_cdf(l))


def bs_call(model: GbmModel, strike_theta: float) -> float:
    """Discounted call value e^{-rT} E(X_T - theta)_+ in closed form."""
    if not strike_theta > 0.0:
        raise ValueError(f"strike must be positive, got {strike_theta}")
    x0, r, t = model.x0, model.r, model.horizon_T
    disc = math.exp(-r * t)
    if model.sigma == 0.0:
        return max(x0 - disc * strike_theta, 0.0)
    s = model.log_sd
    d_plus = (math.log(x0 / strike_theta) + r * t) / s + 0.5 * s
    d_minus = d_plus - s
    return x0 * normal_cdf(d_plus) - disc * strike_theta * normal_cdf(d_minus)


def bs_call_inverse(model: GbmModel, price: float) -> float:
    """Strike theta with bs_call(model, theta) == price, by bisection."""
    if not 0.0 < price < model.x0:
        raise ValueError(
            f"price must lie in (0, x0) = (0, {model.x0}), got {price}"
        )
    lo = model.x0 * 1e-12
    hi = model.x0
    while bs_call(model, hi) > price:
        hi *= 2.0
        if hi > model.x0 * 1e12:
            raise ValueError("failed to bracket the strike")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if bs_call(model, mid) > price:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * model.x0:
            break
    return 0.5 * (lo + hi)


def quantile_H(theta, x, l: float):
    """Indicator field 1_{x <= theta} - l; broadcasts over arrays."""
    return np.where(np.less_equal(x, theta), 1.0, 0.0) - l


def call_level_H(theta, x, l, discount: float = 1.0):
    """Level field l - discount * (x - theta)_+; broadcasts over arrays."""
    return l - discount * np.maximum(x - theta, 0.0)


def _partial_moment(model: GbmModel, k: int, threshold: float) -> float:
    """E[X_T^k 1_{X_T > threshold}] for the lognormal terminal value."""
    m = math.log(model.x0) + model.log_mean
    s = model.log_sd
    if s == 0.0:
        det = math.exp(m)
        return det**k if det > threshold else 0.0
    return math.exp(k * m + 0.5 * k * k * s * s) * normal_cdf(
        (m + k * s * s - math.log(threshold)) / s
    )


@dataclass(frozen=True)
class QuantileProblem:
    """Find theta with P(X_T <= theta) = l."""

    model: GbmModel
    level_l: float

    def __post_init__(self) -> None:
        if not 0.0 < self.level_l < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level_l}")
        if self.level_l < 0.05 or self.level_l > 0.95:
            warnings.warn(
                "extreme quantile levels make the recursion slow and erratic; "
                "consider combining with importance sampling",
                stacklevel=2,
            )

    def H(self, theta, x):
        return quantile_H(theta, x, self.level_l)

    def theta_star(self) -> float:
        return bs_quantile(self.model, self.level_l)


@dataclass(frozen=True)
class CallLevelProblem:
    """Find theta with e^{-rT} E(X_T - theta)_+ = l."""

    model: GbmModel
    level_l: float

    def __post_init__(self) -> None:
        if not 0.0 < self.level_l < self.model.x0:
            raise ValueError(
                f"call level must lie in (0, x0), got {self.level_l}"
            )

    @property
    def discount(self) -> float:
        return math.exp(-self.model.r * self.model.horizon_T)

    def H(self, theta, x):
        return call_level_H(theta, x, self.level_l, self.discount)

    def theta_star(self) -> float:
        return bs_call_inverse(self.model, self.level_l)


def problem_metadata(
    problem: QuantileProblem | CallLevelProblem,
    *,
    reversion_bracket: tuple[float, float] | None = None,
) -> RootProblem:
    """Package a reference problem with its exact root, weak/strong orders
    and the local quantities used for variance prediction.

    The mean-reversion constant is the infimum of the field derivative
    over ``reversion_bracket`` (default: +-10% around the root); it feeds
    gain-condition checks only and never alters a schedule.
    """
    model = problem.model
    theta_star = problem.theta_star()
    lo, hi = reversion_bracket or (0.9 * theta_star, 1.1 * theta_star)
    if not 0.0 < lo < hi:
        raise ValueError(f"invalid reversion bracket ({lo}, {hi})")
    if isinstance(problem, QuantileProblem):
        if model.sigma == 0.0:
            raise ConfigurationError(
                "quantile problem needs a nondegenerate terminal law"
            )
        dh = lognormal_pdf_at(model, theta_star)
        gamma_star = problem.level_l * (1.0 - problem.level_l)
        lam = min(lognormal_pdf_at(model, lo), lognormal_pdf_at(model, hi))
        name = "quantile"
    elif isinstance(problem, CallLevelProblem):
        disc = problem.discount
        dh = disc * (1.0 - lognormal_cdf_at(model, theta_star))
        second = _partial_moment(model, 2, theta_star) \
            - 2.0 * theta_star * _partial_moment(model, 1, theta_star) \
            + theta_star**2 * (1.0 - lognormal_cdf_at(model, theta_star))
        gamma_star = disc * disc * second - problem.level_l**2
        lam = disc * (1.0 - lognormal_cdf_at(model, hi))
        name = "call-level"
    else:
        raise TypeError(f"unsupported problem type {type(problem)!r}")
    return RootProblem(
        name=name,
        H=problem.H,
        model=model,
        exact_theta_star=theta_star,
        weak_order_alpha=1.0,
        strong_order_rho=0.5,
        mean_reversion_lambda=lam if lam > 0.0 else None,
        dh_at_star=dh,
        gamma_at_star=gamma_star,
        theta0=model.x0,
    )
