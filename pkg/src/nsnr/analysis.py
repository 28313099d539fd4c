"""Analytical coverage probability, average rate and scheduling gain.

Every result has the same skeleton: average over the in-cell user count N
of an alternating binomial sum over k of a single-user coverage-like term

    g(k) = pi*lambda_b * int_0^inf exp(-pi*lambda_b*v*(1 + q*rho(k*theta, alpha))
                                       - k*v^(alpha/2)*theta*noise/power) dv,

where q = 1 when every BS transmits and q = 1 - (1 + ratio/c)^(-c) when
only loaded BSs do. ``g`` extends analytically to complex k, which is what
lets :mod:`nsnr.numerics` evaluate the large-n sums stably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erfcx

from nsnr.errors import DomainError, NumericalFailure
from nsnr.model import C_SHAPE, NetworkConfig, NumericsPolicy, Scenario, UserCountLaw
from nsnr.numerics import (
    _complex_quad,
    alternating_binomial_direct,
    alternating_binomial_sum,
    direct_limit,
    integrate_semi_infinite,
    mixed_alternating_sum,
    rho,
)

# Closed-form terms are accurate to a few ulp, so direct summation is safe
# up to this order; quadrature-based terms get a lower limit (direct_limit).
CLOSED_FORM_DIRECT_MAX = 20

# Inner v-integral tolerance; kept tighter than the outer tolerance because
# the binomial differences amplify its error.
INNER_REL_TOL = 1e-12

DEFAULT_NUMERICS = NumericsPolicy()


@dataclass(frozen=True)
class CoverageResult:
    probability: float
    truncated_n: int
    quad_error: float
    unclamped: float

    def __float__(self):
        return float(self.probability)


@dataclass(frozen=True)
class RateResult:
    nats_per_hz: float
    truncated_n: int
    quad_error: float

    def __float__(self):
        return float(self.nats_per_hz)


def thinning_factor(ratio: float, scenario: Scenario) -> float:
    """Fraction of BSs that transmit."""
    scenario = Scenario.parse(scenario)
    if scenario is Scenario.ALL_BS_ACTIVE:
        return 1.0
    if not ratio > 0:
        raise DomainError(f"density ratio must be > 0, got {ratio}")
    return -math.expm1(-C_SHAPE * math.log1p(ratio / C_SHAPE))


def interference_laplace(k_theta, load, alpha, scenario=Scenario.ALL_BS_ACTIVE, ratio=None):
    """Laplace transform of the interference at the argument k*r^alpha*theta/P.

    ``load`` is pi * r^2 * lambda_b, the mean number of BSs closer than the
    serving one; the result is exp(-load * q * rho(k*theta, alpha)).
    """
    if not k_theta >= 0 or not load >= 0:
        raise DomainError("k*theta and load must be nonnegative")
    q = thinning_factor(ratio, scenario) if Scenario.parse(scenario) is Scenario.ONLY_LOADED_BS_ACTIVE else 1.0
    return math.exp(-load * q * rho(k_theta, alpha))


def _check_theta(theta):
    if not theta > 0:
        raise DomainError(f"target SINR must be > 0 (linear), got {theta}")


def conditional_coverage(
    r: float,
    n: int,
    theta: float,
    cfg: NetworkConfig,
    laplace: Callable[[float], float] | None = None,
    max_abs_error: float = 1e-9,
) -> float:
    """P(SINR > theta | R = r, N = n), summed term by term.

    ``laplace(s)`` is E[exp(-s I)] for the aggregate interference I; by
    default the PPP transform of the configured scenario. Raises
    :class:`NumericalFailure` when cancellation leaves fewer correct digits
    than ``max_abs_error`` asks for.
    """
    if not r > 0:
        raise DomainError(f"distance must be > 0, got {r}")
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a nonnegative integer, got {n}")
    _check_theta(theta)
    m = int(n) + 1
    path = r**cfg.alpha / cfg.power
    if laplace is None:
        load = math.pi * r * r * cfg.lambda_b

        def laplace(s):
            return interference_laplace(s / path, load, cfg.alpha, cfg.scenario, cfg.ratio)

    values = [
        math.exp(-k * path * theta * cfg.noise) * laplace(k * path * theta) for k in range(1, m + 1)
    ]
    value, err = alternating_binomial_direct(values, m)
    if err > max_abs_error:
        raise NumericalFailure(
            f"alternating sum of order {m} has rounding bound {err:.2g} > {max_abs_error:.2g}",
            partial=value,
        )
    return value


def _single_user_terms(theta, cfg: NetworkConfig, q: float, rel_tol: float):
    """Real and complex versions of g(k) at this threshold.

    With u = pi*lambda_b*v the v-integral is int_0^inf exp(-A u - k*beta*u^(alpha/2)) du,
    A = 1 + q*rho(k theta). Noiseless and alpha = 4 cases have closed forms
    (1/A, and an erfcx expression); everything else is integrated numerically.
    """
    a = cfg.alpha / 2.0
    scale = math.pi * cfg.lambda_b
    beta = theta * cfg.noise / (cfg.power * scale**a)

    # u = w / Re(A) puts the decay of the integrand on a unit scale
    def real(k):
        big_a = 1.0 + q * rho(k * theta, cfg.alpha)
        if beta == 0.0:
            return integrate_semi_infinite(lambda w: math.exp(-w), 0.0, rel_tol).value / big_a
        if a == 2.0:
            root_b = math.sqrt(k * beta)
            return math.sqrt(math.pi) / (2.0 * root_b) * float(erfcx(big_a / (2.0 * root_b)))
        c = k * beta / big_a**a
        f = lambda w: math.exp(-w - c * w**a)
        return integrate_semi_infinite(f, 0.0, rel_tol, abs_tol=1e-300).value / big_a

    def cplx(z):
        big_a = 1.0 + q * rho(complex(z * theta), cfg.alpha)
        if a == 2.0 and beta != 0.0:
            root_b = np.sqrt(complex(z * beta))
            return complex(np.sqrt(np.pi) / (2.0 * root_b) * erfcx(big_a / (2.0 * root_b)))
        scale = big_a.real
        tilt = big_a / scale
        c = z * beta / scale**a
        f = lambda w: np.exp(-w * tilt - c * w**a)
        value, _ = _complex_quad(f, 0.0, np.inf, rel_tol, 1e-15 * abs(tilt))
        return value / scale

    return real, cplx


def _closed_form_terms(theta, q):
    """g(k) for alpha = 4 and no noise: 1 / (1 + q*sqrt(k theta) arctan sqrt(k theta))."""

    def real(k):
        root = math.sqrt(k * theta)
        return 1.0 / (1.0 + q * root * math.atan(root))

    def cplx(z):
        root = np.sqrt(complex(z * theta))
        return complex(1.0 / (1.0 + q * root * np.arctan(root)))

    return real, cplx


def _user_weights(ratio, numerics: NumericsPolicy):
    law = UserCountLaw(ratio)
    n_max = law.truncation_point(numerics.series_tail_mass, numerics.max_n)
    return law.pmf(np.arange(n_max + 1)), n_max + 1


def _finish(raw, n_terms, err) -> CoverageResult:
    clamped = min(1.0, max(0.0, raw))
    return CoverageResult(float(clamped), n_terms, float(err + abs(raw - clamped)), float(raw))


def coverage_probability(
    theta: float, cfg: NetworkConfig, numerics: NumericsPolicy = DEFAULT_NUMERICS
) -> CoverageResult:
    """Coverage of the scheduled user for any path-loss exponent and noise level."""
    _check_theta(theta)
    q = thinning_factor(cfg.ratio, cfg.scenario)
    inner = min(numerics.quad_rel_tol, INNER_REL_TOL)
    real, cplx = _single_user_terms(theta, cfg, q, inner)
    weights, n_terms = _user_weights(cfg.ratio, numerics)
    try:
        raw, err = mixed_alternating_sum(
            weights, real, cplx, direct_limit(inner), numerics.quad_rel_tol
        )
    except NumericalFailure as exc:
        raise NumericalFailure(
            f"coverage at theta={theta:g}, ratio={cfg.ratio:g}: {exc}", partial=exc.partial
        ) from exc
    return _finish(raw, n_terms, err)


def coverage_special_case(
    theta: float,
    ratio: float,
    scenario: Scenario = Scenario.ALL_BS_ACTIVE,
    numerics: NumericsPolicy = DEFAULT_NUMERICS,
) -> CoverageResult:
    """Coverage for alpha = 4 and no noise; depends on theta and the density ratio only."""
    _check_theta(theta)
    q = thinning_factor(ratio, scenario)
    real, cplx = _closed_form_terms(theta, q)
    weights, n_terms = _user_weights(ratio, numerics)
    raw, err = mixed_alternating_sum(weights, real, cplx, CLOSED_FORM_DIRECT_MAX, numerics.quad_rel_tol)
    return _finish(raw, n_terms, err)


def coverage_mode_approximation(
    theta: float,
    ratio,
    scenario: Scenario = Scenario.ALL_BS_ACTIVE,
    numerics: NumericsPolicy = DEFAULT_NUMERICS,
) -> CoverageResult:
    """Closed form that puts all user-count mass on N = ratio (integer ratios only)."""
    _check_theta(theta)
    if not float(ratio) == int(ratio) or int(ratio) < 1:
        raise DomainError(f"mode approximation needs a positive integer density ratio, got {ratio}")
    n = int(ratio)
    real, cplx = _closed_form_terms(theta, thinning_factor(n, scenario))
    raw, err = alternating_binomial_sum(real, n + 1, cplx, CLOSED_FORM_DIRECT_MAX, numerics.quad_rel_tol)
    return _finish(raw, 1, err)


def _rate_integral(coverage_at: Callable[[float], tuple], rel_tol: float) -> tuple:
    """int_0^inf P(SINR > e^t - 1) dt, returning (value, accumulated error)."""
    errors = []

    def integrand(t):
        if t == 0.0:
            return 1.0
        if t > 700.0:
            # threshold beyond double range; coverage has long decayed to 0
            return 0.0
        value, err = coverage_at(math.expm1(t))
        errors.append(err)
        return value

    res = integrate_semi_infinite(integrand, 0.0, rel_tol)
    return res.value, res.abs_error_estimate + (max(errors) if errors else 0.0)


def _rate_tolerance(numerics: NumericsPolicy) -> float:
    # the outer t-integral does not need the inner precision
    return max(numerics.quad_rel_tol, 1e-8)


def average_rate_scheduled(cfg: NetworkConfig, numerics: NumericsPolicy = DEFAULT_NUMERICS) -> RateResult:
    """Mean ln(1 + SINR) of the scheduled user, in nats/Hz."""
    tol = _rate_tolerance(numerics)
    if cfg.alpha == 4.0 and cfg.noiseless:

        def coverage_at(theta):
            res = coverage_special_case(theta, cfg.ratio, cfg.scenario, numerics)
            return res.unclamped, res.quad_error

    else:

        def coverage_at(theta):
            res = coverage_probability(theta, cfg, numerics)
            return res.unclamped, res.quad_error

    value, err = _rate_integral(coverage_at, tol)
    _, n_terms = _user_weights(cfg.ratio, numerics)
    return RateResult(max(0.0, value), n_terms, float(err))


def average_rate_roundrobin(cfg: NetworkConfig, numerics: NumericsPolicy = DEFAULT_NUMERICS) -> RateResult:
    """Mean ln(1 + SINR) of a user served regardless of its fading (one-user cell)."""
    tol = _rate_tolerance(numerics)
    q = thinning_factor(cfg.ratio, cfg.scenario)
    if cfg.alpha == 4.0 and cfg.noiseless:

        def coverage_at(theta):
            return _closed_form_terms(theta, q)[0](1), 0.0

    else:
        inner = min(numerics.quad_rel_tol, INNER_REL_TOL)

        def coverage_at(theta):
            return _single_user_terms(theta, cfg, q, inner)[0](1), 0.0

    value, err = _rate_integral(coverage_at, tol)
    return RateResult(max(0.0, value), 1, float(err))


def scheduling_gain(cfg: NetworkConfig, numerics: NumericsPolicy = DEFAULT_NUMERICS) -> float:
    """Ratio of the scheduled to the round-robin average rate, same scenario."""
    tau_s = average_rate_scheduled(cfg, numerics).nats_per_hz
    tau_r = average_rate_roundrobin(cfg, numerics).nats_per_hz
    if not tau_r > 0:
        raise NumericalFailure(f"round-robin rate is {tau_r}; gain undefined", partial=tau_s)
    return tau_s / tau_r
