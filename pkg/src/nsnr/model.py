"""Network parameters and the three probability laws the analysis is built on.

* serving distance R of a typical user to its nearest BS,
* number N of other users sharing the serving BS,
* fading gain of the scheduled user, the maximum of N+1 unit-mean exponentials.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import nbinom

from nsnr.errors import ConfigError, DomainError, NumericalFailure

# Shape constant of the in-cell user-count law. Fixed, not a tunable.
C_SHAPE = 3.5


class Scenario(enum.IntEnum):
    """Which base stations radiate interference."""

    ALL_BS_ACTIVE = 1
    ONLY_LOADED_BS_ACTIVE = 2

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        aliases = {
            "1": cls.ALL_BS_ACTIVE,
            "all": cls.ALL_BS_ACTIVE,
            "all_bs_active": cls.ALL_BS_ACTIVE,
            "2": cls.ONLY_LOADED_BS_ACTIVE,
            "loaded": cls.ONLY_LOADED_BS_ACTIVE,
            "only_loaded_bs_active": cls.ONLY_LOADED_BS_ACTIVE,
        }
        try:
            return aliases[text]
        except KeyError:
            raise ConfigError(f"unknown scenario {value!r}; expected 1 or 2") from None


@dataclass(frozen=True)
class NumericsPolicy:
    quad_rel_tol: float = 1e-10
    series_tail_mass: float = 1e-9
    max_n: int = 512
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.quad_rel_tol < 1.0:
            raise ConfigError(f"quad_rel_tol must lie in (0, 1), got {self.quad_rel_tol}")
        if not 0.0 < self.series_tail_mass < 1.0:
            raise ConfigError(f"series_tail_mass must lie in (0, 1), got {self.series_tail_mass}")
        if self.max_n < 1:
            raise ConfigError(f"max_n must be >= 1, got {self.max_n}")


@dataclass(frozen=True)
class NetworkConfig:
    """Model parameters. Densities are points per unit area, powers are linear."""

    lambda_b: float = 1.0
    lambda_u: float = 5.0
    power: float = 1.0
    noise: float = 0.0
    alpha: float = 4.0
    scenario: Scenario = Scenario.ALL_BS_ACTIVE

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if not self.lambda_b > 0:
            raise ConfigError(f"lambda_b must be > 0, got {self.lambda_b}")
        if not self.lambda_u > 0:
            raise ConfigError(f"lambda_u must be > 0, got {self.lambda_u}")
        if not self.power > 0:
            raise ConfigError(f"power must be > 0, got {self.power}")
        if not self.noise >= 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if not self.alpha > 2:
            raise ConfigError(f"alpha must be > 2 for finite interference, got {self.alpha}")

    @property
    def ratio(self) -> float:
        """User-to-BS density ratio lambda_u / lambda_b."""
        return self.lambda_u / self.lambda_b

    @property
    def noiseless(self) -> bool:
        return self.noise == 0.0

    @classmethod
    def from_ratio(cls, ratio: float, lambda_b: float = 1.0, **kwargs) -> "NetworkConfig":
        return cls(lambda_b=lambda_b, lambda_u=ratio * lambda_b, **kwargs)

    def with_ratio(self, ratio: float) -> "NetworkConfig":
        return self.replace(lambda_u=ratio * self.lambda_b)

    def replace(self, **changes) -> "NetworkConfig":
        values = {
            "lambda_b": self.lambda_b,
            "lambda_u": self.lambda_u,
            "power": self.power,
            "noise": self.noise,
            "alpha": self.alpha,
            "scenario": self.scenario,
        }
        values.update(changes)
        return NetworkConfig(**values)


@dataclass(frozen=True)
class CoverageQuery:
    theta: float
    numerics: NumericsPolicy = field(default_factory=NumericsPolicy)

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError(f"target SINR must be > 0 (linear), got {self.theta}")


def distance_pdf(r, lambda_b):
    """Density of the distance from a typical user to its nearest BS."""
    if not lambda_b > 0:
        raise DomainError(f"lambda_b must be > 0, got {lambda_b}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("distance must be >= 0")
    out = 2.0 * np.pi * lambda_b * r * np.exp(-np.pi * lambda_b * r * r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class UserCountLaw:
    """Law of the number of other users in the tagged user's cell.

    A negative binomial with shape ``c + 1`` and odds ``ratio / c``; the
    tagged user's cell is area-biased, hence the mean ``(c+1)/c * ratio``.
    """

    ratio: float
    c: float = C_SHAPE

    def __post_init__(self):
        if not self.ratio > 0:
            raise DomainError(f"density ratio must be > 0, got {self.ratio}")

    @property
    def odds(self) -> float:
        return self.ratio / self.c

    @property
    def mean(self) -> float:
        return (self.c + 1.0) / self.c * self.ratio

    def log_pmf(self, n):
        n = np.asarray(n, dtype=float)
        if np.any(n < 0) or np.any(n != np.floor(n)):
            raise DomainError("user count must be a nonnegative integer")
        x = self.odds
        c = self.c
        return (
            gammaln(n + c + 1.0)
            - gammaln(n + 1.0)
            - gammaln(c + 1.0)
            + n * math.log(x)
            - (n + c + 1.0) * math.log1p(x)
        )

    def pmf(self, n):
        out = np.exp(self.log_pmf(n))
        return float(out) if np.ndim(out) == 0 else out

    def tail(self, n):
        """P(N > n)."""
        out = nbinom.sf(n, self.c + 1.0, 1.0 / (1.0 + self.odds))
        return float(out) if np.ndim(out) == 0 else out

    def truncation_point(self, tail_mass: float, max_n: int) -> int:
        """Smallest n with P(N > n) <= tail_mass."""
        # the tail is monotone, so bisect on [0, max_n]
        if self.tail(0) <= tail_mass:
            return 0
        if self.tail(max_n) > tail_mass:
            raise NumericalFailure(
                f"user-count series needs more than max_n={max_n} terms for tail mass "
                f"{tail_mass:g} at ratio {self.ratio:g}",
                partial=max_n,
            )
        lo, hi = 0, max_n
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail(mid) <= tail_mass:
                hi = mid
            else:
                lo = mid
        return hi


def user_count_pmf(n, ratio):
    """Probability that the tagged user's cell holds ``n`` other users."""
    return UserCountLaw(ratio).pmf(n)


def max_fading_cdf(x, n):
    """CDF of the largest of ``n + 1`` unit-mean exponential fading gains."""
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a nonnegative integer, got {n}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("fading gain must be >= 0")
    out = (-np.expm1(-x)) ** (int(n) + 1)
    return float(out) if out.ndim == 0 else out


def max_fading_cdf_series(x: float, n: int) -> float:
    """Binomial expansion of :func:`max_fading_cdf`.

    Ill-conditioned for large ``n``; kept as a cross-check of the product
    form, not as a production path.
    """
    if x < 0:
        raise DomainError("fading gain must be >= 0")
    m = int(n) + 1
    return math.fsum(math.comb(m, k) * (-1) ** k * math.exp(-k * x) for k in range(m + 1))


def sample_max_fading(n: int, rng: np.random.Generator, size=None):
    """Draw the scheduled user's gain: the max of ``n + 1`` exp(1) variates."""
    if n < 0 or int(n) != n:
        raise DomainError(f"n must be a nonnegative integer, got {n}")
    if size is None:
        return float(rng.exponential(size=int(n) + 1).max())
    return rng.exponential(size=(size, int(n) + 1)).max(axis=1)
