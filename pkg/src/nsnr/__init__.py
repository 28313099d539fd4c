"""Coverage, rate and scheduling gain of normalized-SNR scheduling in PPP cellular downlinks."""

from nsnr.errors import ConfigError, DomainError, NumericalFailure
from nsnr.model import (
    C_SHAPE,
    CoverageQuery,
    NetworkConfig,
    NumericsPolicy,
    Scenario,
    UserCountLaw,
    distance_pdf,
    max_fading_cdf,
    sample_max_fading,
    user_count_pmf,
)

__all__ = [
    "C_SHAPE",
    "ConfigError",
    "CoverageQuery",
    "DomainError",
    "NetworkConfig",
    "NumericalFailure",
    "NumericsPolicy",
    "Scenario",
    "UserCountLaw",
    "distance_pdf",
    "max_fading_cdf",
    "sample_max_fading",
    "user_count_pmf",
]

__version__ = "0.1.0"
