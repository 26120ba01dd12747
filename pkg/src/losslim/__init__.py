"""Fundamental H2 and H-infinity limits of lossless systems and swing-equation grids."""

__version__ = "0.1.0"

from .errors import LosslimError, ModelClassError, NumericalError  # noqa: E402
from .lossless import (  # noqa: E402
    FundamentalLimits,
    LosslessCertificate,
    find_certificate,
    fundamental_limits,
    h2_limit,
    hinf_limit,
)
from .numlin import StateSpace, h2_norm, hinf_norm  # noqa: E402

__all__ = [
    "FundamentalLimits",
    "LosslessCertificate",
    "LosslimError",
    "ModelClassError",
    "NumericalError",
    "StateSpace",
    "find_certificate",
    "fundamental_limits",
    "h2_limit",
    "h2_norm",
    "hinf_limit",
    "hinf_norm",
]
